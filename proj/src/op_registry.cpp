#include <cmath>

#include "flowcap/gradcheck.hpp"
#include "flowcap/nn.hpp"
#include "flowcap/ops.hpp"

namespace flowcap {

namespace {

// sum(out ⊙ R) with a fixed pseudo-random R, so every output element carries
// a distinct weight and a plain sum cannot hide an error.
template <class T>
BasicTensor<T> weighted_sum(const BasicTensor<T>& out) {
    Rng rng(0x5eedULL + out.numel());
    std::vector<T> w(out.numel());
    for (auto& x : w) x = static_cast<T>(static_cast<float>(rng.uniform() * 2.0 - 1.0));
    return sum(mul(out, BasicTensor<T>::from(out.shape(), std::move(w))));
}

template <class F>
OpCheck make_check(std::string name, std::vector<Shape> shapes, F body);

// Braced shape lists like {{3, 4}} would otherwise pick a vector constructor.
template <class F>
OpCheck make_check(std::string name, std::initializer_list<Shape> shapes, F body) {
    return make_check(std::move(name), std::vector<Shape>(shapes), body);
}

template <class F>
OpCheck make_check(std::string name, std::vector<Shape> shapes, F body) {
    OpCheck c;
    c.name = std::move(name);
    c.input_shapes = std::move(shapes);
    c.f32 = [body](std::span<const Tensor> in) { return weighted_sum(body(in)); };
    c.f64 = [body](std::span<const Tensor64> in) { return weighted_sum(body(in)); };
    return c;
}

// Weight matrices are scaled by 1/sqrt(fan_in) as at initialization; raw
// N(0,1) weights saturate the attention softmax and leave gradients below
// the finite-difference noise floor.
template <class T>
TransformerLayerParams<T> layer_from(std::span<const BasicTensor<T>> in, std::size_t first, std::size_t heads) {
    auto at = [&](std::size_t i) { return in[first + i]; };
    auto w = [&](std::size_t i) { return scale(at(i), T(1) / std::sqrt(static_cast<T>(at(i).shape()[0]))); };
    TransformerLayerParams<T> p;
    p.heads = heads;
    p.ln1_gain = at(0);
    p.ln1_bias = at(1);
    p.wq = w(2);
    p.bq = at(3);
    p.wk = w(4);
    p.wv = w(5);
    p.bv = at(6);
    p.wo = w(7);
    p.bo = at(8);
    p.ln2_gain = at(9);
    p.ln2_bias = at(10);
    p.w1 = w(11);
    p.b1 = at(12);
    p.w2 = w(13);
    p.b2 = at(14);
    return p;
}

std::vector<Shape> layer_shapes(std::size_t d, std::size_t ffn) {
    return {{d}, {d}, {d, d}, {d}, {d, d}, {d, d}, {d}, {d, d}, {d}, {d}, {d}, {d, ffn}, {ffn}, {ffn, d}, {d}};
}

std::vector<OpCheck> build_checks() {
    std::vector<OpCheck> c;
    c.push_back(make_check("add", {{3, 4}, {3, 4}}, [](auto in) { return add(in[0], in[1]); }));
    c.push_back(make_check("add_row_broadcast", {{3, 4}, {4}}, [](auto in) { return add(in[0], in[1]); }));
    c.push_back(make_check("sub", {{3, 4}, {3, 4}}, [](auto in) { return sub(in[0], in[1]); }));
    c.push_back(make_check("sub_row_broadcast", {{3, 4}, {4}}, [](auto in) { return sub(in[0], in[1]); }));
    c.push_back(make_check("mul", {{3, 4}, {3, 4}}, [](auto in) { return mul(in[0], in[1]); }));
    c.push_back(make_check("mul_row_broadcast", {{3, 4}, {4}}, [](auto in) { return mul(in[0], in[1]); }));
    c.push_back(make_check("scale", {{2, 3}}, [](auto in) {
        using T = typename std::decay_t<decltype(in[0])>::value_type;
        return scale(in[0], T(-1.75));
    }));
    c.push_back(make_check("matmul", {{3, 4}, {4, 2}}, [](auto in) { return matmul(in[0], in[1]); }));
    c.push_back(make_check("transpose", {{3, 4}}, [](auto in) { return transpose(in[0]); }));
    c.push_back(make_check("gelu", {{3, 4}}, [](auto in) { return gelu(in[0]); }));
    // log is checked on x*x+1 so random inputs stay in its domain.
    c.push_back(make_check("log", {{3, 4}}, [](auto in) {
        using T = typename std::decay_t<decltype(in[0])>::value_type;
        auto ones = BasicTensor<T>::full(in[0].shape(), T(1));
        return log(add(mul(in[0], in[0]), ones));
    }));
    c.push_back(make_check("softmax_axis1", {{3, 4}}, [](auto in) { return softmax(in[0], 1); }));
    c.push_back(make_check("softmax_axis0", {{3, 4}}, [](auto in) { return softmax(in[0], 0); }));
    c.push_back(make_check("masked_softmax", {{3, 3}}, [](auto in) {
        return masked_softmax(in[0], std::vector<std::uint8_t>{1, 0, 0, 1, 1, 0, 1, 1, 1});
    }));
    c.push_back(make_check("log_softmax", {{3, 5}}, [](auto in) { return log_softmax(in[0]); }));
    c.push_back(make_check("row_mean", {{3, 4}}, [](auto in) { return row_mean(in[0]); }));
    c.push_back(make_check("row_variance", {{3, 4}}, [](auto in) { return row_variance(in[0]); }));
    c.push_back(make_check("layer_norm", {{3, 5}, {5}, {5}},
                           [](auto in) { return layer_norm(in[0], in[1], in[2]); }));
    c.push_back(make_check("reshape", {{3, 4}}, [](auto in) { return reshape(in[0], Shape{2, 6}); }));
    c.push_back(make_check("slice_rows", {{4, 3}}, [](auto in) { return slice_rows(in[0], 1, 3); }));
    c.push_back(make_check("slice_cols", {{3, 5}}, [](auto in) { return slice_cols(in[0], 1, 4); }));
    c.push_back(make_check("row", {{3, 4}}, [](auto in) { return row(in[0], 2); }));
    c.push_back(make_check("concat_rows", {{2, 3}, {1, 3}}, [](auto in) { return concat_rows({in[0], in[1]}); }));
    c.push_back(make_check("concat_cols", {{2, 3}, {2, 2}}, [](auto in) { return concat_cols({in[0], in[1]}); }));
    c.push_back(make_check("stack_rows", {{3}, {3}, {3}}, [](auto in) { return stack_rows(in); }));
    c.push_back(make_check("repeat_rows", {{4}}, [](auto in) { return repeat_rows(in[0], 3); }));
    c.push_back(make_check("gather_rows", {{5, 3}}, [](auto in) {
        const std::vector<int> ids{4, 0, 4, 2};
        return gather_rows(in[0], std::span<const int>(ids));
    }));
    c.push_back(make_check("max_pool_rows", {{4, 3}}, [](auto in) { return max_pool_rows(in[0]); }));
    c.push_back(make_check("pick", {{3, 4}}, [](auto in) {
        const std::vector<int> idx{3, 0, 2};
        return pick(in[0], std::span<const int>(idx));
    }));
    c.push_back(make_check("sum", {{3, 4}}, [](auto in) { return sum(in[0]); }));

    std::vector<Shape> attn_shapes{{3, 8}};
    for (auto& s : layer_shapes(8, 16)) attn_shapes.push_back(s);
    c.push_back(make_check("multi_head_attention_causal", attn_shapes, [](auto in) {
        return multi_head_attention(in[0], AttentionMask::causal(3), layer_from(in, 1, 2));
    }));
    c.push_back(make_check("transformer_layer_full", attn_shapes, [](auto in) {
        return transformer_layer(in[0], AttentionMask::full(3), layer_from(in, 1, 2));
    }));
    c.push_back(make_check("transformer_layer_prefix", attn_shapes, [](auto in) {
        return transformer_layer(in[0], AttentionMask::prefix(3, 1), layer_from(in, 1, 2));
    }));
    return c;
}

}  // namespace

const std::vector<OpCheck>& registered_op_checks() {
    static const std::vector<OpCheck> checks = build_checks();
    return checks;
}

}  // namespace flowcap
