#include "flowcap/nn.hpp"

#include <cmath>

namespace flowcap {

template <class T>
BasicTensor<T> ParamStore<T>::create(const std::string& name, const Shape& shape, Init init, double stddev, Rng& rng) {
    if (find(name)) throw ContractError("duplicate parameter name " + name);
    std::vector<T> v(shape_numel(shape), T(0));
    switch (init) {
        case Init::Zeros: break;
        case Init::Ones: std::fill(v.begin(), v.end(), T(1)); break;
        case Init::Normal:
            // Round through float so both precisions draw the same values.
            for (auto& x : v) x = static_cast<T>(static_cast<float>(stddev * rng.normal()));
            break;
    }
    auto t = BasicTensor<T>::from(shape, std::move(v), true);
    params_.push_back({name, t});
    return t;
}

template <class T>
const BasicTensor<T>* ParamStore<T>::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p.tensor;
    return nullptr;
}

template <class T>
std::size_t ParamStore<T>::total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

template <class T>
void ParamStore<T>::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

template <class T>
template <class U>
void ParamStore<T>::load_values(const ParamStore<U>& other) {
    if (other.items().size() != params_.size()) throw ContractError("load_values: parameter count mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& dst = params_[i];
        const auto& src = other.items()[i];
        if (dst.name != src.name || dst.tensor.shape() != src.tensor.shape()) {
            throw ContractError("load_values: parameter " + dst.name + " does not match " + src.name);
        }
        auto d = dst.tensor.data();
        auto s = src.tensor.data();
        for (std::size_t j = 0; j < d.size(); ++j) d[j] = static_cast<T>(s[j]);
    }
}

AttentionMask& AttentionMask::with_padding(std::vector<bool> pad_mask) {
    if (pad_mask.size() != length_) {
        throw ShapeError("padding mask of length " + std::to_string(pad_mask.size()) + " for sequence of " +
                         std::to_string(length_));
    }
    valid_ = std::move(pad_mask);
    return *this;
}

bool AttentionMask::allows(std::size_t query, std::size_t key) const {
    if (!valid_.empty() && !valid_[key]) return false;
    switch (kind_) {
        case Kind::Full: return true;
        case Kind::Causal: return key <= query;
        case Kind::Prefix: return key < prefix_ || key <= query;
    }
    return false;
}

std::vector<std::uint8_t> AttentionMask::matrix() const {
    std::vector<std::uint8_t> m(length_ * length_);
    for (std::size_t i = 0; i < length_; ++i)
        for (std::size_t j = 0; j < length_; ++j) m[i * length_ + j] = allows(i, j) ? 1 : 0;
    return m;
}

template <class T>
TransformerLayerParams<T> make_transformer_layer(ParamStore<T>& store, const std::string& prefix, std::size_t d,
                                                 std::size_t heads, std::size_t ffn_mult, Rng& rng) {
    if (heads == 0 || d % heads != 0) {
        throw ContractError("hidden size " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                            " heads");
    }
    using Init = typename ParamStore<T>::Init;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    const double sd_ff = 1.0 / std::sqrt(static_cast<double>(d * ffn_mult));
    TransformerLayerParams<T> p;
    p.heads = heads;
    p.ln1_gain = store.create(prefix + ".ln1.gain", {d}, Init::Ones, 0, rng);
    p.ln1_bias = store.create(prefix + ".ln1.bias", {d}, Init::Zeros, 0, rng);
    p.wq = store.create(prefix + ".attn.wq", {d, d}, Init::Normal, sd, rng);
    p.bq = store.create(prefix + ".attn.bq", {d}, Init::Zeros, 0, rng);
    p.wk = store.create(prefix + ".attn.wk", {d, d}, Init::Normal, sd, rng);
    p.wv = store.create(prefix + ".attn.wv", {d, d}, Init::Normal, sd, rng);
    p.bv = store.create(prefix + ".attn.bv", {d}, Init::Zeros, 0, rng);
    p.wo = store.create(prefix + ".attn.wo", {d, d}, Init::Normal, sd, rng);
    p.bo = store.create(prefix + ".attn.bo", {d}, Init::Zeros, 0, rng);
    p.ln2_gain = store.create(prefix + ".ln2.gain", {d}, Init::Ones, 0, rng);
    p.ln2_bias = store.create(prefix + ".ln2.bias", {d}, Init::Zeros, 0, rng);
    p.w1 = store.create(prefix + ".ffn.w1", {d, d * ffn_mult}, Init::Normal, sd, rng);
    p.b1 = store.create(prefix + ".ffn.b1", {d * ffn_mult}, Init::Zeros, 0, rng);
    p.w2 = store.create(prefix + ".ffn.w2", {d * ffn_mult, d}, Init::Normal, sd_ff, rng);
    p.b2 = store.create(prefix + ".ffn.b2", {d}, Init::Zeros, 0, rng);
    return p;
}

template <class T>
std::vector<TransformerLayerParams<T>> make_transformer_stack(ParamStore<T>& store, const std::string& prefix,
                                                              std::size_t layers, std::size_t d, std::size_t heads,
                                                              std::size_t ffn_mult, Rng& rng) {
    std::vector<TransformerLayerParams<T>> out;
    for (std::size_t i = 0; i < layers; ++i) {
        out.push_back(make_transformer_layer(store, prefix + "." + std::to_string(i), d, heads, ffn_mult, rng));
    }
    return out;
}

template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
    return add(matmul(x, w), b);
}

template <class T>
BasicTensor<T> multi_head_attention(const BasicTensor<T>& x, const AttentionMask& mask,
                                    const TransformerLayerParams<T>& p, std::vector<BasicTensor<T>>* weights_out) {
    if (x.rank() != 2) throw ShapeError("attention input must be [L×d], got " + shape_str(x.shape()));
    const std::size_t len = x.shape()[0];
    const std::size_t d = x.shape()[1];
    if (len == 0) throw ShapeError("attention over an empty sequence");
    if (mask.length() != len) {
        throw ShapeError("attention mask length " + std::to_string(mask.length()) + " does not match sequence length " +
                         std::to_string(len));
    }
    if (d != p.width()) throw ShapeError("attention width " + std::to_string(d) + " vs params " + std::to_string(p.width()));
    const std::size_t dh = d / p.heads;
    const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));
    auto q = linear(x, p.wq, p.bq);
    auto k = matmul(x, p.wk);
    auto v = linear(x, p.wv, p.bv);
    const auto allowed = mask.matrix();
    std::vector<BasicTensor<T>> heads;
    heads.reserve(p.heads);
    if (weights_out) weights_out->clear();
    for (std::size_t h = 0; h < p.heads; ++h) {
        auto qh = slice_cols(q, h * dh, (h + 1) * dh);
        auto kh = slice_cols(k, h * dh, (h + 1) * dh);
        auto vh = slice_cols(v, h * dh, (h + 1) * dh);
        auto scores = scale(matmul(qh, transpose(kh)), inv_scale);
        auto attn = masked_softmax(scores, allowed);
        if (weights_out) weights_out->push_back(attn);
        heads.push_back(matmul(attn, vh));
    }
    auto merged = p.heads == 1 ? heads[0] : concat_cols<T>(heads);
    return linear(merged, p.wo, p.bo);
}

template <class T>
BasicTensor<T> transformer_layer(const BasicTensor<T>& x, const AttentionMask& mask,
                                 const TransformerLayerParams<T>& p) {
    auto h = add(x, multi_head_attention(layer_norm(x, p.ln1_gain, p.ln1_bias), mask, p));
    auto ff = linear(gelu(linear(layer_norm(h, p.ln2_gain, p.ln2_bias), p.w1, p.b1)), p.w2, p.b2);
    return add(h, ff);
}

template <class T>
BasicTensor<T> transformer_stack(const BasicTensor<T>& x, const AttentionMask& mask,
                                 std::span<const TransformerLayerParams<T>> layers) {
    auto h = x;
    for (const auto& layer : layers) h = transformer_layer(h, mask, layer);
    return h;
}

template <class T>
BasicTensor<T> embed_tokens(std::span<const int> ids, const BasicTensor<T>& table, const BasicTensor<T>& positions,
                            const std::optional<ModalityRow<T>>& modality) {
    const std::size_t d = table.cols();
    if (ids.empty()) return BasicTensor<T>::zeros({0, d});
    if (ids.size() > positions.rows()) {
        throw LengthError("sequence of " + std::to_string(ids.size()) + " tokens exceeds " +
                          std::to_string(positions.rows()) + " positions");
    }
    auto out = add(gather_rows(table, ids), slice_rows(positions, 0, ids.size()));
    if (modality) {
        const std::vector<int> mod(ids.size(), modality->id);
        out = add(out, gather_rows(modality->table, std::span<const int>(mod)));
    }
    return out;
}

template <class T>
BasicTensor<T> max_pool_time(const BasicTensor<T>& s) {
    if (s.rank() != 2 || s.shape()[0] == 0) throw ContractError("max_pool_time: empty segment");
    return max_pool_rows(s);
}

#define FLOWCAP_INSTANTIATE_NN(T)                                                                                  \
    template class ParamStore<T>;                                                                                  \
    template TransformerLayerParams<T> make_transformer_layer(ParamStore<T>&, const std::string&, std::size_t,     \
                                                              std::size_t, std::size_t, Rng&);                     \
    template std::vector<TransformerLayerParams<T>> make_transformer_stack(                                        \
        ParamStore<T>&, const std::string&, std::size_t, std::size_t, std::size_t, std::size_t, Rng&);             \
    template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);           \
    template BasicTensor<T> multi_head_attention(const BasicTensor<T>&, const AttentionMask&,                      \
                                                 const TransformerLayerParams<T>&, std::vector<BasicTensor<T>>*);  \
    template BasicTensor<T> transformer_layer(const BasicTensor<T>&, const AttentionMask&,                         \
                                              const TransformerLayerParams<T>&);                                   \
    template BasicTensor<T> transformer_stack(const BasicTensor<T>&, const AttentionMask&,                         \
                                              std::span<const TransformerLayerParams<T>>);                         \
    template BasicTensor<T> embed_tokens(std::span<const int>, const BasicTensor<T>&, const BasicTensor<T>&,       \
                                         const std::optional<ModalityRow<T>>&);                                    \
    template BasicTensor<T> max_pool_time(const BasicTensor<T>&);

FLOWCAP_INSTANTIATE_NN(float)
FLOWCAP_INSTANTIATE_NN(double)

template void ParamStore<float>::load_values(const ParamStore<float>&);
template void ParamStore<float>::load_values(const ParamStore<double>&);
template void ParamStore<double>::load_values(const ParamStore<float>&);
template void ParamStore<double>::load_values(const ParamStore<double>&);

}  // namespace flowcap
