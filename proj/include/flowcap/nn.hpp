#pragma once

// Transformer building blocks: parameter storage, attention masks,
// multi-head attention, pre-norm transformer layers, token embedding and
// temporal max-pooling.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowcap/ops.hpp"
#include "flowcap/rng.hpp"

namespace flowcap {

template <class T>
struct NamedParam {
    std::string name;
    BasicTensor<T> tensor;
};

// Ordered, named collection of trainable leaves. Order is creation order and
// is the order used by the optimizer and checkpoints.
template <class T>
class ParamStore {
public:
    enum class Init { Zeros, Ones, Normal };

    BasicTensor<T> create(const std::string& name, const Shape& shape, Init init, double stddev, Rng& rng);

    const std::vector<NamedParam<T>>& items() const { return params_; }
    std::vector<NamedParam<T>>& items() { return params_; }
    const BasicTensor<T>* find(const std::string& name) const;
    std::size_t total_size() const;
    void zero_grad();

    // Copies values (with conversion) from a store with identical names and shapes.
    template <class U>
    void load_values(const ParamStore<U>& other);

private:
    std::vector<NamedParam<T>> params_;
};

class AttentionMask {
public:
    enum class Kind { Full, Causal, Prefix };

    static AttentionMask full(std::size_t length) { return {Kind::Full, length, 0}; }
    static AttentionMask causal(std::size_t length) { return {Kind::Causal, length, 0}; }
    // Positions < prefix see the whole prefix; later positions see the prefix
    // plus suffix positions up to and including themselves.
    static AttentionMask prefix(std::size_t length, std::size_t prefix_len) { return {Kind::Prefix, length, prefix_len}; }

    // pad_mask[j] == false marks position j as padding: no query attends to it.
    AttentionMask& with_padding(std::vector<bool> pad_mask);

    Kind kind() const { return kind_; }
    std::size_t length() const { return length_; }
    std::size_t prefix_length() const { return prefix_; }
    bool allows(std::size_t query, std::size_t key) const;
    std::vector<std::uint8_t> matrix() const;

private:
    AttentionMask(Kind k, std::size_t len, std::size_t p) : kind_(k), length_(len), prefix_(p) {}

    Kind kind_;
    std::size_t length_;
    std::size_t prefix_;
    std::vector<bool> valid_;
};

template <class T>
struct TransformerLayerParams {
    std::size_t heads = 1;
    BasicTensor<T> ln1_gain, ln1_bias;
    // No key bias: it shifts every logit of a query row equally, so softmax
    // cancels it and its gradient is identically zero.
    BasicTensor<T> wq, bq, wk, wv, bv, wo, bo;
    BasicTensor<T> ln2_gain, ln2_bias;
    BasicTensor<T> w1, b1, w2, b2;

    std::size_t width() const { return wq.shape()[0]; }
};

template <class T>
TransformerLayerParams<T> make_transformer_layer(ParamStore<T>& store, const std::string& prefix, std::size_t d,
                                                 std::size_t heads, std::size_t ffn_mult, Rng& rng);

template <class T>
std::vector<TransformerLayerParams<T>> make_transformer_stack(ParamStore<T>& store, const std::string& prefix,
                                                              std::size_t layers, std::size_t d, std::size_t heads,
                                                              std::size_t ffn_mult, Rng& rng);

// x + b for x[L×in]·W[in×out].
template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);

// Scaled dot-product attention per head (scale 1/sqrt(d/H)), heads
// concatenated and projected by wo/bo. Residual and normalization belong to
// the enclosing layer. When `weights_out` is given it receives the per-head
// attention matrices [L×L].
template <class T>
BasicTensor<T> multi_head_attention(const BasicTensor<T>& x, const AttentionMask& mask,
                                    const TransformerLayerParams<T>& p,
                                    std::vector<BasicTensor<T>>* weights_out = nullptr);

// Pre-norm layer: h = x + MHA(LN1(x)); out = h + FFN(LN2(h)).
template <class T>
BasicTensor<T> transformer_layer(const BasicTensor<T>& x, const AttentionMask& mask,
                                 const TransformerLayerParams<T>& p);

template <class T>
BasicTensor<T> transformer_stack(const BasicTensor<T>& x, const AttentionMask& mask,
                                 std::span<const TransformerLayerParams<T>> layers);

template <class T>
struct ModalityRow {
    BasicTensor<T> table;  // [2×d]
    int id = 0;
};

// token + position (+ modality) embedding per position. Empty ids give a 0×d result.
template <class T>
BasicTensor<T> embed_tokens(std::span<const int> ids, const BasicTensor<T>& table, const BasicTensor<T>& positions,
                            const std::optional<ModalityRow<T>>& modality = std::nullopt);

// f = elementwise max over time of s[T×d].
template <class T>
BasicTensor<T> max_pool_time(const BasicTensor<T>& s);

}  // namespace flowcap
