#pragma once

// Model configuration and the full parameter set. The model is templated on
// the scalar type so the same graph can run in float (training, inference)
// and double (finite-difference oracle).

#include <cstdint>
#include <string>
#include <vector>

#include "flowcap/nn.hpp"

namespace flowcap {

struct ModelConfig {
    std::size_t feature_dim = 16;  // D_v
    std::size_t d = 64;
    std::size_t heads = 4;
    std::size_t ffn_mult = 4;
    std::size_t global_layers = 2;
    std::size_t local_layers = 2;
    std::size_t flow_layers = 2;
    std::size_t trunk_layers = 2;
    std::size_t ev_layers = 1;
    std::size_t ec_layers = 1;
    std::size_t vocab_size = 0;
    std::size_t max_frames = 900;
    std::size_t max_segments = 32;      // segment-embedding ordinals beyond this share the last row
    std::size_t max_caption_len = 30;   // caption tokens, excluding BOS/EOS
    std::size_t max_text_len = 512;     // textual-flow sequence length
    bool no_global = false;
    bool align_stop_text_grad = false;

    // ConfigError on inconsistent values.
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct Model {
    ModelConfig cfg;
    ParamStore<T> params;

    // Visual embedding and encoder stacks.
    BasicTensor<T> feat_w, feat_b;  // [D_v×d], [d]
    BasicTensor<T> frame_pos;       // [max_frames×d]
    BasicTensor<T> segment_emb;     // [(max_segments+1)×d], row 0 = background
    std::vector<TransformerLayerParams<T>> global, local;

    // Visual flow.
    BasicTensor<T> flow_start;  // [1×d]
    BasicTensor<T> flow_pos;    // [(max_segments+1)×d]
    std::vector<TransformerLayerParams<T>> flow;
    // Final norm, gain only. The loss reads flow outputs through row
    // differences, so a shared bias would have no gradient.
    BasicTensor<T> flow_ln_gain;

    // Shared decoder trunk (textual flow and generator).
    BasicTensor<T> tok_emb;   // [V×d]
    BasicTensor<T> text_pos;  // [max(max_text_len, max_caption_len+2)×d]
    std::vector<TransformerLayerParams<T>> trunk;
    BasicTensor<T> trunk_ln_gain, trunk_ln_bias;

    // Generator.
    std::vector<TransformerLayerParams<T>> ev, ec;
    BasicTensor<T> mm_pos;    // [(max_frames+max_caption_len+2)×d]
    BasicTensor<T> modality;  // [2×d], 0 visual, 1 text
    BasicTensor<T> out_w;     // [2d×V], rows [0,d) read ΔF, rows [d,2d) read h
    BasicTensor<T> out_b;     // [V]

    static Model create(const ModelConfig& cfg, std::uint64_t seed);
};

// Shared decoder trunk: transformer stack under `mask`, then final layer norm.
template <class T>
BasicTensor<T> run_trunk(const Model<T>& m, const BasicTensor<T>& x, const AttentionMask& mask);

// Copies parameter values across precisions (same config).
template <class To, class From>
Model<To> convert_model(const Model<From>& m);

// Order-sensitive FNV-1a hash of every parameter's bytes.
template <class T>
std::uint64_t parameter_hash(const Model<T>& m);

// Names of trunk parameters (tok_emb, text_pos, trunk.*, trunk_ln.*).
bool is_trunk_parameter(const std::string& name);

}  // namespace flowcap
