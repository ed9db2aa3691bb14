#include "flowcap/model.hpp"

#include <cmath>
#include <cstring>

#include "flowcap/vocab.hpp"

namespace flowcap {

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* key) {
        if (v == 0) throw ConfigError(std::string(key) + " must be positive");
    };
    positive(feature_dim, "feature_dim");
    positive(d, "d");
    positive(heads, "heads");
    positive(ffn_mult, "ffn_mult");
    positive(global_layers, "global_layers");
    positive(local_layers, "local_layers");
    positive(flow_layers, "flow_layers");
    positive(trunk_layers, "trunk_layers");
    positive(ev_layers, "ev_layers");
    positive(ec_layers, "ec_layers");
    positive(max_frames, "max_frames");
    positive(max_segments, "max_segments");
    positive(max_caption_len, "max_caption_len");
    positive(max_text_len, "max_text_len");
    if (d % heads != 0) {
        throw ConfigError("d=" + std::to_string(d) + " is not divisible by heads=" + std::to_string(heads));
    }
    if (vocab_size <= static_cast<std::size_t>(kFirstWordId)) {
        throw ConfigError("vocab_size " + std::to_string(vocab_size) + " leaves no room for corpus words");
    }
}

template <class T>
Model<T> Model<T>::create(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    using Init = typename ParamStore<T>::Init;
    Model m;
    m.cfg = cfg;
    Rng rng(seed);
    auto& ps = m.params;
    const std::size_t d = cfg.d, V = cfg.vocab_size;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));

    m.feat_w = ps.create("visual.feat_w", {cfg.feature_dim, d}, Init::Normal,
                         1.0 / std::sqrt(static_cast<double>(cfg.feature_dim)), rng);
    m.feat_b = ps.create("visual.feat_b", {d}, Init::Zeros, 0, rng);
    m.frame_pos = ps.create("visual.frame_pos", {cfg.max_frames, d}, Init::Normal, sd, rng);
    m.segment_emb = ps.create("visual.segment_emb", {cfg.max_segments + 1, d}, Init::Normal, sd, rng);
    m.global = make_transformer_stack(ps, "visual.global", cfg.global_layers, d, cfg.heads, cfg.ffn_mult, rng);
    m.local = make_transformer_stack(ps, "visual.local", cfg.local_layers, d, cfg.heads, cfg.ffn_mult, rng);

    m.flow_start = ps.create("flow.start", {1, d}, Init::Normal, sd, rng);
    m.flow_pos = ps.create("flow.pos", {cfg.max_segments + 1, d}, Init::Normal, sd, rng);
    m.flow = make_transformer_stack(ps, "flow.layers", cfg.flow_layers, d, cfg.heads, cfg.ffn_mult, rng);
    m.flow_ln_gain = ps.create("flow.ln.gain", {d}, Init::Ones, 0, rng);

    m.tok_emb = ps.create("trunk.tok_emb", {V, d}, Init::Normal, sd, rng);
    m.text_pos = ps.create("trunk.text_pos", {std::max(cfg.max_text_len, cfg.max_caption_len + 2), d},
                           Init::Normal, sd, rng);
    m.trunk = make_transformer_stack(ps, "trunk.layers", cfg.trunk_layers, d, cfg.heads, cfg.ffn_mult, rng);
    m.trunk_ln_gain = ps.create("trunk.ln.gain", {d}, Init::Ones, 0, rng);
    m.trunk_ln_bias = ps.create("trunk.ln.bias", {d}, Init::Zeros, 0, rng);

    m.ev = make_transformer_stack(ps, "gen.ev", cfg.ev_layers, d, cfg.heads, cfg.ffn_mult, rng);
    m.ec = make_transformer_stack(ps, "gen.ec", cfg.ec_layers, d, cfg.heads, cfg.ffn_mult, rng);
    m.mm_pos = ps.create("gen.mm_pos", {cfg.max_frames + cfg.max_caption_len + 2, d}, Init::Normal, sd, rng);
    m.modality = ps.create("gen.modality", {2, d}, Init::Normal, sd, rng);
    m.out_w = ps.create("gen.out_w", {2 * d, V}, Init::Normal, 1.0 / std::sqrt(2.0 * static_cast<double>(d)), rng);
    m.out_b = ps.create("gen.out_b", {V}, Init::Zeros, 0, rng);
    return m;
}

template <class T>
BasicTensor<T> run_trunk(const Model<T>& m, const BasicTensor<T>& x, const AttentionMask& mask) {
    return layer_norm(transformer_stack<T>(x, mask, m.trunk), m.trunk_ln_gain, m.trunk_ln_bias);
}

template <class To, class From>
Model<To> convert_model(const Model<From>& m) {
    auto out = Model<To>::create(m.cfg, 0);
    out.params.load_values(m.params);
    return out;
}

template <class T>
std::uint64_t parameter_hash(const Model<T>& m) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& p : m.params.items()) {
        mix(p.name.data(), p.name.size());
        auto v = p.tensor.data();
        mix(v.data(), v.size() * sizeof(T));
    }
    return h;
}

bool is_trunk_parameter(const std::string& name) { return name.rfind("trunk.", 0) == 0; }

template struct Model<float>;
template BasicTensor<float> run_trunk(const Model<float>&, const Tensor&, const AttentionMask&);
template BasicTensor<double> run_trunk(const Model<double>&, const Tensor64&, const AttentionMask&);
template struct Model<double>;
template Model<double> convert_model(const Model<float>&);
template Model<float> convert_model(const Model<double>&);
template Model<float> convert_model(const Model<float>&);
template std::uint64_t parameter_hash(const Model<float>&);
template std::uint64_t parameter_hash(const Model<double>&);

}  // namespace flowcap
