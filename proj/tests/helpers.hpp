#pragma once

#include <vector>

#include "flowcap/objective.hpp"
#include "flowcap/ops.hpp"
#include "flowcap/rng.hpp"

namespace flowcap::test {

template <class T = float>
BasicTensor<T> random_tensor(const Shape& shape, Rng& rng, bool requires_grad = false, double sd = 1.0) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(static_cast<float>(sd * rng.normal()));
    return BasicTensor<T>::from(shape, std::move(v), requires_grad);
}

inline ModelConfig tiny_config(std::size_t vocab = 16) {
    ModelConfig c;
    c.feature_dim = 4;
    c.d = 8;
    c.heads = 2;
    c.ffn_mult = 2;
    c.global_layers = c.local_layers = c.flow_layers = c.trunk_layers = 1;
    c.vocab_size = vocab;
    c.max_frames = 32;
    c.max_segments = 8;
    c.max_caption_len = 8;
    c.max_text_len = 64;
    return c;
}

// K segments of `frames` frames each with random captions over word ids.
inline VideoExample toy_example(std::size_t K, std::size_t frames, std::size_t dim, std::size_t vocab, Rng& rng,
                                std::string id = "toy") {
    VideoExample ex;
    ex.video_id = std::move(id);
    ex.features.frames = K * frames;
    ex.features.dim = dim;
    for (std::size_t i = 0; i < ex.features.frames * dim; ++i) ex.features.values.push_back(static_cast<float>(rng.normal()));
    for (std::size_t k = 0; k < K; ++k) {
        ex.spans.push_back({k * frames, (k + 1) * frames, k + 1});
        std::vector<int> cap(static_cast<std::size_t>(rng.range(1, 4)));
        for (auto& t : cap) t = rng.range(kFirstWordId, static_cast<int>(vocab) - 1);
        ex.captions.push_back(std::move(cap));
        ex.references.push_back("ref");
    }
    return ex;
}

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

}  // namespace flowcap::test
