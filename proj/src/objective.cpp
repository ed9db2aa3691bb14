#include "flowcap/objective.hpp"

#include <chrono>
#include <iostream>

#include "flowcap/flow_align.hpp"
#include "flowcap/visual_encoder.hpp"

namespace flowcap {

std::vector<VideoExample> make_examples(std::span<const VideoRecord> records, const Vocabulary& vocab,
                                        const ModelConfig& cfg) {
    std::vector<VideoExample> out;
    for (const auto& r : records) {
        VideoExample ex;
        ex.video_id = r.video_id;
        ex.features = load_features(r.resolved_feature_path, cfg.max_frames);
        if (ex.features.dim != cfg.feature_dim) {
            throw DataError("video " + r.video_id + ": feature dim " + std::to_string(ex.features.dim) +
                            " does not match feature_dim " + std::to_string(cfg.feature_dim));
        }
        std::vector<std::size_t> kept;
        ex.spans = frame_spans(r, ex.features.frames, &kept);
        if (ex.spans.empty()) {
            std::cerr << "warning: video " << r.video_id << " has no segment inside its features and is skipped\n";
            continue;
        }
        if (ex.spans.size() > cfg.max_segments) {
            throw DataError("video " + r.video_id + ": " + std::to_string(ex.spans.size()) +
                            " segments exceed max_segments " + std::to_string(cfg.max_segments));
        }
        for (std::size_t i : kept) {
            auto ids = vocab.encode(r.segments[i].caption);
            if (ids.empty()) throw DataError("video " + r.video_id + ": segment " + std::to_string(i) + " has an empty caption");
            if (ids.size() > cfg.max_caption_len) ids.resize(cfg.max_caption_len);
            ex.captions.push_back(std::move(ids));
            ex.references.push_back(r.segments[i].caption);
        }
        out.push_back(std::move(ex));
    }
    return out;
}

template <class T>
VideoLoss<T> video_loss(const Model<T>& m, const VideoExample& ex, const LossOptions& opt) {
    auto enc = encode_video(m, features_tensor<T>(ex.features), ex.spans);
    auto vflow = visual_flow<T>(m, enc.keys);
    auto tflow = textual_flow<T>(m, ex.captions, ex.video_id);
    VideoLoss<T> out;
    out.mse = alignment_loss(vflow, tflow, m.cfg.align_stop_text_grad);
    for (std::size_t i = 0; i < enc.segments.size(); ++i) {
        auto c = caption_loss(m, enc.segments[i], ex.captions[i], vflow.delta[i]);
        out.nll = i == 0 ? c.nll : add(out.nll, c.nll);
        out.tokens += c.tokens;
    }
    out.total = out.nll;
    if (!opt.no_align && opt.lambda > 0) out.total = add(out.nll, scale(out.mse, static_cast<T>(opt.lambda)));
    return out;
}

template <class T>
CaptionLoss<T> lm_loss(const Model<T>& m, std::span<const std::vector<int>> captions) {
    const auto seq = textual_flow_sequence(captions);
    if (seq.size() > std::min(m.text_pos.rows(), m.cfg.max_text_len)) {
        throw LengthError("language-model sequence of " + std::to_string(seq.size()) + " tokens exceeds max_text_len");
    }
    auto h = run_trunk(m, embed_tokens<T>(seq, m.tok_emb, m.text_pos), AttentionMask::causal(seq.size()));
    const auto targets = next_token_targets(seq);
    CaptionLoss<T> out;
    out.nll = nll_from_logits(fuse_logits(m, h, BasicTensor<T>::zeros({m.cfg.d})), targets);
    out.tokens = targets.size();
    return out;
}

ModelConfig gradcheck_model_config() {
    ModelConfig c;
    c.feature_dim = 4;
    c.d = 8;
    c.heads = 2;
    c.ffn_mult = 4;
    c.global_layers = c.local_layers = c.flow_layers = c.trunk_layers = c.ev_layers = c.ec_layers = 1;
    c.vocab_size = 12;
    c.max_frames = 8;
    c.max_segments = 4;
    c.max_caption_len = 4;
    c.max_text_len = 16;
    return c;
}

namespace {

template <class T>
std::vector<std::vector<double>> collect_grads(const Model<T>& m) {
    std::vector<std::vector<double>> g;
    for (const auto& p : m.params.items()) {
        std::vector<double> v(p.tensor.numel(), 0.0);
        if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), v.begin());
        g.push_back(std::move(v));
    }
    return g;
}

}  // namespace

ModelGradcheckReport model_gradcheck(std::uint64_t seed, double lambda, double tol32, double tol64) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = gradcheck_model_config();
    Rng rng(derive_seed(seed, "toy-video"));

    VideoExample ex;
    ex.video_id = "toy";
    ex.features.frames = 6;
    ex.features.dim = cfg.feature_dim;
    for (std::size_t i = 0; i < ex.features.frames * ex.features.dim; ++i) {
        ex.features.values.push_back(static_cast<float>(rng.normal()));
    }
    ex.spans = {{0, 3, 1}, {3, 6, 2}};
    for (int k = 0; k < 2; ++k) {
        std::vector<int> cap(static_cast<std::size_t>(rng.range(2, 3)));
        for (auto& t : cap) t = rng.range(kFirstWordId, static_cast<int>(cfg.vocab_size) - 1);
        ex.captions.push_back(std::move(cap));
    }
    const LossOptions opt{lambda, false};

    auto mf = Model<float>::create(cfg, seed);
    auto md = convert_model<double>(mf);
    std::vector<std::string> names;
    for (const auto& p : mf.params.items()) names.push_back(p.name);

    backward(video_loss(mf, ex, opt).total);
    const auto analytic32 = collect_grads(mf);
    backward(video_loss(md, ex, opt).total);
    const auto analytic64 = collect_grads(md);

    std::vector<Tensor64> handles;
    for (const auto& p : md.params.items()) handles.push_back(p.tensor);
    const auto numeric = numeric_gradients<double>([&] { return video_loss(md, ex, opt).total.item(); }, handles,
                                                   kOracleStep, Stencil::FourPoint);

    ModelGradcheckReport r;
    r.mixed = compare_gradients("full loss (32-bit analytic)", names, analytic32, numeric, tol32);
    r.double_precision = compare_gradients("full loss (64-bit analytic)", names, analytic64, numeric, tol64);
    r.parameters = mf.params.total_size();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

template VideoLoss<float> video_loss(const Model<float>&, const VideoExample&, const LossOptions&);
template VideoLoss<double> video_loss(const Model<double>&, const VideoExample&, const LossOptions&);
template CaptionLoss<float> lm_loss(const Model<float>&, std::span<const std::vector<int>>);
template CaptionLoss<double> lm_loss(const Model<double>&, std::span<const std::vector<int>>);

}  // namespace flowcap
