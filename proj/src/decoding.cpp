#include "flowcap/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <set>

#include "flowcap/caption_generator.hpp"
#include "flowcap/flow_align.hpp"
#include "flowcap/visual_encoder.hpp"

namespace flowcap {

void DecodeConfig::validate(std::size_t vocab_size) const {
    if (k < 1 || k > vocab_size) {
        throw ConfigError("decode k=" + std::to_string(k) + " must lie in [1, " + std::to_string(vocab_size) + "]");
    }
    if (max_len < 1) throw ConfigError("decode max_len must be >= 1");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("decode temperature must be > 0");
}

std::vector<int> topk_support(std::span<const double> dist, std::size_t k) {
    std::vector<int> order(dist.size());
    std::iota(order.begin(), order.end(), 0);
    k = std::min(k, dist.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), [&](int a, int b) {
        return dist[a] != dist[b] ? dist[a] > dist[b] : a < b;
    });
    order.resize(k);
    return order;
}

int topk_sample(std::span<const double> dist, std::size_t k, double u) {
    if (dist.empty() || k == 0) throw ContractError("topk_sample: empty distribution or k = 0");
    double total = 0.0;
    for (double p : dist) {
        if (!std::isfinite(p) || p < 0.0) throw NumericError("topk_sample: invalid probability " + std::to_string(p));
        total += p;
    }
    if (total == 0.0) throw NumericError("topk_sample: all-zero distribution");
    if (std::abs(total - 1.0) > 1e-5) throw ContractError("topk_sample: distribution sums to " + std::to_string(total));

    const auto kept = topk_support(dist, k);
    double mass = 0.0;
    for (int id : kept) mass += dist[id];
    if (!(mass > 0.0)) throw NumericError("topk_sample: zero mass among the top " + std::to_string(k));
    const double target = u * mass;
    double cum = 0.0;
    for (int id : kept) {
        cum += dist[id];
        if (target < cum) return id;
    }
    // u close to 1 with rounding in cum: last entry with nonzero mass.
    for (auto it = kept.rbegin(); it != kept.rend(); ++it) {
        if (dist[*it] > 0.0) return *it;
    }
    return kept.front();
}

int topk_sample(std::span<const double> dist, std::size_t k, Rng& rng) { return topk_sample(dist, k, rng.uniform()); }

std::vector<double> next_token_distribution(std::span<const float> logits, double temperature) {
    std::vector<double> p(logits.size());
    double mx = -std::numeric_limits<double>::infinity();
    auto masked = [](std::size_t i) {
        const int id = static_cast<int>(i);
        return id == kPad || id == kBos || id == kFlowToken || id == kUnk;
    };
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(logits[i])) throw NumericError("non-finite logit at id " + std::to_string(i));
        if (!masked(i)) mx = std::max(mx, logits[i] / temperature);
    }
    if (!std::isfinite(mx)) throw NumericError("no token left to sample after masking");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = masked(i) ? 0.0 : std::exp(logits[i] / temperature - mx);
        s += p[i];
    }
    for (double& v : p) v /= s;
    return p;
}

std::vector<int> generate_caption(const Model<float>& m, const Tensor& segment, const Tensor& delta_v,
                                  const DecodeConfig& cfg, Rng& rng) {
    NoGradGuard no_grad;
    const std::size_t limit = std::min(cfg.max_len, m.cfg.max_caption_len);
    std::vector<int> ids{kBos};
    std::vector<int> out;
    while (out.size() < limit) {
        auto in = build_input_ids(m, segment, ids, delta_v);
        auto h = decode_hidden(m, in);
        auto logits = fuse_logits(m, slice_rows(h, h.rows() - 1, h.rows()), delta_v);
        const auto dist = next_token_distribution(logits.data(), cfg.temperature);
        const int tok = topk_sample(dist, cfg.k, rng);
        if (tok == kEos) break;
        out.push_back(tok);
        ids.push_back(tok);
    }
    return out;
}

namespace {

std::set<std::vector<int>> ngram_set(const std::vector<std::vector<int>>& seqs, std::size_t n) {
    std::set<std::vector<int>> s;
    for (const auto& q : seqs) {
        for (std::size_t i = 0; i + n <= q.size(); ++i) s.emplace(q.begin() + i, q.begin() + i + n);
    }
    return s;
}

std::size_t count_in(std::span<const int> c, const std::set<std::vector<int>>& seen, std::size_t n) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i + n <= c.size(); ++i) hits += seen.count(std::vector<int>(c.begin() + i, c.begin() + i + n));
    return hits;
}

}  // namespace

std::size_t repeated_ngrams(std::span<const int> candidate, const std::vector<std::vector<int>>& seen, std::size_t n) {
    if (n == 0) return 0;
    return count_in(candidate, ngram_set(seen, n), n);
}

std::vector<std::vector<int>> filter_paragraph(std::size_t K, const std::function<std::vector<int>(std::size_t)>& sample,
                                               std::size_t rep_ngram, std::size_t max_resample) {
    std::vector<std::vector<int>> accepted;
    for (std::size_t i = 0; i < K; ++i) {
        auto best = sample(i);
        if (rep_ngram > 0 && !accepted.empty()) {
            const auto seen = ngram_set(accepted, rep_ngram);
            std::size_t best_hits = count_in(best, seen, rep_ngram);
            for (std::size_t r = 0; r < max_resample && best_hits > 0; ++r) {
                auto cand = sample(i);
                const std::size_t hits = count_in(cand, seen, rep_ngram);
                if (hits < best_hits) {
                    best = std::move(cand);
                    best_hits = hits;
                }
            }
        }
        accepted.push_back(std::move(best));
    }
    return accepted;
}

Paragraph generate_paragraph(const Model<float>& m, const Vocabulary& vocab, const VideoFeatures& features,
                             std::span<const SegmentSpan> spans, const DecodeConfig& cfg, Rng& rng) {
    NoGradGuard no_grad;
    auto enc = encode_video(m, features_tensor<float>(features), spans);
    auto vflow = visual_flow<float>(m, enc.keys);
    Paragraph p;
    p.captions = filter_paragraph(
        spans.size(), [&](std::size_t i) { return generate_caption(m, enc.segments[i], vflow.delta[i], cfg, rng); },
        cfg.rep_ngram, cfg.max_resample);
    for (const auto& c : p.captions) p.sentences.push_back(vocab.decode(c));
    return p;
}

std::vector<Paragraph> generate_corpus(const Model<float>& m, const Vocabulary& vocab,
                                       std::span<const VideoExample> videos, const DecodeConfig& cfg,
                                       std::size_t workers) {
    cfg.validate(m.cfg.vocab_size);
    std::vector<Paragraph> out(videos.size());
    const auto n = static_cast<std::ptrdiff_t>(videos.size());
    const int threads = static_cast<int>(std::max<std::size_t>(1, workers));
    std::vector<std::exception_ptr> errors(videos.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        try {
            Rng rng(derive_seed(cfg.seed, videos[idx].video_id));
            out[idx] = generate_paragraph(m, vocab, videos[idx].features, videos[idx].spans, cfg, rng);
        } catch (...) {
            errors[idx] = std::current_exception();
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

}  // namespace flowcap
