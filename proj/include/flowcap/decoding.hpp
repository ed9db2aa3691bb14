#pragma once

// Progressive paragraph generation with top-k sampling and the cross-caption
// repetition filter.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flowcap/model.hpp"
#include "flowcap/objective.hpp"
#include "flowcap/rng.hpp"
#include "flowcap/vocab.hpp"

namespace flowcap {

struct DecodeConfig {
    std::size_t k = 10;
    std::size_t max_len = 30;      // caption tokens, EOS not counted
    double temperature = 1.0;
    std::size_t rep_ngram = 4;     // 0 disables the filter
    std::size_t max_resample = 5;  // extra draws per caption after a rejection
    std::uint64_t seed = 0;

    // ConfigError unless 1 <= k <= vocab_size, max_len >= 1, temperature > 0.
    void validate(std::size_t vocab_size) const;
};

// Keeps the k largest entries (ties at the k-th value go to the lower id),
// renormalizes and inverts the CDF at u in [0,1). NumericError when the kept
// mass is zero or not finite.
int topk_sample(std::span<const double> dist, std::size_t k, double u);
int topk_sample(std::span<const double> dist, std::size_t k, Rng& rng);

// Ids of the k entries topk_sample can return, ascending.
std::vector<int> topk_support(std::span<const double> dist, std::size_t k);

// softmax(logits / temperature) with PAD, BOS, [F] and UNK forced to zero.
std::vector<double> next_token_distribution(std::span<const float> logits, double temperature);

// Samples one caption for segment representation s_i conditioned on
// delta_v. Returns tokens without BOS/EOS.
std::vector<int> generate_caption(const Model<float>& m, const Tensor& segment, const Tensor& delta_v,
                                  const DecodeConfig& cfg, Rng& rng);

// Number of n-grams of `candidate` already present in `seen`.
std::size_t repeated_ngrams(std::span<const int> candidate, const std::vector<std::vector<int>>& seen, std::size_t n);

// Repetition filter over K captions. sample(i) draws a candidate for caption
// i. A candidate sharing an n-gram with earlier accepted captions is redrawn
// up to max_resample times; after that the candidate with the fewest repeated
// n-grams (earliest on ties) is kept.
std::vector<std::vector<int>> filter_paragraph(std::size_t K, const std::function<std::vector<int>(std::size_t)>& sample,
                                               std::size_t rep_ngram, std::size_t max_resample);

struct Paragraph {
    std::vector<std::vector<int>> captions;
    std::vector<std::string> sentences;
};

// Encoder and visual flow run once; captions are sampled in segment order.
Paragraph generate_paragraph(const Model<float>& m, const Vocabulary& vocab, const VideoFeatures& features,
                             std::span<const SegmentSpan> spans, const DecodeConfig& cfg, Rng& rng);

// Per-video stream seeded with derive_seed(cfg.seed, video_id). Videos are
// independent and run on up to `workers` threads; output order follows input.
std::vector<Paragraph> generate_corpus(const Model<float>& m, const Vocabulary& vocab,
                                       std::span<const VideoExample> videos, const DecodeConfig& cfg,
                                       std::size_t workers = 1);

}  // namespace flowcap
