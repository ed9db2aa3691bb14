#pragma once

// Train-then-evaluate runs and the ablation table.

#include <filesystem>
#include <string>
#include <vector>

#include "flowcap/decoding.hpp"
#include "flowcap/metrics.hpp"
#include "flowcap/training.hpp"

namespace flowcap {

struct Corpus {
    Vocabulary vocab;  // built from training captions
    std::vector<VideoExample> train;
    std::vector<VideoExample> val;
};

// Reads <dir>/train.json and <dir>/val.json.
Corpus load_corpus(const std::filesystem::path& dir, const ModelConfig& cfg);

std::vector<ParagraphPair> paragraph_pairs(std::span<const VideoExample> videos, std::span<const Paragraph> generated);

struct RunResult {
    std::string variant;
    std::uint64_t seed = 0;
    std::vector<EpochLog> log;
    double heldout_nll = 0.0;
    MetricReport metrics;
};

RunResult train_and_evaluate(const Corpus& corpus, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                             const DecodeConfig& decode_cfg, const std::string& variant, std::size_t workers = 1);

struct Stat {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation, 0 for a single run
};
Stat summarize(const std::vector<double>& v);

struct AblationRow {
    std::string variant;
    Stat bleu4, cider, r4, heldout_nll;
    std::vector<RunResult> runs;
};

// Rows full, no_align, no_global, no_pretrain; each trained with every seed
// (train_cfg.seed and decode_cfg.seed replaced per run).
std::vector<AblationRow> ablate(const Corpus& corpus, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                const DecodeConfig& decode_cfg, const std::vector<std::uint64_t>& seeds,
                                std::size_t workers = 1);

// Full model at each lambda.
std::vector<AblationRow> lambda_sweep(const Corpus& corpus, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                      const DecodeConfig& decode_cfg, const std::vector<std::uint64_t>& seeds,
                                      const std::vector<double>& lambdas, std::size_t workers = 1);

std::string format_table(const std::vector<AblationRow>& rows);

}  // namespace flowcap
