#pragma once

// AdamW, warmup schedule, the joint training loop, trunk language-model
// pretraining and checkpoints.
//
// Checkpoint file (little-endian):
//   "FCKP", u32 version
//   u32 length + JSON text {"model":{...},"train":{...},"vocab":[words]}
//   u64 epoch, u64 optimizer step
//   u32 length + rng state text
//   u32 count, then per parameter a named tensor
//   u32 count, then per parameter the first-moment tensor ("m." + name)
//   u32 count, then per parameter the second-moment tensor ("v." + name)
// Named tensor: u32 name length, name bytes, u32 rank, rank x u32 dims,
// float32 payload.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowcap/model.hpp"
#include "flowcap/objective.hpp"
#include "flowcap/rng.hpp"
#include "flowcap/vocab.hpp"

namespace flowcap {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 0.01;
    std::size_t warmup_epochs = 5;
    std::size_t epochs = 20;
    std::size_t batch_videos = 1;
    double lambda = 1.0;
    double grad_clip = 1.0;  // 0 disables clipping
    std::uint64_t seed = 1;
    bool no_align = false;
    bool no_global = false;
    bool no_pretrain = false;
    std::size_t pretrain_epochs = 5;
    double pretrain_lr = 1e-3;

    // ConfigError unless lr > 0, lambda >= 0, warmup_epochs <= epochs, batch_videos >= 1.
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

// Linear 0 -> lr over warmup_epochs * steps_per_epoch steps, then constant.
double lr_at(std::uint64_t step, const TrainConfig& cfg, std::size_t steps_per_epoch);

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    std::uint64_t step = 0;
    std::vector<std::vector<float>> m, v;  // mirror the parameter list

    static OptimizerState for_params(const ParamStore<float>& params);
};

// One update at step t >= 1: decay theta by lr*wd*theta, then the
// bias-corrected Adam step. Computed in double, stored as float.
void adamw_update(std::span<float> theta, std::span<const float> grad, std::span<float> m, std::span<float> v,
                  std::uint64_t t, double lr, double weight_decay, const AdamHyper& h = {});

// Updates every parameter whose name passes `select` (all when empty).
// Missing gradients count as zero. ContractError on a state/parameter
// shape mismatch.
void adamw_step(ParamStore<float>& params, OptimizerState& state, double lr, double weight_decay,
                const std::function<bool(const std::string&)>& select = {}, const AdamHyper& h = {});

// Scales all gradients so their global L2 norm is at most max_norm. Returns
// the norm before scaling.
double clip_grad_norm(ParamStore<float>& params, double max_norm);

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double nll_per_token = 0.0;
    double mse = 0.0;       // mean per video
    double lr = 0.0;        // at the last update of the epoch
};

struct TrainState {
    Model<float> model;
    Vocabulary vocab;
    TrainConfig train;
    OptimizerState opt;
    Rng rng;
    std::size_t epoch = 0;  // completed epochs
};

// Builds the model (seeded from train.seed) and runs lm_pretrain on the
// training captions unless no_pretrain. The model config's no_global
// follows train.no_global.
TrainState init_training(ModelConfig model_cfg, const TrainConfig& train, Vocabulary vocab,
                         std::span<const VideoExample> examples);

// Next-token training of the trunk (and the h half of the output layer) on
// the [F]-joined caption streams. Only trunk.* and gen.out_* move.
std::vector<double> lm_pretrain(Model<float>& m, std::span<const VideoExample> examples, std::size_t epochs,
                                double lr, std::uint64_t seed);

using EpochCallback = std::function<void(const TrainState&, const EpochLog&)>;

// Runs epochs state.epoch+1 .. state.train.epochs. NumericError naming the
// epoch and video on a non-finite loss.
std::vector<EpochLog> train(TrainState& state, std::span<const VideoExample> examples,
                            const EpochCallback& on_epoch = {});

// Sum of NLL over sum of target tokens, no gradients.
double heldout_nll(const Model<float>& m, std::span<const VideoExample> examples);

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

std::string train_config_json(const TrainConfig& c);
std::string model_config_json(const ModelConfig& c);

}  // namespace flowcap
