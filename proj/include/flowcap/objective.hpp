#pragma once

// Per-video training objective and the end-to-end gradient check.

#include <span>
#include <string>
#include <vector>

#include "flowcap/caption_generator.hpp"
#include "flowcap/data.hpp"
#include "flowcap/gradcheck.hpp"
#include "flowcap/model.hpp"
#include "flowcap/vocab.hpp"

namespace flowcap {

struct VideoExample {
    std::string video_id;
    VideoFeatures features;
    std::vector<SegmentSpan> spans;
    std::vector<std::vector<int>> captions;  // one per span, no special tokens
    std::vector<std::string> references;     // raw caption text per span
};

// Loads features (truncated to max_frames), maps seconds to frames and
// encodes captions, cut to max_caption_len tokens. Segments dropped by
// truncation lose their captions too. A caption that tokenizes to nothing is
// a DataError.
std::vector<VideoExample> make_examples(std::span<const VideoRecord> records, const Vocabulary& vocab,
                                        const ModelConfig& cfg);

struct LossOptions {
    double lambda = 1.0;
    bool no_align = false;
};

template <class T>
struct VideoLoss {
    BasicTensor<T> total;  // nll + lambda * mse (mse left out when no_align or lambda == 0)
    BasicTensor<T> nll;    // summed over tokens and segments
    BasicTensor<T> mse;
    std::size_t tokens = 0;
};

template <class T>
VideoLoss<T> video_loss(const Model<T>& m, const VideoExample& ex, const LossOptions& opt);

// Trunk-only language-model loss over the [F]-joined caption stream, read
// through the h half of the output projection (ΔF half fed zeros).
template <class T>
CaptionLoss<T> lm_loss(const Model<T>& m, std::span<const std::vector<int>> captions);

struct ModelGradcheckReport {
    GradcheckReport mixed;             // float analytic vs double differences
    GradcheckReport double_precision;  // double analytic vs double differences
    std::size_t parameters = 0;
    double seconds = 0.0;
};

// Toy config for the end-to-end check: d=8, H=2, one layer per stack.
ModelConfig gradcheck_model_config();

// Full L = L_NLL + lambda L_MSE on a random 2-segment toy video.
ModelGradcheckReport model_gradcheck(std::uint64_t seed, double lambda = 1.0, double tol32 = 1e-2,
                                     double tol64 = 1e-5);

}  // namespace flowcap
