#pragma once

// Dataset model and on-disk formats.
//
// Manifest (JSON):
//   {"videos":[{"video_id":str,"duration_sec":float,"fps":float,
//               "feature_path":str,
//               "segments":[{"start_sec":float,"end_sec":float,"caption":str}]}]}
// feature_path is resolved relative to the manifest's directory.
//
// Feature binary: "DVCF", u32 version=1, u32 T, u32 D, then T*D float32,
// all little-endian, row-major, no padding and no trailing bytes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace flowcap {

inline constexpr std::size_t kDefaultMaxFrames = 900;
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

struct Segment {
    double start_sec = 0.0;
    double end_sec = 0.0;
    std::string caption;
};

struct VideoRecord {
    std::string video_id;
    double duration_sec = 0.0;
    double fps = 2.0;
    std::string feature_path;  // as written in the manifest
    std::filesystem::path resolved_feature_path;
    std::vector<Segment> segments;
};

struct VideoFeatures {
    std::size_t frames = 0;
    std::size_t dim = 0;
    std::vector<float> values;  // frames*dim, row-major
};

// Frame interval [start_frame, end_frame) of the segment with 1-based ordinal.
struct SegmentSpan {
    std::size_t start_frame = 0;
    std::size_t end_frame = 0;
    std::size_t ordinal = 1;
};

std::vector<VideoRecord> load_dataset(const std::filesystem::path& manifest_path);
void save_manifest(const std::filesystem::path& manifest_path, const std::vector<VideoRecord>& records);

VideoFeatures load_features(const std::filesystem::path& path, std::size_t max_frames = kDefaultMaxFrames);
void save_features(const std::filesystem::path& path, const VideoFeatures& features);

// Seconds to frames: [floor(start*fps), ceil(end*fps)) clipped to `frames`.
// Segments left empty by clipping are dropped with a warning on stderr; their
// indices into record.segments are omitted from `kept` when given.
std::vector<SegmentSpan> frame_spans(const VideoRecord& record, std::size_t frames,
                                     std::vector<std::size_t>* kept = nullptr);

struct SynthConfig {
    std::size_t n_videos = 200;
    std::size_t topics = 4;
    std::size_t k_min = 2;
    std::size_t k_max = 5;
    std::size_t frames_min = 2;
    std::size_t frames_max = 6;
    std::size_t feature_dim = 16;
    double topic_transition_prob = 0.8;
    double noise_scale = 0.3;
    double fps = 2.0;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SynthVideo {
    VideoRecord record;
    VideoFeatures features;
    std::vector<std::size_t> topics;  // latent topic per segment
};

// Markov topic chains; per-topic feature embeddings tiled over frames plus
// Gaussian noise; captions from per-topic grammars with "then ..." on a topic
// change and "continue to ..." on a repeat.
std::vector<SynthVideo> synth_generate(const SynthConfig& cfg);

// Writes features/<video_id>.bin and one manifest per split under `dir`.
// The first `n_val` videos go to val.json, the rest to train.json.
void write_synth_dataset(const std::filesystem::path& dir, const std::vector<SynthVideo>& videos, std::size_t n_val);

}  // namespace flowcap
