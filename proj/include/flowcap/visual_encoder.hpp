#pragma once

// Global-local visual encoder: segment-aware frame embedding, a bidirectional
// stack over the whole video, a local stack over each segment's slice of the
// global output, and max-pooled key representations.

#include <span>
#include <vector>

#include "flowcap/data.hpp"
#include "flowcap/model.hpp"

namespace flowcap {

// Segment-embedding row per frame: 0 for frames no span covers, otherwise the
// lowest covering ordinal, capped at max_segments.
std::vector<int> frame_segment_ids(std::size_t frames, std::span<const SegmentSpan> spans, std::size_t max_segments);

// Feature matrix [T×D_v] as a constant tensor.
template <class T>
BasicTensor<T> features_tensor(const VideoFeatures& f);

// feat·W + b + frame position + segment embedding. ShapeError when D_v does
// not match the config, LengthError when T exceeds max_frames.
template <class T>
BasicTensor<T> embed_video(const Model<T>& m, const BasicTensor<T>& features, std::span<const SegmentSpan> spans);

template <class T>
BasicTensor<T> encode_global(const Model<T>& m, const BasicTensor<T>& embedded);

// Local stack over rows [start, end) of the global output.
template <class T>
BasicTensor<T> encode_segment(const Model<T>& m, const BasicTensor<T>& global_out, const SegmentSpan& span);

template <class T>
BasicTensor<T> key_representation(const BasicTensor<T>& segment) {
    return max_pool_time(segment);
}

template <class T>
struct EncodedVideo {
    std::vector<BasicTensor<T>> segments;  // s_i [T_i×d]
    std::vector<BasicTensor<T>> keys;      // f_i [d]
};

// Full encoder. With cfg.no_global the global stack runs on each segment's
// embedded slice on its own, so nothing outside a span reaches s_i.
template <class T>
EncodedVideo<T> encode_video(const Model<T>& m, const BasicTensor<T>& features, std::span<const SegmentSpan> spans);

}  // namespace flowcap
