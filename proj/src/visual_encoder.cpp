#include "flowcap/visual_encoder.hpp"

#include <algorithm>

namespace flowcap {

std::vector<int> frame_segment_ids(std::size_t frames, std::span<const SegmentSpan> spans, std::size_t max_segments) {
    std::vector<int> ids(frames, 0);
    for (const auto& s : spans) {
        const int ord = static_cast<int>(std::min(s.ordinal, max_segments));
        for (std::size_t t = s.start_frame; t < std::min(s.end_frame, frames); ++t) {
            if (ids[t] == 0 || ord < ids[t]) ids[t] = ord;
        }
    }
    return ids;
}

template <class T>
BasicTensor<T> features_tensor(const VideoFeatures& f) {
    return BasicTensor<T>::from({f.frames, f.dim}, std::vector<T>(f.values.begin(), f.values.end()));
}

template <class T>
BasicTensor<T> embed_video(const Model<T>& m, const BasicTensor<T>& features, std::span<const SegmentSpan> spans) {
    if (features.rank() != 2 || features.cols() != m.cfg.feature_dim) {
        throw ShapeError("video features " + shape_str(features.shape()) + " do not match feature_dim " +
                         std::to_string(m.cfg.feature_dim));
    }
    const std::size_t frames = features.rows();
    if (frames == 0) throw ContractError("video has no frames");
    if (frames > m.cfg.max_frames) {
        throw LengthError("video of " + std::to_string(frames) + " frames exceeds max_frames " +
                          std::to_string(m.cfg.max_frames));
    }
    const auto seg = frame_segment_ids(frames, spans, m.cfg.max_segments);
    auto x = linear(features, m.feat_w, m.feat_b);
    x = add(x, slice_rows(m.frame_pos, 0, frames));
    return add(x, gather_rows(m.segment_emb, std::span<const int>(seg)));
}

template <class T>
BasicTensor<T> encode_global(const Model<T>& m, const BasicTensor<T>& embedded) {
    return transformer_stack<T>(embedded, AttentionMask::full(embedded.rows()), m.global);
}

namespace {

void check_span(const SegmentSpan& span, std::size_t frames) {
    if (span.end_frame <= span.start_frame) throw ContractError("empty segment span");
    if (span.end_frame > frames) {
        throw ContractError("segment span [" + std::to_string(span.start_frame) + "," + std::to_string(span.end_frame) +
                            ") exceeds " + std::to_string(frames) + " frames");
    }
}

}  // namespace

template <class T>
BasicTensor<T> encode_segment(const Model<T>& m, const BasicTensor<T>& global_out, const SegmentSpan& span) {
    check_span(span, global_out.rows());
    auto slice = slice_rows(global_out, span.start_frame, span.end_frame);
    return transformer_stack<T>(slice, AttentionMask::full(slice.rows()), m.local);
}

template <class T>
EncodedVideo<T> encode_video(const Model<T>& m, const BasicTensor<T>& features, std::span<const SegmentSpan> spans) {
    auto emb = embed_video(m, features, spans);
    EncodedVideo<T> out;
    BasicTensor<T> global;
    if (!m.cfg.no_global) global = encode_global(m, emb);
    for (const auto& span : spans) {
        BasicTensor<T> s;
        if (m.cfg.no_global) {
            check_span(span, emb.rows());
            s = encode_segment(m, encode_global(m, slice_rows(emb, span.start_frame, span.end_frame)),
                               SegmentSpan{0, span.end_frame - span.start_frame, span.ordinal});
        } else {
            s = encode_segment(m, global, span);
        }
        out.keys.push_back(key_representation(s));
        out.segments.push_back(std::move(s));
    }
    return out;
}

#define FLOWCAP_INSTANTIATE_ENCODER(T)                                                                          \
    template BasicTensor<T> features_tensor<T>(const VideoFeatures&);                                          \
    template BasicTensor<T> embed_video(const Model<T>&, const BasicTensor<T>&, std::span<const SegmentSpan>); \
    template BasicTensor<T> encode_global(const Model<T>&, const BasicTensor<T>&);                             \
    template BasicTensor<T> encode_segment(const Model<T>&, const BasicTensor<T>&, const SegmentSpan&);        \
    template EncodedVideo<T> encode_video(const Model<T>&, const BasicTensor<T>&, std::span<const SegmentSpan>);

FLOWCAP_INSTANTIATE_ENCODER(float)
FLOWCAP_INSTANTIATE_ENCODER(double)

}  // namespace flowcap
