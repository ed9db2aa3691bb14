#include "flowcap/caption_generator.hpp"

#include "flowcap/vocab.hpp"

namespace flowcap {

template <class T>
MultimodalInput<T> build_input_ids(const Model<T>& m, const BasicTensor<T>& segment, std::vector<int> text_ids,
                                   const BasicTensor<T>& delta_v) {
    if (segment.rank() != 2 || segment.rows() == 0) throw ContractError("generator needs a non-empty segment");
    if (text_ids.empty() || text_ids.front() != kBos) throw ContractError("generator text must start with BOS");
    if (text_ids.size() > m.cfg.max_caption_len + 2) {
        throw LengthError("caption of " + std::to_string(text_ids.size()) + " tokens exceeds max_caption_len+2 = " +
                          std::to_string(m.cfg.max_caption_len + 2));
    }
    const std::size_t total = segment.rows() + text_ids.size();
    if (total > m.mm_pos.rows()) {
        throw LengthError("multimodal sequence of " + std::to_string(total) + " exceeds " +
                          std::to_string(m.mm_pos.rows()) + " positions");
    }
    MultimodalInput<T> in;
    in.prefix_len = segment.rows();
    in.delta_v = delta_v;
    auto ev = transformer_stack<T>(segment, AttentionMask::full(segment.rows()), m.ev);
    auto tokens = embed_tokens<T>(text_ids, m.tok_emb, m.text_pos);
    auto ec = transformer_stack<T>(tokens, AttentionMask::causal(text_ids.size()), m.ec);
    in.modality_ids.assign(segment.rows(), 0);
    in.modality_ids.resize(total, 1);
    auto x = concat_rows({ev, ec});
    x = add(x, slice_rows(m.mm_pos, 0, total));
    in.sequence = add(x, gather_rows(m.modality, std::span<const int>(in.modality_ids)));
    in.text_ids = std::move(text_ids);
    return in;
}

template <class T>
MultimodalInput<T> build_input(const Model<T>& m, const BasicTensor<T>& segment, std::span<const int> caption,
                               const BasicTensor<T>& delta_v) {
    if (caption.empty()) throw ContractError("build_input: empty caption");
    std::vector<int> ids{kBos};
    ids.insert(ids.end(), caption.begin(), caption.end());
    ids.push_back(kEos);
    return build_input_ids(m, segment, std::move(ids), delta_v);
}

template <class T>
BasicTensor<T> decode_hidden(const Model<T>& m, const MultimodalInput<T>& input) {
    const std::size_t total = input.sequence.rows();
    auto h = run_trunk(m, input.sequence, AttentionMask::prefix(total, input.prefix_len));
    return slice_rows(h, input.prefix_len, total);
}

template <class T>
BasicTensor<T> fuse_logits(const Model<T>& m, const BasicTensor<T>& h, const BasicTensor<T>& delta_v) {
    if (h.rank() != 2 || h.cols() != m.cfg.d || delta_v.numel() != m.cfg.d) {
        throw ContractError("fuse: hidden " + shape_str(h.shape()) + " and delta " + shape_str(delta_v.shape()) +
                            " must both have width d=" + std::to_string(m.cfg.d));
    }
    auto fused = concat_cols({repeat_rows(delta_v, h.rows()), h});
    return linear(fused, m.out_w, m.out_b);
}

template <class T>
BasicTensor<T> fuse_project(const Model<T>& m, const BasicTensor<T>& h, const BasicTensor<T>& delta_v) {
    return softmax(fuse_logits(m, h, delta_v), 1);
}

std::vector<int> next_token_targets(std::span<const int> text_ids) {
    if (text_ids.size() < 2) return {};
    return {text_ids.begin() + 1, text_ids.end()};
}

namespace {

template <class T>
void check_targets(const BasicTensor<T>& x, std::span<const int> targets) {
    if (x.rank() != 2 || targets.size() > x.rows()) {
        throw ContractError("nll: " + std::to_string(targets.size()) + " targets for " + shape_str(x.shape()));
    }
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= x.cols()) {
            throw VocabError("target id " + std::to_string(t) + " outside vocabulary of " + std::to_string(x.cols()));
        }
    }
}

}  // namespace

template <class T>
BasicTensor<T> nll_loss(const BasicTensor<T>& probs, std::span<const int> targets) {
    check_targets(probs, targets);
    auto p = pick(slice_rows(probs, 0, targets.size()), targets);
    return scale(sum(log(p)), T(-1));
}

template <class T>
BasicTensor<T> nll_from_logits(const BasicTensor<T>& logits, std::span<const int> targets) {
    check_targets(logits, targets);
    auto lp = pick(log_softmax(slice_rows(logits, 0, targets.size())), targets);
    return scale(sum(lp), T(-1));
}

template <class T>
CaptionLoss<T> caption_loss(const Model<T>& m, const BasicTensor<T>& segment, std::span<const int> caption,
                            const BasicTensor<T>& delta_v) {
    auto in = build_input(m, segment, caption, delta_v);
    auto h = decode_hidden(m, in);
    const auto targets = next_token_targets(in.text_ids);
    CaptionLoss<T> out;
    out.nll = nll_from_logits(fuse_logits(m, h, delta_v), targets);
    out.tokens = targets.size();
    return out;
}

#define FLOWCAP_INSTANTIATE_GENERATOR(T)                                                                         \
    template MultimodalInput<T> build_input_ids(const Model<T>&, const BasicTensor<T>&, std::vector<int>,       \
                                                const BasicTensor<T>&);                                          \
    template MultimodalInput<T> build_input(const Model<T>&, const BasicTensor<T>&, std::span<const int>,       \
                                            const BasicTensor<T>&);                                              \
    template BasicTensor<T> decode_hidden(const Model<T>&, const MultimodalInput<T>&);                          \
    template BasicTensor<T> fuse_logits(const Model<T>&, const BasicTensor<T>&, const BasicTensor<T>&);         \
    template BasicTensor<T> fuse_project(const Model<T>&, const BasicTensor<T>&, const BasicTensor<T>&);        \
    template BasicTensor<T> nll_loss(const BasicTensor<T>&, std::span<const int>);                              \
    template BasicTensor<T> nll_from_logits(const BasicTensor<T>&, std::span<const int>);                       \
    template CaptionLoss<T> caption_loss(const Model<T>&, const BasicTensor<T>&, std::span<const int>,          \
                                         const BasicTensor<T>&);

FLOWCAP_INSTANTIATE_GENERATOR(float)
FLOWCAP_INSTANTIATE_GENERATOR(double)

}  // namespace flowcap
