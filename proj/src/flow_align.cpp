#include "flowcap/flow_align.hpp"

#include "flowcap/vocab.hpp"

namespace flowcap {

template <class T>
FlowState<T> make_flow_state(const BasicTensor<T>& outputs, Modality modality) {
    if (outputs.rank() != 2 || outputs.rows() < 2) {
        throw ContractError("flow state needs at least two causal outputs, got " + shape_str(outputs.shape()));
    }
    FlowState<T> st;
    st.modality = modality;
    st.F.push_back(row(outputs, 0));
    for (std::size_t i = 1; i < outputs.rows(); ++i) {
        auto delta = sub(row(outputs, i), st.F.back());
        st.F.push_back(add(st.F.back(), delta));
        st.delta.push_back(std::move(delta));
    }
    return st;
}

template <class T>
FlowState<T> visual_flow(const Model<T>& m, std::span<const BasicTensor<T>> keys) {
    if (keys.empty()) throw ContractError("visual flow over a video with no segments");
    const std::size_t len = keys.size() + 1;
    if (len > m.flow_pos.rows()) {
        throw LengthError(std::to_string(keys.size()) + " segments exceed max_segments " +
                          std::to_string(m.flow_pos.rows() - 1));
    }
    auto x = concat_rows({m.flow_start, stack_rows(keys)});
    x = add(x, slice_rows(m.flow_pos, 0, len));
    auto out = layer_norm(transformer_stack<T>(x, AttentionMask::causal(len), m.flow), m.flow_ln_gain,
                          BasicTensor<T>::zeros({m.cfg.d}));
    return make_flow_state(out, Modality::Visual);
}

std::vector<int> textual_flow_sequence(std::span<const std::vector<int>> captions) {
    std::vector<int> seq{kFlowToken};
    for (const auto& c : captions) {
        seq.insert(seq.end(), c.begin(), c.end());
        seq.push_back(kFlowToken);
    }
    return seq;
}

std::vector<std::size_t> flow_token_positions(std::span<const std::vector<int>> captions) {
    std::vector<std::size_t> pos{0};
    for (const auto& c : captions) pos.push_back(pos.back() + c.size() + 1);
    return pos;
}

template <class T>
FlowState<T> textual_flow(const Model<T>& m, std::span<const std::vector<int>> captions, const std::string& video_id) {
    if (captions.empty()) throw ContractError("textual flow over a video with no captions");
    for (const auto& c : captions) {
        if (c.empty()) throw ContractError("video " + video_id + ": empty caption in textual flow");
    }
    const auto seq = textual_flow_sequence(captions);
    const std::size_t limit = std::min(m.text_pos.rows(), m.cfg.max_text_len);
    if (seq.size() > limit) {
        throw LengthError("video " + video_id + ": textual flow sequence of " + std::to_string(seq.size()) +
                          " tokens exceeds max_text_len " + std::to_string(limit));
    }
    auto x = embed_tokens<T>(seq, m.tok_emb, m.text_pos);
    auto h = run_trunk(m, x, AttentionMask::causal(seq.size()));
    std::vector<BasicTensor<T>> rows;
    for (std::size_t p : flow_token_positions(captions)) rows.push_back(row(h, p));
    return make_flow_state(stack_rows<T>(rows), Modality::Textual);
}

template <class T>
BasicTensor<T> alignment_loss(const FlowState<T>& visual, const FlowState<T>& textual, bool stop_text_grad) {
    if (visual.K() != textual.K()) {
        throw ContractError("alignment_loss: visual K=" + std::to_string(visual.K()) + " vs textual K=" +
                            std::to_string(textual.K()));
    }
    if (visual.K() == 0) throw ContractError("alignment_loss: empty flows");
    auto dv = stack_rows<T>(visual.delta);
    auto dc = stack_rows<T>(textual.delta);
    if (dv.shape() != dc.shape()) {
        throw ContractError("alignment_loss: delta widths differ " + shape_str(dv.shape()) + " vs " +
                            shape_str(dc.shape()));
    }
    if (stop_text_grad) dc = dc.detach();
    auto diff = sub(dv, dc);
    return sum(mul(diff, diff));
}

#define FLOWCAP_INSTANTIATE_FLOW(T)                                                                          \
    template FlowState<T> make_flow_state(const BasicTensor<T>&, Modality);                                 \
    template FlowState<T> visual_flow(const Model<T>&, std::span<const BasicTensor<T>>);                   \
    template FlowState<T> textual_flow(const Model<T>&, std::span<const std::vector<int>>, const std::string&); \
    template BasicTensor<T> alignment_loss(const FlowState<T>&, const FlowState<T>&, bool);

FLOWCAP_INSTANTIATE_FLOW(float)
FLOWCAP_INSTANTIATE_FLOW(double)

}  // namespace flowcap
