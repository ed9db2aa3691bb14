#pragma once

// Visual and textual information flows and their alignment loss.
//
// Flow states are accumulated: F[0] is the first causal output O_0 and for
// i >= 1, delta[i] = O_i - F[i-1] and F[i] = F[i-1] + delta[i]. F[i] equals
// O_i up to one rounding, and the left-to-right fold F[0] + delta[1] + ... +
// delta[K] reproduces F[K] bit for bit.

#include <span>
#include <string>
#include <vector>

#include "flowcap/model.hpp"

namespace flowcap {

enum class Modality { Visual, Textual };

template <class T>
struct FlowState {
    std::vector<BasicTensor<T>> F;      // K+1 states [d]
    std::vector<BasicTensor<T>> delta;  // delta[i-1] holds ΔF^i, i = 1..K
    Modality modality = Modality::Visual;

    std::size_t K() const { return delta.size(); }
};

// Builds a flow state from the K+1 causal outputs (rows of `outputs`).
template <class T>
FlowState<T> make_flow_state(const BasicTensor<T>& outputs, Modality modality);

// Causal stack over [f0, f_1, ..., f_K] with a learned start vector f0.
template <class T>
FlowState<T> visual_flow(const Model<T>& m, std::span<const BasicTensor<T>> keys);

// Positions of the K+1 [F] tokens in [F] c_1 [F] ... c_K [F].
std::vector<std::size_t> flow_token_positions(std::span<const std::vector<int>> captions);
std::vector<int> textual_flow_sequence(std::span<const std::vector<int>> captions);

// Shared trunk over the [F]-interleaved caption sequence; F^i is the final
// hidden state at the (i+1)-th [F]. LengthError names `video_id` when the
// sequence exceeds the text position table.
template <class T>
FlowState<T> textual_flow(const Model<T>& m, std::span<const std::vector<int>> captions,
                          const std::string& video_id = "");

// sum_i ||ΔF_v^i - ΔF_c^i||². With stop_text_grad the textual deltas are
// treated as constants.
template <class T>
BasicTensor<T> alignment_loss(const FlowState<T>& visual, const FlowState<T>& textual, bool stop_text_grad = false);

}  // namespace flowcap
