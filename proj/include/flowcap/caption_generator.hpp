#pragma once

// Multimodal caption generator: E_v (bidirectional block over s_i) and E_c
// (causal block over BOS + caption + EOS) are concatenated, given
// multimodal position and modality embeddings, run through the shared trunk
// under a prefix mask, and the text hidden states are fused with ΔF_v for
// the output projection.

#include <span>
#include <vector>

#include "flowcap/model.hpp"

namespace flowcap {

template <class T>
struct MultimodalInput {
    BasicTensor<T> sequence;        // [(T_i + n_text)×d]
    std::size_t prefix_len = 0;     // T_i
    std::vector<int> text_ids;      // BOS ... (EOS when teacher forcing)
    std::vector<int> modality_ids;  // 0 per visual row, 1 per text row
    BasicTensor<T> delta_v;         // [d]
};

// text_ids are used as given (generation passes BOS plus the tokens so far).
template <class T>
MultimodalInput<T> build_input_ids(const Model<T>& m, const BasicTensor<T>& segment, std::vector<int> text_ids,
                                   const BasicTensor<T>& delta_v);

// Teacher-forcing input for a tokenized caption without special tokens.
// ContractError for an empty caption.
template <class T>
MultimodalInput<T> build_input(const Model<T>& m, const BasicTensor<T>& segment, std::span<const int> caption,
                               const BasicTensor<T>& delta_v);

// Shared trunk under Prefix(T_i); returns the text rows h [n_text×d].
template <class T>
BasicTensor<T> decode_hidden(const Model<T>& m, const MultimodalInput<T>& input);

// W_c [ΔF; h_j] + b_c for every text row.
template <class T>
BasicTensor<T> fuse_logits(const Model<T>& m, const BasicTensor<T>& h, const BasicTensor<T>& delta_v);

// Row-wise softmax of fuse_logits.
template <class T>
BasicTensor<T> fuse_project(const Model<T>& m, const BasicTensor<T>& h, const BasicTensor<T>& delta_v);

// Teacher-forcing target ids: text_ids shifted by one (row j predicts j+1).
std::vector<int> next_token_targets(std::span<const int> text_ids);

// -sum_j log probs[j, targets[j]] over the first targets.size() rows.
template <class T>
BasicTensor<T> nll_loss(const BasicTensor<T>& probs, std::span<const int> targets);

// Same value from logits through log-softmax (used for training).
template <class T>
BasicTensor<T> nll_from_logits(const BasicTensor<T>& logits, std::span<const int> targets);

template <class T>
struct CaptionLoss {
    BasicTensor<T> nll;  // summed over tokens
    std::size_t tokens = 0;
};

template <class T>
CaptionLoss<T> caption_loss(const Model<T>& m, const BasicTensor<T>& segment, std::span<const int> caption,
                            const BasicTensor<T>& delta_v);

}  // namespace flowcap
