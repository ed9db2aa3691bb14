#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace flowcap {

// Reserved ids. Corpus words start at kFirstWordId.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kFlowToken = 3;  // caption-interval token [F]
inline constexpr int kUnk = 4;
inline constexpr int kFirstWordId = 5;

// Lowercase (ASCII), strip [.,!?;:], collapse whitespace, trim.
std::string normalize_text(std::string_view text);
// Whitespace split of already-normalized text.
std::vector<std::string> split_words(std::string_view normalized);

class Vocabulary {
public:
    Vocabulary();

    // Words with count >= min_count ordered by (descending count, ascending
    // bytes); ids assigned from kFirstWordId upward.
    static Vocabulary build(std::span<const std::string> captions, std::size_t min_count = 1);
    // Rebuilds from the ordered non-reserved word list (as stored in checkpoints).
    static Vocabulary from_words(std::vector<std::string> words);

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(int id) const;
    // kUnk for unknown words.
    int id(std::string_view word) const;
    std::vector<std::string> words() const;

    // Normalizes then maps words to ids. Reserved surface forms in the input
    // are a VocabError.
    std::vector<int> encode(std::string_view text) const;
    std::string decode(std::span<const int> ids) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace flowcap
