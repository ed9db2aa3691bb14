#include "flowcap/vocab.hpp"

#include <algorithm>
#include <map>

#include "flowcap/errors.hpp"

namespace flowcap {

namespace {

const std::vector<std::string>& reserved_forms() {
    static const std::vector<std::string> forms = {"<pad>", "<bos>", "<eos>", "[F]", "⟨unk⟩"};
    return forms;
}

bool is_reserved_surface(std::string_view w) {
    return w == "<pad>" || w == "<bos>" || w == "<eos>" || w == "[f]" || w == "<unk>" || w == "⟨unk⟩";
}

}  // namespace

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':') continue;
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
    }
    return out;
}

std::vector<std::string> split_words(std::string_view normalized) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < normalized.size()) {
        while (i < normalized.size() && normalized[i] == ' ') ++i;
        std::size_t j = i;
        while (j < normalized.size() && normalized[j] != ' ') ++j;
        if (j > i) words.emplace_back(normalized.substr(i, j - i));
        i = j;
    }
    return words;
}

Vocabulary::Vocabulary() : tokens_(reserved_forms()) {}

Vocabulary Vocabulary::build(std::span<const std::string> captions, std::size_t min_count) {
    std::map<std::string, std::size_t> counts;
    for (const auto& c : captions) {
        for (auto& w : split_words(normalize_text(c))) ++counts[w];
    }
    if (counts.empty()) throw ContractError("build_vocab: empty corpus");
    std::vector<std::pair<std::string, std::size_t>> ordered;
    for (auto& [w, n] : counts) {
        if (n >= min_count && !is_reserved_surface(w)) ordered.emplace_back(w, n);
    }
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> words;
    for (auto& [w, n] : ordered) words.push_back(w);
    return from_words(std::move(words));
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
    Vocabulary v;
    for (auto& w : words) {
        if (w.empty() || is_reserved_surface(w) || v.index_.count(w)) {
            throw FormatError("invalid vocabulary entry '" + w + "'");
        }
        v.index_.emplace(w, static_cast<int>(v.tokens_.size()));
        v.tokens_.push_back(std::move(w));
    }
    return v;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw VocabError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::id(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? kUnk : it->second;
}

std::vector<std::string> Vocabulary::words() const {
    return {tokens_.begin() + kFirstWordId, tokens_.end()};
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
    std::vector<int> ids;
    for (auto& w : split_words(normalize_text(text))) {
        if (is_reserved_surface(w)) throw VocabError("reserved token '" + w + "' in input text");
        ids.push_back(id(w));
    }
    return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
    std::string out;
    for (int i : ids) {
        if (!out.empty()) out.push_back(' ');
        out += token(i);
    }
    return out;
}

}  // namespace flowcap
