#include "flowcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "flowcap/errors.hpp"
#include "flowcap/vocab.hpp"

namespace flowcap {

namespace {

using Ngram = std::vector<std::string>;
using Counts = std::map<Ngram, double>;

std::vector<std::string> tokens_of(const std::string& s) { return split_words(normalize_text(s)); }

Counts ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
    Counts c;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) c[Ngram(toks.begin() + i, toks.begin() + i + n)] += 1.0;
    return c;
}

void check_corpus(std::span<const ParagraphPair> corpus, const char* what) {
    if (corpus.empty()) throw ContractError(std::string(what) + ": empty corpus");
    for (const auto& p : corpus) {
        if (p.hypothesis.empty() || p.hypothesis.size() != p.references.size()) {
            throw ContractError(std::string(what) + ": video " + p.video_id + " has " +
                                std::to_string(p.hypothesis.size()) + " hypotheses for " +
                                std::to_string(p.references.size()) + " references");
        }
    }
}

// Order-independent mean: sums the sorted values.
double canonical_mean(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

struct CiderModel {
    std::map<Ngram, double> df;
    double log_n = 0.0;

    explicit CiderModel(std::span<const ParagraphPair> corpus) {
        std::size_t n_docs = 0;
        for (const auto& p : corpus) {
            for (const auto& r : p.references) {
                ++n_docs;
                const auto toks = tokens_of(r);
                std::set<Ngram> uniq;
                for (std::size_t n = 1; n <= 4; ++n) {
                    for (const auto& [g, c] : ngram_counts(toks, n)) uniq.insert(g);
                }
                for (const auto& g : uniq) df[g] += 1.0;
            }
        }
        log_n = std::log(static_cast<double>(n_docs));
    }

    Counts weights(const Counts& tf) const {
        Counts w;
        for (const auto& [g, c] : tf) {
            auto it = df.find(g);
            const double d = it == df.end() ? 1.0 : std::max(1.0, it->second);
            w[g] = c * (log_n - std::log(d));
        }
        return w;
    }

    double score(const std::string& hyp, const std::string& ref) const {
        const auto ht = tokens_of(hyp), rt = tokens_of(ref);
        double total = 0.0;
        for (std::size_t n = 1; n <= 4; ++n) {
            const auto h = weights(ngram_counts(ht, n));
            const auto r = weights(ngram_counts(rt, n));
            double dot = 0.0, nh = 0.0, nr = 0.0;
            for (const auto& [g, v] : h) {
                nh += v * v;
                auto it = r.find(g);
                if (it != r.end()) dot += v * it->second;
            }
            for (const auto& [g, v] : r) nr += v * v;
            if (nh > 0.0 && nr > 0.0) total += dot / (std::sqrt(nh) * std::sqrt(nr));
        }
        return 10.0 * total / 4.0;
    }
};

double bleu_of(std::span<const ParagraphPair> corpus) {
    double match[4] = {0, 0, 0, 0}, count[4] = {0, 0, 0, 0};
    double c = 0.0, r = 0.0;
    for (const auto& p : corpus) {
        for (std::size_t i = 0; i < p.hypothesis.size(); ++i) {
            const auto ht = tokens_of(p.hypothesis[i]), rt = tokens_of(p.references[i]);
            c += static_cast<double>(ht.size());
            r += static_cast<double>(rt.size());
            for (std::size_t n = 1; n <= 4; ++n) {
                const auto hc = ngram_counts(ht, n), rc = ngram_counts(rt, n);
                for (const auto& [g, k] : hc) {
                    count[n - 1] += k;
                    auto it = rc.find(g);
                    if (it != rc.end()) match[n - 1] += std::min(k, it->second);
                }
            }
        }
    }
    double log_p = 0.0;
    for (int n = 0; n < 4; ++n) {
        if (match[n] == 0.0) return 0.0;
        log_p += std::log(match[n] / count[n]);
    }
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    return 100.0 * bp * std::exp(log_p / 4.0);
}

std::vector<std::string> paragraph_tokens(const std::vector<std::string>& sentences) {
    std::vector<std::string> out;
    for (const auto& s : sentences) {
        auto t = tokens_of(s);
        out.insert(out.end(), t.begin(), t.end());
    }
    return out;
}

}  // namespace

double bleu4(std::span<const ParagraphPair> corpus) {
    check_corpus(corpus, "bleu4");
    return bleu_of(corpus);
}

double cider(std::span<const ParagraphPair> corpus) {
    check_corpus(corpus, "cider");
    const CiderModel model(corpus);
    std::vector<double> scores;
    for (const auto& p : corpus) {
        for (std::size_t i = 0; i < p.hypothesis.size(); ++i) scores.push_back(model.score(p.hypothesis[i], p.references[i]));
    }
    return canonical_mean(std::move(scores));
}

double r4_tokens(std::span<const std::string> tokens) {
    if (tokens.size() < 4) return 0.0;
    std::set<Ngram> uniq;
    const std::size_t total = tokens.size() - 3;
    for (std::size_t i = 0; i < total; ++i) uniq.emplace(tokens.begin() + i, tokens.begin() + i + 4);
    return 100.0 * (1.0 - static_cast<double>(uniq.size()) / static_cast<double>(total));
}

double r4(std::span<const ParagraphPair> corpus) {
    std::vector<double> v;
    for (const auto& p : corpus) v.push_back(r4_tokens(paragraph_tokens(p.hypothesis)));
    return canonical_mean(std::move(v));
}

double r4_vs_ref(std::span<const ParagraphPair> corpus) {
    std::vector<double> v;
    for (const auto& p : corpus) {
        const auto h = paragraph_tokens(p.hypothesis), r = paragraph_tokens(p.references);
        const auto rc = ngram_counts(r, 4);
        std::size_t total = 0, hit = 0;
        for (std::size_t i = 0; i + 4 <= h.size(); ++i) {
            ++total;
            hit += rc.count(Ngram(h.begin() + i, h.begin() + i + 4));
        }
        v.push_back(total == 0 ? 0.0 : 100.0 * static_cast<double>(hit) / static_cast<double>(total));
    }
    return canonical_mean(std::move(v));
}

MetricReport evaluate(std::span<const ParagraphPair> corpus) {
    check_corpus(corpus, "evaluate");
    MetricReport rep;
    rep.bleu4 = bleu4(corpus);
    rep.cider = cider(corpus);
    rep.r4 = r4(corpus);
    rep.r4_vs_ref = r4_vs_ref(corpus);
    const CiderModel model(corpus);
    for (const auto& p : corpus) {
        VideoScores s;
        s.video_id = p.video_id;
        s.bleu4 = bleu_of(std::span<const ParagraphPair>(&p, 1));
        std::vector<double> c;
        for (std::size_t i = 0; i < p.hypothesis.size(); ++i) c.push_back(model.score(p.hypothesis[i], p.references[i]));
        s.cider = canonical_mean(std::move(c));
        s.r4 = r4_tokens(paragraph_tokens(p.hypothesis));
        rep.per_video.push_back(std::move(s));
    }
    return rep;
}

}  // namespace flowcap
