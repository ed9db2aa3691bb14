#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "flowcap/metrics.hpp"

namespace flowcap::test::oracle {

// Straightforward re-derivations over whitespace tokens (inputs are already
// normalized), written without sharing code with the library.

using Toks = std::vector<std::string>;

inline Toks words(const std::string& s) {
    Toks t;
    std::string cur;
    for (char c : s + " ") {
        if (c == ' ') {
            if (!cur.empty()) t.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    return t;
}

inline std::vector<std::string> grams(const Toks& t, std::size_t n) {
    std::vector<std::string> g;
    for (std::size_t i = 0; i + n <= t.size(); ++i) {
        std::string s;
        for (std::size_t j = i; j < i + n; ++j) s += t[j] + "|";
        g.push_back(s);
    }
    return g;
}

inline double bleu(const std::vector<ParagraphPair>& corpus) {
    double m[5] = {}, tot[5] = {}, c = 0, r = 0;
    for (const auto& p : corpus) {
        for (std::size_t i = 0; i < p.hypothesis.size(); ++i) {
            const auto h = words(p.hypothesis[i]), ref = words(p.references[i]);
            c += h.size();
            r += ref.size();
            for (std::size_t n = 1; n <= 4; ++n) {
                const auto hg = grams(h, n), rg = grams(ref, n);
                tot[n] += hg.size();
                std::set<std::string> uniq(hg.begin(), hg.end());
                for (const auto& g : uniq) {
                    const auto ch = std::count(hg.begin(), hg.end(), g);
                    const auto cr = std::count(rg.begin(), rg.end(), g);
                    m[n] += std::min(ch, cr);
                }
            }
        }
    }
    double prod = 1.0;
    for (int n = 1; n <= 4; ++n) {
        if (m[n] == 0) return 0.0;
        prod *= m[n] / tot[n];
    }
    return 100.0 * (c < r ? std::exp(1 - r / c) : 1.0) * std::pow(prod, 0.25);
}

inline double cider(const std::vector<ParagraphPair>& corpus) {
    std::vector<Toks> refs;
    for (const auto& p : corpus)
        for (const auto& s : p.references) refs.push_back(words(s));
    const double N = static_cast<double>(refs.size());
    auto df = [&](const std::string& g, std::size_t n) {
        double d = 0;
        for (const auto& r : refs) {
            const auto rg = grams(r, n);
            d += std::find(rg.begin(), rg.end(), g) != rg.end() ? 1 : 0;
        }
        return std::max(1.0, d);
    };
    double total = 0;
    std::size_t count = 0;
    for (const auto& p : corpus) {
        for (std::size_t i = 0; i < p.hypothesis.size(); ++i) {
            const auto h = words(p.hypothesis[i]), r = words(p.references[i]);
            double s = 0;
            for (std::size_t n = 1; n <= 4; ++n) {
                const auto hg = grams(h, n), rg = grams(r, n);
                std::set<std::string> keys(hg.begin(), hg.end());
                keys.insert(rg.begin(), rg.end());
                double dot = 0, nh = 0, nr = 0;
                for (const auto& g : keys) {
                    const double idf = std::log(N) - std::log(df(g, n));
                    const double a = std::count(hg.begin(), hg.end(), g) * idf;
                    const double b = std::count(rg.begin(), rg.end(), g) * idf;
                    dot += a * b;
                    nh += a * a;
                    nr += b * b;
                }
                if (nh > 0 && nr > 0) s += dot / std::sqrt(nh * nr);
            }
            total += 10.0 * s / 4.0;
            ++count;
        }
    }
    return total / count;
}

inline double r4(const std::vector<ParagraphPair>& corpus) {
    double total = 0;
    for (const auto& p : corpus) {
        Toks all;
        for (const auto& s : p.hypothesis)
            for (const auto& w : words(s)) all.push_back(w);
        const auto g = grams(all, 4);
        const std::set<std::string> uniq(g.begin(), g.end());
        total += g.empty() ? 0.0 : 100.0 * (1.0 - static_cast<double>(uniq.size()) / g.size());
    }
    return total / corpus.size();
}

}  // namespace flowcap::test::oracle
