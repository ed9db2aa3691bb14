#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "flowcap/errors.hpp"
#include "flowcap/metrics.hpp"
#include "flowcap/rng.hpp"
#include "metric_oracle.hpp"

using namespace flowcap;
namespace oracle = flowcap::test::oracle;

namespace {

ParagraphPair pair(std::string id, std::vector<std::string> hyp, std::vector<std::string> ref) {
    return {std::move(id), std::move(hyp), std::move(ref)};
}

std::string random_sentence(Rng& rng, std::size_t words, std::size_t min_len, std::size_t max_len) {
    const auto len = static_cast<std::size_t>(rng.range(static_cast<int>(min_len), static_cast<int>(max_len)));
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += (i ? " " : "") + std::string(1, static_cast<char>('a' + rng.below(words)));
    return s;
}

std::vector<ParagraphPair> random_corpus(Rng& rng) {
    std::vector<ParagraphPair> c;
    const int videos = rng.range(1, 4);
    for (int v = 0; v < videos; ++v) {
        const int K = rng.range(1, 3);
        ParagraphPair p{"v" + std::to_string(v), {}, {}};
        for (int k = 0; k < K; ++k) {
            p.hypothesis.push_back(random_sentence(rng, 5, 0, 8));
            p.references.push_back(random_sentence(rng, 5, 1, 8));
        }
        c.push_back(std::move(p));
    }
    return c;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("bleu hand cases") {
    std::vector<ParagraphPair> c{pair("v", {"a b c d e"}, {"a b c d f"})};
    CHECK(bleu4(c) == doctest::Approx(100.0 * std::pow(0.8 * 0.75 * (2.0 / 3.0) * 0.5, 0.25)));
    c = {pair("v", {"the cat sat on the mat"}, {"the cat is on the mat"})};
    CHECK(bleu4(c) == 0.0);
    c = {pair("v", {"a b c d"}, {"a b c d e f g h"})};
    CHECK(bleu4(c) == doctest::Approx(100.0 * std::exp(1.0 - 2.0)));
    c = {pair("v", {"The  dog, runs!"}, {"the dog runs"}), pair("w", {"a b c d"}, {"a b c d"})};
    CHECK(bleu4(c) == doctest::Approx(100.0));
}

TEST_CASE("bleu grows as a reference prefix lengthens") {
    const std::string ref = "a b c d e f g h i j";
    const auto toks = oracle::words(ref);
    double prev = -1.0;
    for (std::size_t m = 4; m <= toks.size(); ++m) {
        std::string hyp;
        for (std::size_t i = 0; i < m; ++i) hyp += (i ? " " : "") + toks[i];
        const std::vector<ParagraphPair> c{pair("v", {hyp}, {ref})};
        const double b = bleu4(c);
        CHECK(b > prev);
        prev = b;
    }
    CHECK(prev == doctest::Approx(100.0));
}

TEST_CASE("cider identity is 10 and the single-reference corpus is degenerate") {
    const std::vector<ParagraphPair> c{pair("v", {"a man cuts the onion", "he fries it slowly"},
                                            {"a man cuts the onion", "he fries it slowly"}),
                                       pair("w", {"dogs run in a park"}, {"dogs run in a park"})};
    CHECK(cider(c) == doctest::Approx(10.0));
    // log N - log df is zero for every n-gram when N = 1.
    const std::vector<ParagraphPair> one{pair("v", {"a b c d"}, {"a b c d"})};
    CHECK(cider(one) == 0.0);
}

TEST_CASE("repetition hand cases") {
    const std::vector<std::string> t{"a", "b", "c", "d", "a", "b", "c", "d"};
    CHECK(r4_tokens(t) == doctest::Approx(20.0));
    CHECK(r4_tokens(std::vector<std::string>{"a", "b", "c"}) == 0.0);
    CHECK(r4_tokens(std::vector<std::string>{"x", "x", "x", "x", "x"}) == doctest::Approx(50.0));

    // The 4-gram crossing the sentence boundary counts too.
    const std::vector<ParagraphPair> c{pair("v", {"a b c d", "a b c d"}, {"q", "q"}),
                                       pair("w", {"a b c d e"}, {"z"})};
    CHECK(r4(c) == doctest::Approx(10.0));

    const std::vector<ParagraphPair> vs{pair("v", {"a b c d e f"}, {"x a b c d e"})};
    CHECK(r4_vs_ref(vs) == doctest::Approx(100.0 * 2.0 / 3.0));
}

TEST_CASE("exhaustive oracle agreement over a small sentence space") {
    // Every sentence of length 1..3 over {a, b}.
    std::vector<std::string> space;
    for (int len = 1; len <= 3; ++len) {
        for (int bits = 0; bits < (1 << len); ++bits) {
            std::string s;
            for (int i = 0; i < len; ++i) s += (i ? " " : "") + std::string(1, (bits >> i) & 1 ? 'b' : 'a');
            space.push_back(s);
        }
    }
    std::size_t checked = 0, mismatches = 0;
    for (const auto& h1 : space)
        for (const auto& r1 : space)
            for (const auto& h2 : space)
                for (const auto& r2 : space) {
                    const std::vector<ParagraphPair> c{pair("v", {h1}, {r1}), pair("w", {h2}, {r2})};
                    if (!close(bleu4(c), oracle::bleu(c)) || !close(cider(c), oracle::cider(c))) ++mismatches;
                    ++checked;
                }
    CHECK(checked == 14u * 14 * 14 * 14);
    CHECK(mismatches == 0);
}

TEST_CASE("oracle agreement on random corpora") {
    Rng rng(2024);
    for (int trial = 0; trial < 500; ++trial) {
        const auto c = random_corpus(rng);
        CHECK(close(bleu4(c), oracle::bleu(c)));
        CHECK(close(cider(c), oracle::cider(c)));
        CHECK(close(r4(c), oracle::r4(c)));
    }
}

TEST_CASE("metrics are invariant to video order") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        auto c = random_corpus(rng);
        const auto base = evaluate(c);
        std::reverse(c.begin(), c.end());
        const auto rev = evaluate(c);
        CHECK(base.bleu4 == rev.bleu4);
        CHECK(base.cider == rev.cider);
        CHECK(base.r4 == rev.r4);
        CHECK(base.r4_vs_ref == rev.r4_vs_ref);
        CHECK(base.bleu4 >= 0.0);
        CHECK(base.bleu4 <= 100.0 + 1e-9);
    }
}

TEST_CASE("malformed corpora are rejected") {
    CHECK_THROWS_AS(bleu4(std::vector<ParagraphPair>{}), ContractError);
    CHECK_THROWS_AS(cider(std::vector<ParagraphPair>{pair("v", {"a"}, {"a", "b"})}), ContractError);
    CHECK_THROWS_AS(evaluate(std::vector<ParagraphPair>{pair("v", {}, {})}), ContractError);
}

TEST_CASE("per-video report") {
    const std::vector<ParagraphPair> c{pair("v", {"a b c d"}, {"a b c d"}), pair("w", {"e f g h"}, {"x y z w"})};
    const auto rep = evaluate(c);
    REQUIRE(rep.per_video.size() == 2);
    CHECK(rep.per_video[0].video_id == "v");
    CHECK(rep.per_video[0].bleu4 == doctest::Approx(100.0));
    CHECK(rep.per_video[1].bleu4 == 0.0);
    CHECK(rep.per_video[0].cider == doctest::Approx(10.0));
}

}
