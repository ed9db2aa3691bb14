#include <cmath>
#include <map>

#include "doctest.h"
#include "flowcap/decoding.hpp"
#include "flowcap/flow_align.hpp"
#include "flowcap/metrics.hpp"
#include "flowcap/visual_encoder.hpp"
#include "helpers.hpp"

using namespace flowcap;
using flowcap::test::random_tensor;
using flowcap::test::tiny_config;
using flowcap::test::toy_example;

namespace {

Vocabulary word_vocab(std::size_t words) {
    std::vector<std::string> w;
    for (std::size_t i = 0; i < words; ++i) w.push_back("w" + std::to_string(i));
    return Vocabulary::from_words(w);
}

double paragraph_r4(const std::vector<std::vector<int>>& caps) {
    std::vector<std::string> toks;
    for (const auto& c : caps)
        for (int t : c) toks.push_back(std::to_string(t));
    return r4_tokens(toks);
}

}  // namespace

TEST_SUITE("decoding") {

TEST_CASE("k = 1 is argmax for every u") {
    const std::vector<double> p{0.1, 0.2, 0.4, 0.3};
    for (double u : {0.0, 0.3, 0.999999}) CHECK(topk_sample(p, 1, u) == 2);
}

TEST_CASE("k = |V| is plain inverse-CDF sampling") {
    const std::vector<double> p{0.1, 0.2, 0.4, 0.3};
    // Kept order is by descending probability: 2, 3, 1, 0.
    CHECK(topk_sample(p, 4, 0.0) == 2);
    CHECK(topk_sample(p, 4, 0.39) == 2);
    CHECK(topk_sample(p, 4, 0.41) == 3);
    CHECK(topk_sample(p, 4, 0.75) == 1);
    CHECK(topk_sample(p, 4, 0.95) == 0);
}

TEST_CASE("ties at the k-th value go to the lower id") {
    const std::vector<double> p{0.2, 0.2, 0.2, 0.4};
    CHECK(topk_support(p, 2) == std::vector<int>{3, 0});
    CHECK(topk_support(p, 3) == std::vector<int>{3, 0, 1});
}

TEST_CASE("empirical frequencies match the renormalized top-k distribution") {
    const std::vector<double> p{0.05, 0.3, 0.1, 0.25, 0.2, 0.1};
    const std::size_t k = 3, n = 100000;
    Rng rng(77);
    std::map<int, std::size_t> counts;
    for (std::size_t i = 0; i < n; ++i) ++counts[topk_sample(p, k, rng)];
    const std::map<int, double> expect{{1, 0.3 / 0.75}, {3, 0.25 / 0.75}, {4, 0.2 / 0.75}};
    CHECK(counts.size() == 3);
    for (const auto& [id, q] : expect) {
        const double sigma = std::sqrt(n * q * (1 - q));
        CHECK(std::abs(static_cast<double>(counts[id]) - n * q) < 3 * sigma);
    }
}

TEST_CASE("invalid distributions are rejected") {
    CHECK_THROWS_AS(topk_sample(std::vector<double>{0, 0, 0}, 2, 0.5), NumericError);
    CHECK_THROWS_AS(topk_sample(std::vector<double>{0.5, NAN, 0.5}, 2, 0.5), NumericError);
    CHECK_THROWS_AS(topk_sample(std::vector<double>{1.5, -0.5}, 2, 0.5), NumericError);
    CHECK_THROWS_AS(topk_sample(std::vector<double>{0.5, 0.2}, 2, 0.5), ContractError);
    CHECK_THROWS_AS(topk_sample(std::vector<double>{1.0}, 0, 0.5), ContractError);
}

TEST_CASE("special tokens are masked out of the next-token distribution") {
    const std::vector<float> logits{9, 9, 1, 9, 9, 2, 3};
    const auto p = next_token_distribution(logits, 1.0);
    for (int id : {kPad, kBos, kFlowToken, kUnk}) CHECK(p[id] == 0.0);
    double s = 0.0;
    for (double v : p) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
    const auto cold = next_token_distribution(logits, 0.1);
    CHECK(cold[6] > p[6]);
    CHECK_THROWS_AS(next_token_distribution(std::vector<float>{1, 1}, 1.0), NumericError);
}

TEST_CASE("decode config validation") {
    DecodeConfig c;
    c.k = 0;
    CHECK_THROWS_AS(c.validate(10), ConfigError);
    c.k = 11;
    CHECK_THROWS_AS(c.validate(10), ConfigError);
    c.k = 10;
    CHECK_NOTHROW(c.validate(10));
    c.temperature = 0.0;
    CHECK_THROWS_AS(c.validate(10), ConfigError);
}

TEST_CASE("generated captions: lengths, vocabulary and determinism") {
    auto cfg = tiny_config(12);
    cfg.max_caption_len = 5;
    auto m = Model<float>::create(cfg, 4);
    Rng data_rng(5);
    auto seg = random_tensor({3, 8}, data_rng);
    auto delta = random_tensor({8}, data_rng);
    DecodeConfig dc;
    dc.k = 12;
    dc.max_len = 30;
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng a(s), b(s);
        const auto c1 = generate_caption(m, seg, delta, dc, a);
        const auto c2 = generate_caption(m, seg, delta, dc, b);
        CHECK(c1 == c2);
        CHECK(c1.size() <= 5);
        for (int t : c1) {
            CHECK(t >= kFirstWordId);
            CHECK(t < 12);
        }
    }
    dc.max_len = 2;
    Rng r(1);
    CHECK(generate_caption(m, seg, delta, dc, r).size() <= 2);
}

TEST_CASE("repeated n-gram count") {
    const std::vector<std::vector<int>> seen{{1, 2, 3, 4, 5}};
    CHECK(repeated_ngrams(std::vector<int>{9, 2, 3, 4, 5}, seen, 4) == 1);
    CHECK(repeated_ngrams(std::vector<int>{1, 2, 3, 4, 5}, seen, 4) == 2);
    CHECK(repeated_ngrams(std::vector<int>{1, 2, 3}, seen, 4) == 0);
    CHECK(repeated_ngrams(std::vector<int>{1, 2, 3, 4}, seen, 0) == 0);
}

TEST_CASE("scripted repetition filter") {
    // Caption 0 is free; caption 1 draws two repeats then a clean candidate.
    std::map<std::size_t, std::vector<std::vector<int>>> script{
        {0, {{1, 2, 3, 4}}},
        {1, {{1, 2, 3, 4, 9}, {0, 1, 2, 3, 4}, {7, 7, 7, 7}}},
    };
    std::map<std::size_t, std::size_t> calls;
    auto sampler = [&](std::size_t i) { return script[i][calls[i]++]; };
    const auto out = filter_paragraph(2, sampler, 4, 5);
    CHECK(out[0] == std::vector<int>{1, 2, 3, 4});
    CHECK(out[1] == std::vector<int>{7, 7, 7, 7});
    CHECK(calls[1] == 3);

    // Budget exhausted: the candidate with the fewest repeats, earliest on ties.
    std::map<std::size_t, std::vector<std::vector<int>>> script2{
        {0, {{1, 2, 3, 4, 5}}},
        {1, {{1, 2, 3, 4, 5}, {8, 2, 3, 4, 5}, {9, 2, 3, 4, 5}}},
    };
    calls.clear();
    auto sampler2 = [&](std::size_t i) { return script2[i][calls[i]++]; };
    const auto out2 = filter_paragraph(2, sampler2, 4, 2);
    CHECK(out2[1] == std::vector<int>{8, 2, 3, 4, 5});
    CHECK(calls[1] == 3);

    // Disabled filter takes the first draw.
    calls.clear();
    const auto out3 = filter_paragraph(2, sampler, 0, 5);
    CHECK(out3[1] == std::vector<int>{1, 2, 3, 4, 9});
    CHECK(calls[1] == 1);
}

TEST_CASE("the filter lowers paragraph repetition over 20 videos") {
    auto cfg = tiny_config(9);
    cfg.max_caption_len = 8;
    auto m = Model<float>::create(cfg, 8);
    // Make EOS unlikely so captions run to full length.
    m.out_b.data()[kEos] = -4.0f;
    const auto vocab = word_vocab(4);
    Rng rng(9);
    std::vector<VideoExample> videos;
    for (int v = 0; v < 20; ++v) videos.push_back(toy_example(4, 2, 4, 9, rng, "v" + std::to_string(v)));
    DecodeConfig dc;
    dc.k = 3;
    dc.max_len = 8;
    dc.seed = 3;
    auto filtered_cfg = dc;
    auto plain_cfg = dc;
    plain_cfg.rep_ngram = 0;
    const auto filtered = generate_corpus(m, vocab, videos, filtered_cfg);
    const auto plain = generate_corpus(m, vocab, videos, plain_cfg);
    double rf = 0.0, rp = 0.0;
    for (std::size_t i = 0; i < videos.size(); ++i) {
        rf += paragraph_r4(filtered[i].captions);
        rp += paragraph_r4(plain[i].captions);
    }
    INFO("filtered ", rf / 20, " unfiltered ", rp / 20);
    CHECK(rf < rp);
}

TEST_CASE("corpus generation is independent of worker count and video order") {
    auto cfg = tiny_config(12);
    auto m = Model<float>::create(cfg, 10);
    const auto vocab = word_vocab(7);
    Rng rng(11);
    std::vector<VideoExample> videos;
    for (int v = 0; v < 6; ++v) videos.push_back(toy_example(2, 3, 4, 12, rng, "v" + std::to_string(v)));
    DecodeConfig dc;
    dc.seed = 5;
    const auto one = generate_corpus(m, vocab, videos, dc, 1);
    const auto two = generate_corpus(m, vocab, videos, dc, 3);
    std::vector<VideoExample> reversed(videos.rbegin(), videos.rend());
    const auto rev = generate_corpus(m, vocab, reversed, dc, 1);
    for (std::size_t i = 0; i < videos.size(); ++i) {
        CHECK(one[i].captions == two[i].captions);
        CHECK(one[i].sentences == two[i].sentences);
        CHECK(one[i].captions == rev[videos.size() - 1 - i].captions);
        CHECK(one[i].sentences.size() == videos[i].spans.size());
    }
    dc.seed = 6;
    const auto other = generate_corpus(m, vocab, videos, dc, 1);
    bool differs = false;
    for (std::size_t i = 0; i < videos.size(); ++i) differs |= other[i].captions != one[i].captions;
    CHECK(differs);
}

TEST_CASE("errors inside worker threads surface to the caller") {
    auto cfg = tiny_config(12);
    auto m = Model<float>::create(cfg, 10);
    const auto vocab = word_vocab(7);
    Rng rng(12);
    std::vector<VideoExample> videos{toy_example(2, 3, 4, 12, rng, "a"), toy_example(2, 3, 5, 12, rng, "b")};
    CHECK_THROWS_AS(generate_corpus(m, vocab, videos, DecodeConfig{}, 2), ShapeError);
}

}
