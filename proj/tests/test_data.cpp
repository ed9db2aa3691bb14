#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "doctest.h"
#include "flowcap/data.hpp"
#include "flowcap/errors.hpp"
#include "flowcap/objective.hpp"
#include "flowcap/vocab.hpp"
#include "helpers.hpp"

using namespace flowcap;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("flowcap_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary) << s;
}

VideoFeatures features(std::size_t frames, std::size_t dim) {
    VideoFeatures f{frames, dim, {}};
    for (std::size_t i = 0; i < frames * dim; ++i) f.values.push_back(static_cast<float>(i) * 0.5f - 3.0f);
    return f;
}

std::string manifest_with(const std::string& video_fields) {
    return R"({"videos":[{"video_id":"v1","fps":2.0,"feature_path":"f.bin",)" + video_fields + "}]}";
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("feature files round trip and truncate") {
    TempDir dir("features");
    const auto f = features(7, 3);
    save_features(dir.path / "a.bin", f);
    CHECK(fs::file_size(dir.path / "a.bin") == 16 + 7 * 3 * 4);
    const auto back = load_features(dir.path / "a.bin");
    CHECK(back.frames == 7);
    CHECK(back.dim == 3);
    CHECK(back.values == f.values);
    const auto cut = load_features(dir.path / "a.bin", 4);
    CHECK(cut.frames == 4);
    CHECK(std::vector<float>(f.values.begin(), f.values.begin() + 12) == cut.values);
}

TEST_CASE("malformed feature files") {
    TempDir dir("badfeat");
    save_features(dir.path / "a.bin", features(2, 2));
    std::ifstream in(dir.path / "a.bin", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});

    write_text(dir.path / "short.bin", bytes.substr(0, 10));
    CHECK_THROWS_AS(load_features(dir.path / "short.bin"), FormatError);
    write_text(dir.path / "trunc.bin", bytes.substr(0, bytes.size() - 4));
    CHECK_THROWS_AS(load_features(dir.path / "trunc.bin"), FormatError);
    write_text(dir.path / "extra.bin", bytes + "xxxx");
    CHECK_THROWS_AS(load_features(dir.path / "extra.bin"), FormatError);
    auto magic = bytes;
    magic[0] = 'X';
    write_text(dir.path / "magic.bin", magic);
    CHECK_THROWS_AS(load_features(dir.path / "magic.bin"), FormatError);
    auto version = bytes;
    version[4] = 2;
    write_text(dir.path / "version.bin", version);
    CHECK_THROWS_AS(load_features(dir.path / "version.bin"), FormatError);
    CHECK_THROWS_AS(load_features(dir.path / "missing.bin"), DataError);
}

TEST_CASE("manifest validation") {
    TempDir dir("manifest");
    save_features(dir.path / "f.bin", features(10, 2));
    const auto m = dir.path / "m.json";

    write_text(m, manifest_with(R"("duration_sec":5.0,"segments":[{"start_sec":0,"end_sec":2,"caption":"a b"},
        {"start_sec":1,"end_sec":4.5,"caption":"c"}])"));
    const auto recs = load_dataset(m);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].segments.size() == 2);
    CHECK(recs[0].resolved_feature_path == dir.path / "f.bin");

    const std::vector<std::string> bad{
        R"("duration_sec":5.0,"segments":[])",
        R"("duration_sec":5.0,"segments":[{"start_sec":2,"end_sec":2,"caption":"a"}])",
        R"("duration_sec":5.0,"segments":[{"start_sec":-1,"end_sec":2,"caption":"a"}])",
        R"("duration_sec":5.0,"segments":[{"start_sec":0,"end_sec":6,"caption":"a"}])",
        R"("duration_sec":5.0,"segments":[{"start_sec":2,"end_sec":3,"caption":"a"},{"start_sec":1,"end_sec":3,"caption":"b"}])",
        R"("duration_sec":5.0,"segments":[{"start_sec":0,"end_sec":1}])",
        R"("duration_sec":"5","segments":[{"start_sec":0,"end_sec":1,"caption":"a"}])",
        R"("duration_sec":0,"segments":[{"start_sec":0,"end_sec":1,"caption":"a"}])",
        R"("duration_sec":5.0,"extra":1,"segments":[{"start_sec":0,"end_sec":1,"caption":"a"}])",
    };
    for (const auto& b : bad) {
        write_text(m, manifest_with(b));
        INFO(b);
        CHECK_THROWS_AS(load_dataset(m), DataError);
    }
    write_text(m, "{not json");
    CHECK_THROWS_AS(load_dataset(m), DataError);
    write_text(m, R"({"videos":[{"video_id":"v1","fps":2.0,"feature_path":"nope.bin","duration_sec":5.0,
        "segments":[{"start_sec":0,"end_sec":1,"caption":"a"}]}]})");
    CHECK_THROWS_AS(load_dataset(m), DataError);
}

TEST_CASE("manifest save and load round trip") {
    TempDir dir("roundtrip");
    save_features(dir.path / "f.bin", features(4, 2));
    VideoRecord r;
    r.video_id = "x";
    r.duration_sec = 2.0;
    r.fps = 2.0;
    r.feature_path = "f.bin";
    r.segments = {{0.0, 1.25, "a man walks"}, {1.0, 2.0, "then he sits"}};
    save_manifest(dir.path / "m.json", {r});
    const auto back = load_dataset(dir.path / "m.json");
    REQUIRE(back.size() == 1);
    CHECK(back[0].video_id == "x");
    CHECK(back[0].segments[0].end_sec == 1.25);
    CHECK(back[0].segments[1].caption == "then he sits");
}

TEST_CASE("seconds to frames") {
    VideoRecord r;
    r.video_id = "v";
    r.fps = 2.0;
    r.duration_sec = 10.0;
    r.segments = {{1.2, 3.7, "a"}, {0.0, 0.5, "b"}, {4.5, 9.0, "c"}};
    std::vector<std::size_t> kept;
    const auto spans = frame_spans(r, 20, &kept);
    REQUIRE(spans.size() == 3);
    CHECK(spans[0].start_frame == 2);
    CHECK(spans[0].end_frame == 8);
    CHECK(spans[1].start_frame == 0);
    CHECK(spans[1].end_frame == 1);
    CHECK(spans[2].ordinal == 3);

    // Truncated to 10 frames the last segment is clipped to [9, 10); at 9
    // frames it would be empty and is dropped.
    const auto cut = frame_spans(r, 10, &kept);
    CHECK(cut.size() == 3);
    CHECK(cut[2].end_frame == 10);
    const auto cut2 = frame_spans(r, 9, &kept);
    CHECK(cut2.size() == 2);
    CHECK(kept == std::vector<std::size_t>{0, 1});
}

TEST_CASE("text normalization and vocabulary") {
    CHECK(normalize_text("  The Cat,  SAT!\ton the mat. ") == "the cat sat on the mat");
    CHECK(split_words("a  b c") == std::vector<std::string>{"a", "b", "c"});

    const std::vector<std::string> caps{"b a c", "a b", "a"};
    const auto v = Vocabulary::build(caps);
    CHECK(v.size() == 8);
    CHECK(v.token(kFirstWordId) == "a");
    CHECK(v.token(kFirstWordId + 1) == "b");
    CHECK(v.token(kFirstWordId + 2) == "c");
    CHECK(v.encode("A b, zebra") == std::vector<int>{kFirstWordId, kFirstWordId + 1, kUnk});
    CHECK(v.decode(v.encode("c a")) == "c a");
    CHECK_THROWS_AS(v.encode("a <bos> b"), VocabError);
    CHECK_THROWS_AS(v.token(99), VocabError);

    const auto pruned = Vocabulary::build(caps, 2);
    CHECK(pruned.size() == 7);
    const auto again = Vocabulary::from_words(v.words());
    CHECK(again.words() == v.words());
    CHECK(again.id("c") == v.id("c"));
    CHECK_THROWS_AS(Vocabulary::build(std::vector<std::string>{}), ContractError);
}

TEST_CASE("synthetic corpus is deterministic and follows the transition rate") {
    SynthConfig cfg;
    cfg.n_videos = 400;
    cfg.seed = 9;
    const auto a = synth_generate(cfg);
    const auto b = synth_generate(cfg);
    REQUIRE(a.size() == 400);
    std::size_t transitions = 0, changes = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].features.values == b[i].features.values);
        CHECK(a[i].record.segments.size() == a[i].topics.size());
        CHECK(a[i].topics.size() >= cfg.k_min);
        CHECK(a[i].topics.size() <= cfg.k_max);
        CHECK(a[i].features.frames * a[i].features.dim == a[i].features.values.size());
        for (std::size_t k = 1; k < a[i].topics.size(); ++k) {
            ++transitions;
            const bool changed = a[i].topics[k] != a[i].topics[k - 1];
            changes += changed;
            const auto& cap = a[i].record.segments[k].caption;
            CHECK(cap.rfind(changed ? "then " : "continue to ", 0) == 0);
        }
    }
    const double p = cfg.topic_transition_prob;
    const double rate = static_cast<double>(changes) / transitions;
    CHECK(std::abs(rate - p) < 3 * std::sqrt(p * (1 - p) / transitions));

    cfg.seed = 10;
    CHECK(synth_generate(cfg)[0].features.values != a[0].features.values);
    cfg.k_max = 1;
    CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
}

TEST_CASE("synthetic dataset on disk loads back into examples") {
    TempDir dir("synth");
    SynthConfig cfg;
    cfg.n_videos = 12;
    cfg.feature_dim = 4;
    write_synth_dataset(dir.path, synth_generate(cfg), 3);
    const auto train = load_dataset(dir.path / "train.json");
    const auto val = load_dataset(dir.path / "val.json");
    CHECK(train.size() == 9);
    CHECK(val.size() == 3);

    std::vector<std::string> caps;
    for (const auto& r : train)
        for (const auto& s : r.segments) caps.push_back(s.caption);
    const auto vocab = Vocabulary::build(caps);
    auto mc = flowcap::test::tiny_config(vocab.size());
    mc.feature_dim = 4;
    mc.max_caption_len = 3;
    const auto ex = make_examples(train, vocab, mc);
    REQUIRE(ex.size() == 9);
    for (std::size_t i = 0; i < ex.size(); ++i) {
        CHECK(ex[i].spans.size() == train[i].segments.size());
        CHECK(ex[i].captions.size() == ex[i].spans.size());
        CHECK(ex[i].references[0] == train[i].segments[0].caption);
        for (const auto& c : ex[i].captions) CHECK(c.size() <= 3);
    }
    mc.feature_dim = 5;
    CHECK_THROWS_AS(make_examples(train, vocab, mc), DataError);
}

}
