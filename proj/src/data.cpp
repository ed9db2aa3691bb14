#include "flowcap/data.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "flowcap/errors.hpp"
#include "flowcap/rng.hpp"

namespace flowcap {

using json = nlohmann::json;

namespace {

const json& require_field(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) throw DataError(where + ": missing required field '" + key + "'");
    return obj.at(key);
}

double require_number(const json& obj, const char* key, const std::string& where) {
    const auto& v = require_field(obj, key, where);
    if (!v.is_number()) throw DataError(where + ": field '" + std::string(key) + "' must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw DataError(where + ": field '" + std::string(key) + "' is not finite");
    return x;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
    const auto& v = require_field(obj, key, where);
    if (!v.is_string()) throw DataError(where + ": field '" + std::string(key) + "' must be a string");
    return v.get<std::string>();
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw DataError(where + ": unknown field '" + it.key() + "'");
    }
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& buf, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    return v;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TopicGrammar {
    std::array<const char*, 2> subjects;
    // {third person, base form, object}
    std::array<std::array<const char*, 3>, 3> actions;
};

const std::array<TopicGrammar, 8>& grammars() {
    static const std::array<TopicGrammar, 8> g = {{
        {{"a chef", "the cook"},
         {{{"chops", "chop", "the onions"}, {"stirs", "stir", "the soup"}, {"adds", "add", "some salt"}}}},
        {{"a woman", "the athlete"},
         {{{"lifts", "lift", "a barbell"}, {"runs", "run", "on a treadmill"}, {"stretches", "stretch", "her legs"}}}},
        {{"a man", "the musician"},
         {{{"plays", "play", "the guitar"}, {"sings", "sing", "a song"}, {"tunes", "tune", "the strings"}}}},
        {{"a boy", "the player"},
         {{{"kicks", "kick", "the ball"}, {"throws", "throw", "a frisbee"}, {"catches", "catch", "the ball"}}}},
        {{"a girl", "the cleaner"},
         {{{"washes", "wash", "the dishes"}, {"mops", "mop", "the floor"}, {"wipes", "wipe", "the table"}}}},
        {{"an old man", "the gardener"},
         {{{"waters", "water", "the plants"}, {"digs", "dig", "a hole"}, {"trims", "trim", "the hedge"}}}},
        {{"a dancer", "the couple"},
         {{{"spins", "spin", "around"}, {"jumps", "jump", "in the air"}, {"bows", "bow", "to the crowd"}}}},
        {{"an artist", "the painter"},
         {{{"paints", "paint", "a wall"}, {"mixes", "mix", "the colors"}, {"draws", "draw", "a sketch"}}}},
    }};
    return g;
}

}  // namespace

std::vector<VideoRecord> load_dataset(const std::filesystem::path& manifest_path) {
    json doc;
    try {
        doc = json::parse(read_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    const std::string where = manifest_path.string();
    reject_unknown(doc, {"videos"}, where);
    const auto& videos = require_field(doc, "videos", where);
    if (!videos.is_array()) throw DataError(where + ": 'videos' must be an array");
    const auto base = manifest_path.parent_path();
    std::vector<VideoRecord> out;
    for (std::size_t vi = 0; vi < videos.size(); ++vi) {
        const auto& v = videos[vi];
        std::string ctx = where + ": videos[" + std::to_string(vi) + "]";
        VideoRecord r;
        r.video_id = require_string(v, "video_id", ctx);
        ctx = "video " + r.video_id;
        reject_unknown(v, {"video_id", "duration_sec", "fps", "feature_path", "segments"}, ctx);
        r.duration_sec = require_number(v, "duration_sec", ctx);
        r.fps = require_number(v, "fps", ctx);
        r.feature_path = require_string(v, "feature_path", ctx);
        if (r.duration_sec <= 0) throw DataError(ctx + ": duration_sec must be positive");
        if (r.fps <= 0) throw DataError(ctx + ": fps must be positive");
        const auto& segs = require_field(v, "segments", ctx);
        if (!segs.is_array() || segs.empty()) throw DataError(ctx + ": 'segments' must be a non-empty array");
        for (std::size_t si = 0; si < segs.size(); ++si) {
            const std::string sctx = ctx + " segment " + std::to_string(si);
            reject_unknown(segs[si], {"start_sec", "end_sec", "caption"}, sctx);
            Segment s;
            s.start_sec = require_number(segs[si], "start_sec", sctx);
            s.end_sec = require_number(segs[si], "end_sec", sctx);
            s.caption = require_string(segs[si], "caption", sctx);
            if (s.start_sec < 0 || s.start_sec >= s.end_sec) {
                throw DataError(sctx + ": requires 0 <= start_sec < end_sec");
            }
            if (s.end_sec > r.duration_sec) {
                throw DataError(sctx + ": end_sec " + std::to_string(s.end_sec) + " exceeds duration_sec " +
                                std::to_string(r.duration_sec));
            }
            if (!r.segments.empty() && s.start_sec < r.segments.back().start_sec) {
                throw DataError(sctx + ": segments must be ordered by start_sec");
            }
            r.segments.push_back(std::move(s));
        }
        r.resolved_feature_path = base / r.feature_path;
        if (!std::filesystem::exists(r.resolved_feature_path)) {
            throw DataError(ctx + ": missing feature file " + r.resolved_feature_path.string());
        }
        out.push_back(std::move(r));
    }
    return out;
}

void save_manifest(const std::filesystem::path& manifest_path, const std::vector<VideoRecord>& records) {
    json videos = json::array();
    for (const auto& r : records) {
        json segs = json::array();
        for (const auto& s : r.segments) {
            segs.push_back({{"start_sec", s.start_sec}, {"end_sec", s.end_sec}, {"caption", s.caption}});
        }
        videos.push_back({{"video_id", r.video_id},
                          {"duration_sec", r.duration_sec},
                          {"fps", r.fps},
                          {"feature_path", r.feature_path},
                          {"segments", segs}});
    }
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out) throw DataError("cannot write " + manifest_path.string());
    out << json{{"videos", videos}}.dump(1) << '\n';
}

VideoFeatures load_features(const std::filesystem::path& path, std::size_t max_frames) {
    const std::string buf = read_file(path);
    const std::string where = path.string();
    if (buf.size() < 16) throw FormatError(where + ": truncated header");
    if (std::memcmp(buf.data(), "DVCF", 4) != 0) throw FormatError(where + ": bad magic");
    const std::uint32_t version = get_u32(buf, 4);
    if (version != kFeatureFormatVersion) {
        throw FormatError(where + ": unsupported feature version " + std::to_string(version));
    }
    const std::uint64_t frames = get_u32(buf, 8);
    const std::uint64_t dim = get_u32(buf, 12);
    if (frames == 0 || dim == 0) throw FormatError(where + ": empty feature matrix");
    if (buf.size() != 16 + frames * dim * 4) {
        throw FormatError(where + ": size mismatch, header says " + std::to_string(frames) + "x" + std::to_string(dim) +
                          " but payload is " + std::to_string(buf.size() - 16) + " bytes");
    }
    VideoFeatures f;
    f.frames = static_cast<std::size_t>(std::min<std::uint64_t>(frames, max_frames));
    f.dim = static_cast<std::size_t>(dim);
    f.values.resize(f.frames * f.dim);
    for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = std::bit_cast<float>(get_u32(buf, 16 + 4 * i));
    return f;
}

void save_features(const std::filesystem::path& path, const VideoFeatures& features) {
    if (features.values.size() != features.frames * features.dim) throw ContractError("save_features: size mismatch");
    std::string buf = "DVCF";
    put_u32(buf, kFeatureFormatVersion);
    put_u32(buf, static_cast<std::uint32_t>(features.frames));
    put_u32(buf, static_cast<std::uint32_t>(features.dim));
    for (float v : features.values) put_u32(buf, std::bit_cast<std::uint32_t>(v));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<SegmentSpan> frame_spans(const VideoRecord& record, std::size_t frames, std::vector<std::size_t>* kept) {
    std::vector<SegmentSpan> spans;
    if (kept) kept->clear();
    for (std::size_t i = 0; i < record.segments.size(); ++i) {
        const auto& s = record.segments[i];
        auto start = static_cast<std::size_t>(std::floor(s.start_sec * record.fps));
        auto end = static_cast<std::size_t>(std::ceil(s.end_sec * record.fps));
        start = std::min(start, frames);
        end = std::min(end, frames);
        if (end <= start) {
            std::cerr << "warning: video " << record.video_id << " segment " << i
                      << " lies beyond the truncated feature sequence and is dropped\n";
            continue;
        }
        spans.push_back({start, end, spans.size() + 1});
        if (kept) kept->push_back(i);
    }
    return spans;
}

void SynthConfig::validate() const {
    if (n_videos == 0 || topics == 0 || k_min == 0 || k_max < k_min || frames_min == 0 || frames_max < frames_min ||
        feature_dim == 0) {
        throw ConfigError("synth: counts must be positive and ranges ordered");
    }
    if (!(topic_transition_prob >= 0.0 && topic_transition_prob <= 1.0)) {
        throw ConfigError("synth: topic_transition_prob must be in [0,1]");
    }
    if (!(noise_scale >= 0.0) || !(fps > 0.0)) throw ConfigError("synth: noise_scale >= 0 and fps > 0 required");
}

std::vector<SynthVideo> synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng topic_rng(derive_seed(cfg.seed, "topic-embeddings"));
    std::vector<std::vector<float>> topic_emb(cfg.topics, std::vector<float>(cfg.feature_dim));
    for (auto& e : topic_emb)
        for (auto& x : e) x = static_cast<float>(topic_rng.normal());

    Rng rng(derive_seed(cfg.seed, "videos"));
    std::vector<SynthVideo> out;
    out.reserve(cfg.n_videos);
    for (std::size_t v = 0; v < cfg.n_videos; ++v) {
        SynthVideo sv;
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "synth_%05zu", v);
        sv.record.video_id = idbuf;
        sv.record.fps = cfg.fps;
        sv.record.feature_path = "features/" + sv.record.video_id + ".bin";
        sv.features.dim = cfg.feature_dim;

        const int k = rng.range(static_cast<int>(cfg.k_min), static_cast<int>(cfg.k_max));
        std::size_t frame = 0;
        std::size_t run = 0;
        for (int i = 0; i < k; ++i) {
            std::size_t topic;
            bool changed = true;
            if (i == 0) {
                topic = static_cast<std::size_t>(rng.below(cfg.topics));
            } else if (cfg.topics > 1 && rng.bernoulli(cfg.topic_transition_prob)) {
                const auto prev = sv.topics.back();
                topic = static_cast<std::size_t>(rng.below(cfg.topics - 1));
                if (topic >= prev) ++topic;
            } else {
                topic = sv.topics.back();
                changed = false;
            }
            run = (i == 0 || changed) ? 0 : run + 1;
            sv.topics.push_back(topic);

            const auto len = static_cast<std::size_t>(rng.range(static_cast<int>(cfg.frames_min),
                                                                static_cast<int>(cfg.frames_max)));
            for (std::size_t f = 0; f < len; ++f) {
                for (std::size_t j = 0; j < cfg.feature_dim; ++j) {
                    const double noise = cfg.noise_scale > 0 ? cfg.noise_scale * rng.normal() : 0.0;
                    sv.features.values.push_back(static_cast<float>(topic_emb[topic][j] + noise));
                }
            }

            // Topics beyond the hand-written grammars reuse them cyclically.
            const auto& g = grammars()[topic % grammars().size()];
            const char* subject = g.subjects[rng.below(2)];
            const auto& action = g.actions[run % g.actions.size()];
            std::string caption;
            if (i == 0) {
                caption = std::string(subject) + " " + action[0] + " " + action[2];
            } else if (changed) {
                caption = std::string("then ") + subject + " " + action[0] + " " + action[2];
            } else {
                caption = std::string("continue to ") + action[1] + " " + action[2];
            }
            sv.record.segments.push_back({static_cast<double>(frame) / cfg.fps,
                                          static_cast<double>(frame + len) / cfg.fps, std::move(caption)});
            frame += len;
        }
        sv.features.frames = frame;
        sv.record.duration_sec = static_cast<double>(frame) / cfg.fps;
        out.push_back(std::move(sv));
    }
    return out;
}

void write_synth_dataset(const std::filesystem::path& dir, const std::vector<SynthVideo>& videos, std::size_t n_val) {
    std::filesystem::create_directories(dir / "features");
    std::vector<VideoRecord> train, val;
    for (std::size_t i = 0; i < videos.size(); ++i) {
        save_features(dir / videos[i].record.feature_path, videos[i].features);
        (i < n_val ? val : train).push_back(videos[i].record);
    }
    save_manifest(dir / "train.json", train);
    save_manifest(dir / "val.json", val);
}

}  // namespace flowcap
