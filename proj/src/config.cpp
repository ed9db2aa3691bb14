#include "flowcap/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "flowcap/errors.hpp"

namespace flowcap {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class N>
N parse_number(const std::string& v) {
    N out{};
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigError("malformed number '" + v + "'");
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("malformed boolean '" + v + "' (use true or false)");
}

template <class N>
std::string fmt(N v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}
std::string fmt(bool v) { return v ? "true" : "false"; }

template <class N>
std::vector<N> parse_list(const std::string& v) {
    std::vector<N> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<N>(trim(item)));
    if (out.empty()) throw ConfigError("empty list");
    return out;
}

template <class N>
std::string fmt_list(const std::vector<N>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
    return s;
}

template <class N>
N parse_as(const std::string& v) {
    if constexpr (std::is_same_v<N, bool>) {
        return parse_bool(v);
    } else {
        return parse_number<N>(v);
    }
}

}  // namespace

#define FLOWCAP_KEY(name, field, text)                                                                        \
    ConfigKey {                                                                                               \
        name, text,                                                                                           \
            [](RunConfig& c, const std::string& v) { c.field = parse_as<std::decay_t<decltype(c.field)>>(v); }, \
            [](const RunConfig& c) { return fmt(c.field); }                                                   \
    }

const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> schema = {
        FLOWCAP_KEY("model.feature_dim", model.feature_dim, "visual feature width D_v"),
        FLOWCAP_KEY("model.d", model.d, "hidden width"),
        FLOWCAP_KEY("model.heads", model.heads, "attention heads (divides d)"),
        FLOWCAP_KEY("model.ffn_mult", model.ffn_mult, "feed-forward width as a multiple of d"),
        FLOWCAP_KEY("model.global_layers", model.global_layers, "layers in the global video encoder"),
        FLOWCAP_KEY("model.local_layers", model.local_layers, "layers in the per-segment encoder"),
        FLOWCAP_KEY("model.flow_layers", model.flow_layers, "layers in the causal visual-flow model"),
        FLOWCAP_KEY("model.trunk_layers", model.trunk_layers, "layers in the shared decoder trunk"),
        FLOWCAP_KEY("model.ev_layers", model.ev_layers, "generator visual-block layers"),
        FLOWCAP_KEY("model.ec_layers", model.ec_layers, "generator text-block layers"),
        FLOWCAP_KEY("model.max_frames", model.max_frames, "frames kept per video"),
        FLOWCAP_KEY("model.max_segments", model.max_segments, "segments per video"),
        FLOWCAP_KEY("model.max_caption_len", model.max_caption_len, "caption tokens kept for training"),
        FLOWCAP_KEY("model.max_text_len", model.max_text_len, "textual-flow sequence length"),
        FLOWCAP_KEY("model.align_stop_text_grad", model.align_stop_text_grad,
                    "treat textual deltas as constants in the alignment loss"),
        FLOWCAP_KEY("train.lr", train.lr, "peak learning rate"),
        FLOWCAP_KEY("train.weight_decay", train.weight_decay, "decoupled weight decay"),
        FLOWCAP_KEY("train.warmup_epochs", train.warmup_epochs, "linear warmup length in epochs"),
        FLOWCAP_KEY("train.epochs", train.epochs, "joint-training epochs"),
        FLOWCAP_KEY("train.batch_videos", train.batch_videos, "videos per optimizer step"),
        FLOWCAP_KEY("train.lambda", train.lambda, "weight of the alignment loss"),
        FLOWCAP_KEY("train.grad_clip", train.grad_clip, "global gradient-norm clip, 0 disables"),
        FLOWCAP_KEY("train.seed", train.seed, "training seed"),
        FLOWCAP_KEY("train.no_align", train.no_align, "drop the alignment loss"),
        FLOWCAP_KEY("train.no_global", train.no_global, "encode each segment without the global encoder"),
        FLOWCAP_KEY("train.no_pretrain", train.no_pretrain, "skip trunk language-model pretraining"),
        FLOWCAP_KEY("train.pretrain_epochs", train.pretrain_epochs, "trunk pretraining epochs"),
        FLOWCAP_KEY("train.pretrain_lr", train.pretrain_lr, "trunk pretraining learning rate"),
        FLOWCAP_KEY("decode.k", decode.k, "top-k"),
        FLOWCAP_KEY("decode.max_len", decode.max_len, "tokens per generated caption"),
        FLOWCAP_KEY("decode.temperature", decode.temperature, "softmax temperature"),
        FLOWCAP_KEY("decode.rep_ngram", decode.rep_ngram, "n for the repetition filter, 0 disables"),
        FLOWCAP_KEY("decode.max_resample", decode.max_resample, "redraws per caption in the filter"),
        FLOWCAP_KEY("decode.seed", decode.seed, "decoding seed"),
        FLOWCAP_KEY("synth.n_videos", synth.n_videos, "synthetic videos"),
        FLOWCAP_KEY("synth.n_val", n_val, "synthetic videos written to val.json"),
        FLOWCAP_KEY("synth.topics", synth.topics, "latent topics"),
        FLOWCAP_KEY("synth.k_min", synth.k_min, "fewest segments per video"),
        FLOWCAP_KEY("synth.k_max", synth.k_max, "most segments per video"),
        FLOWCAP_KEY("synth.frames_min", synth.frames_min, "fewest frames per segment"),
        FLOWCAP_KEY("synth.frames_max", synth.frames_max, "most frames per segment"),
        FLOWCAP_KEY("synth.feature_dim", synth.feature_dim, "feature width"),
        FLOWCAP_KEY("synth.topic_transition_prob", synth.topic_transition_prob, "probability of a topic change"),
        FLOWCAP_KEY("synth.noise_scale", synth.noise_scale, "feature noise standard deviation"),
        FLOWCAP_KEY("synth.fps", synth.fps, "frames per second"),
        FLOWCAP_KEY("synth.seed", synth.seed, "synthetic corpus seed"),
        ConfigKey{"ablate.seeds", "comma-separated training seeds",
                  [](RunConfig& c, const std::string& v) { c.ablate_seeds = parse_list<std::uint64_t>(v); },
                  [](const RunConfig& c) { return fmt_list(c.ablate_seeds); }},
        ConfigKey{"ablate.lambdas", "comma-separated alignment weights for the sweep",
                  [](RunConfig& c, const std::string& v) { c.ablate_lambdas = parse_list<double>(v); },
                  [](const RunConfig& c) { return fmt_list(c.ablate_lambdas); }},
    };
    return schema;
}

#undef FLOWCAP_KEY

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& k : config_schema()) {
        if (k.key != key) continue;
        try {
            k.set(cfg, value);
        } catch (const ConfigError& e) {
            throw ConfigError("key " + key + ": " + e.what());
        }
        return;
    }
    throw ConfigError("unknown config key '" + key + "'");
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source) {
    std::stringstream ss(text);
    std::string line;
    for (std::size_t no = 1; std::getline(ss, line); ++no) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        try {
            apply_override(cfg, line);
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(no) + ": " + e.what());
        }
    }
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot read config " + path.string());
        std::stringstream ss;
        ss << f.rdbuf();
        apply_config_text(cfg, ss.str(), path.string());
    }
    for (const auto& o : overrides) apply_override(cfg, o);
    return cfg;
}

std::string describe_schema(const RunConfig& defaults) {
    std::string out = "Config keys (key = default):\n";
    for (const auto& k : config_schema()) {
        std::string left = "  " + k.key + " = " + k.get(defaults);
        if (left.size() < 40) left.resize(40, ' ');
        out += left + " " + k.help + "\n";
    }
    return out;
}

std::string dump_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& k : config_schema()) out += k.key + " = " + k.get(cfg) + "\n";
    return out;
}

}  // namespace flowcap
