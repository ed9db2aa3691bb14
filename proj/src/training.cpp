#include "flowcap/training.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "json.hpp"

#include "flowcap/errors.hpp"
#include "flowcap/flow_align.hpp"

namespace flowcap {

using json = nlohmann::json;

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
    if (warmup_epochs > epochs) {
        throw ConfigError("warmup_epochs " + std::to_string(warmup_epochs) + " exceeds epochs " + std::to_string(epochs));
    }
    if (batch_videos < 1) throw ConfigError("batch_videos must be >= 1");
    if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
    if (!(pretrain_lr > 0.0)) throw ConfigError("pretrain_lr must be > 0");
}

double lr_at(std::uint64_t step, const TrainConfig& cfg, std::size_t steps_per_epoch) {
    const auto warm = static_cast<std::uint64_t>(cfg.warmup_epochs) * steps_per_epoch;
    if (warm == 0 || step >= warm) return cfg.lr;
    return cfg.lr * static_cast<double>(step) / static_cast<double>(warm);
}

OptimizerState OptimizerState::for_params(const ParamStore<float>& params) {
    OptimizerState s;
    for (const auto& p : params.items()) {
        s.m.emplace_back(p.tensor.numel(), 0.0f);
        s.v.emplace_back(p.tensor.numel(), 0.0f);
    }
    return s;
}

void adamw_update(std::span<float> theta, std::span<const float> grad, std::span<float> m, std::span<float> v,
                  std::uint64_t t, double lr, double weight_decay, const AdamHyper& h) {
    if (m.size() != theta.size() || v.size() != theta.size() || (!grad.empty() && grad.size() != theta.size())) {
        throw ContractError("adamw: moment/gradient sizes do not match the parameter");
    }
    if (t == 0) throw ContractError("adamw: step counter starts at 1");
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grad.empty() ? 0.0 : grad[i];
        const double mi = h.beta1 * m[i] + (1.0 - h.beta1) * g;
        const double vi = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
        m[i] = static_cast<float>(mi);
        v[i] = static_cast<float>(vi);
        double th = theta[i];
        th -= lr * weight_decay * th;
        th -= lr * (mi / c1) / (std::sqrt(vi / c2) + h.eps);
        theta[i] = static_cast<float>(th);
    }
}

void adamw_step(ParamStore<float>& params, OptimizerState& state, double lr, double weight_decay,
                const std::function<bool(const std::string&)>& select, const AdamHyper& h) {
    auto& items = params.items();
    if (state.m.size() != items.size() || state.v.size() != items.size()) {
        throw ContractError("adamw: optimizer state has " + std::to_string(state.m.size()) + " entries for " +
                            std::to_string(items.size()) + " parameters");
    }
    ++state.step;
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto& p = items[i];
        if (state.m[i].size() != p.tensor.numel() || state.v[i].size() != p.tensor.numel()) {
            throw ContractError("adamw: moment shape mismatch for " + p.name);
        }
        if (select && !select(p.name)) continue;
        adamw_update(p.tensor.data(), p.tensor.grad(), state.m[i], state.v[i], state.step, lr, weight_decay, h);
    }
}

double clip_grad_norm(ParamStore<float>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params.items()) {
        for (float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& p : params.items()) {
            auto* g = p.tensor.node()->grad.data();
            for (std::size_t i = 0; i < p.tensor.node()->grad.size(); ++i) g[i] = static_cast<float>(g[i] * s);
        }
    }
    return norm;
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

std::vector<std::vector<int>> caption_stream(const VideoExample& ex) { return ex.captions; }

}  // namespace

std::vector<double> lm_pretrain(Model<float>& m, std::span<const VideoExample> examples, std::size_t epochs,
                                double lr, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "lm-pretrain"));
    auto opt = OptimizerState::for_params(m.params);
    auto select = [](const std::string& name) { return is_trunk_parameter(name) || name.rfind("gen.out_", 0) == 0; };
    std::vector<double> per_epoch;
    for (std::size_t e = 0; e < epochs; ++e) {
        double nll = 0.0;
        std::size_t tokens = 0;
        for (std::size_t idx : shuffled(examples.size(), rng)) {
            m.params.zero_grad();
            const auto stream = caption_stream(examples[idx]);
            auto loss = lm_loss(m, std::span<const std::vector<int>>(stream));
            const double v = loss.nll.item();
            if (!std::isfinite(v)) {
                throw NumericError("non-finite language-model loss at pretrain epoch " + std::to_string(e + 1) +
                                   ", video " + examples[idx].video_id);
            }
            backward(loss.nll);
            clip_grad_norm(m.params, 1.0);
            adamw_step(m.params, opt, lr, 0.0, select);
            nll += v;
            tokens += loss.tokens;
        }
        per_epoch.push_back(tokens ? nll / static_cast<double>(tokens) : 0.0);
    }
    m.params.zero_grad();
    return per_epoch;
}

TrainState init_training(ModelConfig model_cfg, const TrainConfig& train_cfg, Vocabulary vocab,
                         std::span<const VideoExample> examples) {
    train_cfg.validate();
    model_cfg.no_global = train_cfg.no_global;
    model_cfg.vocab_size = vocab.size();
    model_cfg.validate();
    TrainState st{Model<float>::create(model_cfg, derive_seed(train_cfg.seed, "model")), std::move(vocab), train_cfg,
                  {}, Rng(derive_seed(train_cfg.seed, "shuffle")), 0};
    if (!train_cfg.no_pretrain && train_cfg.pretrain_epochs > 0) {
        lm_pretrain(st.model, examples, train_cfg.pretrain_epochs, train_cfg.pretrain_lr, train_cfg.seed);
    }
    st.opt = OptimizerState::for_params(st.model.params);
    return st;
}

std::vector<EpochLog> train(TrainState& st, std::span<const VideoExample> examples, const EpochCallback& on_epoch) {
    st.train.validate();
    if (examples.empty()) throw DataError("training set is empty");
    const auto& tc = st.train;
    const std::size_t spe = (examples.size() + tc.batch_videos - 1) / tc.batch_videos;
    const LossOptions opt{tc.lambda, tc.no_align};
    std::vector<EpochLog> logs;
    while (st.epoch < tc.epochs) {
        const std::size_t epoch = st.epoch + 1;
        const auto order = shuffled(examples.size(), st.rng);
        double nll = 0.0, mse = 0.0, lr = 0.0;
        std::size_t tokens = 0;
        for (std::size_t b = 0; b < spe; ++b) {
            st.model.params.zero_grad();
            const std::size_t lo = b * tc.batch_videos, hi = std::min(order.size(), lo + tc.batch_videos);
            const float inv = 1.0f / static_cast<float>(hi - lo);
            for (std::size_t j = lo; j < hi; ++j) {
                const auto& ex = examples[order[j]];
                auto loss = video_loss(st.model, ex, opt);
                const double total = loss.total.item();
                if (!std::isfinite(total)) {
                    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", video " + ex.video_id);
                }
                nll += loss.nll.item();
                mse += loss.mse.item();
                tokens += loss.tokens;
                backward(hi - lo == 1 ? loss.total : scale(loss.total, inv));
            }
            lr = lr_at(st.opt.step + 1, tc, spe);
            clip_grad_norm(st.model.params, tc.grad_clip);
            adamw_step(st.model.params, st.opt, lr, tc.weight_decay);
        }
        st.model.params.zero_grad();
        st.epoch = epoch;
        EpochLog log{epoch, tokens ? nll / static_cast<double>(tokens) : 0.0,
                     mse / static_cast<double>(examples.size()), lr};
        logs.push_back(log);
        if (on_epoch) on_epoch(st, log);
    }
    return logs;
}

double heldout_nll(const Model<float>& m, std::span<const VideoExample> examples) {
    NoGradGuard no_grad;
    double nll = 0.0;
    std::size_t tokens = 0;
    for (const auto& ex : examples) {
        auto loss = video_loss(m, ex, LossOptions{0.0, true});
        nll += loss.nll.item();
        tokens += loss.tokens;
    }
    return tokens ? nll / static_cast<double>(tokens) : 0.0;
}

// ---- checkpoint I/O ----

namespace {

json model_json(const ModelConfig& c) {
    return {{"feature_dim", c.feature_dim},     {"d", c.d},
            {"heads", c.heads},                 {"ffn_mult", c.ffn_mult},
            {"global_layers", c.global_layers}, {"local_layers", c.local_layers},
            {"flow_layers", c.flow_layers},     {"trunk_layers", c.trunk_layers},
            {"ev_layers", c.ev_layers},         {"ec_layers", c.ec_layers},
            {"vocab_size", c.vocab_size},       {"max_frames", c.max_frames},
            {"max_segments", c.max_segments},   {"max_caption_len", c.max_caption_len},
            {"max_text_len", c.max_text_len},   {"no_global", c.no_global},
            {"align_stop_text_grad", c.align_stop_text_grad}};
}

ModelConfig model_from_json(const json& j) {
    ModelConfig c;
    j.at("feature_dim").get_to(c.feature_dim);
    j.at("d").get_to(c.d);
    j.at("heads").get_to(c.heads);
    j.at("ffn_mult").get_to(c.ffn_mult);
    j.at("global_layers").get_to(c.global_layers);
    j.at("local_layers").get_to(c.local_layers);
    j.at("flow_layers").get_to(c.flow_layers);
    j.at("trunk_layers").get_to(c.trunk_layers);
    j.at("ev_layers").get_to(c.ev_layers);
    j.at("ec_layers").get_to(c.ec_layers);
    j.at("vocab_size").get_to(c.vocab_size);
    j.at("max_frames").get_to(c.max_frames);
    j.at("max_segments").get_to(c.max_segments);
    j.at("max_caption_len").get_to(c.max_caption_len);
    j.at("max_text_len").get_to(c.max_text_len);
    j.at("no_global").get_to(c.no_global);
    j.at("align_stop_text_grad").get_to(c.align_stop_text_grad);
    return c;
}

json train_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"weight_decay", c.weight_decay},
            {"warmup_epochs", c.warmup_epochs},
            {"epochs", c.epochs},
            {"batch_videos", c.batch_videos},
            {"lambda", c.lambda},
            {"grad_clip", c.grad_clip},
            {"seed", c.seed},
            {"no_align", c.no_align},
            {"no_global", c.no_global},
            {"no_pretrain", c.no_pretrain},
            {"pretrain_epochs", c.pretrain_epochs},
            {"pretrain_lr", c.pretrain_lr}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig c;
    j.at("lr").get_to(c.lr);
    j.at("weight_decay").get_to(c.weight_decay);
    j.at("warmup_epochs").get_to(c.warmup_epochs);
    j.at("epochs").get_to(c.epochs);
    j.at("batch_videos").get_to(c.batch_videos);
    j.at("lambda").get_to(c.lambda);
    j.at("grad_clip").get_to(c.grad_clip);
    j.at("seed").get_to(c.seed);
    j.at("no_align").get_to(c.no_align);
    j.at("no_global").get_to(c.no_global);
    j.at("no_pretrain").get_to(c.no_pretrain);
    j.at("pretrain_epochs").get_to(c.pretrain_epochs);
    j.at("pretrain_lr").get_to(c.pretrain_lr);
    return c;
}

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void bytes(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_ += s;
    }
    void tensor(const std::string& name, const Shape& shape, std::span<const float> values) {
        bytes(name);
        u32(static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) u32(static_cast<std::uint32_t>(d));
        for (float f : values) u32(std::bit_cast<std::uint32_t>(f));
    }
    const std::string& str() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        return lo | (static_cast<std::uint64_t>(u32()) << 32);
    }
    std::string bytes() {
        const std::uint32_t n = u32();
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string raw(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    // Reads a named tensor into `out`, checking name and shape.
    void tensor(const std::string& name, const Shape& shape, std::span<float> out) {
        const auto got = bytes();
        if (got != name) throw FormatError("checkpoint: expected tensor " + name + ", found " + got);
        const std::uint32_t rank = u32();
        Shape s(rank);
        for (auto& d : s) d = u32();
        if (s != shape) throw FormatError("checkpoint: tensor " + name + " has shape " + shape_str(s) + ", expected " + shape_str(shape));
        for (float& f : out) f = std::bit_cast<float>(u32());
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::string data_;
    std::size_t pos_ = 0;
};

json header_json(const TrainState& st) {
    return {{"model", model_json(st.model.cfg)}, {"train", train_json(st.train)}, {"vocab", st.vocab.words()}};
}

}  // namespace

std::string train_config_json(const TrainConfig& c) { return train_json(c).dump(); }
std::string model_config_json(const ModelConfig& c) { return model_json(c).dump(); }

void save_checkpoint(const std::filesystem::path& path, const TrainState& st) {
    Writer w;
    w.u32(0x504b4346u);  // "FCKP"
    w.u32(kCheckpointVersion);
    w.bytes(header_json(st).dump());
    w.u64(st.epoch);
    w.u64(st.opt.step);
    w.bytes(st.rng.state());
    const auto& items = st.model.params.items();
    w.u32(static_cast<std::uint32_t>(items.size()));
    for (const auto& p : items) w.tensor(p.name, p.tensor.shape(), p.tensor.data());
    w.u32(static_cast<std::uint32_t>(items.size()));
    for (std::size_t i = 0; i < items.size(); ++i) w.tensor("m." + items[i].name, items[i].tensor.shape(), st.opt.m[i]);
    w.u32(static_cast<std::uint32_t>(items.size()));
    for (std::size_t i = 0; i < items.size(); ++i) w.tensor("v." + items[i].name, items[i].tensor.shape(), st.opt.v[i]);

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write checkpoint " + tmp.string());
        f.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
        if (!f) throw DataError("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint " + path.string());
    Reader r(std::string(std::istreambuf_iterator<char>(f), {}));
    if (r.raw(4) != "FCKP") throw FormatError("checkpoint " + path.string() + ": bad magic");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint " + path.string() + " has format version " + std::to_string(version) +
                          "; this build reads version " + std::to_string(kCheckpointVersion) +
                          " and has no migration from it");
    }
    json header;
    try {
        header = json::parse(r.bytes());
    } catch (const json::exception& e) {
        throw FormatError("checkpoint header: " + std::string(e.what()));
    }
    ModelConfig mc;
    TrainConfig tc;
    std::vector<std::string> words;
    try {
        mc = model_from_json(header.at("model"));
        tc = train_from_json(header.at("train"));
        words = header.at("vocab").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw FormatError("checkpoint header: " + std::string(e.what()));
    }
    mc.validate();
    TrainState st{Model<float>::create(mc, 0), Vocabulary::from_words(std::move(words)), tc, {}, Rng(0), 0};
    if (st.vocab.size() != mc.vocab_size) throw FormatError("checkpoint vocabulary size does not match the model");
    st.epoch = r.u64();
    const std::uint64_t step = r.u64();
    st.rng.set_state(r.bytes());
    st.opt = OptimizerState::for_params(st.model.params);
    st.opt.step = step;
    auto& items = st.model.params.items();
    auto expect_count = [&](const char* what) {
        const std::uint32_t n = r.u32();
        if (n != items.size()) {
            throw FormatError(std::string("checkpoint: ") + what + " count " + std::to_string(n) + ", expected " +
                              std::to_string(items.size()));
        }
    };
    expect_count("parameter");
    for (auto& p : items) r.tensor(p.name, p.tensor.shape(), p.tensor.data());
    expect_count("first-moment");
    for (std::size_t i = 0; i < items.size(); ++i) r.tensor("m." + items[i].name, items[i].tensor.shape(), st.opt.m[i]);
    expect_count("second-moment");
    for (std::size_t i = 0; i < items.size(); ++i) r.tensor("v." + items[i].name, items[i].tensor.shape(), st.opt.v[i]);
    if (!r.done()) throw FormatError("checkpoint " + path.string() + " has trailing bytes");
    return st;
}

}  // namespace flowcap
