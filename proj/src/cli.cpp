#include "flowcap/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "flowcap/config.hpp"
#include "flowcap/errors.hpp"
#include "flowcap/experiment.hpp"
#include "flowcap/gradcheck.hpp"

namespace flowcap {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

int exit_code_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::Config: return kExitConfig;
        case ErrorKind::Data:
        case ErrorKind::Format:
        case ErrorKind::Vocabulary:
        case ErrorKind::Length: return kExitData;
        case ErrorKind::Numeric: return kExitNumeric;
        case ErrorKind::Shape:
        case ErrorKind::Contract: return kExitInternal;
    }
    return kExitInternal;
}

int report_error(const std::string& kind, const std::string& message, int code) {
    ojson j;
    j["error"] = {{"kind", kind}, {"message", message}};
    j["exit_code"] = code;
    std::cerr << j.dump() << "\n";
    return code;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
    if (!f) throw DataError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": malformed JSON: " + e.what());
    }
}

std::string log_line(const EpochLog& l) {
    ojson j;
    j["epoch"] = l.epoch;
    j["nll_per_token"] = l.nll_per_token;
    j["mse"] = l.mse;
    j["lr"] = l.lr;
    return j.dump();
}

struct Common {
    std::string config;
    std::vector<std::string> overrides;

    RunConfig load() const { return load_run_config(config, overrides); }
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
    auto* opt = cmd->add_option("--config", c.config, "config file of key = value lines");
    if (config_required) opt->required();
    opt->check(CLI::ExistingFile);
    cmd->add_option("--set", c.overrides, "override one config key (key=value), repeatable; later wins");
    cmd->footer([] { return describe_schema(); });
}

// ---- commands ----

int cmd_synth(const Common& c, const fs::path& out_dir) {
    const auto cfg = c.load();
    auto videos = synth_generate(cfg.synth);
    if (cfg.n_val >= videos.size()) throw ConfigError("synth.n_val must be smaller than synth.n_videos");
    write_synth_dataset(out_dir, videos, cfg.n_val);
    std::cout << "wrote " << videos.size() << " videos (" << cfg.n_val << " val) to " << out_dir.string() << "\n";
    return kExitOk;
}

int cmd_train(const Common& c, const fs::path& data, const fs::path& out, bool resume) {
    const auto cfg = c.load();
    cfg.train.validate();
    const fs::path ckpt = out / "checkpoint.bin", log_path = out / "train_log.jsonl";
    fs::create_directories(out);

    TrainState st;
    Corpus corpus;
    std::vector<std::string> kept_log;
    if (resume && fs::exists(ckpt)) {
        st = load_checkpoint(ckpt);
        st.train.epochs = cfg.train.epochs;
        st.train.validate();
        const auto records = load_dataset(data / "train.json");
        corpus.train = make_examples(records, st.vocab, st.model.cfg);
        if (fs::exists(log_path)) {
            std::stringstream ss(read_text(log_path));
            for (std::string line; std::getline(ss, line);) {
                if (!line.empty() && json::parse(line).at("epoch").get<std::size_t>() <= st.epoch) kept_log.push_back(line);
            }
        }
    } else {
        corpus = load_corpus(data, cfg.model);
        st = init_training(cfg.model, cfg.train, corpus.vocab, corpus.train);
        write_text(out / "config.txt", dump_config(cfg));
    }
    std::string log_text;
    for (const auto& l : kept_log) log_text += l + "\n";
    write_text(log_path, log_text);

    train(st, corpus.train, [&](const TrainState& s, const EpochLog& l) {
        std::ofstream f(log_path, std::ios::app | std::ios::binary);
        f << log_line(l) << "\n";
        save_checkpoint(ckpt, s);
        std::cout << log_line(l) << std::endl;
    });
    return kExitOk;
}

int cmd_generate(const Common& c, const fs::path& checkpoint, const fs::path& data, const std::string& split,
                 std::optional<std::uint64_t> seed, const fs::path& out, std::size_t workers) {
    auto cfg = c.load();
    const auto st = load_checkpoint(checkpoint);
    if (seed) cfg.decode.seed = *seed;
    const auto records = load_dataset(data / (split + ".json"));
    const auto examples = make_examples(records, st.vocab, st.model.cfg);
    const auto gen = generate_corpus(st.model, st.vocab, examples, cfg.decode, workers);
    json results = json::object();
    for (std::size_t i = 0; i < examples.size(); ++i) {
        json sentences = json::array();
        for (const auto& s : gen[i].sentences) sentences.push_back({{"sentence", s}});
        results[examples[i].video_id] = std::move(sentences);
    }
    write_text(out, json{{"results", results}}.dump(1) + "\n");
    std::cout << "wrote captions for " << examples.size() << " videos to " << out.string() << "\n";
    return kExitOk;
}

// video id -> sentences, from a results file or a dataset manifest.
std::map<std::string, std::vector<std::string>> load_sentences(const fs::path& path) {
    const auto j = read_json(path);
    std::map<std::string, std::vector<std::string>> out;
    try {
        if (j.contains("results")) {
            for (const auto& [id, arr] : j.at("results").items()) {
                auto& v = out[id];
                for (const auto& s : arr) v.push_back(s.at("sentence").get<std::string>());
            }
        } else if (j.contains("videos")) {
            for (const auto& vid : j.at("videos")) {
                auto& v = out[vid.at("video_id").get<std::string>()];
                for (const auto& s : vid.at("segments")) v.push_back(s.at("caption").get<std::string>());
            }
        } else {
            throw DataError(path.string() + ": expected a \"results\" or \"videos\" object");
        }
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return out;
}

int cmd_eval(const fs::path& results, const fs::path& references, const fs::path& out, bool with_r4_ref) {
    const auto hyp = load_sentences(results);
    const auto ref = load_sentences(references);
    std::vector<ParagraphPair> corpus;
    for (const auto& [id, h] : hyp) {
        auto it = ref.find(id);
        if (it == ref.end()) throw DataError("video " + id + " has no references");
        if (it->second.size() != h.size()) {
            throw DataError("video " + id + ": " + std::to_string(h.size()) + " hypotheses for " +
                            std::to_string(it->second.size()) + " references");
        }
        corpus.push_back({id, h, it->second});
    }
    for (const auto& [id, r] : ref) {
        if (!hyp.count(id)) throw DataError("video " + id + " has references but no results");
    }
    if (corpus.empty()) throw DataError("nothing to evaluate");
    const auto rep = evaluate(corpus);
    ojson j;
    j["bleu4"] = rep.bleu4;
    j["cider"] = rep.cider;
    j["r4"] = rep.r4;
    if (with_r4_ref) j["r4_vs_ref"] = rep.r4_vs_ref;
    j["per_video"] = ojson::array();
    for (const auto& v : rep.per_video) {
        j["per_video"].push_back({{"video_id", v.video_id}, {"bleu4", v.bleu4}, {"cider", v.cider}, {"r4", v.r4}});
    }
    const auto text = j.dump(1) + "\n";
    if (out.empty()) {
        std::cout << text;
    } else {
        write_text(out, text);
    }
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, double lambda) {
    bool ok = true;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& check : registered_op_checks()) {
        const auto r = run_op_check(check, seed);
        const bool pass = r.mixed.pass() && r.double_precision.pass();
        ok = ok && pass;
        std::printf("%s op %-28s 32-bit %.3e  64-bit %.3e\n", pass ? "PASS" : "FAIL", check.name.c_str(),
                    r.mixed.worst(), r.double_precision.worst());
        if (!pass) std::printf("%s\n%s\n", r.mixed.summary().c_str(), r.double_precision.summary().c_str());
    }
    const auto m = model_gradcheck(seed, lambda);
    const bool pass = m.mixed.pass() && m.double_precision.pass();
    ok = ok && pass;
    std::printf("%s full loss (%zu parameters)       32-bit %.3e  64-bit %.3e  %.1fs\n", pass ? "PASS" : "FAIL",
                m.parameters, m.mixed.worst(), m.double_precision.worst(), m.seconds);
    if (!pass) std::printf("%s\n%s\n", m.mixed.summary().c_str(), m.double_precision.summary().c_str());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s gradcheck in %.1fs\n", ok ? "PASS" : "FAIL", secs);
    return ok ? kExitOk : kExitAcceptance;
}

ojson row_json(const AblationRow& r) {
    auto stat = [](const Stat& s) { return ojson{{"mean", s.mean}, {"sd", s.sd}}; };
    ojson runs = ojson::array();
    for (const auto& x : r.runs) {
        runs.push_back({{"seed", x.seed},
                        {"bleu4", x.metrics.bleu4},
                        {"cider", x.metrics.cider},
                        {"r4", x.metrics.r4},
                        {"heldout_nll", x.heldout_nll},
                        {"final_mse", x.log.empty() ? 0.0 : x.log.back().mse}});
    }
    return {{"variant", r.variant}, {"bleu4", stat(r.bleu4)}, {"cider", stat(r.cider)},
            {"r4", stat(r.r4)},     {"heldout_nll", stat(r.heldout_nll)}, {"runs", runs}};
}

int cmd_ablate(const Common& c, const fs::path& data, const fs::path& out, bool sweep, std::size_t workers) {
    const auto cfg = c.load();
    const auto corpus = load_corpus(data, cfg.model);
    auto rows = sweep ? lambda_sweep(corpus, cfg.model, cfg.train, cfg.decode, cfg.ablate_seeds, cfg.ablate_lambdas, workers)
                      : ablate(corpus, cfg.model, cfg.train, cfg.decode, cfg.ablate_seeds, workers);
    std::cout << format_table(rows);
    if (!out.empty()) {
        ojson j = ojson::array();
        for (const auto& r : rows) j.push_back(row_json(r));
        write_text(out, j.dump(1) + "\n");
    }
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"flowcap: dense video captioning with visual/textual information flows"};
    app.require_subcommand(1);
    std::size_t workers = 1;
    app.add_option("--workers", workers, "threads for per-video work (generation, evaluation runs)")
        ->check(CLI::PositiveNumber);

    Common synth_c, train_c, gen_c, grad_c, abl_c;
    std::string out_dir, data, out, checkpoint, split = "val", results, references;
    std::uint64_t seed = 0;
    double lambda = 1.0;
    bool resume = false, r4_ref = false, sweep = false;

    auto* synth = app.add_subcommand("synth", "write the synthetic topic-drift corpus");
    add_common(synth, synth_c, false);
    synth->add_option("--out-dir", out_dir, "output directory")->required();

    auto* tr = app.add_subcommand("train", "train a model; writes checkpoint.bin and train_log.jsonl");
    add_common(tr, train_c, false);
    tr->add_option("--data", data, "dataset directory with train.json")->required()->check(CLI::ExistingDirectory);
    tr->add_option("--out", out, "output directory")->required();
    tr->add_flag("--resume", resume, "continue from <out>/checkpoint.bin when present");

    auto* gen = app.add_subcommand("generate", "caption every video of a split");
    add_common(gen, gen_c, false);
    gen->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    gen->add_option("--data", data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    gen->add_option("--split", split, "manifest name inside the dataset directory")->capture_default_str();
    auto* seed_opt = gen->add_option("--seed", seed, "decoding seed (overrides decode.seed)");
    gen->add_option("--out", out, "results JSON path")->required();

    auto* ev = app.add_subcommand("eval", "score a results file against references");
    ev->add_option("--results", results, "results JSON")->required()->check(CLI::ExistingFile);
    ev->add_option("--references", references, "dataset manifest or results-format JSON")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--out", out, "write the report here instead of stdout");
    ev->add_flag("--r4-vs-ref", r4_ref, "also report 4-gram overlap between generated and reference paragraphs");

    auto* gc = app.add_subcommand("gradcheck", "check analytic gradients of every op and of the full loss");
    add_common(gc, grad_c, false);
    gc->add_option("--seed", seed, "seed for random inputs and the toy model");
    gc->add_option("--lambda", lambda, "alignment weight in the checked loss");

    auto* ab = app.add_subcommand("ablate", "train and score full, no_align, no_global and no_pretrain");
    add_common(ab, abl_c, false);
    ab->add_option("--data", data, "dataset directory with train.json and val.json")
        ->required()
        ->check(CLI::ExistingDirectory);
    ab->add_option("--out", out, "write the table as JSON here");
    ab->add_flag("--lambda-sweep", sweep, "sweep ablate.lambdas on the full model instead");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("config", e.what(), kExitConfig);
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_c, out_dir);
        if (tr->parsed()) return cmd_train(train_c, data, out, resume);
        if (gen->parsed()) {
            return cmd_generate(gen_c, checkpoint, data, split,
                                seed_opt->count() ? std::optional<std::uint64_t>(seed) : std::nullopt, out, workers);
        }
        if (ev->parsed()) return cmd_eval(results, references, out, r4_ref);
        if (gc->parsed()) {
            grad_c.load();  // validates the config even though the toy model is fixed
            return cmd_gradcheck(seed, lambda);
        }
        if (ab->parsed()) return cmd_ablate(abl_c, data, out, sweep, workers);
    } catch (const Error& e) {
        return report_error(error_kind_name(e.kind()), e.what(), exit_code_for(e.kind()));
    } catch (const fs::filesystem_error& e) {
        return report_error("data", e.what(), kExitData);
    } catch (const std::exception& e) {
        return report_error("internal", e.what(), kExitInternal);
    }
    return kExitInternal;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace flowcap
