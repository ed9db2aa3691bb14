#include "flowcap/experiment.hpp"

#include <cmath>
#include <cstdio>

namespace flowcap {

Corpus load_corpus(const std::filesystem::path& dir, const ModelConfig& cfg) {
    const auto train_records = load_dataset(dir / "train.json");
    const auto val_records = load_dataset(dir / "val.json");
    std::vector<std::string> captions;
    for (const auto& r : train_records) {
        for (const auto& s : r.segments) captions.push_back(s.caption);
    }
    Corpus c;
    c.vocab = Vocabulary::build(captions);
    c.train = make_examples(train_records, c.vocab, cfg);
    c.val = make_examples(val_records, c.vocab, cfg);
    return c;
}

std::vector<ParagraphPair> paragraph_pairs(std::span<const VideoExample> videos, std::span<const Paragraph> generated) {
    if (videos.size() != generated.size()) throw ContractError("paragraph_pairs: count mismatch");
    std::vector<ParagraphPair> out;
    for (std::size_t i = 0; i < videos.size(); ++i) out.push_back({videos[i].video_id, generated[i].sentences, videos[i].references});
    return out;
}

RunResult train_and_evaluate(const Corpus& corpus, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                             const DecodeConfig& decode_cfg, const std::string& variant, std::size_t workers) {
    auto st = init_training(model_cfg, train_cfg, corpus.vocab, corpus.train);
    RunResult r;
    r.variant = variant;
    r.seed = train_cfg.seed;
    r.log = train(st, corpus.train);
    r.heldout_nll = heldout_nll(st.model, corpus.val);
    const auto gen = generate_corpus(st.model, st.vocab, corpus.val, decode_cfg, workers);
    r.metrics = evaluate(paragraph_pairs(corpus.val, gen));
    return r;
}

Stat summarize(const std::vector<double>& v) {
    Stat s;
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

namespace {

AblationRow make_row(std::string name, std::vector<RunResult> runs) {
    AblationRow row;
    row.variant = std::move(name);
    std::vector<double> b, c, r, n;
    for (const auto& x : runs) {
        b.push_back(x.metrics.bleu4);
        c.push_back(x.metrics.cider);
        r.push_back(x.metrics.r4);
        n.push_back(x.heldout_nll);
    }
    row.bleu4 = summarize(b);
    row.cider = summarize(c);
    row.r4 = summarize(r);
    row.heldout_nll = summarize(n);
    row.runs = std::move(runs);
    return row;
}

}  // namespace

std::vector<AblationRow> ablate(const Corpus& corpus, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                const DecodeConfig& decode_cfg, const std::vector<std::uint64_t>& seeds,
                                std::size_t workers) {
    const char* names[] = {"full", "no_align", "no_global", "no_pretrain"};
    std::vector<AblationRow> rows;
    for (int v = 0; v < 4; ++v) {
        std::vector<RunResult> runs;
        for (auto seed : seeds) {
            auto tc = train_cfg;
            tc.seed = seed;
            tc.no_align = v == 1;
            tc.no_global = v == 2;
            tc.no_pretrain = v == 3;
            auto dc = decode_cfg;
            dc.seed = seed;
            runs.push_back(train_and_evaluate(corpus, model_cfg, tc, dc, names[v], workers));
        }
        rows.push_back(make_row(names[v], std::move(runs)));
    }
    return rows;
}

std::vector<AblationRow> lambda_sweep(const Corpus& corpus, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                      const DecodeConfig& decode_cfg, const std::vector<std::uint64_t>& seeds,
                                      const std::vector<double>& lambdas, std::size_t workers) {
    std::vector<AblationRow> rows;
    for (double lambda : lambdas) {
        char name[32];
        std::snprintf(name, sizeof name, "lambda=%g", lambda);
        std::vector<RunResult> runs;
        for (auto seed : seeds) {
            auto tc = train_cfg;
            tc.seed = seed;
            tc.lambda = lambda;
            auto dc = decode_cfg;
            dc.seed = seed;
            runs.push_back(train_and_evaluate(corpus, model_cfg, tc, dc, name, workers));
        }
        rows.push_back(make_row(name, std::move(runs)));
    }
    return rows;
}

std::string format_table(const std::vector<AblationRow>& rows) {
    std::string out = "variant        B@4              CIDEr            R@4              held-out NLL\n";
    char line[256];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-14s %6.2f +- %-6.2f  %6.2f +- %-6.2f  %6.2f +- %-6.2f  %6.4f +- %-6.4f\n",
                      r.variant.c_str(), r.bleu4.mean, r.bleu4.sd, r.cider.mean, r.cider.sd, r.r4.mean, r.r4.sd,
                      r.heldout_nll.mean, r.heldout_nll.sd);
        out += line;
    }
    return out;
}

}  // namespace flowcap
