#pragma once

// Paragraph-level caption metrics. Every sentence goes through
// normalize_text before n-gram extraction.

#include <span>
#include <string>
#include <vector>

namespace flowcap {

struct ParagraphPair {
    std::string video_id;
    std::vector<std::string> hypothesis;  // one sentence per segment
    std::vector<std::string> references;  // one reference per segment
};

// Corpus BLEU-4 in percent: clipped n-gram precisions for n=1..4 with
// hypothesis sentence i paired with reference sentence i, geometric mean,
// brevity penalty exp(1 - r/c) when c < r. No smoothing.
double bleu4(std::span<const ParagraphPair> corpus);

// Plain CIDEr: TF-IDF n-gram vectors (n=1..4) with document frequencies over
// the corpus reference sentences, idf = log(N) - log(max(1, df)); per
// sentence the mean cosine over n times 10, averaged over sentences.
double cider(std::span<const ParagraphPair> corpus);

// 1 - unique/total 4-grams of one token stream, in percent; 0 when it has no 4-gram.
double r4_tokens(std::span<const std::string> tokens);

// Mean over videos of r4_tokens on the concatenated hypothesis paragraph.
double r4(std::span<const ParagraphPair> corpus);

// Mean over videos of the percentage of hypothesis-paragraph 4-gram
// occurrences that also occur in the reference paragraph.
double r4_vs_ref(std::span<const ParagraphPair> corpus);

struct VideoScores {
    std::string video_id;
    double bleu4 = 0.0;
    double cider = 0.0;
    double r4 = 0.0;
};

struct MetricReport {
    double bleu4 = 0.0;
    double cider = 0.0;
    double r4 = 0.0;
    double r4_vs_ref = 0.0;
    std::vector<VideoScores> per_video;  // cider per video uses corpus document frequencies
};

MetricReport evaluate(std::span<const ParagraphPair> corpus);

}  // namespace flowcap
