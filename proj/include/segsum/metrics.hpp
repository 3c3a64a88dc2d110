#pragma once

#include "segsum/text.hpp"

#include <Eigen/Dense>

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace segsum {

struct ScoreTriple {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    /// f1 = 2PR / (P + R), or 0 when P + R = 0.
    static ScoreTriple from(double precision, double recall);
};

struct RougeOptions {
    /// Porter-stem tokens longer than three characters before matching.
    bool stem = true;
};

/// Tokens as ROUGE compares them (stemmed per options).
std::vector<std::string> rouge_tokens(const TokenSeq& seq, const RougeOptions& options);

/// Clipped n-gram overlap. All-zero when either side has fewer than n tokens.
ScoreTriple rouge_n(const TokenSeq& cand, const TokenSeq& ref, int n, const RougeOptions& options = {});

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);
/// Indices into `ref` of one LCS with `cand`, ascending.
std::vector<std::size_t> lcs_indices(std::span<const std::string> ref, std::span<const std::string> cand);

ScoreTriple rouge_l(const TokenSeq& cand, const TokenSeq& ref, const RougeOptions& options = {});

/// Summary-level union-LCS over pre-split sentences.
ScoreTriple rouge_lsum(std::span<const TokenSeq> cand_sentences, std::span<const TokenSeq> ref_sentences,
                       const RougeOptions& options = {});
/// Splits both texts with the shared sentence splitter (newlines also break).
ScoreTriple rouge_lsum(std::string_view cand_text, std::string_view ref_text, const RougeOptions& options = {});

struct BleuStats {
    std::array<std::size_t, 4> matches{};
    std::array<std::size_t, 4> totals{};
    std::size_t sys_len = 0;
    std::size_t ref_len = 0;
    std::array<double, 4> precisions{};
    double brevity_penalty = 0.0;
    double score = 0.0;
};

/// Corpus BLEU in [0, 100] over 13a-style token sequences: clipped 1-4-gram
/// counts summed over the corpus, exponential-decay smoothing of zero-match
/// orders, brevity penalty on total lengths. Zero when no n-gram of any order
/// matches.
BleuStats corpus_bleu_stats(std::span<const TokenSeq> cands, std::span<const TokenSeq> refs);
double corpus_bleu(std::span<const TokenSeq> cands, std::span<const TokenSeq> refs);
/// Tokenizes with TokenizeMode::bleu_13a_like first.
double corpus_bleu_text(std::span<const std::string> cands, std::span<const std::string> refs);

struct MeteorResult {
    double score = 0.0;
    int matches = 0;
    int chunks = 0;
    double precision = 0.0;
    double recall = 0.0;
    double fmean = 0.0;
    double penalty = 0.0;
    /// (candidate index, reference index) pairs sorted by candidate index.
    std::vector<std::pair<int, int>> alignment;
};

struct MeteorParams {
    double alpha = 0.9;
    double beta = 3.0;
    double gamma = 0.5;
    /// Node limit for the chunk-minimizing search; 0 keeps the greedy alignment.
    std::size_t search_budget = 200000;
};

/// Exact-then-stem alignment without a synonym stage. A greedy pass (each
/// candidate token, left to right, takes the free reference token extending
/// the current chunk, else the leftmost free match) fixes the match counts;
/// a bounded depth-first search then looks for an alignment with the same
/// counts and fewer chunks. Exact for short inputs; on long ones the best
/// alignment found within the budget is used.
MeteorResult meteor_detail(const TokenSeq& cand, const TokenSeq& ref, const MeteorParams& params = {});
double meteor(const TokenSeq& cand, const TokenSeq& ref, const MeteorParams& params = {});

struct EvalScores {
    ScoreTriple r1;
    ScoreTriple r2;
    ScoreTriple rl;
    ScoreTriple rlsum;
    /// 0-100. Per record: BLEU of the single pair; after aggregate: corpus BLEU.
    double sbleu = 0.0;
    double meteor = 0.0;
};

EvalScores score_pair(std::string_view candidate, std::string_view reference, const RougeOptions& options = {});

/// Arithmetic mean of every field except sbleu, which is replaced by the
/// supplied corpus-level value. Throws ValidationError on empty input.
EvalScores aggregate(std::span<const EvalScores> per_record, double corpus_sbleu);

/// Scores every pair and aggregates; BLEU is computed over the whole corpus.
struct CorpusEvaluation {
    std::vector<EvalScores> per_record;
    EvalScores corpus;
};
CorpusEvaluation evaluate_corpus(std::span<const std::string> candidates, std::span<const std::string> references,
                                 const RougeOptions& options = {});

/// Result rows: method,R1,R2,RL,RLSum,SBLEU,MET as percentages.
std::string csv_header();
std::string csv_row(std::string_view method, const EvalScores& scores);
std::string markdown_table(std::span<const std::pair<std::string, EvalScores>> rows);

struct OcrLengthPoint {
    double ocr_char_len = 0.0;
    double rl_f1 = 0.0;
};

struct BinCorrelation {
    struct Bin {
        double lo = 0.0;
        /// +infinity for the last bin.
        double hi = 0.0;
        double mean_rl = 0.0;
        std::size_t count = 0;
    };
    std::vector<Bin> bins;
    double pearson_r = 0.0;
    double spearman_r = 0.0;
    /// False when a side has zero variance; the coefficient is then reported as 0.
    bool pearson_defined = true;
    bool spearman_defined = true;
};

double pearson(std::span<const double> x, std::span<const double> y, bool* defined = nullptr);
/// Pearson over average ranks (ties share the mean rank).
double spearman(std::span<const double> x, std::span<const double> y, bool* defined = nullptr);
std::vector<double> average_ranks(std::span<const double> values);

/// Bins are [e_i, e_{i+1}) plus a final [e_last, inf). Edges must be strictly
/// increasing and no length may fall below the first edge. Needs >= 2 records.
BinCorrelation ocr_length_analysis(std::span<const OcrLengthPoint> records, std::span<const double> bin_edges);

/// Number of Unicode code points.
std::size_t char_length(std::string_view text);

/// Greedy cosine matching between token embeddings (one row per token), the
/// matching step of embedding-based scores. Embeddings come from an external
/// service; none is bundled.
template <typename Scalar>
ScoreTriple greedy_cosine_match(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& cand,
                                const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& ref) {
    if (cand.rows() == 0 || ref.rows() == 0) {
        return {};
    }
    const auto cn = cand.rowwise().normalized();
    const auto rn = ref.rowwise().normalized();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> sim = cn * rn.transpose();
    const double precision = static_cast<double>(sim.rowwise().maxCoeff().mean());
    const double recall = static_cast<double>(sim.colwise().maxCoeff().mean());
    return ScoreTriple::from(precision, recall);
}

} // namespace segsum
