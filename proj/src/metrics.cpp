#include "segsum/metrics.hpp"

#include "segsum/error.hpp"
#include "segsum/stemmer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_map>

namespace segsum {

ScoreTriple ScoreTriple::from(double precision, double recall) {
    const double denom = precision + recall;
    return {precision, recall, denom > 0.0 ? 2.0 * precision * recall / denom : 0.0};
}

std::vector<std::string> rouge_tokens(const TokenSeq& seq, const RougeOptions& options) {
    if (!options.stem) {
        return seq.tokens;
    }
    std::vector<std::string> out;
    out.reserve(seq.tokens.size());
    for (const auto& t : seq.tokens) {
        out.push_back(t.size() > 3 ? porter_stem(t) : t);
    }
    return out;
}

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                          toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

std::vector<std::vector<std::size_t>> lcs_table(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
        }
    }
    return t;
}

} // namespace

ScoreTriple rouge_n(const TokenSeq& cand, const TokenSeq& ref, int n, const RougeOptions& options) {
    if (n < 1) {
        throw ValidationError("ROUGE-N order must be >= 1");
    }
    const auto order = static_cast<std::size_t>(n);
    const auto c = rouge_tokens(cand, options);
    const auto r = rouge_tokens(ref, options);
    if (c.size() < order || r.size() < order) {
        return {};
    }
    const auto cc = ngram_counts(c, order);
    const auto rc = ngram_counts(r, order);
    std::size_t overlap = 0;
    for (const auto& [gram, count] : cc) {
        if (const auto it = rc.find(gram); it != rc.end()) {
            overlap += std::min(count, it->second);
        }
    }
    const double cand_total = static_cast<double>(c.size() - order + 1);
    const double ref_total = static_cast<double>(r.size() - order + 1);
    return ScoreTriple::from(static_cast<double>(overlap) / cand_total, static_cast<double>(overlap) / ref_total);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.empty() || b.empty()) {
        return 0;
    }
    // Two-row DP.
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::vector<std::size_t> lcs_indices(std::span<const std::string> ref, std::span<const std::string> cand) {
    const auto t = lcs_table(ref, cand);
    std::vector<std::size_t> out;
    std::size_t i = ref.size();
    std::size_t j = cand.size();
    while (i > 0 && j > 0) {
        if (ref[i - 1] == cand[j - 1]) {
            out.push_back(i - 1);
            --i;
            --j;
        } else if (t[i][j - 1] > t[i - 1][j]) {
            --j;
        } else {
            --i;
        }
    }
    std::reverse(out.begin(), out.end());
    return out;
}

ScoreTriple rouge_l(const TokenSeq& cand, const TokenSeq& ref, const RougeOptions& options) {
    const auto c = rouge_tokens(cand, options);
    const auto r = rouge_tokens(ref, options);
    if (c.empty() || r.empty()) {
        return {};
    }
    const auto lcs = static_cast<double>(lcs_length(c, r));
    return ScoreTriple::from(lcs / static_cast<double>(c.size()), lcs / static_cast<double>(r.size()));
}

ScoreTriple rouge_lsum(std::span<const TokenSeq> cand_sentences, std::span<const TokenSeq> ref_sentences,
                       const RougeOptions& options) {
    std::vector<std::vector<std::string>> cands;
    std::vector<std::vector<std::string>> refs;
    for (const auto& s : cand_sentences) {
        cands.push_back(rouge_tokens(s, options));
    }
    for (const auto& s : ref_sentences) {
        refs.push_back(rouge_tokens(s, options));
    }
    std::size_t cand_total = 0;
    std::size_t ref_total = 0;
    std::unordered_map<std::string, long> cand_counts;
    std::unordered_map<std::string, long> ref_counts;
    for (const auto& s : cands) {
        cand_total += s.size();
        for (const auto& t : s) {
            ++cand_counts[t];
        }
    }
    for (const auto& s : refs) {
        ref_total += s.size();
        for (const auto& t : s) {
            ++ref_counts[t];
        }
    }
    if (cand_total == 0 || ref_total == 0) {
        return {};
    }

    std::size_t hits = 0;
    for (const auto& r : refs) {
        std::vector<std::size_t> union_idx;
        for (const auto& c : cands) {
            const auto idx = lcs_indices(r, c);
            union_idx.insert(union_idx.end(), idx.begin(), idx.end());
        }
        std::sort(union_idx.begin(), union_idx.end());
        union_idx.erase(std::unique(union_idx.begin(), union_idx.end()), union_idx.end());
        for (const auto i : union_idx) {
            const auto& tok = r[i];
            auto& cc = cand_counts[tok];
            auto& rc = ref_counts[tok];
            if (cc > 0 && rc > 0) {
                ++hits;
                --cc;
                --rc;
            }
        }
    }
    return ScoreTriple::from(static_cast<double>(hits) / static_cast<double>(cand_total),
                             static_cast<double>(hits) / static_cast<double>(ref_total));
}

ScoreTriple rouge_lsum(std::string_view cand_text, std::string_view ref_text, const RougeOptions& options) {
    std::vector<TokenSeq> cands;
    std::vector<TokenSeq> refs;
    for (const auto& s : split_sentences(cand_text, true)) {
        cands.push_back(tokenize(s, TokenizeMode::metric_default, TokenOrigin::candidate));
    }
    for (const auto& s : split_sentences(ref_text, true)) {
        refs.push_back(tokenize(s, TokenizeMode::metric_default, TokenOrigin::reference));
    }
    return rouge_lsum(cands, refs, options);
}

EvalScores score_pair(std::string_view candidate, std::string_view reference, const RougeOptions& options) {
    const auto cand = tokenize(candidate, TokenizeMode::metric_default, TokenOrigin::candidate);
    const auto ref = tokenize(reference, TokenizeMode::metric_default, TokenOrigin::reference);
    EvalScores s;
    s.r1 = rouge_n(cand, ref, 1, options);
    s.r2 = rouge_n(cand, ref, 2, options);
    s.rl = rouge_l(cand, ref, options);
    s.rlsum = rouge_lsum(candidate, reference, options);
    const std::array<TokenSeq, 1> bc{tokenize(candidate, TokenizeMode::bleu_13a_like, TokenOrigin::candidate)};
    const std::array<TokenSeq, 1> br{tokenize(reference, TokenizeMode::bleu_13a_like, TokenOrigin::reference)};
    s.sbleu = corpus_bleu(bc, br);
    s.meteor = meteor(cand, ref);
    return s;
}

EvalScores aggregate(std::span<const EvalScores> per_record, double corpus_sbleu) {
    if (per_record.empty()) {
        throw ValidationError("cannot aggregate zero records");
    }
    const double n = static_cast<double>(per_record.size());
    auto mean_triple = [&](auto member) {
        double p = 0.0, r = 0.0, f = 0.0;
        for (const auto& s : per_record) {
            const ScoreTriple& t = s.*member;
            p += t.precision;
            r += t.recall;
            f += t.f1;
        }
        return ScoreTriple{p / n, r / n, f / n};
    };
    EvalScores out;
    out.r1 = mean_triple(&EvalScores::r1);
    out.r2 = mean_triple(&EvalScores::r2);
    out.rl = mean_triple(&EvalScores::rl);
    out.rlsum = mean_triple(&EvalScores::rlsum);
    double met = 0.0;
    for (const auto& s : per_record) {
        met += s.meteor;
    }
    out.meteor = met / n;
    out.sbleu = corpus_sbleu;
    return out;
}

CorpusEvaluation evaluate_corpus(std::span<const std::string> candidates, std::span<const std::string> references,
                                 const RougeOptions& options) {
    if (candidates.size() != references.size()) {
        throw ValidationError("candidate and reference counts differ");
    }
    CorpusEvaluation out;
    out.per_record.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        out.per_record.push_back(score_pair(candidates[i], references[i], options));
    }
    out.corpus = aggregate(out.per_record, corpus_bleu_text(candidates, references));
    return out;
}

double pearson(std::span<const double> x, std::span<const double> y, bool* defined) {
    if (x.size() != y.size() || x.size() < 2) {
        throw ValidationError("correlation needs at least two paired values");
    }
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        if (defined != nullptr) {
            *defined = false;
        }
        return 0.0;
    }
    if (defined != nullptr) {
        *defined = true;
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) {
            ++j;
        }
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = rank;
        }
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y, bool* defined) {
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry, defined);
}

BinCorrelation ocr_length_analysis(std::span<const OcrLengthPoint> records, std::span<const double> bin_edges) {
    if (records.size() < 2) {
        throw ValidationError("OCR length analysis needs at least two records");
    }
    if (bin_edges.empty()) {
        throw ValidationError("at least one bin edge is required");
    }
    for (std::size_t i = 1; i < bin_edges.size(); ++i) {
        if (!(bin_edges[i] > bin_edges[i - 1])) {
            throw ValidationError("bin edges must be strictly increasing");
        }
    }
    BinCorrelation out;
    for (std::size_t i = 0; i < bin_edges.size(); ++i) {
        const double hi = i + 1 < bin_edges.size() ? bin_edges[i + 1] : std::numeric_limits<double>::infinity();
        out.bins.push_back({bin_edges[i], hi, 0.0, 0});
    }
    std::vector<double> sums(out.bins.size(), 0.0);
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& r : records) {
        if (r.ocr_char_len < bin_edges.front()) {
            throw ValidationError("OCR length below the first bin edge");
        }
        const auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), r.ocr_char_len);
        const auto bin = static_cast<std::size_t>(std::distance(bin_edges.begin(), it)) - 1;
        sums[bin] += r.rl_f1;
        ++out.bins[bin].count;
        xs.push_back(r.ocr_char_len);
        ys.push_back(r.rl_f1);
    }
    for (std::size_t i = 0; i < out.bins.size(); ++i) {
        if (out.bins[i].count > 0) {
            out.bins[i].mean_rl = sums[i] / static_cast<double>(out.bins[i].count);
        }
    }
    out.pearson_r = pearson(xs, ys, &out.pearson_defined);
    out.spearman_r = spearman(xs, ys, &out.spearman_defined);
    return out;
}

std::size_t char_length(std::string_view text) {
    std::size_t n = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        next_code_point(text, pos);
        ++n;
    }
    return n;
}

} // namespace segsum
