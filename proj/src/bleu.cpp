#include "segsum/error.hpp"
#include "segsum/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace segsum {

namespace {

double bleu_log(double x) { return x == 0.0 ? -9999999999.0 : std::log(x); }

} // namespace

BleuStats corpus_bleu_stats(std::span<const TokenSeq> cands, std::span<const TokenSeq> refs) {
    if (cands.size() != refs.size()) {
        throw ValidationError("candidate and reference counts differ");
    }
    BleuStats st;
    for (std::size_t s = 0; s < cands.size(); ++s) {
        const auto& c = cands[s].tokens;
        const auto& r = refs[s].tokens;
        st.sys_len += c.size();
        st.ref_len += r.size();
        for (std::size_t n = 1; n <= 4; ++n) {
            if (c.size() < n) {
                continue;
            }
            std::map<std::vector<std::string>, std::size_t> cc;
            std::map<std::vector<std::string>, std::size_t> rc;
            for (std::size_t i = 0; i + n <= c.size(); ++i) {
                ++cc[{c.begin() + static_cast<std::ptrdiff_t>(i), c.begin() + static_cast<std::ptrdiff_t>(i + n)}];
            }
            for (std::size_t i = 0; i + n <= r.size(); ++i) {
                ++rc[{r.begin() + static_cast<std::ptrdiff_t>(i), r.begin() + static_cast<std::ptrdiff_t>(i + n)}];
            }
            st.totals[n - 1] += c.size() - n + 1;
            for (const auto& [gram, count] : cc) {
                if (const auto it = rc.find(gram); it != rc.end()) {
                    st.matches[n - 1] += std::min(count, it->second);
                }
            }
        }
    }

    if (st.sys_len < st.ref_len) {
        st.brevity_penalty = st.sys_len > 0
                                 ? std::exp(1.0 - static_cast<double>(st.ref_len) / static_cast<double>(st.sys_len))
                                 : 0.0;
    } else {
        st.brevity_penalty = 1.0;
    }

    // Nothing matched at any order: smoothing would still give a positive score.
    if (std::all_of(st.matches.begin(), st.matches.end(), [](std::size_t m) { return m == 0; })) {
        st.score = 0.0;
        return st;
    }
    double smooth = 1.0;
    for (std::size_t n = 0; n < 4; ++n) {
        if (st.totals[n] == 0) {
            break;
        }
        if (st.matches[n] == 0) {
            smooth *= 2.0;
            st.precisions[n] = 100.0 / (smooth * static_cast<double>(st.totals[n]));
        } else {
            st.precisions[n] = 100.0 * static_cast<double>(st.matches[n]) / static_cast<double>(st.totals[n]);
        }
    }
    double log_sum = 0.0;
    for (const double p : st.precisions) {
        log_sum += bleu_log(p);
    }
    st.score = st.brevity_penalty * std::exp(log_sum / 4.0);
    return st;
}

double corpus_bleu(std::span<const TokenSeq> cands, std::span<const TokenSeq> refs) {
    return corpus_bleu_stats(cands, refs).score;
}

double corpus_bleu_text(std::span<const std::string> cands, std::span<const std::string> refs) {
    std::vector<TokenSeq> c;
    std::vector<TokenSeq> r;
    c.reserve(cands.size());
    r.reserve(refs.size());
    for (const auto& s : cands) {
        c.push_back(tokenize(s, TokenizeMode::bleu_13a_like, TokenOrigin::candidate));
    }
    for (const auto& s : refs) {
        r.push_back(tokenize(s, TokenizeMode::bleu_13a_like, TokenOrigin::reference));
    }
    return corpus_bleu(c, r);
}

} // namespace segsum
