#include "segsum/metrics.hpp"
#include "segsum/stemmer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace segsum {

namespace {

// One greedy pass: candidate tokens left to right, each taking the free
// reference slot that continues the previous candidate's chunk if possible.
void align_stage(const std::vector<std::string>& c, const std::vector<std::string>& r, std::vector<int>& c_to_r,
                 std::vector<bool>& r_used) {
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c_to_r[i] >= 0) {
            continue;
        }
        int pick = -1;
        if (i > 0 && c_to_r[i - 1] >= 0) {
            const auto next = static_cast<std::size_t>(c_to_r[i - 1]) + 1;
            if (next < r.size() && !r_used[next] && r[next] == c[i]) {
                pick = static_cast<int>(next);
            }
        }
        if (pick < 0) {
            for (std::size_t j = 0; j < r.size(); ++j) {
                if (!r_used[j] && r[j] == c[i]) {
                    pick = static_cast<int>(j);
                    break;
                }
            }
        }
        if (pick >= 0) {
            c_to_r[i] = pick;
            r_used[static_cast<std::size_t>(pick)] = true;
        }
    }
}

std::vector<std::string> stems(const std::vector<std::string>& toks) {
    std::vector<std::string> out;
    out.reserve(toks.size());
    for (const auto& t : toks) {
        out.push_back(porter_stem(t));
    }
    return out;
}

std::vector<int> intern(const std::vector<std::string>& a, const std::vector<std::string>& b, std::map<std::string, int>& ids,
                        bool second) {
    std::vector<int> out;
    for (const auto& t : second ? b : a) {
        out.push_back(ids.emplace(t, static_cast<int>(ids.size())).first->second);
    }
    return out;
}

int count_chunks(const std::vector<int>& c_to_r) {
    int chunks = 0;
    int prev_i = -2;
    int prev_j = -2;
    for (int i = 0; i < static_cast<int>(c_to_r.size()); ++i) {
        if (c_to_r[i] < 0) {
            continue;
        }
        if (!(i == prev_i + 1 && c_to_r[i] == prev_j + 1)) {
            ++chunks;
        }
        prev_i = i;
        prev_j = c_to_r[i];
    }
    return chunks;
}

// Depth-first search over candidate positions for the alignment with the
// fewest chunks among those with the greedy pass's exact and stem match counts
// per word and per stem (both maximal). Starts from the greedy alignment and
// stops after `budget` nodes, keeping the best found.
class ChunkSearch {
  public:
    ChunkSearch(const std::vector<std::string>& c, const std::vector<std::string>& r, const std::vector<int>& greedy,
                std::size_t budget)
        : nc_(static_cast<int>(c.size())), nr_(static_cast<int>(r.size())), budget_(budget), best_(greedy),
          best_chunks_(count_chunks(greedy)), link_(c.size(), -1), used_(r.size(), false) {
        std::map<std::string, int> words;
        cw_ = intern(c, r, words, false);
        rw_ = intern(c, r, words, true);
        std::map<std::string, int> stem_ids;
        cs_ = intern(stems(c), stems(r), stem_ids, false);
        rs_ = intern(stems(c), stems(r), stem_ids, true);
        exact_left_.assign(words.size(), 0);
        stem_left_.assign(stem_ids.size(), 0);
        word_left_.assign(words.size(), 0);
        stem_pool_left_.assign(stem_ids.size(), 0);
        for (int i = 0; i < nc_; ++i) {
            ++word_left_[cw_[i]];
            const int j = greedy[i];
            if (j < 0) {
                continue;
            }
            if (cw_[i] == rw_[j]) {
                ++exact_left_[cw_[i]];
            } else {
                ++stem_left_[cs_[i]];
            }
        }
        for (int i = 0; i < nc_; ++i) {
            ++stem_pool_left_[cs_[i]];
        }
    }

    std::vector<int> run() {
        dfs(0, 0, -2);
        return best_;
    }

  private:
    // Remaining quotas must not exceed the candidate tokens left to fill
    // them. Only the current token's word and stem change per step.
    bool feasible(int w, int s) const { return exact_left_[w] <= word_left_[w] && stem_left_[s] <= stem_pool_left_[s]; }

    void dfs(int i, int chunks, int prev_j) {
        if (nodes_++ >= budget_ || chunks >= best_chunks_) {
            return;
        }
        if (i == nc_) {
            best_chunks_ = chunks;
            best_ = link_;
            return;
        }
        const int w = cw_[i];
        const int s = cs_[i];
        --word_left_[w];
        --stem_pool_left_[s];
        auto try_link = [&](int j) {
            const bool exact = rw_[j] == w;
            int& quota = exact ? exact_left_[w] : stem_left_[s];
            if (quota == 0) {
                return;
            }
            --quota;
            used_[j] = true;
            link_[i] = j;
            if (feasible(w, s)) {
                const bool extends = i > 0 && link_[i - 1] >= 0 && j == prev_j + 1;
                dfs(i + 1, chunks + (extends ? 0 : 1), j);
            }
            link_[i] = -1;
            used_[j] = false;
            ++quota;
        };
        auto matches = [&](int j) { return !used_[j] && (rw_[j] == w || rs_[j] == s); };
        const int next = i > 0 && link_[i - 1] >= 0 ? prev_j + 1 : -1;
        if (next >= 0 && next < nr_ && matches(next)) {
            try_link(next);
        }
        for (int j = 0; j < nr_; ++j) {
            if (j != next && matches(j)) {
                try_link(j);
            }
        }
        if (feasible(w, s)) {
            dfs(i + 1, chunks, prev_j);
        }
        ++word_left_[w];
        ++stem_pool_left_[s];
    }

    int nc_;
    int nr_;
    std::size_t budget_;
    std::size_t nodes_ = 0;
    std::vector<int> best_;
    int best_chunks_;
    std::vector<int> link_;
    std::vector<bool> used_;
    std::vector<int> cw_, rw_, cs_, rs_;
    std::vector<int> exact_left_, stem_left_, word_left_, stem_pool_left_;
};

} // namespace

MeteorResult meteor_detail(const TokenSeq& cand, const TokenSeq& ref, const MeteorParams& params) {
    MeteorResult res;
    const auto& c = cand.tokens;
    const auto& r = ref.tokens;
    if (c.empty() || r.empty()) {
        return res;
    }
    std::vector<int> c_to_r(c.size(), -1);
    std::vector<bool> r_used(r.size(), false);
    align_stage(c, r, c_to_r, r_used);
    align_stage(stems(c), stems(r), c_to_r, r_used);
    if (params.search_budget > 0) {
        c_to_r = ChunkSearch(c, r, c_to_r, params.search_budget).run();
    }

    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c_to_r[i] >= 0) {
            res.alignment.emplace_back(static_cast<int>(i), c_to_r[i]);
        }
    }
    res.matches = static_cast<int>(res.alignment.size());
    if (res.matches == 0) {
        return res;
    }
    res.chunks = 1;
    for (std::size_t k = 1; k < res.alignment.size(); ++k) {
        const auto [pc, pr] = res.alignment[k - 1];
        const auto [cc, cr] = res.alignment[k];
        if (!(cc == pc + 1 && cr == pr + 1)) {
            ++res.chunks;
        }
    }
    const double m = res.matches;
    res.precision = m / static_cast<double>(c.size());
    res.recall = m / static_cast<double>(r.size());
    res.fmean = res.precision * res.recall / (params.alpha * res.precision + (1.0 - params.alpha) * res.recall);
    res.penalty = params.gamma * std::pow(static_cast<double>(res.chunks) / m, params.beta);
    res.score = res.fmean * (1.0 - res.penalty);
    return res;
}

double meteor(const TokenSeq& cand, const TokenSeq& ref, const MeteorParams& params) {
    return meteor_detail(cand, ref, params).score;
}

} // namespace segsum
