#pragma once

// Sentence-level BLEU, METEOR, ROUGE-L and CIDEr of one candidate against a
// set of references.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "commeval/corpus.hpp"
#include "commeval/error.hpp"
#include "commeval/textproc.hpp"

namespace commeval {

struct BleuParams {
    int max_n = 4;
    std::vector<double> weights; // empty: uniform 1/max_n
    double smoothing_epsilon = 0.1;

    std::vector<double> resolved_weights() const {
        if (max_n < 1) throw UsageError("bleu: max_n must be >= 1");
        if (weights.empty()) return std::vector<double>(static_cast<std::size_t>(max_n), 1.0 / max_n);
        if (weights.size() != static_cast<std::size_t>(max_n)) throw UsageError("bleu: need one weight per order");
        const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
        if (std::abs(sum - 1.0) > 1e-9) throw UsageError("bleu: weights must sum to 1");
        return weights;
    }
};

struct BleuResult {
    double score = 0.0;
    std::vector<double> precisions; // smoothed p_n, n = 1..max_n
    double brevity_penalty = 0.0;
};

/// Clipped n-gram precision with a brevity penalty against the closest
/// reference length (ties go to the shorter reference). Orders n >= 2 with no
/// match get epsilon added to the numerator; order 1 is never smoothed. An
/// order longer than the candidate counts as one n-gram with zero matches.
inline BleuResult bleu(const TokenSeq &candidate, const std::vector<TokenSeq> &references,
                       const BleuParams &params = {}) {
    if (references.empty()) throw UsageError("bleu: at least one reference is required");
    const auto weights = params.resolved_weights();
    BleuResult res;
    const auto c = static_cast<double>(candidate.size());
    std::size_t closest = references.front().size();
    for (const auto &r : references) {
        const auto d = std::abs(static_cast<long>(r.size()) - static_cast<long>(candidate.size()));
        const auto best = std::abs(static_cast<long>(closest) - static_cast<long>(candidate.size()));
        if (d < best || (d == best && r.size() < closest)) closest = r.size();
    }
    if (candidate.empty()) {
        res.precisions.assign(weights.size(), 0.0);
        return res;
    }
    res.brevity_penalty = c > static_cast<double>(closest) ? 1.0 : std::exp(1.0 - static_cast<double>(closest) / c);

    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        const std::size_t n = k + 1;
        const auto cand = ngrams(candidate, n);
        std::map<NGram, int> max_ref;
        for (const auto &r : references)
            for (const auto &[g, cnt] : ngrams(r, n).counts) max_ref[g] = std::max(max_ref[g], cnt);
        double matched = 0.0;
        for (const auto &[g, cnt] : cand.counts) {
            auto it = max_ref.find(g);
            if (it != max_ref.end()) matched += std::min(cnt, it->second);
        }
        const double total = std::max(1, cand.total());
        if (matched == 0.0 && n >= 2) matched = params.smoothing_epsilon;
        const double p = matched / total;
        res.precisions.push_back(p);
        if (weights[k] == 0.0) continue;
        if (p == 0.0) {
            zero = true;
            continue;
        }
        log_sum += weights[k] * std::log(p);
    }
    res.score = zero ? 0.0 : res.brevity_penalty * std::exp(log_sum);
    return res;
}

struct RougeParams {
    double beta = 1.2;
};

inline std::size_t lcs_length(const TokenSeq &a, const TokenSeq &b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// LCS-based F-score, maximized over references.
inline double rouge_l(const TokenSeq &candidate, const std::vector<TokenSeq> &references,
                      const RougeParams &params = {}) {
    if (references.empty()) throw UsageError("rouge_l: at least one reference is required");
    if (!(params.beta > 0.0)) throw UsageError("rouge_l: beta must be > 0");
    if (candidate.empty()) return 0.0;
    const double b2 = params.beta * params.beta;
    double best = 0.0;
    for (const auto &ref : references) {
        if (ref.empty()) continue;
        const auto l = static_cast<double>(lcs_length(candidate, ref));
        if (l == 0.0) continue;
        const double r = l / static_cast<double>(ref.size());
        const double p = l / static_cast<double>(candidate.size());
        best = std::max(best, (1.0 + b2) * r * p / (r + b2 * p));
    }
    return best;
}

enum class MatchStage { exact, stem, synonym };

struct MeteorParams {
    double alpha = 0.9;
    double beta = 3.0;
    double gamma = 0.5;
    std::vector<MatchStage> stages = {MatchStage::exact, MatchStage::stem, MatchStage::synonym};
};

/// One-to-one alignment as (candidate index, reference index) pairs sorted by
/// candidate index.
using Alignment = std::vector<std::pair<std::size_t, std::size_t>>;

/// Contiguous runs that advance by one in both candidate and reference.
inline std::size_t count_chunks(const Alignment &a) {
    std::size_t chunks = 0;
    for (std::size_t k = 0; k < a.size(); ++k)
        if (k == 0 || a[k].first != a[k - 1].first + 1 || a[k].second != a[k - 1].second + 1) ++chunks;
    return chunks;
}

/// Edge matrix: which candidate/reference token pairs match at some enabled stage.
inline std::vector<std::vector<bool>> meteor_edges(const TokenSeq &cand, const TokenSeq &ref,
                                                   const MeteorParams &params, const SynonymTable &syn) {
    std::vector<std::vector<bool>> edges(cand.size(), std::vector<bool>(ref.size(), false));
    std::vector<std::string> cs, rs;
    for (auto &t : cand) cs.push_back(stem(t));
    for (auto &t : ref) rs.push_back(stem(t));
    for (std::size_t i = 0; i < cand.size(); ++i)
        for (std::size_t j = 0; j < ref.size(); ++j)
            for (auto st : params.stages) {
                const bool hit = (st == MatchStage::exact && cand[i] == ref[j]) ||
                                 (st == MatchStage::stem && cs[i] == rs[j]) ||
                                 (st == MatchStage::synonym && syn.synonyms(cand[i], ref[j]));
                if (hit) {
                    edges[i][j] = true;
                    break;
                }
            }
    return edges;
}

namespace detail {

// Branch-and-bound over candidate positions: maximize matched count, then
// minimize chunks. Exact for the short utterances this targets.
class AlignmentSearch {
  public:
    AlignmentSearch(const std::vector<std::vector<bool>> &edges, std::size_t ref_len)
        : edges_(edges), used_(ref_len, false) {
        // max matching size via augmenting paths bounds the search from above
        max_m_ = max_matching();
    }

    Alignment run() {
        if (max_m_ == 0) return {};
        recurse(0);
        // search budget exhausted before any complete alignment: any maximum matching
        return best_.empty() ? fallback_ : best_;
    }

    static constexpr std::size_t node_budget = 2'000'000;

  private:
    const std::vector<std::vector<bool>> &edges_;
    std::vector<bool> used_;
    Alignment cur_, best_;
    std::size_t best_chunks_ = SIZE_MAX;
    std::size_t max_m_ = 0;
    std::size_t nodes_ = 0;
    Alignment fallback_;

    std::size_t max_matching() {
        const std::size_t n = edges_.size(), m = used_.size();
        std::vector<long> match_ref(m, -1);
        std::size_t total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<bool> seen(m, false);
            if (augment(i, seen, match_ref)) ++total;
        }
        for (std::size_t j = 0; j < m; ++j)
            if (match_ref[j] >= 0) fallback_.emplace_back(static_cast<std::size_t>(match_ref[j]), j);
        std::sort(fallback_.begin(), fallback_.end());
        return total;
    }

    bool augment(std::size_t i, std::vector<bool> &seen, std::vector<long> &match_ref) const {
        for (std::size_t j = 0; j < used_.size(); ++j) {
            if (!edges_[i][j] || seen[j]) continue;
            seen[j] = true;
            if (match_ref[j] < 0 || augment(static_cast<std::size_t>(match_ref[j]), seen, match_ref)) {
                match_ref[j] = static_cast<long>(i);
                return true;
            }
        }
        return false;
    }

    void recurse(std::size_t i) {
        if (++nodes_ > node_budget) return;
        const std::size_t chunks = count_chunks(cur_);
        if (chunks > best_chunks_) return;
        if (cur_.size() + (edges_.size() - i) < max_m_) return;
        if (i == edges_.size()) {
            if (cur_.size() == max_m_ && chunks < best_chunks_) {
                best_chunks_ = chunks;
                best_ = cur_;
            }
            return;
        }
        // prefer extending the current chunk first so good solutions come early
        std::vector<std::size_t> order;
        if (!cur_.empty() && cur_.back().first + 1 == i) {
            const std::size_t next = cur_.back().second + 1;
            if (next < used_.size() && edges_[i][next] && !used_[next]) order.push_back(next);
        }
        for (std::size_t j = 0; j < used_.size(); ++j)
            if (edges_[i][j] && !used_[j] && (order.empty() || order.front() != j)) order.push_back(j);
        for (std::size_t j : order) {
            used_[j] = true;
            cur_.emplace_back(i, j);
            recurse(i + 1);
            cur_.pop_back();
            used_[j] = false;
        }
        recurse(i + 1);
    }
};

} // namespace detail

/// Alignment with the most matched tokens and, among those, the fewest chunks.
inline Alignment meteor_align(const TokenSeq &cand, const TokenSeq &ref, const MeteorParams &params,
                              const SynonymTable &syn) {
    const auto edges = meteor_edges(cand, ref, params, syn);
    return detail::AlignmentSearch(edges, ref.size()).run();
}

inline double meteor_from_alignment(std::size_t matched, std::size_t chunks, std::size_t cand_len,
                                    std::size_t ref_len, const MeteorParams &params) {
    if (matched == 0) return 0.0;
    const double m = static_cast<double>(matched);
    const double p = m / static_cast<double>(cand_len);
    const double r = m / static_cast<double>(ref_len);
    const double fmean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
    const double penalty = params.gamma * std::pow(static_cast<double>(chunks) / m, params.beta);
    return fmean * (1.0 - penalty);
}

inline double meteor(const TokenSeq &candidate, const std::vector<TokenSeq> &references,
                     const MeteorParams &params = {}, const SynonymTable &syn = SynonymTable::builtin()) {
    if (references.empty()) throw UsageError("meteor: at least one reference is required");
    if (params.alpha < 0.0 || params.alpha > 1.0 || params.gamma < 0.0 || params.gamma > 1.0 || !(params.beta > 0.0))
        throw UsageError("meteor: need alpha, gamma in [0,1] and beta > 0");
    double best = 0.0;
    for (const auto &ref : references) {
        const auto a = meteor_align(candidate, ref, params, syn);
        best = std::max(best, meteor_from_alignment(a.size(), count_chunks(a), candidate.size(), ref.size(), params));
    }
    return best;
}

struct CiderParams {
    int max_n = 4;
    std::vector<double> weights; // empty: uniform 1/max_n
    double scale = 10.0;
};

/// Document frequencies over per-instance reference sets.
struct IdfTable {
    std::size_t num_documents = 0;
    std::vector<std::map<NGram, double>> idf; // index n-1

    /// Unseen n-grams take the idf of a single-document n-gram, ln(D).
    double lookup(const NGram &g) const {
        const std::size_t n = g.size();
        if (n == 0 || n > idf.size()) return std::log(static_cast<double>(std::max<std::size_t>(num_documents, 1)));
        auto it = idf[n - 1].find(g);
        return it == idf[n - 1].end() ? std::log(static_cast<double>(num_documents)) : it->second;
    }
    friend bool operator==(const IdfTable &, const IdfTable &) = default;
};

inline IdfTable compute_idf(const std::vector<std::vector<TokenSeq>> &reference_sets, int max_n = 4) {
    IdfTable t;
    t.idf.resize(static_cast<std::size_t>(max_n));
    std::vector<std::map<NGram, int>> df(static_cast<std::size_t>(max_n));
    for (const auto &refs : reference_sets) {
        if (refs.empty()) continue;
        ++t.num_documents;
        for (int n = 1; n <= max_n; ++n) {
            std::set<NGram> doc;
            for (const auto &r : refs)
                for (const auto &[g, c] : ngrams(r, static_cast<std::size_t>(n)).counts) doc.insert(g);
            for (const auto &g : doc) ++df[static_cast<std::size_t>(n - 1)][g];
        }
    }
    if (t.num_documents == 0) throw UsageError("compute_idf: no reference sets");
    const double d = static_cast<double>(t.num_documents);
    for (std::size_t k = 0; k < df.size(); ++k)
        for (const auto &[g, c] : df[k]) t.idf[k][g] = std::log(d / c);
    return t;
}

/// One document per instance: the union of its references' n-grams.
inline IdfTable compute_idf(const Corpus &corpus, int max_n = 4) {
    std::vector<std::vector<TokenSeq>> sets;
    for (const auto &inst : corpus.instances) {
        std::vector<TokenSeq> refs;
        for (const auto &r : inst.references) refs.push_back(tokenize(r));
        sets.push_back(std::move(refs));
    }
    return compute_idf(sets, max_n);
}

/// Mean over references of the tf-idf cosine per order, weighted across orders.
inline double cider(const TokenSeq &candidate, const std::vector<TokenSeq> &references, const IdfTable &idf,
                    const CiderParams &params = {}) {
    if (params.max_n < 1) throw UsageError("cider: max_n must be >= 1");
    if (references.empty()) throw UsageError("cider: at least one reference is required");
    if (candidate.empty()) return 0.0;
    std::vector<double> weights = params.weights;
    if (weights.empty()) weights.assign(static_cast<std::size_t>(params.max_n), 1.0 / params.max_n);
    if (weights.size() != static_cast<std::size_t>(params.max_n)) throw UsageError("cider: need one weight per order");

    auto vec = [&](const TokenSeq &s, std::size_t n) {
        std::map<NGram, double> v;
        for (const auto &[g, c] : ngrams(s, n).counts) {
            const double w = c * idf.lookup(g);
            if (w != 0.0) v[g] = w;
        }
        return v;
    };
    auto norm = [](const std::map<NGram, double> &v) {
        double s = 0.0;
        for (const auto &[g, x] : v) s += x * x;
        return std::sqrt(s);
    };

    double total = 0.0;
    for (int n = 1; n <= params.max_n; ++n) {
        const auto cv = vec(candidate, static_cast<std::size_t>(n));
        const double cn = norm(cv);
        double sum = 0.0;
        for (const auto &ref : references) {
            const auto rv = vec(ref, static_cast<std::size_t>(n));
            const double rn = norm(rv);
            if (cn == 0.0 || rn == 0.0) continue;
            double dot = 0.0;
            for (const auto &[g, x] : cv) {
                auto it = rv.find(g);
                if (it != rv.end()) dot += x * it->second;
            }
            sum += dot / (cn * rn);
        }
        total += weights[static_cast<std::size_t>(n - 1)] * sum / static_cast<double>(references.size());
    }
    return params.scale * total;
}

} // namespace commeval
