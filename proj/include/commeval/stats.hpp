#pragma once

// Correlation of metric scores with candidate quality, Williams' test for
// dependent correlations, and Gaussian kernel density estimates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "commeval/corpus.hpp"
#include "commeval/error.hpp"
#include "commeval/score_table.hpp"

namespace commeval {

namespace detail {

inline void check_pair(const std::vector<double> &x, const std::vector<double> &y) {
    if (x.size() != y.size()) throw UsageError("correlation inputs differ in length");
    if (x.size() < 2) throw UsageError("correlation needs at least two observations");
}

} // namespace detail

inline double pearson(const std::vector<double> &x, const std::vector<double> &y) {
    detail::check_pair(x, y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks; tied values share the mean of their positions.
inline std::vector<double> average_ranks(const std::vector<double> &v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double spearman(const std::vector<double> &x, const std::vector<double> &y) {
    detail::check_pair(x, y);
    return pearson(average_ranks(x), average_ranks(y));
}

struct KendallCounts {
    std::int64_t n0 = 0; // all pairs
    std::int64_t n1 = 0; // pairs tied in x
    std::int64_t n2 = 0; // pairs tied in y
    std::int64_t n3 = 0; // pairs tied in both
    std::int64_t s = 0;  // concordant minus discordant
};

namespace detail {

inline std::int64_t tied_pairs(const std::vector<double> &sorted) {
    std::int64_t total = 0, run = 1;
    for (std::size_t i = 1; i <= sorted.size(); ++i) {
        if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
            ++run;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    return total;
}

// Merge sort that counts strict inversions.
inline std::int64_t sort_count_swaps(std::vector<double> &v, std::vector<double> &buf, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::int64_t swaps = sort_count_swaps(v, buf, lo, mid) + sort_count_swaps(v, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            swaps += static_cast<std::int64_t>(mid - i);
            buf[k++] = v[j++];
        } else {
            buf[k++] = v[i++];
        }
    }
    while (i < mid) buf[k++] = v[i++];
    while (j < hi) buf[k++] = v[j++];
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return swaps;
}

} // namespace detail

/// Pair counts by Knight's O(n log n) method.
inline KendallCounts kendall_counts(const std::vector<double> &x, const std::vector<double> &y) {
    detail::check_pair(x, y);
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(x[a], y[a]) < std::tie(x[b], y[b]);
    });
    KendallCounts c;
    c.n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
    std::int64_t run_x = 1, run_xy = 1;
    for (std::size_t i = 1; i <= n; ++i) {
        const bool same_x = i < n && x[idx[i]] == x[idx[i - 1]];
        const bool same_xy = same_x && y[idx[i]] == y[idx[i - 1]];
        if (same_xy) {
            ++run_xy;
        } else {
            c.n3 += run_xy * (run_xy - 1) / 2;
            run_xy = 1;
        }
        if (same_x) {
            ++run_x;
        } else {
            c.n1 += run_x * (run_x - 1) / 2;
            run_x = 1;
        }
    }
    std::vector<double> ys(n), buf(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[idx[i]];
    const std::int64_t swaps = detail::sort_count_swaps(ys, buf, 0, n);
    c.n2 = detail::tied_pairs(ys);
    c.s = c.n0 - c.n1 - c.n2 + c.n3 - 2 * swaps;
    return c;
}

inline double kendall_tau_b(const std::vector<double> &x, const std::vector<double> &y) {
    const auto c = kendall_counts(x, y);
    const double denom = std::sqrt(static_cast<double>(c.n0 - c.n1) * static_cast<double>(c.n0 - c.n2));
    if (denom == 0.0) throw UndefinedCorrelation("all values tied");
    return std::clamp(static_cast<double>(c.s) / denom, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Distributions

namespace detail {

// Continued fraction for the incomplete beta (modified Lentz).
inline double betacf(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return h;
}

} // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete_beta: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete_beta: x must be in [0, 1]");
    if (x == 0.0 || x == 1.0) return x;
    const double ln_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
    return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

inline double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) throw DomainError("degrees of freedom must be positive");
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    return t > 0 ? 1.0 - tail : tail;
}

inline double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) throw DomainError("degrees of freedom must be positive");
    if (std::isinf(t)) return 0.0;
    return std::min(1.0, incomplete_beta(df / 2.0, 0.5, df / (df + t * t)));
}

inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

/// Two-sided p for a correlation coefficient via t = r sqrt((n-2)/(1-r^2)).
inline double correlation_p(double r, std::size_t n) {
    if (n < 3) return 1.0;
    if (std::abs(r) >= 1.0) return 0.0;
    const double df = static_cast<double>(n) - 2.0;
    return student_t_two_sided_p(r * std::sqrt(df / (1.0 - r * r)), df);
}

/// Normal approximation for tau-b with the tie-corrected variance of S.
inline double kendall_p(const std::vector<double> &x, const std::vector<double> &y) {
    const auto c = kendall_counts(x, y);
    const double n = static_cast<double>(x.size());
    auto tie_sums = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        double a = 0.0, b = 0.0, s = 0.0;
        for (std::size_t i = 0; i < v.size();) {
            std::size_t j = i;
            while (j < v.size() && v[j] == v[i]) ++j;
            const double t = static_cast<double>(j - i);
            a += t * (t - 1.0) * (2.0 * t + 5.0);
            b += t * (t - 1.0);
            s += t * (t - 1.0) * (t - 2.0);
            i = j;
        }
        return std::array<double, 3>{a, b, s};
    };
    const auto tx = tie_sums(x), ty = tie_sums(y);
    double var = (n * (n - 1.0) * (2.0 * n + 5.0) - tx[0] - ty[0]) / 18.0;
    if (n > 1) var += tx[1] * ty[1] / (2.0 * n * (n - 1.0));
    if (n > 2) var += tx[2] * ty[2] / (9.0 * n * (n - 1.0) * (n - 2.0));
    if (!(var > 0.0)) return 1.0;
    return normal_two_sided_p(static_cast<double>(c.s) / std::sqrt(var));
}

struct WilliamsResult {
    double t = 0.0;
    double p = 1.0;
    double df = 0.0;
};

/// Williams' test (Steiger's form) for r12 vs r13 when variables 2 and 3 are
/// measured on the same n cases and correlate at r23.
inline WilliamsResult williams_t(double r12, double r13, double r23, std::size_t n) {
    for (double r : {r12, r13, r23})
        if (!(std::abs(r) <= 1.0)) throw DomainError("correlations must lie in [-1, 1]");
    if (n < 4) throw DomainError("Williams' test needs n >= 4");
    double k = 1.0 - r12 * r12 - r13 * r13 - r23 * r23 + 2.0 * r12 * r13 * r23;
    if (k < -1e-12) throw DomainError("inconsistent correlation triple (negative determinant)");
    k = std::max(k, 0.0);
    const double nn = static_cast<double>(n);
    const double rbar = (r12 + r13) / 2.0;
    WilliamsResult res;
    res.df = nn - 3.0;
    if (r12 == r13) return res;
    const double denom = 2.0 * k * (nn - 1.0) / (nn - 3.0) + rbar * rbar * std::pow(1.0 - r23, 3);
    if (!(denom > 0.0)) throw DomainError("Williams' test undefined for this correlation triple");
    res.t = (r12 - r13) * std::sqrt((nn - 1.0) * (1.0 + r23) / denom);
    res.p = student_t_two_sided_p(res.t, res.df);
    return res;
}

// ---------------------------------------------------------------------------
// Kernel density

struct KdeGrid {
    double lo = 0.0, hi = 1.0;
    std::size_t steps = 101;

    std::vector<double> points() const {
        if (steps == 0) throw UsageError("grid needs at least one point");
        if (!(hi >= lo)) throw UsageError("grid upper bound must not be below the lower bound");
        std::vector<double> g(steps);
        for (std::size_t i = 0; i < steps; ++i)
            g[i] = steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
        return g;
    }
};

inline std::vector<double> gaussian_kde(const std::vector<double> &samples, const std::vector<double> &grid,
                                        double bandwidth = 0.2) {
    if (samples.empty()) throw UsageError("kernel density needs at least one sample");
    if (!(bandwidth > 0.0)) throw UsageError("bandwidth must be positive");
    const double norm = 1.0 / (static_cast<double>(samples.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
    std::vector<double> out;
    out.reserve(grid.size());
    for (double g : grid) {
        double s = 0.0;
        for (double x : samples) {
            const double z = (g - x) / bandwidth;
            s += std::exp(-0.5 * z * z);
        }
        out.push_back(norm * s);
    }
    return out;
}

inline std::vector<double> gaussian_kde(const std::vector<double> &samples, const KdeGrid &grid,
                                        double bandwidth = 0.2) {
    return gaussian_kde(samples, grid.points(), bandwidth);
}

// ---------------------------------------------------------------------------
// Reports

inline constexpr const char *p_value_note =
    "approximate: Student t with n-2 df for pearson and spearman, normal approximation with tie-corrected "
    "variance for kendall_tau_b, Student t with n-3 df for williams";

namespace detail {

using CandidateKey = std::tuple<std::string, std::string, int>; // context, text, category

inline nlohmann::ordered_json coefficient(double r, double p) {
    return {{"r", r}, {"magnitude", std::abs(r)}, {"p", p}};
}

} // namespace detail

/// Per-metric correlation of scores with category (1 descriptive, 2
/// ambiguous, 3 misleading) plus Williams' test for every metric pair.
inline nlohmann::ordered_json correlate(const ScoreTable &scores, const Corpus &corpus,
                                        const nlohmann::ordered_json &config = nullptr) {
    std::map<std::pair<std::string, std::string>, std::set<QualityCategory>> known;
    std::set<std::string> contexts;
    for (const auto &inst : corpus.instances) {
        contexts.insert(inst.context.context_id);
        for (const auto &c : inst.candidates) known[{inst.context.context_id, c.text}].insert(c.category);
    }
    for (const auto &r : scores.rows) {
        if (!contexts.contains(r.context_id))
            throw ValidationError("score row for unknown context '" + r.context_id + "'");
        auto it = known.find({r.context_id, r.candidate});
        if (it == known.end())
            throw ValidationError("score row for unknown candidate '" + r.candidate + "' in context '" +
                                  r.context_id + "'");
        if (!it->second.contains(r.category))
            throw ValidationError("candidate '" + r.candidate + "' in context '" + r.context_id +
                                  "' has no category '" + to_string(r.category) + "' in the corpus");
    }

    const auto metrics = scores.metrics();
    nlohmann::ordered_json report;
    report["config"] = config;
    report["p_values"] = p_value_note;
    report["metrics"] = nlohmann::ordered_json::array();

    std::map<std::string, std::map<detail::CandidateKey, std::pair<double, int>>> per_key;
    for (const auto &m : metrics) {
        std::vector<double> x, y;
        for (const auto &r : scores.rows) {
            if (r.metric != m) continue;
            x.push_back(r.score);
            y.push_back(category_score(r.category));
            auto &acc = per_key[m][{r.context_id, r.candidate, category_score(r.category)}];
            acc.first += r.score;
            acc.second += 1;
        }
        nlohmann::ordered_json row;
        row["metric"] = m;
        row["n"] = x.size();
        try {
            if (x.size() < 3) throw UndefinedCorrelation("fewer than three scored candidates");
            const double rp = pearson(x, y), rs = spearman(x, y), rk = kendall_tau_b(x, y);
            row["pearson"] = detail::coefficient(rp, correlation_p(rp, x.size()));
            row["spearman"] = detail::coefficient(rs, correlation_p(rs, x.size()));
            row["kendall_tau_b"] = detail::coefficient(rk, kendall_p(x, y));
        } catch (const UndefinedCorrelation &ex) {
            row["undefined"] = ex.what();
        }
        report["metrics"].push_back(std::move(row));
    }

    report["williams"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < metrics.size(); ++i)
        for (std::size_t j = i + 1; j < metrics.size(); ++j) {
            const auto &a = per_key[metrics[i]], &b = per_key[metrics[j]];
            std::vector<double> xa, xb, cat;
            for (const auto &[key, acc] : a) {
                auto it = b.find(key);
                if (it == b.end()) continue;
                xa.push_back(acc.first / acc.second);
                xb.push_back(it->second.first / it->second.second);
                cat.push_back(std::get<2>(key));
            }
            nlohmann::ordered_json w;
            w["metric_a"] = metrics[i];
            w["metric_b"] = metrics[j];
            w["n"] = xa.size();
            try {
                if (xa.size() < 4) throw DomainError("fewer than four candidates scored by both metrics");
                const double r_a = pearson(xa, cat), r_b = pearson(xb, cat), r_ab = pearson(xa, xb);
                const auto res = williams_t(r_a, r_b, r_ab, xa.size());
                w["r_a"] = r_a;
                w["r_b"] = r_b;
                w["r_ab"] = r_ab;
                w["t"] = res.t;
                w["df"] = res.df;
                w["p"] = res.p;
            } catch (const std::domain_error &ex) {
                w["undefined"] = ex.what();
            }
            report["williams"].push_back(std::move(w));
        }
    return report;
}

struct DistributionReport {
    nlohmann::ordered_json json;
    std::vector<std::string> warnings;
};

/// Per (metric, category) kernel density of scores with summary statistics.
inline DistributionReport distribution_report(const ScoreTable &scores, double bandwidth, const KdeGrid &grid,
                                              const nlohmann::ordered_json &config = nullptr) {
    if (!(bandwidth > 0.0)) throw UsageError("bandwidth must be positive");
    const auto points = grid.points();
    DistributionReport rep;
    rep.json["config"] = config;
    rep.json["bandwidth"] = bandwidth;
    rep.json["grid"] = points;
    rep.json["groups"] = nlohmann::ordered_json::array();
    for (const auto &m : scores.metrics())
        for (auto cat : {QualityCategory::Descriptive, QualityCategory::Ambiguous, QualityCategory::Misleading}) {
            std::vector<double> xs;
            for (const auto &r : scores.rows)
                if (r.metric == m && r.category == cat) xs.push_back(r.score);
            if (xs.empty()) {
                rep.warnings.push_back("no " + to_string(cat) + " scores for metric '" + m + "'; group omitted");
                continue;
            }
            nlohmann::ordered_json g;
            g["metric"] = m;
            g["category"] = to_string(cat);
            g["n"] = xs.size();
            g["min"] = *std::min_element(xs.begin(), xs.end());
            g["mean"] = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
            g["max"] = *std::max_element(xs.begin(), xs.end());
            g["density"] = gaussian_kde(xs, points, bandwidth);
            rep.json["groups"].push_back(std::move(g));
        }
    return rep;
}

} // namespace commeval
