#pragma once

// Communication-based evaluation: compare the speaker's intended distribution
// over referents with the distribution a listener recovers from the candidate
// utterance, via KL divergence. Reported scores use exp(-m), which for a
// point-mass speaker is the listener's probability of the target.

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "commeval/corpus.hpp"
#include "commeval/error.hpp"
#include "commeval/listeners.hpp"
#include "commeval/score_table.hpp"

namespace commeval {

struct SpeakerDistribution {
    std::array<double, 3> probs{1.0 / 3, 1.0 / 3, 1.0 / 3};

    static SpeakerDistribution point_mass(int target) {
        if (target < 0 || target > 2) throw UsageError("speaker target must be 0, 1 or 2");
        SpeakerDistribution s;
        s.probs = {0.0, 0.0, 0.0};
        s.probs[static_cast<std::size_t>(target)] = 1.0;
        return s;
    }
};

namespace detail {

inline void require_simplex(const std::array<double, 3> &p, const char *what) {
    double sum = 0.0;
    for (double x : p) {
        if (!(x >= 0.0) || !std::isfinite(x)) throw UsageError(std::string(what) + " has a negative or non-finite entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw UsageError(std::string(what) + " does not sum to 1");
}

} // namespace detail

/// KL(s || l) in nats; +inf when s puts mass where l has none.
inline double kl_score(const SpeakerDistribution &s, const ListenerDistribution &l) {
    detail::require_simplex(s.probs, "speaker distribution");
    detail::require_simplex(l.probs, "listener distribution");
    double m = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        if (s.probs[i] == 0.0) continue;
        if (l.probs[i] == 0.0) return std::numeric_limits<double>::infinity();
        m += s.probs[i] * std::log(s.probs[i] / l.probs[i]);
    }
    return std::max(m, 0.0);
}

inline double nll_score(const ListenerDistribution &l, int target) {
    if (target < 0 || target > 2) throw UsageError("target must be 0, 1 or 2");
    return -std::log(l.probs[static_cast<std::size_t>(target)]);
}

struct CommScore {
    double m = 0.0;
    double prob = 1.0;
};

inline CommScore comm_score(double m) { return {m, std::isinf(m) ? 0.0 : std::exp(-m)}; }

/// One row per candidate, in corpus order, scoring the listener's probability
/// of the target color.
inline std::vector<ScoreRow> evaluate(const Listener &listener, const Corpus &corpus, const std::string &metric) {
    std::vector<ScoreRow> rows;
    for (const auto &inst : corpus.instances)
        for (const auto &cand : inst.candidates) {
            const auto l = listener.distribution(cand.text, inst.context);
            rows.push_back({inst.context.context_id, cand.text, cand.category, metric,
                            comm_score(nll_score(l, inst.context.target_index)).prob});
        }
    return rows;
}

inline std::vector<ScoreRow> evaluate(const Listener &listener, const Corpus &corpus) {
    return evaluate(listener, corpus, listener.name());
}

} // namespace commeval
