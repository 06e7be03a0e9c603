#include <cmath>
#include <map>
#include <string>

#include <gtest/gtest.h>

#include "commeval/commeval.hpp"
#include "commeval/corpus.hpp"
#include "commeval/random.hpp"

using namespace commeval;

namespace {

ListenerDistribution dist(double a, double b, double c) {
    ListenerDistribution l;
    l.probs = {a, b, c};
    return l;
}

std::array<double, 3> random_simplex(Rng &rng) {
    std::array<double, 3> p{};
    double sum = 0.0;
    for (auto &x : p) sum += x = -std::log(1.0 - rng.uniform());
    for (auto &x : p) x /= sum;
    return p;
}

} // namespace

TEST(KlScore, HandExamples) {
    const auto s = SpeakerDistribution::point_mass(0);
    EXPECT_NEAR(kl_score(s, dist(0.5, 0.3, 0.2)), std::log(2.0), 1e-12);

    SpeakerDistribution half;
    half.probs = {0.5, 0.5, 0.0};
    const double expected = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
    EXPECT_NEAR(kl_score(half, dist(0.25, 0.75, 0.0)), expected, 1e-12);
    EXPECT_NEAR(kl_score(half, dist(0.25, 0.75, 0.0)), 0.1438, 1e-4);

    SpeakerDistribution same;
    same.probs = {0.2, 0.3, 0.5};
    EXPECT_EQ(kl_score(same, dist(0.2, 0.3, 0.5)), 0.0);
    EXPECT_TRUE(std::isinf(kl_score(s, dist(0.0, 0.5, 0.5))));
}

TEST(KlScore, RejectsNonSimplex) {
    const auto s = SpeakerDistribution::point_mass(1);
    EXPECT_THROW(kl_score(s, dist(0.5, 0.5, 0.5)), UsageError);
    EXPECT_THROW(kl_score(s, dist(-0.1, 0.6, 0.5)), UsageError);
    EXPECT_THROW(kl_score(s, dist(NAN, 0.5, 0.5)), UsageError);
    EXPECT_THROW(SpeakerDistribution::point_mass(3), UsageError);
}

TEST(KlScore, PointMassEqualsNegativeLogLikelihood) {
    Rng rng(2024);
    for (int i = 0; i < 10000; ++i) {
        const auto l = random_simplex(rng);
        const int t = static_cast<int>(rng.index(3));
        ListenerDistribution ld;
        ld.probs = l;
        EXPECT_LT(std::abs(kl_score(SpeakerDistribution::point_mass(t), ld) - nll_score(ld, t)), 1e-12);
    }
}

TEST(KlScore, NonNegativeOnRandomPairs) {
    Rng rng(7);
    for (int i = 0; i < 2000; ++i) {
        SpeakerDistribution s;
        s.probs = random_simplex(rng);
        ListenerDistribution l;
        l.probs = random_simplex(rng);
        EXPECT_GE(kl_score(s, l), 0.0);
    }
}

TEST(NllScore, HandExamplesAndTransform) {
    EXPECT_EQ(nll_score(dist(1, 0, 0), 0), 0.0);
    EXPECT_NEAR(nll_score(dist(1.0 / 3, 1.0 / 3, 1.0 / 3), 2), std::log(3.0), 1e-12);
    EXPECT_NEAR(nll_score(dist(0.25, 0.5, 0.25), 1), std::log(2.0), 1e-12);
    EXPECT_NEAR(comm_score(std::log(2.0)).prob, 0.5, 1e-12);
    EXPECT_TRUE(std::isinf(nll_score(dist(0, 0.5, 0.5), 0)));
    EXPECT_EQ(comm_score(std::numeric_limits<double>::infinity()).prob, 0.0);
    EXPECT_THROW(nll_score(dist(1, 0, 0), -1), UsageError);
}

TEST(CommScore, ProbStrictlyDecreasing) {
    double prev = 2.0;
    for (double m = 0.0; m < 20.0; m += 0.25) {
        const auto c = comm_score(m);
        EXPECT_NEAR(c.prob, std::exp(-m), 1e-12);
        EXPECT_LT(c.prob, prev);
        prev = c.prob;
    }
}

TEST(Evaluate, OracleClosedFormProbabilities) {
    GenerateConfig g;
    g.n_pairs = 20;
    g.seed = 3;
    const auto corpus = generate_synthetic(g);
    const auto lex = ColorLexicon::builtin();

    const auto exact = evaluate(OracleListener(lex, 0.0), corpus);
    std::size_t k = 0;
    int two_way = 0;
    for (const auto &inst : corpus.instances)
        for (const auto &cand : inst.candidates) {
            const auto &row = exact[k++];
            EXPECT_EQ(row.context_id, inst.context.context_id);
            EXPECT_EQ(row.candidate, cand.text);
            EXPECT_EQ(row.metric, "oracle");
            // Ambiguous candidates split mass over every matching color.
            const auto n = matching_colors(lex, tokenize(cand.text), inst.context.colors).size();
            switch (cand.category) {
            case QualityCategory::Descriptive: EXPECT_EQ(row.score, 1.0); break;
            case QualityCategory::Ambiguous:
                ASSERT_GE(n, 2u);
                EXPECT_NEAR(row.score, 1.0 / static_cast<double>(n), 1e-12);
                two_way += n == 2;
                break;
            case QualityCategory::Misleading: EXPECT_EQ(row.score, 0.0); break;
            }
        }
    EXPECT_EQ(k, exact.size());
    EXPECT_GT(two_way, 0);

    const auto smooth = evaluate(OracleListener(lex, 0.01), corpus, "oracle-smoothed");
    for (const auto &row : smooth) {
        EXPECT_EQ(row.metric, "oracle-smoothed");
        if (row.category == QualityCategory::Misleading) {
            EXPECT_NEAR(row.score, 0.01 / 3.0, 1e-12);
        }
    }
}

TEST(Evaluate, OracleCategoryOrderingAcrossSeeds) {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        GenerateConfig g;
        g.n_pairs = 30;
        g.seed = seed;
        const auto rows = evaluate(OracleListener(ColorLexicon::builtin()), generate_synthetic(g));
        std::map<QualityCategory, std::pair<double, int>> acc;
        for (const auto &r : rows) {
            acc[r.category].first += r.score;
            ++acc[r.category].second;
        }
        auto mean = [&](QualityCategory c) { return acc[c].first / acc[c].second; };
        EXPECT_GT(mean(QualityCategory::Descriptive), mean(QualityCategory::Ambiguous));
        EXPECT_GT(mean(QualityCategory::Ambiguous), mean(QualityCategory::Misleading));
    }
}
