#include <cmath>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <gtest/gtest.h>

#include "commeval/corpus.hpp"
#include "commeval/random.hpp"
#include "commeval/stats.hpp"
#include "oracles.hpp"

using namespace commeval;

TEST(Pearson, HandExamples) {
    EXPECT_NEAR(pearson({1, 2, 3, 4}, {1, 3, 2, 4}), 0.8, 1e-12);
    EXPECT_NEAR(pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-12);
    EXPECT_NEAR(pearson({1, 2, 3}, {3, 2, 1}), -1.0, 1e-12);
    EXPECT_THROW(pearson({1, 1, 1}, {1, 2, 3}), UndefinedCorrelation);
    EXPECT_THROW(pearson({1, 2}, {1, 2, 3}), UsageError);
}

TEST(Ranks, AverageTies) {
    EXPECT_EQ(average_ranks({10, 20, 20, 30}), (std::vector<double>{1, 2.5, 2.5, 4}));
    EXPECT_EQ(average_ranks({5, 5, 5}), (std::vector<double>{2, 2, 2}));
}

TEST(Spearman, MatchesBruteForceOnTiedVectors) {
    Rng rng(101);
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 2 + rng.index(49);
        const auto x = oracle::tied_vector(rng, n, 2 + rng.index(6)), y = oracle::tied_vector(rng, n, 2 + rng.index(6));
        EXPECT_NEAR(spearman(x, y), oracle::spearman(x, y), 1e-12);
    }
}

TEST(Kendall, MatchesBruteForceOnTiedVectors) {
    Rng rng(202);
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 2 + rng.index(49);
        const auto x = oracle::tied_vector(rng, n, 2 + rng.index(6)), y = oracle::tied_vector(rng, n, 2 + rng.index(6));
        EXPECT_NEAR(kendall_tau_b(x, y), oracle::kendall(x, y), 1e-12);
    }
    EXPECT_NEAR(kendall_tau_b({1, 2, 3, 4}, {1, 3, 2, 4}), 4.0 / 6.0, 1e-12);
    EXPECT_THROW(kendall_tau_b({1, 1, 1}, {1, 2, 3}), UndefinedCorrelation);
}

TEST(Kendall, TieCorrectedPValueMatchesReference) {
    // scipy.stats.kendalltau(method="asymptotic")
    const std::vector<double> x{1, 2, 2, 3, 4, 4, 4, 5, 6, 7, 7, 8}, y{2, 1, 3, 3, 5, 4, 6, 6, 7, 7, 9, 8};
    EXPECT_NEAR(kendall_tau_b(x, y), 0.8710810532924891, 1e-12);
    EXPECT_NEAR(kendall_p(x, y) / 0.00015767962747712257, 1.0, 1e-9);
    EXPECT_NEAR(correlation_p(pearson(x, y), x.size()) / 7.581776953627483e-06, 1.0, 1e-9);
    EXPECT_NEAR(correlation_p(spearman(x, y), x.size()) / 1.2599089155461555e-06, 1.0, 1e-9);
}

TEST(Distributions, AgreeWithBoostMath) {
    for (double a : {0.5, 1.0, 2.5, 10.0, 120.0})
        for (double b : {0.5, 3.0, 40.0})
            for (double x : {0.0, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0})
                EXPECT_NEAR(incomplete_beta(a, b, x), boost::math::ibeta(a, b, x), 1e-12) << a << " " << b << " " << x;
    for (double df : {1.0, 2.5, 5.0, 30.0, 237.0}) {
        const boost::math::students_t dist(df);
        for (double t : {-40.0, -3.1, -0.4, 0.0, 0.9, 2.0, 7.5}) {
            EXPECT_NEAR(student_t_cdf(t, df), boost::math::cdf(dist, t), 1e-12);
            const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
            EXPECT_NEAR(student_t_two_sided_p(t, df) / p, 1.0, 1e-9) << df << " " << t;
        }
    }
    const boost::math::normal z;
    for (double v : {0.0, 0.5, 1.96, 4.0, 9.0})
        EXPECT_NEAR(normal_two_sided_p(v) / (2.0 * boost::math::cdf(boost::math::complement(z, v))), 1.0, 1e-12);
    EXPECT_EQ(correlation_p(1.0, 10), 0.0);
}

TEST(Williams, MatchesReferenceTable) {
    const auto rows = oracle::read_table(std::string(COMMEVAL_TEST_DATA) + "/williams_reference.txt");
    ASSERT_EQ(rows.size(), 20u);
    for (const auto &r : rows) {
        const auto res = williams_t(r[0], r[1], r[2], static_cast<std::size_t>(r[3]));
        EXPECT_NEAR(res.t, r[4], 1e-6) << r[0] << " " << r[1] << " " << r[2];
        EXPECT_NEAR(res.p / r[5], 1.0, 1e-6) << r[0] << " " << r[1] << " " << r[2];
        EXPECT_EQ(res.df, r[3] - 3);
    }
}

TEST(Williams, AntisymmetryAndDomain) {
    const auto a = williams_t(0.6, 0.4, 0.5, 100), b = williams_t(0.4, 0.6, 0.5, 100);
    EXPECT_NEAR(a.t, -b.t, 1e-12);
    EXPECT_NEAR(a.p, b.p, 1e-12);
    const auto same = williams_t(0.5, 0.5, 0.3, 50);
    EXPECT_EQ(same.t, 0.0);
    EXPECT_EQ(same.p, 1.0);
    EXPECT_THROW(williams_t(0.5, 0.4, 0.3, 3), DomainError);
    EXPECT_THROW(williams_t(1.2, 0.4, 0.3, 30), DomainError);
    EXPECT_THROW(williams_t(0.9, -0.9, 0.9, 30), DomainError);
}

TEST(Kde, PeakSymmetryAndIntegral) {
    const auto peak = gaussian_kde({0.0}, std::vector<double>{0.0}, 0.2);
    EXPECT_NEAR(peak[0], 1.0 / (0.2 * std::sqrt(2.0 * M_PI)), 1e-12);
    EXPECT_NEAR(peak[0], 1.9947, 1e-4);

    const auto sym = gaussian_kde({0.5}, std::vector<double>{0.3, 0.7}, 0.2);
    EXPECT_NEAR(sym[0], sym[1], 1e-14);

    Rng rng(3);
    std::vector<double> xs;
    for (int i = 0; i < 200; ++i) xs.push_back(rng.uniform());
    const KdeGrid grid{-2.0, 3.0, 5001};
    const auto pts = grid.points();
    const auto d = gaussian_kde(xs, grid, 0.2);
    double integral = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) integral += 0.5 * (d[i] + d[i - 1]) * (pts[i] - pts[i - 1]);
    EXPECT_NEAR(integral, 1.0, 1e-3);

    EXPECT_THROW(gaussian_kde({}, grid), UsageError);
    EXPECT_THROW(gaussian_kde({0.1}, grid, 0.0), UsageError);
    EXPECT_EQ(KdeGrid{}.points().size(), 101u);
}

TEST(Correlate, ReportsPerMetricAndFlagsConstantScores) {
    GenerateConfig g;
    g.n_pairs = 6;
    g.seed = 2;
    const auto corpus = generate_synthetic(g);
    ScoreTable table;
    Rng rng(5);
    for (const auto &inst : corpus.instances)
        for (const auto &c : inst.candidates) {
            const double cat = category_score(c.category);
            table.rows.push_back({inst.context.context_id, c.text, c.category, "perfect", 1.0 / cat});
            table.rows.push_back({inst.context.context_id, c.text, c.category, "noisy", rng.uniform() - 0.1 * cat});
            table.rows.push_back({inst.context.context_id, c.text, c.category, "flat", 0.5});
        }
    const auto rep = correlate(table, corpus, {{"seed", 2}});
    EXPECT_EQ(rep["config"]["seed"], 2);
    ASSERT_EQ(rep["metrics"].size(), 3u);
    const auto &perfect = rep["metrics"][0];
    EXPECT_EQ(perfect["metric"], "perfect");
    EXPECT_NEAR(perfect["spearman"]["r"].get<double>(), -1.0, 1e-12);
    EXPECT_NEAR(perfect["spearman"]["magnitude"].get<double>(), 1.0, 1e-12);
    EXPECT_NEAR(perfect["kendall_tau_b"]["magnitude"].get<double>(), 1.0, 1e-12);
    EXPECT_TRUE(rep["metrics"][2].contains("undefined"));
    EXPECT_FALSE(rep["metrics"][2].contains("pearson"));

    ASSERT_EQ(rep["williams"].size(), 3u);
    const auto &w = rep["williams"][0];
    EXPECT_EQ(w["metric_a"], "perfect");
    EXPECT_EQ(w["metric_b"], "noisy");
    EXPECT_LT(w["t"].get<double>(), 0.0); // stronger negative correlation for the first metric
    EXPECT_LT(w["p"].get<double>(), 0.05);
    EXPECT_TRUE(rep["williams"][1].contains("undefined"));
}

TEST(Correlate, OrphanRowsNamed) {
    GenerateConfig g;
    g.n_pairs = 2;
    const auto corpus = generate_synthetic(g);
    ScoreTable table;
    table.rows.push_back({"nope", "blue", QualityCategory::Descriptive, "m", 1.0});
    try {
        correlate(table, corpus);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError &ex) {
        EXPECT_NE(std::string(ex.what()).find("nope"), std::string::npos);
    }
    table.rows[0].context_id = corpus.instances[0].context.context_id;
    table.rows[0].candidate = "not a candidate";
    EXPECT_THROW(correlate(table, corpus), ValidationError);
}

TEST(DistributionReport, GroupsAndWarnings) {
    ScoreTable table;
    table.rows.push_back({"c", "a", QualityCategory::Descriptive, "m", 0.9});
    table.rows.push_back({"c", "b", QualityCategory::Descriptive, "m", 0.7});
    table.rows.push_back({"c", "d", QualityCategory::Misleading, "m", 0.1});
    const auto rep = distribution_report(table, 0.2, KdeGrid{});
    ASSERT_EQ(rep.json["groups"].size(), 2u);
    EXPECT_EQ(rep.json["groups"][0]["n"], 2);
    EXPECT_NEAR(rep.json["groups"][0]["mean"].get<double>(), 0.8, 1e-12);
    EXPECT_EQ(rep.json["groups"][0]["density"].size(), 101u);
    ASSERT_EQ(rep.warnings.size(), 1u);
    EXPECT_NE(rep.warnings[0].find("ambiguous"), std::string::npos);
}
