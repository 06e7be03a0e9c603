#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "commeval/ngram_metrics.hpp"
#include "commeval/random.hpp"
#include "oracles.hpp"

using namespace commeval;

namespace {

TokenSeq T(const std::string &s) { return tokenize(s); }

} // namespace

TEST(Bleu, IdentityScoresOne) {
    const auto s = T("the dark blue one");
    for (int n = 1; n <= 4; ++n) {
        BleuParams p;
        p.max_n = n;
        const auto r = bleu(s, {s}, p);
        EXPECT_NEAR(r.score, 1.0, 1e-12);
        EXPECT_EQ(r.brevity_penalty, 1.0);
    }
}

TEST(Bleu, BrevityPenaltyHandValue) {
    BleuParams p;
    p.max_n = 1;
    const auto r = bleu(T("blue"), {T("the blue one")}, p);
    EXPECT_NEAR(r.precisions[0], 1.0, 1e-12);
    EXPECT_NEAR(r.brevity_penalty, std::exp(1.0 - 3.0), 1e-12);
    EXPECT_NEAR(r.score, 0.1353352832, 1e-6);
}

TEST(Bleu, ClippedPrecision) {
    BleuParams p;
    p.max_n = 1;
    const auto r = bleu(T("blue blue blue"), {T("blue one")}, p);
    EXPECT_NEAR(r.precisions[0], 1.0 / 3.0, 1e-12);
    EXPECT_EQ(r.brevity_penalty, 1.0);
}

TEST(Bleu, SmoothedHigherOrders) {
    // p1 = 3/4, p2 = 2/3, p3 = 1/2, p4 = 0 -> epsilon 0.1 over one 4-gram.
    const auto r = bleu(T("the dark blue one"), {T("the dark blue square")});
    ASSERT_EQ(r.precisions.size(), 4u);
    EXPECT_NEAR(r.precisions[3], 0.1, 1e-12);
    EXPECT_NEAR(r.score, std::pow(0.75 * (2.0 / 3.0) * 0.5 * 0.1, 0.25), 1e-9);
    // Unigram precision is never smoothed.
    EXPECT_EQ(bleu(T("red"), {T("blue")}).score, 0.0);
}

TEST(Bleu, ClosestReferenceLengthTiesGoShort) {
    BleuParams p;
    p.max_n = 1;
    // Lengths 2 and 4 are equally close to 3: the shorter one gives BP = 1.
    EXPECT_EQ(bleu(T("a b c"), {T("a b c d"), T("a b")}, p).brevity_penalty, 1.0);
    EXPECT_NEAR(bleu(T("a b c"), {T("a b c d")}, p).brevity_penalty, std::exp(1.0 - 4.0 / 3.0), 1e-12);
}

TEST(Bleu, Errors) {
    EXPECT_THROW(bleu(T("a"), {}), UsageError);
    BleuParams p;
    p.weights = {0.5, 0.6, 0.0, 0.0};
    EXPECT_THROW(bleu(T("a"), {T("a")}, p), UsageError);
    EXPECT_EQ(bleu({}, {T("a")}).score, 0.0);
}

TEST(RougeL, HandValues) {
    EXPECT_NEAR(rouge_l(T("the dark blue"), {T("the dark blue")}), 1.0, 1e-12);
    const double r = 0.75, p = 1.0, b2 = 1.44;
    EXPECT_NEAR(rouge_l(T("the blue one"), {T("the dark blue one")}), (1 + b2) * r * p / (r + b2 * p), 1e-12);
    EXPECT_NEAR(rouge_l(T("the blue one"), {T("the dark blue one")}), 0.8356, 1e-4);
    EXPECT_EQ(rouge_l(T("red"), {T("blue one")}), 0.0);
    // Maximum over references.
    EXPECT_NEAR(rouge_l(T("blue"), {T("red"), T("blue")}), 1.0, 1e-12);
}

TEST(RougeL, LcsMatchesBruteForce) {
    Rng rng(31);
    const std::vector<std::string> vocab{"a", "b", "c", "d"};
    for (int i = 0; i < 200; ++i) {
        const auto a = oracle::random_seq(rng, vocab, 8), b = oracle::random_seq(rng, vocab, 8);
        EXPECT_EQ(lcs_length(a, b), oracle::lcs(a, b));
    }
}

TEST(Meteor, HandValues) {
    EXPECT_EQ(meteor(T("red"), {T("blue one")}), 0.0);
    // Identical 4-token strings: one chunk, penalty 0.5 * (1/4)^3.
    EXPECT_NEAR(meteor(T("the dark blue one"), {T("the dark blue one")}), 1.0 - 0.5 / 64.0, 1e-12);
    EXPECT_NEAR(meteor(T("the dark blue one"), {T("the dark blue one")}), 0.9922, 1e-4);
    // Synonym stage matches like an exact match.
    const auto a = meteor_align(T("gray one"), T("grey one"), {}, SynonymTable::builtin());
    EXPECT_EQ(a.size(), 2u);
    EXPECT_NEAR(meteor(T("gray one"), {T("grey one")}), meteor(T("gray one"), {T("gray one")}), 1e-12);
    // Fully scrambled: four chunks for four matches, penalty 0.5.
    EXPECT_NEAR(meteor(T("one blue dark the"), {T("the dark blue one")}), 0.5 * 1.0, 1e-12);
}

TEST(Meteor, StemStage) {
    const auto a = meteor_align(T("darker blues"), T("blue darker"), {}, SynonymTable::builtin());
    EXPECT_EQ(a.size(), 2u);
    MeteorParams exact_only;
    exact_only.stages = {MatchStage::exact};
    EXPECT_EQ(meteor_align(T("blues"), T("blue"), exact_only, SynonymTable::builtin()).size(), 0u);
    EXPECT_EQ(meteor_align(T("blues"), T("blue"), {}, SynonymTable::builtin()).size(), 1u);
}

TEST(Meteor, FragmentationPenaltyFormula) {
    MeteorParams p;
    // m = 3 of 4 candidate and 5 reference tokens in 2 chunks.
    const double P = 0.75, R = 0.6;
    const double fmean = P * R / (0.9 * P + 0.1 * R);
    EXPECT_NEAR(meteor_from_alignment(3, 2, 4, 5, p), fmean * (1 - 0.5 * std::pow(2.0 / 3.0, 3)), 1e-12);
}

TEST(Meteor, AlignmentMatchesBruteForce) {
    Rng rng(47);
    const std::vector<std::string> vocab{"the", "gray", "grey", "blue", "blues", "dark", "deep", "one"};
    const auto syn = SynonymTable::builtin();
    const MeteorParams params;
    for (int i = 0; i < 200; ++i) {
        const auto c = oracle::random_seq(rng, vocab, 7), r = oracle::random_seq(rng, vocab, 7);
        const auto edges = meteor_edges(c, r, params, syn);
        const auto best = oracle::alignment(edges, r.size());
        const auto a = meteor_align(c, r, params, syn);
        for (const auto &[ci, ri] : a) EXPECT_TRUE(edges[ci][ri]);
        EXPECT_EQ(a.size(), best.first);
        EXPECT_EQ(count_chunks(a), best.second);
    }
}

TEST(Meteor, ParameterValidation) {
    MeteorParams p;
    p.alpha = 1.5;
    EXPECT_THROW(meteor(T("a"), {T("a")}, p), UsageError);
    EXPECT_THROW(meteor(T("a"), {}), UsageError);
}

TEST(Idf, DocumentFrequency) {
    std::vector<std::vector<TokenSeq>> sets;
    for (int i = 0; i < 10; ++i) sets.push_back({T("the color " + std::string(1, static_cast<char>('a' + i)))});
    const auto idf = compute_idf(sets);
    EXPECT_EQ(idf.num_documents, 10u);
    EXPECT_EQ(idf.lookup({"the"}), 0.0);
    EXPECT_NEAR(idf.lookup({"c"}), std::log(10.0), 1e-12);
    EXPECT_NEAR(idf.lookup({"never", "seen"}), std::log(10.0), 1e-12);
    EXPECT_EQ(compute_idf(sets), idf);
}

TEST(Cider, IdentityOrthogonalityAndZeroGuard) {
    std::vector<std::vector<TokenSeq>> sets{{T("a very dark blue square")}, {T("bright red")}, {T("green")}};
    const auto idf = compute_idf(sets);
    const auto ref = T("a very dark blue square");
    EXPECT_NEAR(cider(ref, {ref}, idf), 10.0, 1e-9);
    EXPECT_EQ(cider(T("yellow hue"), {ref}, idf), 0.0);

    std::vector<std::vector<TokenSeq>> same{{T("blue one")}, {T("blue one")}};
    const auto zero_idf = compute_idf(same);
    EXPECT_EQ(cider(T("blue one"), {T("blue one")}, zero_idf), 0.0);
}

TEST(Cider, MeanOverReferences) {
    std::vector<std::vector<TokenSeq>> sets{{T("a b c d")}, {T("e f")}};
    const auto idf = compute_idf(sets);
    const auto ref = T("a b c d");
    const double one = cider(ref, {ref}, idf);
    EXPECT_NEAR(cider(ref, {ref, T("x y")}, idf), one / 2.0, 1e-12);
}
