// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criteria 6 and 7 drive the real command-line tool.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "commeval/colorspace.hpp"
#include "commeval/commeval.hpp"
#include "commeval/fileio.hpp"
#include "commeval/listeners.hpp"
#include "commeval/ngram_metrics.hpp"
#include "commeval/score_table.hpp"
#include "commeval/stats.hpp"
#include "oracles.hpp"

using namespace commeval;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(double x) {
    std::ostringstream s;
    s.precision(4);
    s << x;
    return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome kl_nll_equivalence() {
    Rng rng(1);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        ListenerDistribution l;
        double sum = 0.0;
        for (auto &p : l.probs) sum += p = -std::log(1.0 - rng.uniform());
        for (auto &p : l.probs) p /= sum;
        const int t = static_cast<int>(rng.index(3));
        worst = std::max(worst, std::abs(kl_score(SpeakerDistribution::point_mass(t), l) - nll_score(l, t)));
    }
    return {worst < 1e-12, "10000 pairs, max |kl - nll| = " + fmt(worst)};
}

Outcome metric_oracles() {
    Outcome o;
    int failures = 0;
    auto near = [&](double got, double want, const char *what) {
        if (!(std::abs(got - want) <= 1e-6)) {
            ++failures;
            o.detail += std::string(what) + " got " + fmt(got) + "; ";
        }
    };
    auto T = [](const char *s) { return tokenize(s); };
    BleuParams b1;
    b1.max_n = 1;
    near(bleu(T("blue blue blue"), {T("blue one")}, b1).score, 1.0 / 3.0, "bleu clipping");
    near(bleu(T("blue"), {T("the blue one")}, b1).score, std::exp(-2.0), "bleu brevity");
    near(bleu(T("the dark blue one"), {T("the dark blue one")}).score, 1.0, "bleu identity");
    near(rouge_l(T("the blue one"), {T("the dark blue one")}), 2.44 * 0.75 / (0.75 + 1.44), "rouge-l");
    near(meteor(T("the dark blue one"), {T("the dark blue one")}), 1.0 - 0.5 / 64.0, "meteor penalty");
    near(meteor(T("one blue dark the"), {T("the dark blue one")}), 0.5, "meteor fragmentation");
    const std::vector<std::vector<TokenSeq>> sets{{T("a very dark blue square")}, {T("bright red")}, {T("green")}};
    const auto idf = compute_idf(sets);
    near(cider(T("a very dark blue square"), {T("a very dark blue square")}, idf), 10.0, "cider identity");
    near(cider(T("yellow hue"), {T("a very dark blue square")}, idf), 0.0, "cider orthogonal");

    Rng rng(3);
    const std::vector<std::string> letters{"a", "b", "c", "d"};
    const std::vector<std::string> words{"the", "gray", "grey", "blue", "blues", "dark", "deep", "one"};
    const auto syn = SynonymTable::builtin();
    int lcs_bad = 0, align_bad = 0;
    for (int i = 0; i < 200; ++i) {
        const auto a = oracle::random_seq(rng, letters, 8), b = oracle::random_seq(rng, letters, 8);
        lcs_bad += lcs_length(a, b) != oracle::lcs(a, b);
        const auto c = oracle::random_seq(rng, words, 7), r = oracle::random_seq(rng, words, 7);
        const auto edges = meteor_edges(c, r, MeteorParams{}, syn);
        const auto best = oracle::alignment(edges, r.size());
        const auto got = meteor_align(c, r, MeteorParams{}, syn);
        align_bad += got.size() != best.first || count_chunks(got) != best.second;
    }
    o.pass = failures == 0 && lcs_bad == 0 && align_bad == 0;
    o.detail += "8 hand examples, " + std::to_string(failures) + " off; brute force: " + std::to_string(lcs_bad) +
                "/200 LCS and " + std::to_string(align_bad) + "/200 alignments differ";
    return o;
}

Outcome ciede2000_pairs() {
    const auto rows = oracle::read_table(std::string(COMMEVAL_TEST_DATA) + "/ciede2000_pairs.txt");
    double worst = 0.0;
    for (const auto &r : rows)
        worst = std::max(worst, std::abs(ciede2000(LabColor{r[0], r[1], r[2]}, LabColor{r[3], r[4], r[5]}) - r[6]));
    return {rows.size() == 34 && worst < 1e-4, std::to_string(rows.size()) + " pairs, max error " + fmt(worst)};
}

Outcome statistics_oracles() {
    Rng rng(4);
    double rank_err = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 2 + rng.index(49);
        const auto x = oracle::tied_vector(rng, n, 2 + rng.index(6)), y = oracle::tied_vector(rng, n, 2 + rng.index(6));
        rank_err = std::max(rank_err, std::abs(spearman(x, y) - oracle::spearman(x, y)));
        rank_err = std::max(rank_err, std::abs(kendall_tau_b(x, y) - oracle::kendall(x, y)));
    }
    const auto rows = oracle::read_table(std::string(COMMEVAL_TEST_DATA) + "/williams_reference.txt");
    double t_err = 0.0;
    for (const auto &r : rows)
        t_err = std::max(t_err, std::abs(williams_t(r[0], r[1], r[2], static_cast<std::size_t>(r[3])).t - r[4]));
    std::vector<double> xs;
    for (int i = 0; i < 200; ++i) xs.push_back(rng.uniform());
    const KdeGrid grid{-2.0, 3.0, 5001};
    const auto pts = grid.points();
    const auto d = gaussian_kde(xs, grid, 0.2);
    double integral = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) integral += 0.5 * (d[i] + d[i - 1]) * (pts[i] - pts[i - 1]);
    const bool ok = rank_err < 1e-12 && rows.size() == 20 && t_err < 1e-6 && std::abs(integral - 1.0) < 1e-3;
    return {ok, "rank correlations max error " + fmt(rank_err) + "; Williams t max error " + fmt(t_err) + " over " +
                    std::to_string(rows.size()) + " triples; KDE integral " + fmt(integral)};
}

Outcome gradient_checks() {
    const auto vocab = nn::Vocab::from_tokens(std::vector<std::string>{"blue", "dark", "light", "red"});
    double worst = 0.0;
    std::size_t checked = 0;
    std::string where;
    auto track = [&](const oracle::GradientCheck &g, const std::string &model) {
        checked += g.checked;
        if (g.max_rel_error >= worst) {
            worst = g.max_rel_error;
            where = model + " " + g.worst;
        }
    };
    for (auto mode : {FeatureMode::raw_hsv, FeatureMode::fourier}) {
        auto lit = LiteralListenerModel::init(vocab, mode, 4, 4, 21);
        Rng rng(8);
        LiteralParams::each(lit.params, [&](const char *, nn::Mat &p) {
            for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] += rng.uniform(-0.05, 0.05);
        });
        ColorContext ctx;
        ctx.colors = {Color{200, 0.7, 0.8}, Color{20, 0.5, 0.3}, Color{120, 0.3, 0.6}};
        const auto ids = lit.vocab.encode({"light", "blue"});
        const auto feats = detail::context_features(ctx, mode);
        auto lg = detail::zeros_like(lit.params);
        lit.loss(ids, feats, 1, &lg);
        track(oracle::check_gradients(lit.params, lg, [&] { return lit.loss(ids, feats, 1, nullptr); }, 99),
              "literal");

        auto spk = PragmaticSpeakerLM::init(vocab, mode, 4, 4, 5);
        const auto sids = spk.vocab.encode({"dark", "zzz", "red"});
        const nn::Vec color = detail::features_vec({300, 0.5, 0.5}, mode);
        auto sg = detail::zeros_like(spk.params);
        spk.loss(sids, color, &sg);
        track(oracle::check_gradients(spk.params, sg, [&] { return spk.loss(sids, color, nullptr); }, 77),
              "pragmatic");
    }
    return {worst < 1e-3, std::to_string(checked) + " entries, max relative error " + fmt(worst) + " at " + where};
}

// ---------------------------------------------------------------------------
// End-to-end pipeline through the command-line tool.

struct PipelineRun {
    bool ok = true;
    std::string error;
    nlohmann::json train_summary;
};

const std::vector<std::string> pipeline_files = {"corpus.jsonl", "literal.bin", "pragmatic.bin",
                                                 "scores.jsonl", "correlation.json", "report.json"};

PipelineRun run_pipeline(const fs::path &dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cli = COMMEVAL_CLI;
    const std::vector<std::string> steps = {
        "gen --pairs 180 --refs 5 --seed 7 --out corpus.jsonl > /dev/null",
        "train --model literal --corpus corpus.jsonl --holdout 0.2 --seed 7 --out literal.bin > train.json",
        "train --model pragmatic --corpus corpus.jsonl --seed 7 --out pragmatic.bin > /dev/null",
        "score --metrics bleu1,bleu2,bleu3,bleu4,meteor,rouge-l,cider,oracle,literal,pragmatic --corpus corpus.jsonl "
        "--model literal.bin --model pragmatic.bin --out scores.jsonl",
        "correlate --scores scores.jsonl --corpus corpus.jsonl --out correlation.json",
        "report --scores scores.jsonl --out report.json",
    };
    PipelineRun run;
    for (const auto &s : steps) {
        const std::string cmd = "cd '" + dir.string() + "' && '" + cli + "' " + s;
        if (std::system(cmd.c_str()) != 0) {
            run.ok = false;
            run.error = "command failed: commeval " + s;
            return run;
        }
    }
    run.train_summary = nlohmann::json::parse(read_file((dir / "train.json").string()));
    return run;
}

const nlohmann::json *find_metric(const nlohmann::json &corr, const std::string &name) {
    for (const auto &m : corr["metrics"])
        if (m["metric"] == name) return &m;
    return nullptr;
}

double spearman_magnitude(const nlohmann::json &corr, const std::string &name) {
    const auto *m = find_metric(corr, name);
    if (!m || !m->contains("spearman")) return std::nan("");
    return (*m)["spearman"]["magnitude"].get<double>();
}

Outcome end_to_end(const fs::path &dir) {
    const auto run = run_pipeline(dir);
    if (!run.ok) return {false, run.error};
    Outcome o;
    std::ostringstream d;
    const double acc = run.train_summary["holdout_accuracy"].get<double>();
    const bool acc_ok = acc >= 0.70;
    d << "holdout accuracy " << fmt(acc) << (acc_ok ? "" : " (< 0.70)");

    const auto corr = nlohmann::json::parse(read_file((dir / "correlation.json").string()));
    const double oracle_s = spearman_magnitude(corr, "oracle");
    const bool a = oracle_s >= 0.90;
    d << "; (a) oracle |spearman| " << fmt(oracle_s);

    const double lit = spearman_magnitude(corr, "literal");
    bool b = std::isfinite(lit);
    std::string best_ngram;
    double best = -1.0;
    d << "; (b) literal " << fmt(lit) << " vs";
    for (const char *m : {"bleu1", "meteor", "rouge-l", "cider"}) {
        const double s = spearman_magnitude(corr, m);
        d << " " << m << " " << fmt(s);
        b = b && std::isfinite(s) && lit - s >= 0.05;
        if (s > best) {
            best = s;
            best_ngram = m;
        }
    }

    const auto scores = load_scores((dir / "scores.jsonl").string());
    std::map<std::string, std::map<QualityCategory, std::pair<double, int>>> acc_by;
    for (const auto &r : scores.rows) {
        auto &x = acc_by[r.metric][r.category];
        x.first += r.score;
        ++x.second;
    }
    bool c = true;
    d << "; (c) mean prob d/a/m";
    for (const char *m : {"literal", "pragmatic", "oracle"}) {
        auto mean = [&](QualityCategory cat) { return acc_by[m][cat].first / acc_by[m][cat].second; };
        const double md = mean(QualityCategory::Descriptive), ma = mean(QualityCategory::Ambiguous),
                     mm = mean(QualityCategory::Misleading);
        c = c && md > ma && ma > mm;
        d << " " << m << " " << fmt(md) << "/" << fmt(ma) << "/" << fmt(mm);
    }

    bool w = false;
    for (const auto &e : corr["williams"]) {
        const bool match = (e["metric_a"] == "literal" && e["metric_b"] == best_ngram) ||
                           (e["metric_b"] == "literal" && e["metric_a"] == best_ngram);
        if (!match || !e.contains("p")) continue;
        w = e["p"].get<double>() < 0.05;
        d << "; (d) williams literal vs " << best_ngram << " t " << fmt(e["t"].get<double>()) << " p "
          << fmt(e["p"].get<double>());
    }
    if (best_ngram.empty()) d << "; (d) no n-gram metric";
    o.pass = acc_ok && a && b && c && w;
    o.detail = d.str();
    return o;
}

Outcome determinism(const fs::path &first, const fs::path &second) {
    const auto run = run_pipeline(second);
    if (!run.ok) return {false, run.error};
    std::vector<std::string> differ;
    for (const auto &f : pipeline_files)
        if (read_file((first / f).string()) != read_file((second / f).string())) differ.push_back(f);
    std::string detail = std::to_string(pipeline_files.size() - differ.size()) + "/" +
                         std::to_string(pipeline_files.size()) + " files byte-identical";
    for (const auto &f : differ) detail += "; differs: " + f;
    return {differ.empty(), detail};
}

} // namespace

int main() {
    const fs::path work = fs::path(COMMEVAL_WORK_DIR);
    struct Criterion {
        int id;
        const char *name;
        double budget_s;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> criteria = {
        {1, "kl/nll equivalence", 1.0, kl_nll_equivalence},
        {2, "metric oracles", 10.0, metric_oracles},
        {3, "ciede2000 reference pairs", 1.0, ciede2000_pairs},
        {4, "statistics oracles", 60.0, statistics_oracles},
        {5, "gradient checks", 60.0, gradient_checks},
        {6, "end-to-end metric ranking", 600.0, [&] { return end_to_end(work / "run1"); }},
        {7, "determinism", 600.0, [&] { return determinism(work / "run1", work / "run2"); }},
    };
    int failed = 0;
    for (const auto &c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception &ex) {
            o = {false, std::string("exception: ") + ex.what()};
        }
        const double secs = seconds_since(t0);
        if (secs > c.budget_s) {
            o.pass = false;
            o.detail += "; over the " + fmt(c.budget_s) + " s budget";
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.name << ": " << o.detail << " ["
                  << fmt(secs) << " s]" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
