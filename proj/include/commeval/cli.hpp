#pragma once

// Command-line driver: gen, train, score, correlate, report.
// Exit codes: 0 success, 1 runtime or data error, 2 usage error.

#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "commeval/commeval.hpp"
#include "commeval/corpus.hpp"
#include "commeval/corpus_io.hpp"
#include "commeval/error.hpp"
#include "commeval/lexicon.hpp"
#include "commeval/listeners.hpp"
#include "commeval/ngram_metrics.hpp"
#include "commeval/score_table.hpp"
#include "commeval/stats.hpp"

namespace commeval::cli {

inline const std::vector<std::string> &known_metrics() {
    static const std::vector<std::string> names = {"bleu1",  "bleu2", "bleu3",  "bleu4",    "meteor",      "rouge-l",
                                                   "cider",  "oracle", "literal", "pragmatic", "human-import"};
    return names;
}

struct GenOptions {
    int pairs = 180;
    int refs = 5;
    std::uint64_t seed = 0;
    std::string out;
    std::string lexicon;
    double dedupe_threshold = 20.0;
    bool no_dedupe = false;
};

struct TrainOptions {
    std::string model;
    std::string corpus;
    std::string corpus_format = "jsonl";
    std::string out;
    TrainConfig cfg;
    std::string features = "fourier";
    std::optional<double> holdout;
};

struct ScoreOptions {
    std::string metrics;
    std::string corpus;
    std::string corpus_format = "jsonl";
    std::string out;
    std::vector<std::string> models;
    std::string human;
    std::string lexicon;
    std::string synonyms;
    double oracle_epsilon = 0.01;
};

struct CorrelateOptions {
    std::string scores;
    std::string corpus;
    std::string corpus_format = "jsonl";
    std::string out;
};

struct ReportOptions {
    std::string scores;
    double bandwidth = 0.2;
    std::string grid = "0,1,101";
    std::string out;
};

namespace detail {

inline CorpusFormat parse_format(const std::string &s) {
    if (s == "jsonl") return CorpusFormat::jsonl;
    if (s == "csv") return CorpusFormat::csv;
    throw UsageError("unknown corpus format '" + s + "' (expected jsonl or csv)");
}

inline std::vector<std::string> split(const std::string &s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
    }
    return out;
}

inline KdeGrid parse_grid(const std::string &s) {
    const auto parts = split(s, ',');
    if (parts.size() != 3) throw UsageError("--grid expects lo,hi,steps");
    try {
        std::size_t used = 0;
        KdeGrid g;
        g.lo = std::stod(parts[0], &used);
        if (used != parts[0].size()) throw std::invalid_argument("lo");
        g.hi = std::stod(parts[1], &used);
        if (used != parts[1].size()) throw std::invalid_argument("hi");
        const long steps = std::stol(parts[2], &used);
        if (used != parts[2].size() || steps < 1) throw std::invalid_argument("steps");
        g.steps = static_cast<std::size_t>(steps);
        if (!(g.hi >= g.lo)) throw std::invalid_argument("order");
        return g;
    } catch (const std::logic_error &) {
        throw UsageError("--grid expects lo,hi,steps with lo <= hi and steps >= 1, got '" + s + "'");
    }
}

inline nlohmann::ordered_json opt_string(const std::string &s) {
    return s.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(s);
}

} // namespace detail

inline int cmd_gen(const GenOptions &o, std::ostream &out) {
    if (o.pairs < 1) throw UsageError("--pairs must be >= 1");
    if (o.refs < 1) throw UsageError("--refs must be >= 1");
    GenerateConfig cfg;
    cfg.n_pairs = o.pairs;
    cfg.refs_per_context = o.refs;
    cfg.seed = o.seed;
    if (!o.lexicon.empty()) cfg.lexicon = ColorLexicon::load(o.lexicon);
    Corpus corpus = generate_synthetic(cfg);
    if (!o.no_dedupe) corpus = dedupe_misleading(corpus, o.dedupe_threshold);
    corpus.config["dedupe_threshold"] =
        o.no_dedupe ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(o.dedupe_threshold);
    corpus.config["lexicon"] = detail::opt_string(o.lexicon);
    save_corpus(corpus, o.out);
    out << "wrote " << corpus.instances.size() << " contexts to " << o.out << "\n";
    return 0;
}

inline int cmd_train(TrainOptions o, std::ostream &out) {
    if (o.model != "literal" && o.model != "pragmatic")
        throw UsageError("--model must be literal or pragmatic, got '" + o.model + "'");
    o.cfg.features = parse_feature_mode(o.features);
    o.cfg.check();
    if (o.holdout && !(*o.holdout > 0.0 && *o.holdout < 1.0)) throw UsageError("--holdout must be in (0, 1)");
    const Corpus corpus = load_corpus(o.corpus, detail::parse_format(o.corpus_format));

    Corpus train = corpus, test;
    if (o.holdout) std::tie(train, test) = holdout_split(corpus, *o.holdout, o.cfg.seed);

    nlohmann::ordered_json run = o.cfg.to_json();
    run["model"] = o.model;
    run["corpus"] = o.corpus;
    run["corpus_format"] = o.corpus_format;
    run["holdout"] = o.holdout ? nlohmann::ordered_json(*o.holdout) : nlohmann::ordered_json(nullptr);

    std::unique_ptr<Listener> listener;
    std::vector<double> losses;
    if (o.model == "literal") {
        auto t = train_literal(train, o.cfg);
        t.model.config = run;
        save_model(t.model, o.out);
        losses = t.trace.epoch_loss;
        listener = std::make_unique<LiteralListener>(std::make_shared<LiteralListenerModel>(std::move(t.model)));
    } else {
        auto t = train_pragmatic(train, o.cfg);
        t.model.config = run;
        save_model(t.model, o.out);
        losses = t.trace.epoch_loss;
        listener = std::make_unique<PragmaticListener>(std::make_shared<PragmaticSpeakerLM>(std::move(t.model)));
    }
    if (o.holdout) {
        if (test.instances.empty()) throw UsageError("--holdout leaves no held-out contexts");
        const auto acc = listener_accuracy(*listener, test);
        nlohmann::ordered_json j;
        j["model"] = o.model;
        j["holdout_accuracy"] = acc.accuracy;
        j["n"] = acc.n;
        j["correct"] = acc.correct;
        j["ties"] = acc.ties;
        j["epoch_loss"] = losses;
        out << j.dump() << "\n";
    }
    return 0;
}

inline int cmd_score(const ScoreOptions &o, std::ostream &) {
    const auto names = detail::split(o.metrics, ',');
    if (names.empty()) throw UsageError("--metrics is empty");
    for (const auto &n : names)
        if (std::find(known_metrics().begin(), known_metrics().end(), n) == known_metrics().end())
            throw UsageError("unknown metric '" + n + "'");
    if (!(o.oracle_epsilon >= 0.0 && o.oracle_epsilon < 1.0)) throw UsageError("--oracle-epsilon must be in [0, 1)");

    auto wants = [&](const char *m) { return std::find(names.begin(), names.end(), m) != names.end(); };
    if (wants("human-import") && o.human.empty()) throw UsageError("metric human-import requires --human");

    std::shared_ptr<const LiteralListenerModel> literal;
    std::shared_ptr<const PragmaticSpeakerLM> pragmatic;
    for (const auto &path : o.models) {
        const auto kind = peek_model_kind(path);
        if (kind == ModelKind::literal)
            literal = std::make_shared<LiteralListenerModel>(load_literal_model(path));
        else
            pragmatic = std::make_shared<PragmaticSpeakerLM>(load_pragmatic_model(path));
    }
    if (wants("literal") && !literal) throw UsageError("metric literal requires --model with a literal listener file");
    if (wants("pragmatic") && !pragmatic)
        throw UsageError("metric pragmatic requires --model with a pragmatic speaker file");

    const Corpus corpus = load_corpus(o.corpus, detail::parse_format(o.corpus_format));
    const ColorLexicon lexicon = o.lexicon.empty() ? ColorLexicon::builtin() : ColorLexicon::load(o.lexicon);
    const SynonymTable synonyms = o.synonyms.empty() ? SynonymTable::builtin() : SynonymTable::load(o.synonyms);
    std::optional<IdfTable> idf;
    if (wants("cider")) idf = compute_idf(corpus);

    ScoreTable table;
    table.config = {{"command", "score"},
                    {"metrics", names},
                    {"corpus", o.corpus},
                    {"corpus_format", o.corpus_format},
                    {"models", o.models},
                    {"human", detail::opt_string(o.human)},
                    {"lexicon", detail::opt_string(o.lexicon)},
                    {"synonyms", detail::opt_string(o.synonyms)},
                    {"oracle_epsilon", o.oracle_epsilon}};

    const OracleListener oracle(lexicon, o.oracle_epsilon);
    std::unique_ptr<Listener> lit, prag;
    if (literal) lit = std::make_unique<LiteralListener>(literal);
    if (pragmatic) prag = std::make_unique<PragmaticListener>(pragmatic);

    for (const auto &metric : names) {
        if (metric == "human-import") {
            for (auto r : load_scores(o.human).rows) {
                r.metric = "human";
                table.rows.push_back(std::move(r));
            }
            continue;
        }
        if (metric == "oracle" || metric == "literal" || metric == "pragmatic") {
            const Listener &l = metric == "oracle" ? static_cast<const Listener &>(oracle)
                                : metric == "literal" ? *lit
                                                      : *prag;
            for (auto &r : evaluate(l, corpus, metric)) table.rows.push_back(std::move(r));
            continue;
        }
        for (const auto &inst : corpus.instances) {
            if (inst.references.empty()) continue;
            std::vector<TokenSeq> refs;
            for (const auto &r : inst.references) refs.push_back(tokenize(r));
            for (const auto &cand : inst.candidates) {
                const auto toks = tokenize(cand.text);
                double s = 0.0;
                if (metric.rfind("bleu", 0) == 0) {
                    BleuParams p;
                    p.max_n = metric.back() - '0';
                    s = bleu(toks, refs, p).score;
                } else if (metric == "meteor") {
                    s = meteor(toks, refs, MeteorParams{}, synonyms);
                } else if (metric == "rouge-l") {
                    s = rouge_l(toks, refs);
                } else if (metric == "cider") {
                    s = cider(toks, refs, *idf);
                }
                table.rows.push_back({inst.context.context_id, cand.text, cand.category, metric, s});
            }
        }
    }
    save_scores(table, o.out);
    return 0;
}

inline int cmd_correlate(const CorrelateOptions &o, std::ostream &) {
    const ScoreTable scores = load_scores(o.scores);
    const Corpus corpus = load_corpus(o.corpus, detail::parse_format(o.corpus_format));
    nlohmann::ordered_json config = {{"command", "correlate"},
                                     {"scores", o.scores},
                                     {"corpus", o.corpus},
                                     {"corpus_format", o.corpus_format}};
    const auto report = correlate(scores, corpus, config);
    write_file_atomic(o.out, report.dump(2) + "\n");
    return 0;
}

inline int cmd_report(const ReportOptions &o, std::ostream &, std::ostream &err) {
    const KdeGrid grid = detail::parse_grid(o.grid);
    if (!(o.bandwidth > 0.0)) throw UsageError("--bandwidth must be positive");
    const ScoreTable scores = load_scores(o.scores);
    nlohmann::ordered_json config = {
        {"command", "report"}, {"scores", o.scores}, {"bandwidth", o.bandwidth}, {"grid", o.grid}};
    const auto rep = distribution_report(scores, o.bandwidth, grid, config);
    for (const auto &w : rep.warnings) err << "warning: " << w << "\n";
    write_file_atomic(o.out, rep.json.dump(2) + "\n");
    return 0;
}

/// Parses argv and runs one subcommand.
inline int run(int argc, const char *const *argv, std::ostream &out = std::cout, std::ostream &err = std::cerr) {
    CLI::App app{"Communication-based evaluation of color descriptions"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI file with one section per command; flags win");

    GenOptions gen;
    auto *g = app.add_subcommand("gen", "Generate a synthetic paired-context corpus");
    g->add_option("--pairs", gen.pairs, "Number of context pairs")->capture_default_str();
    g->add_option("--refs", gen.refs, "References per context")->capture_default_str();
    g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
    g->add_option("--out", gen.out, "Output corpus JSONL")->required();
    g->add_option("--lexicon", gen.lexicon, "Lexicon JSON file (default: built-in)");
    g->add_option("--dedupe-threshold", gen.dedupe_threshold,
                  "Drop misleading candidates repeated in the references when the source color is at least this "
                  "CIEDE2000 distance from the target")
        ->capture_default_str();
    g->add_flag("--no-dedupe", gen.no_dedupe, "Keep every misleading candidate");

    TrainOptions train;
    auto *t = app.add_subcommand("train", "Train a literal listener or pragmatic speaker model");
    t->add_option("--model", train.model, "literal or pragmatic")->required();
    t->add_option("--corpus", train.corpus, "Training corpus")->required();
    t->add_option("--corpus-format", train.corpus_format, "jsonl or csv")->capture_default_str();
    t->add_option("--out", train.out, "Output model file")->required();
    t->add_option("--epochs", train.cfg.epochs)->capture_default_str();
    t->add_option("--batch-size", train.cfg.batch_size)->capture_default_str();
    t->add_option("--lr", train.cfg.learning_rate)->capture_default_str();
    t->add_option("--seed", train.cfg.seed)->capture_default_str();
    t->add_option("--embedding-dim", train.cfg.embedding_dim)->capture_default_str();
    t->add_option("--hidden-dim", train.cfg.hidden_dim)->capture_default_str();
    t->add_option("--clip", train.cfg.clip_norm, "Global gradient-norm clip")->capture_default_str();
    t->add_option("--features", train.features, "raw_hsv or fourier")->capture_default_str();
    t->add_option("--embeddings", train.cfg.embeddings_path, "Word embedding file (token v1 v2 ...)");
    t->add_option("--holdout", train.holdout, "Hold out this fraction of context pairs and print accuracy");

    ScoreOptions score;
    auto *s = app.add_subcommand("score", "Score every candidate with the chosen metrics");
    s->add_option("--metrics", score.metrics,
                  "Comma list of bleu1..bleu4, meteor, rouge-l, cider, oracle, literal, pragmatic, human-import")
        ->required();
    s->add_option("--corpus", score.corpus)->required();
    s->add_option("--corpus-format", score.corpus_format)->capture_default_str();
    s->add_option("--out", score.out)->required();
    s->add_option("--model", score.models, "Model file; repeat for several listeners");
    s->add_option("--human", score.human, "Score table of human judgments");
    s->add_option("--lexicon", score.lexicon, "Lexicon JSON for the oracle listener");
    s->add_option("--synonyms", score.synonyms, "Synonym groups for METEOR, one group per line");
    s->add_option("--oracle-epsilon", score.oracle_epsilon)->capture_default_str();

    CorrelateOptions corr;
    auto *c = app.add_subcommand("correlate", "Correlate metric scores with candidate quality");
    c->add_option("--scores", corr.scores)->required();
    c->add_option("--corpus", corr.corpus)->required();
    c->add_option("--corpus-format", corr.corpus_format)->capture_default_str();
    c->add_option("--out", corr.out)->required();

    ReportOptions rep;
    auto *r = app.add_subcommand("report", "Kernel density estimates of scores per metric and category");
    r->add_option("--scores", rep.scores)->required();
    r->add_option("--bandwidth", rep.bandwidth)->capture_default_str();
    r->add_option("--grid", rep.grid, "lo,hi,steps")->capture_default_str();
    r->add_option("--out", rep.out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp &e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError &e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (*g) return cmd_gen(gen, out);
        if (*t) return cmd_train(train, out);
        if (*s) return cmd_score(score, out);
        if (*c) return cmd_correlate(corr, out);
        if (*r) return cmd_report(rep, out, err);
    } catch (const UsageError &e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace commeval::cli
