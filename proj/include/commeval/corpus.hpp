#pragma once

// Reference-game corpus model and the synthetic three-category generator.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "commeval/colorspace.hpp"
#include "commeval/error.hpp"
#include "commeval/lexicon.hpp"
#include "commeval/random.hpp"
#include "commeval/textproc.hpp"

namespace commeval {

enum class QualityCategory { Descriptive, Ambiguous, Misleading };

/// 1 for descriptive, 2 for ambiguous, 3 for misleading.
inline int category_score(QualityCategory c) { return static_cast<int>(c) + 1; }

inline std::string to_string(QualityCategory c) {
    switch (c) {
    case QualityCategory::Descriptive: return "descriptive";
    case QualityCategory::Ambiguous: return "ambiguous";
    default: return "misleading";
    }
}

inline std::optional<QualityCategory> parse_category(std::string_view s) {
    if (s == "descriptive") return QualityCategory::Descriptive;
    if (s == "ambiguous") return QualityCategory::Ambiguous;
    if (s == "misleading") return QualityCategory::Misleading;
    return std::nullopt;
}

struct ColorContext {
    std::string context_id;
    std::array<Color, 3> colors;
    int target_index = 0;
    std::optional<std::string> pair_id;

    const Color &target() const { return colors[static_cast<std::size_t>(target_index)]; }
    friend bool operator==(const ColorContext &, const ColorContext &) = default;
};

struct Candidate {
    std::string text;
    QualityCategory category = QualityCategory::Descriptive;
    friend bool operator==(const Candidate &, const Candidate &) = default;
};

struct EvalInstance {
    ColorContext context;
    std::vector<Candidate> candidates;
    std::vector<std::string> references;
    friend bool operator==(const EvalInstance &, const EvalInstance &) = default;
};

struct Corpus {
    std::vector<EvalInstance> instances;
    std::string name;
    std::optional<std::uint64_t> seed;
    nlohmann::ordered_json config = nlohmann::ordered_json::object(); // generator echo

    const EvalInstance *find(const std::string &context_id) const {
        for (const auto &inst : instances)
            if (inst.context.context_id == context_id) return &inst;
        return nullptr;
    }
    friend bool operator==(const Corpus &, const Corpus &) = default;
};

namespace detail {

inline bool blank(const std::string &s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

} // namespace detail

/// Checks every type invariant; throws ValidationError listing the offending
/// context ids.
inline void validate(const Corpus &corpus) {
    std::vector<std::string> problems;
    std::set<std::string> seen;
    std::map<std::string, std::vector<const ColorContext *>> pairs;
    for (const auto &inst : corpus.instances) {
        const auto &ctx = inst.context;
        const std::string &id = ctx.context_id;
        if (id.empty()) problems.push_back("(empty context_id)");
        if (!seen.insert(id).second) problems.push_back(id + ": duplicate context_id");
        if (ctx.target_index < 0 || ctx.target_index > 2) problems.push_back(id + ": target_index out of range");
        for (const auto &c : ctx.colors)
            if (!c.valid()) problems.push_back(id + ": color outside h in [0,360), s,v in [0,1]");
        if (inst.references.empty()) problems.push_back(id + ": no references");
        for (const auto &cand : inst.candidates)
            if (detail::blank(cand.text)) problems.push_back(id + ": empty candidate text");
        if (ctx.pair_id) pairs[*ctx.pair_id].push_back(&ctx);
    }
    for (const auto &[pid, members] : pairs) {
        if (members.size() != 2) {
            problems.push_back("pair " + pid + ": expected 2 contexts, found " + std::to_string(members.size()));
            continue;
        }
        auto sorted = [](const ColorContext &c) {
            auto v = std::vector<Color>(c.colors.begin(), c.colors.end());
            std::sort(v.begin(), v.end(), [](const Color &a, const Color &b) {
                return std::tie(a.h, a.s, a.v) < std::tie(b.h, b.s, b.v);
            });
            return v;
        };
        if (sorted(*members[0]) != sorted(*members[1]))
            problems.push_back(members[0]->context_id + "/" + members[1]->context_id + ": paired colors differ");
        if (members[0]->target() == members[1]->target())
            problems.push_back(members[0]->context_id + "/" + members[1]->context_id + ": paired targets equal");
    }
    if (!problems.empty()) {
        std::string msg = "corpus validation failed:";
        for (const auto &p : problems) msg += "\n  " + p;
        throw ValidationError(msg);
    }
}

struct GenerateConfig {
    int n_pairs = 180;
    int refs_per_context = 5;
    std::uint64_t seed = 0;
    ColorLexicon lexicon = ColorLexicon::builtin();
    int descriptive_per_context = 2;
    int ambiguous_per_context = 2;
    int max_attempts = 2000;
};

/// A term combination whose meaning is the intersection of its regions.
struct Description {
    std::vector<std::string> terms; // canonical terms, modifier first
};

/// All one-term descriptions (base or modifier) plus modifier+base pairs.
inline std::vector<Description> enumerate_descriptions(const ColorLexicon &lex) {
    std::vector<Description> out;
    const auto bases = lex.canonical(TermKind::base);
    const auto mods = lex.canonical(TermKind::modifier);
    for (const auto &b : bases) out.push_back({{b}});
    for (const auto &m : mods) out.push_back({{m}});
    for (const auto &m : mods)
        for (const auto &b : bases) out.push_back({{m, b}});
    return out;
}

namespace detail {

inline double round6(double x) { return std::round(x * 1e6) / 1e6; }

inline Color quantize(Color c) {
    c = {round6(c.h), round6(c.s), round6(c.v)};
    if (c.h >= 360.0) c.h = 0.0;
    return c;
}

struct Classified {
    std::vector<const Description *> descriptive; // target only
    std::vector<const Description *> ambiguous;   // target plus >= 1 distractor
};

inline Classified classify(const std::vector<Description> &descs, const ColorLexicon &lex,
                           const std::array<Color, 3> &colors, int target) {
    Classified out;
    for (const auto &d : descs) {
        const auto m = matching_colors(lex, d.terms, colors);
        const bool has_target = std::find(m.begin(), m.end(), target) != m.end();
        if (!has_target) continue;
        (m.size() == 1 ? out.descriptive : out.ambiguous).push_back(&d);
    }
    return out;
}

inline std::string realize(const Description &d, const ColorLexicon &lex, Rng &rng) {
    static const std::vector<std::string> templates = {
        "{}", "{}", "the {}", "the {} one", "{} one", "{} color", "a {} color", "the {} square",
    };
    std::string phrase;
    for (const auto &t : d.terms) {
        if (!phrase.empty()) phrase += ' ';
        phrase += rng.pick(lex.surface_forms(t));
    }
    const std::string &tpl = rng.pick(templates);
    std::string out = tpl;
    out.replace(out.find("{}"), 2, phrase);
    return out;
}

// Up to k distinct surface strings drawn from the given descriptions.
inline std::vector<std::string> realize_distinct(const std::vector<const Description *> &pool, std::size_t k,
                                                 const ColorLexicon &lex, Rng &rng,
                                                 const std::set<std::string> &exclude = {}) {
    std::vector<std::string> out;
    std::set<std::string> used = exclude;
    for (int tries = 0; out.size() < k && tries < 50 * static_cast<int>(k); ++tries) {
        std::string s = realize(*rng.pick(pool), lex, rng);
        if (used.insert(s).second) out.push_back(std::move(s));
    }
    return out;
}

inline std::string pad_index(int i) {
    std::string s = std::to_string(i);
    return std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

} // namespace detail

/// Builds 2 * n_pairs contexts. The two contexts of a pair share their colors
/// and differ in target; each context's descriptive candidates are the
/// misleading candidates of its partner.
inline Corpus generate_synthetic(const GenerateConfig &cfg) {
    if (cfg.n_pairs < 1) throw UsageError("n_pairs must be >= 1");
    if (cfg.refs_per_context < 1) throw UsageError("refs_per_context must be >= 1");
    if (cfg.descriptive_per_context < 1 || cfg.ambiguous_per_context < 1)
        throw UsageError("candidate counts per category must be >= 1");
    const auto bases = cfg.lexicon.canonical(TermKind::base);
    if (bases.size() < 6) throw UsageError("lexicon needs at least 6 base terms");

    const auto descs = enumerate_descriptions(cfg.lexicon);
    const ColorLexicon &lex = cfg.lexicon;
    Rng rng(cfg.seed);

    Corpus corpus;
    corpus.name = "synthetic";
    corpus.seed = cfg.seed;
    corpus.config = {{"generator", "synthetic"},
                     {"n_pairs", cfg.n_pairs},
                     {"refs_per_context", cfg.refs_per_context},
                     {"seed", cfg.seed},
                     {"descriptive_per_context", cfg.descriptive_per_context},
                     {"ambiguous_per_context", cfg.ambiguous_per_context}};

    const auto n_desc = static_cast<std::size_t>(cfg.descriptive_per_context);
    const auto n_amb = static_cast<std::size_t>(cfg.ambiguous_per_context);
    const auto n_refs = static_cast<std::size_t>(cfg.refs_per_context);

    for (int p = 0; p < cfg.n_pairs; ++p) {
        const std::string pair_id = "p" + detail::pad_index(p);
        std::array<Color, 3> colors{};
        int partner = -1;
        detail::Classified cls[3];
        bool ok = false;
        for (int attempt = 0; attempt < cfg.max_attempts && !ok; ++attempt) {
            const auto &target_region = lex.find(rng.pick(bases))->region;
            colors[0] = detail::quantize(target_region.sample(rng));
            const auto &d1_region = rng.uniform() < 0.6 ? target_region : lex.find(rng.pick(bases))->region;
            colors[1] = detail::quantize(d1_region.sample(rng));
            colors[2] = detail::quantize(lex.find(rng.pick(bases))->region.sample(rng));
            if (colors[0] == colors[1] || colors[0] == colors[2] || colors[1] == colors[2]) continue;
            cls[0] = detail::classify(descs, lex, colors, 0);
            if (cls[0].descriptive.empty() || cls[0].ambiguous.empty()) continue;
            const int first = 1 + static_cast<int>(rng.index(2));
            for (int k : {first, 3 - first}) {
                cls[k] = detail::classify(descs, lex, colors, k);
                if (!cls[k].descriptive.empty() && !cls[k].ambiguous.empty()) {
                    partner = k;
                    ok = true;
                    break;
                }
            }
        }
        if (!ok)
            throw GenerationError("context " + pair_id + "a: no color triple with descriptive and ambiguous terms for both "
                                  "paired targets after " + std::to_string(cfg.max_attempts) +
                                  " attempts; lexicon too small or degenerate");

        const int targets[2] = {0, partner};
        std::vector<std::string> descriptive[2];
        EvalInstance inst[2];
        for (int side = 0; side < 2; ++side) {
            const auto &c = cls[targets[side]];
            inst[side].references = detail::realize_distinct(c.descriptive, n_refs, lex, rng);
            if (inst[side].references.size() < n_refs) {
                // tiny description pools: allow repeated references
                while (inst[side].references.size() < n_refs)
                    inst[side].references.push_back(detail::realize(*rng.pick(c.descriptive), lex, rng));
            }
            descriptive[side] = detail::realize_distinct(c.descriptive, n_desc, lex, rng);
            for (auto &t : descriptive[side]) inst[side].candidates.push_back({t, QualityCategory::Descriptive});
            for (auto &t : detail::realize_distinct(c.ambiguous, n_amb, lex, rng))
                inst[side].candidates.push_back({t, QualityCategory::Ambiguous});
        }
        for (int side = 0; side < 2; ++side) {
            for (const auto &t : descriptive[1 - side]) inst[side].candidates.push_back({t, QualityCategory::Misleading});

            // independent presentation order per context
            std::vector<int> order{0, 1, 2};
            rng.shuffle(order);
            auto &ctx = inst[side].context;
            ctx.context_id = pair_id + (side == 0 ? "a" : "b");
            ctx.pair_id = pair_id;
            for (int i = 0; i < 3; ++i) {
                ctx.colors[static_cast<std::size_t>(i)] = colors[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
                if (order[static_cast<std::size_t>(i)] == targets[side]) ctx.target_index = i;
            }
            corpus.instances.push_back(std::move(inst[side]));
        }
    }
    return corpus;
}

/// The color a misleading candidate in `inst` actually describes: the target
/// of the paired context. Empty when the instance has no partner.
inline std::optional<Color> misleading_source(const Corpus &corpus, const EvalInstance &inst) {
    if (!inst.context.pair_id) return std::nullopt;
    for (const auto &other : corpus.instances)
        if (&other != &inst && other.context.pair_id == inst.context.pair_id) return other.context.target();
    return std::nullopt;
}

/// Drops misleading candidates whose text also occurs among the instance's
/// references when the source and target colors are at least `threshold`
/// apart in CIEDE2000. Near-identical colors may legitimately share a text.
inline Corpus dedupe_misleading(const Corpus &corpus, double threshold = 20.0) {
    if (!(threshold >= 0.0)) throw UsageError("dedupe threshold must be >= 0");
    Corpus out = corpus;
    for (std::size_t i = 0; i < corpus.instances.size(); ++i) {
        const auto &inst = corpus.instances[i];
        const auto source = misleading_source(corpus, inst);
        if (!source) continue;
        if (ciede2000(*source, inst.context.target()) < threshold) continue;
        const std::set<std::string> refs(inst.references.begin(), inst.references.end());
        auto &cands = out.instances[i].candidates;
        std::erase_if(cands, [&](const Candidate &c) {
            return c.category == QualityCategory::Misleading && refs.contains(c.text);
        });
    }
    return out;
}

} // namespace commeval
