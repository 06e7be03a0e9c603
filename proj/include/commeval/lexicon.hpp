#pragma once

// Color terms as HSV box predicates. The analytic listener and the synthetic
// corpus generator both read colors through this table.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "commeval/colorspace.hpp"
#include "commeval/error.hpp"
#include "commeval/fileio.hpp"
#include "commeval/random.hpp"

namespace commeval {

/// Closed interval [lo, hi].
struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    bool contains(double x) const { return x >= lo && x <= hi; }
    bool empty() const { return !(lo <= hi); }
    friend bool operator==(const Interval &, const Interval &) = default;
};

/// Hue arc [from, to) in degrees; wraps through 0 when from > to.
struct HueArc {
    double from = 0.0;
    double to = 360.0;

    bool contains(double h) const { return from <= to ? (h >= from && h < to) : (h >= from || h < to); }
    double length() const { return from <= to ? to - from : 360.0 - from + to; }
    friend bool operator==(const HueArc &, const HueArc &) = default;
};

struct Region {
    HueArc hue;
    Interval sat;
    Interval val;

    bool contains(const Color &c) const { return hue.contains(c.h) && sat.contains(c.s) && val.contains(c.v); }
    bool empty() const { return hue.length() <= 0.0 || sat.empty() || val.empty(); }

    Color sample(Rng &rng) const {
        double h = hue.from + rng.uniform() * hue.length();
        if (h >= 360.0) h -= 360.0;
        return {h, rng.uniform(sat.lo, sat.hi), rng.uniform(val.lo, val.hi)};
    }
    friend bool operator==(const Region &, const Region &) = default;
};

enum class TermKind { base, modifier };

struct LexiconEntry {
    std::string term;
    Region region;
    TermKind kind = TermKind::base;
    std::optional<std::string> alias_of; // surface variant of another entry
};

class ColorLexicon {
  public:
    void add(LexiconEntry e) {
        if (e.term.empty()) throw ValidationError("lexicon term must be non-empty");
        for (char c : e.term)
            if (!(c >= 'a' && c <= 'z') && c != '-')
                throw ValidationError("lexicon term '" + e.term + "' must be a single lowercase token");
        if (e.region.empty()) throw ValidationError("lexicon term '" + e.term + "' has an empty region");
        if (entries_.contains(e.term)) throw ValidationError("duplicate lexicon term '" + e.term + "'");
        entries_.emplace(e.term, std::move(e));
    }

    const LexiconEntry *find(const std::string &term) const {
        auto it = entries_.find(term);
        return it == entries_.end() ? nullptr : &it->second;
    }

    const std::map<std::string, LexiconEntry> &entries() const { return entries_; }

    /// Canonical terms (aliases excluded) of the given kind, sorted.
    std::vector<std::string> canonical(TermKind kind) const {
        std::vector<std::string> out;
        for (const auto &[term, e] : entries_)
            if (e.kind == kind && !e.alias_of) out.push_back(term);
        return out;
    }

    /// The canonical term followed by every alias of it.
    std::vector<std::string> surface_forms(const std::string &canonical_term) const {
        std::vector<std::string> out{canonical_term};
        for (const auto &[term, e] : entries_)
            if (e.alias_of && *e.alias_of == canonical_term) out.push_back(term);
        return out;
    }

    /// Eleven basic terms plus the light/dark modifiers and a few aliases.
    static ColorLexicon builtin() {
        ColorLexicon lex;
        auto base = [&](const char *t, HueArc h, Interval s, Interval v) {
            lex.add({t, {h, s, v}, TermKind::base, std::nullopt});
        };
        const Interval chroma{0.4, 1.0};
        base("red", {0, 15}, {0.5, 1.0}, {0.35, 1.0});
        base("orange", {15, 42}, {0.55, 1.0}, {0.65, 1.0});
        base("brown", {15, 42}, {0.4, 1.0}, {0.2, 0.5});
        base("yellow", {42, 68}, {0.45, 1.0}, {0.65, 1.0});
        base("green", {68, 160}, chroma, {0.25, 1.0});
        base("cyan", {160, 200}, chroma, {0.35, 1.0});
        base("blue", {200, 255}, chroma, {0.25, 1.0});
        base("purple", {255, 295}, chroma, {0.25, 1.0});
        base("pink", {295, 360}, {0.35, 1.0}, {0.5, 1.0});
        base("gray", {0, 360}, {0.0, 0.12}, {0.25, 0.8});
        base("white", {0, 360}, {0.0, 0.12}, {0.88, 1.0});
        lex.add({"light", {{0, 360}, {0.0, 1.0}, {0.75, 1.0}}, TermKind::modifier, std::nullopt});
        lex.add({"dark", {{0, 360}, {0.0, 1.0}, {0.0, 0.45}}, TermKind::modifier, std::nullopt});
        lex.alias("grey", "gray");
        lex.alias("violet", "purple");
        lex.alias("aqua", "cyan");
        lex.alias("pale", "light");
        lex.alias("deep", "dark");
        return lex;
    }

    void alias(const std::string &term, const std::string &of) {
        const LexiconEntry *target = find(of);
        if (!target) throw ValidationError("alias '" + term + "' refers to unknown term '" + of + "'");
        add({term, target->region, target->kind, of});
    }

    nlohmann::ordered_json to_json() const {
        auto arr = nlohmann::ordered_json::array();
        for (const auto &[term, e] : entries_) {
            nlohmann::ordered_json j;
            j["term"] = term;
            j["kind"] = e.kind == TermKind::base ? "base" : "modifier";
            j["hue"] = {e.region.hue.from, e.region.hue.to};
            j["sat"] = {e.region.sat.lo, e.region.sat.hi};
            j["val"] = {e.region.val.lo, e.region.val.hi};
            j["alias_of"] = e.alias_of ? nlohmann::ordered_json(*e.alias_of) : nlohmann::ordered_json(nullptr);
            arr.push_back(std::move(j));
        }
        return arr;
    }

    /// Array of {"term", "kind", "hue": [from, to], "sat": [lo, hi], "val": [lo, hi], "alias_of"}.
    static ColorLexicon from_json(const nlohmann::json &arr) {
        if (!arr.is_array()) throw ParseError("lexicon must be a JSON array");
        ColorLexicon lex;
        for (const auto &j : arr) {
            try {
                LexiconEntry e;
                e.term = j.at("term").get<std::string>();
                const auto kind = j.value("kind", std::string("base"));
                if (kind != "base" && kind != "modifier")
                    throw ParseError("lexicon term '" + e.term + "': kind must be base or modifier");
                e.kind = kind == "base" ? TermKind::base : TermKind::modifier;
                auto pair = [&](const char *key, double dlo, double dhi) {
                    if (!j.contains(key)) return std::pair{dlo, dhi};
                    const auto &p = j.at(key);
                    return std::pair{p.at(0).get<double>(), p.at(1).get<double>()};
                };
                auto [hf, ht] = pair("hue", 0.0, 360.0);
                auto [sl, sh] = pair("sat", 0.0, 1.0);
                auto [vl, vh] = pair("val", 0.0, 1.0);
                e.region = {{hf, ht}, {sl, sh}, {vl, vh}};
                if (j.contains("alias_of") && !j.at("alias_of").is_null())
                    e.alias_of = j.at("alias_of").get<std::string>();
                lex.add(std::move(e));
            } catch (const nlohmann::json::exception &ex) {
                throw ParseError(std::string("lexicon entry: ") + ex.what());
            }
        }
        return lex;
    }

    static ColorLexicon load(const std::string &path) {
        try {
            return from_json(nlohmann::json::parse(read_file(path)));
        } catch (const nlohmann::json::parse_error &ex) {
            throw ParseError("lexicon '" + path + "': " + ex.what());
        }
    }

  private:
    std::map<std::string, LexiconEntry> entries_;
};

/// Indices (0..2) of the colors that satisfy every listed term. Terms absent
/// from the lexicon are ignored; `any_known` reports whether any term was found.
template <typename Colors>
std::vector<int> matching_colors(const ColorLexicon &lex, const std::vector<std::string> &terms,
                                 const Colors &colors, bool *any_known = nullptr) {
    std::vector<const Region *> regions;
    for (const auto &t : terms)
        if (const LexiconEntry *e = lex.find(t)) regions.push_back(&e->region);
    if (any_known) *any_known = !regions.empty();
    std::vector<int> out;
    if (regions.empty()) return out;
    for (int i = 0; i < static_cast<int>(colors.size()); ++i) {
        bool all = true;
        for (const Region *r : regions) all = all && r->contains(colors[static_cast<std::size_t>(i)]);
        if (all) out.push_back(i);
    }
    return out;
}

} // namespace commeval
