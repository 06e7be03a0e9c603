#pragma once

// JSONL corpus serialization and CSV ingestion of external reference-game
// exports.

#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "commeval/corpus.hpp"
#include "commeval/error.hpp"
#include "commeval/fileio.hpp"

namespace commeval {

namespace detail {

inline std::string fixed6(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    std::string s = buf;
    if (s == "-0.000000") s = "0.000000";
    return s;
}

inline std::string quote(const std::string &s) { return nlohmann::json(s).dump(); }

} // namespace detail

/// Canonical JSONL: an optional {"config": ...} header line followed by one
/// instance per line, keys in fixed order, colors with six decimals.
inline std::string serialize_corpus(const Corpus &corpus) {
    std::string out;
    nlohmann::ordered_json header;
    header["config"] = {{"name", corpus.name},
                        {"seed", corpus.seed ? nlohmann::ordered_json(*corpus.seed) : nlohmann::ordered_json(nullptr)},
                        {"generator", corpus.config}};
    out += header.dump() + "\n";
    for (const auto &inst : corpus.instances) {
        const auto &ctx = inst.context;
        std::string line = "{\"context_id\":" + detail::quote(ctx.context_id);
        line += ",\"pair_id\":" + (ctx.pair_id ? detail::quote(*ctx.pair_id) : std::string("null"));
        line += ",\"colors\":[";
        for (std::size_t i = 0; i < 3; ++i) {
            const auto &c = ctx.colors[i];
            if (i) line += ',';
            line += "[" + detail::fixed6(c.h) + "," + detail::fixed6(c.s) + "," + detail::fixed6(c.v) + "]";
        }
        line += "],\"target_index\":" + std::to_string(ctx.target_index);
        line += ",\"candidates\":[";
        for (std::size_t i = 0; i < inst.candidates.size(); ++i) {
            if (i) line += ',';
            line += "{\"text\":" + detail::quote(inst.candidates[i].text) +
                    ",\"category\":" + detail::quote(to_string(inst.candidates[i].category)) + "}";
        }
        line += "],\"references\":[";
        for (std::size_t i = 0; i < inst.references.size(); ++i) {
            if (i) line += ',';
            line += detail::quote(inst.references[i]);
        }
        line += "]}\n";
        out += line;
    }
    return out;
}

inline void save_corpus(const Corpus &corpus, const std::string &path) {
    write_file_atomic(path, serialize_corpus(corpus));
}

inline Corpus parse_corpus_jsonl(const std::string &text) {
    Corpus corpus;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::blank(line)) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const nlohmann::json::parse_error &ex) {
            throw ParseError(std::string("invalid JSON: ") + ex.what(), lineno);
        }
        if (!j.is_object()) throw ParseError("expected a JSON object", lineno);
        if (j.contains("config") && !j.contains("context_id")) {
            const auto &cfg = j["config"];
            if (cfg.contains("name") && cfg["name"].is_string()) corpus.name = cfg["name"];
            if (cfg.contains("seed") && cfg["seed"].is_number_unsigned()) corpus.seed = cfg["seed"].get<std::uint64_t>();
            if (cfg.contains("generator")) corpus.config = cfg["generator"];
            continue;
        }
        auto field = [&](const char *key) -> const nlohmann::ordered_json & {
            if (!j.contains(key)) throw ParseError(std::string("missing field \"") + key + "\"", lineno);
            return j[key];
        };
        auto bad = [&](const char *key, const char *what) {
            return ParseError(std::string("field \"") + key + "\": " + what, lineno);
        };
        EvalInstance inst;
        const auto &id = field("context_id");
        if (!id.is_string()) throw bad("context_id", "expected string");
        inst.context.context_id = id.get<std::string>();
        if (j.contains("pair_id") && !j["pair_id"].is_null()) {
            if (!j["pair_id"].is_string()) throw bad("pair_id", "expected string or null");
            inst.context.pair_id = j["pair_id"].get<std::string>();
        }
        const auto &colors = field("colors");
        if (!colors.is_array() || colors.size() != 3) throw bad("colors", "expected 3 colors");
        for (std::size_t i = 0; i < 3; ++i) {
            const auto &c = colors[i];
            if (!c.is_array() || c.size() != 3 || !c[0].is_number() || !c[1].is_number() || !c[2].is_number())
                throw bad("colors", "each color must be [h, s, v]");
            inst.context.colors[i] = {c[0].get<double>(), c[1].get<double>(), c[2].get<double>()};
        }
        const auto &ti = field("target_index");
        if (!ti.is_number_integer()) throw bad("target_index", "expected integer");
        inst.context.target_index = ti.get<int>();
        const auto &cands = field("candidates");
        if (!cands.is_array()) throw bad("candidates", "expected array");
        for (const auto &c : cands) {
            if (!c.is_object() || !c.contains("text") || !c["text"].is_string())
                throw bad("candidates", "each candidate needs a string \"text\"");
            if (!c.contains("category") || !c["category"].is_string())
                throw bad("candidates", "each candidate needs a string \"category\"");
            auto cat = parse_category(c["category"].get<std::string>());
            if (!cat) throw bad("candidates", "category must be descriptive, ambiguous or misleading");
            inst.candidates.push_back({c["text"].get<std::string>(), *cat});
        }
        const auto &refs = field("references");
        if (!refs.is_array()) throw bad("references", "expected array");
        for (const auto &r : refs) {
            if (!r.is_string()) throw bad("references", "expected strings");
            inst.references.push_back(r.get<std::string>());
        }
        corpus.instances.push_back(std::move(inst));
    }
    validate(corpus);
    return corpus;
}

/// Column names for each role in an external CSV export.
struct CsvLayout {
    std::map<std::string, std::string> columns = {
        {"game_id", "game_id"},   {"round_id", "round_id"}, {"utterance", "utterance"},
        {"role", "role"},         {"clicked_correct", "clicked_correct"},
        {"colH1", "colH1"},       {"colS1", "colS1"},       {"colV1", "colV1"},
        {"colH2", "colH2"},       {"colS2", "colS2"},       {"colV2", "colV2"},
        {"colH3", "colH3"},       {"colS3", "colS3"},       {"colV3", "colV3"},
        {"target_index", "target_index"},
    };
    std::string speaker_role = "speaker";
    double sv_scale = 1.0; // 100 when saturation/value are percentages
    char delimiter = ',';
};

namespace detail {

// RFC 4180 style: quoted fields may contain delimiters, doubled quotes and newlines.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> parse_csv(const std::string &text, char delim) {
    std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    std::size_t line = 1, row_line = 1;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == delim) {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.emplace_back(row_line, std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
            row_line = ++line;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw ParseError("unterminated quoted field", row_line);
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.emplace_back(row_line, std::move(row));
    }
    return rows;
}

inline bool truthy(std::string s) {
    for (auto &c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s == "true" || s == "1" || s == "yes" || s == "t" || s == "y";
}

} // namespace detail

/// Groups utterance rows by (game, round) into instances. Speaker rows whose
/// listener clicked the target become references; other rows are skipped, as
/// are rounds left without any reference. Candidates are left empty.
inline Corpus parse_corpus_csv(const std::string &text, const CsvLayout &layout = {}) {
    const auto rows = detail::parse_csv(text, layout.delimiter);
    if (rows.empty()) throw ParseError("empty CSV", 1);
    const auto &header = rows.front().second;
    std::map<std::string, std::size_t> col;
    for (const auto &[role, name] : layout.columns) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ParseError("missing column \"" + name + "\" for role " + role, 1);
        col[role] = static_cast<std::size_t>(it - header.begin());
    }

    struct Group {
        EvalInstance inst;
        std::size_t first_line;
    };
    std::map<std::string, Group> groups;
    std::vector<std::string> order;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto &[lineno, row] = rows[r];
        auto get = [&](const char *role) -> const std::string & {
            const std::size_t k = col.at(role);
            if (k >= row.size()) throw ParseError(std::string("missing field ") + role, lineno);
            return row[k];
        };
        auto num = [&](const char *role) {
            const std::string &s = get(role);
            try {
                std::size_t used = 0;
                double v = std::stod(s, &used);
                if (used != s.size()) throw std::invalid_argument(s);
                return v;
            } catch (const std::exception &) {
                throw ParseError(std::string("field ") + role + ": not a number: '" + s + "'", lineno);
            }
        };
        const std::string key = get("game_id") + "-" + get("round_id");
        std::array<Color, 3> colors;
        static const char *hn[] = {"colH1", "colH2", "colH3"}, *sn[] = {"colS1", "colS2", "colS3"},
                          *vn[] = {"colV1", "colV2", "colV3"};
        for (std::size_t i = 0; i < 3; ++i) {
            double h = std::fmod(num(hn[i]), 360.0);
            if (h < 0) h += 360.0;
            colors[i] = {h, num(sn[i]) / layout.sv_scale, num(vn[i]) / layout.sv_scale};
            if (!colors[i].valid()) throw ParseError(std::string("field ") + hn[i] + ": color out of range", lineno);
        }
        const double ti = num("target_index");
        if (ti != 0.0 && ti != 1.0 && ti != 2.0) throw ParseError("field target_index: must be 0, 1 or 2", lineno);

        auto [it, fresh] = groups.try_emplace(key);
        Group &g = it->second;
        if (fresh) {
            g.first_line = lineno;
            g.inst.context.context_id = key;
            g.inst.context.colors = colors;
            g.inst.context.target_index = static_cast<int>(ti);
            order.push_back(key);
        } else if (g.inst.context.colors != colors || g.inst.context.target_index != static_cast<int>(ti)) {
            throw ParseError("round " + key + " disagrees with line " + std::to_string(g.first_line) +
                                 " on colors or target",
                             lineno);
        }
        if (get("role") != layout.speaker_role || !detail::truthy(get("clicked_correct"))) continue;
        if (detail::blank(get("utterance"))) continue;
        g.inst.references.push_back(get("utterance"));
    }

    Corpus corpus;
    corpus.name = "csv";
    corpus.config = {{"generator", "csv"}};
    for (const auto &key : order) {
        auto &g = groups.at(key);
        if (!g.inst.references.empty()) corpus.instances.push_back(std::move(g.inst));
    }
    validate(corpus);
    return corpus;
}

enum class CorpusFormat { jsonl, csv };

inline Corpus load_corpus(const std::string &path, CorpusFormat format = CorpusFormat::jsonl,
                          const CsvLayout &layout = {}) {
    const std::string text = read_file(path);
    try {
        return format == CorpusFormat::jsonl ? parse_corpus_jsonl(text) : parse_corpus_csv(text, layout);
    } catch (const ParseError &ex) {
        ParseError wrapped(path + ": " + ex.what());
        wrapped.line = ex.line;
        throw wrapped;
    }
}

} // namespace commeval
