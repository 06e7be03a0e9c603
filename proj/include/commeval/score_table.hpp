#pragma once

// Score tables: one row per (candidate, metric), stored as JSONL with an
// optional leading {"config": ...} line.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "commeval/corpus.hpp"
#include "commeval/error.hpp"
#include "commeval/fileio.hpp"

namespace commeval {

struct ScoreRow {
    std::string context_id;
    std::string candidate;
    QualityCategory category = QualityCategory::Descriptive;
    std::string metric;
    double score = 0.0;

    friend bool operator==(const ScoreRow &, const ScoreRow &) = default;
};

struct ScoreTable {
    std::vector<ScoreRow> rows;
    nlohmann::ordered_json config; // null when absent

    /// Metric names in order of first appearance.
    std::vector<std::string> metrics() const {
        std::vector<std::string> out;
        for (const auto &r : rows)
            if (std::find(out.begin(), out.end(), r.metric) == out.end()) out.push_back(r.metric);
        return out;
    }
};

inline std::string serialize_scores(const ScoreTable &table) {
    std::string out;
    if (!table.config.is_null()) out += nlohmann::ordered_json{{"config", table.config}}.dump() + "\n";
    for (const auto &r : table.rows) {
        if (!std::isfinite(r.score)) throw ValidationError("non-finite score for '" + r.candidate + "'");
        nlohmann::ordered_json j;
        j["context_id"] = r.context_id;
        j["candidate"] = r.candidate;
        j["category"] = to_string(r.category);
        j["metric"] = r.metric;
        j["score"] = r.score;
        out += j.dump() + "\n";
    }
    return out;
}

inline void save_scores(const ScoreTable &table, const std::string &path) {
    write_file_atomic(path, serialize_scores(table));
}

inline ScoreTable parse_scores(const std::string &text) {
    ScoreTable table;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const nlohmann::json::parse_error &ex) {
            throw ParseError(std::string("invalid JSON: ") + ex.what(), lineno);
        }
        if (!j.is_object()) throw ParseError("expected a JSON object", lineno);
        if (j.contains("config") && !j.contains("metric")) {
            table.config = j["config"];
            continue;
        }
        auto field = [&](const char *key) -> const nlohmann::ordered_json & {
            if (!j.contains(key)) throw ParseError(std::string("missing field '") + key + "'", lineno);
            return j[key];
        };
        auto str = [&](const char *key) {
            const auto &v = field(key);
            if (!v.is_string()) throw ParseError(std::string("field '") + key + "' must be a string", lineno);
            return v.get<std::string>();
        };
        ScoreRow r;
        r.context_id = str("context_id");
        r.candidate = str("candidate");
        const auto cat = parse_category(str("category"));
        if (!cat) throw ParseError("unknown category '" + j["category"].get<std::string>() + "'", lineno);
        r.category = *cat;
        r.metric = str("metric");
        const auto &s = field("score");
        if (!s.is_number()) throw ParseError("field 'score' must be a number", lineno);
        r.score = s.get<double>();
        table.rows.push_back(std::move(r));
    }
    return table;
}

inline ScoreTable load_scores(const std::string &path) {
    try {
        return parse_scores(read_file(path));
    } catch (const ParseError &ex) {
        ParseError e(path + ": " + ex.what());
        e.line = ex.line;
        throw e;
    }
}

} // namespace commeval
