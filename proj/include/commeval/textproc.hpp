#pragma once

// Tokenization, Porter stemming, n-gram counting and synonym groups shared by
// every metric and listener model.

#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "commeval/error.hpp"

namespace commeval {

using TokenSeq = std::vector<std::string>;
using NGram = std::vector<std::string>;

namespace detail {

// Length in bytes of a UTF-8 whitespace sequence starting at pos, or 0.
inline std::size_t whitespace_len(std::string_view s, std::size_t pos) {
    const auto c = static_cast<unsigned char>(s[pos]);
    if (c == ' ' || (c >= '\t' && c <= '\r')) return 1;
    auto at = [&](std::size_t k) -> unsigned {
        return pos + k < s.size() ? static_cast<unsigned char>(s[pos + k]) : 0u;
    };
    if (c == 0xC2 && (at(1) == 0x85 || at(1) == 0xA0)) return 2; // NEL, NBSP
    if (c == 0xE1 && at(1) == 0x9A && at(2) == 0x80) return 3;   // U+1680
    if (c == 0xE2 && at(1) == 0x80) {
        const unsigned d = at(2);
        if ((d >= 0x80 && d <= 0x8A) || d == 0xA8 || d == 0xA9 || d == 0xAF) return 3;
    }
    if (c == 0xE2 && at(1) == 0x81 && at(2) == 0x9F) return 3; // U+205F
    if (c == 0xE3 && at(1) == 0x80 && at(2) == 0x80) return 3; // U+3000
    return 0;
}

inline bool is_ascii_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

} // namespace detail

/// Lowercases, splits on whitespace and strips leading/trailing ASCII
/// punctuation from each token. Punctuation-only tokens vanish.
inline TokenSeq tokenize(std::string_view text) {
    TokenSeq out;
    std::string cur;
    auto flush = [&] {
        std::size_t b = 0, e = cur.size();
        while (b < e && detail::is_ascii_punct(cur[b])) ++b;
        while (e > b && detail::is_ascii_punct(cur[e - 1])) --e;
        if (e > b) out.emplace_back(cur.substr(b, e - b));
        cur.clear();
    };
    for (std::size_t i = 0; i < text.size();) {
        if (std::size_t w = detail::whitespace_len(text, i)) {
            flush();
            i += w;
            continue;
        }
        cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
        ++i;
    }
    flush();
    return out;
}

inline std::string join(const TokenSeq &tokens, std::string_view sep = " ") {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += sep;
        out += tokens[i];
    }
    return out;
}

namespace porter {

// Classic Porter (1980) stemmer over lowercase ASCII words.
class Stemmer {
  public:
    explicit Stemmer(std::string word) : b_(std::move(word)) {}

    std::string run() {
        if (b_.size() <= 2) return b_;
        step1ab();
        step1c();
        step2();
        step3();
        step4();
        step5();
        return b_;
    }

  private:
    std::string b_;
    std::size_t j_ = 0; // end of the stem under consideration (exclusive)

    bool cons(std::size_t i) const {
        switch (b_[i]) {
        case 'a': case 'e': case 'i': case 'o': case 'u': return false;
        case 'y': return i == 0 ? true : !cons(i - 1);
        default: return true;
        }
    }

    // Number of VC sequences in b_[0, j_).
    int measure() const {
        int n = 0;
        std::size_t i = 0;
        while (true) {
            if (i >= j_) return n;
            if (!cons(i)) break;
            ++i;
        }
        ++i;
        while (true) {
            while (true) {
                if (i >= j_) return n;
                if (cons(i)) break;
                ++i;
            }
            ++i;
            ++n;
            while (true) {
                if (i >= j_) return n;
                if (!cons(i)) break;
                ++i;
            }
            ++i;
        }
    }

    bool vowel_in_stem() const {
        for (std::size_t i = 0; i < j_; ++i)
            if (!cons(i)) return true;
        return false;
    }

    bool double_cons(std::size_t end) const {
        // end is the index one past the last character
        if (end < 2) return false;
        return b_[end - 1] == b_[end - 2] && cons(end - 1);
    }

    // consonant-vowel-consonant ending at index end-1, last not w/x/y
    bool cvc(std::size_t end) const {
        if (end < 3) return false;
        if (!cons(end - 1) || cons(end - 2) || !cons(end - 3)) return false;
        const char c = b_[end - 1];
        return c != 'w' && c != 'x' && c != 'y';
    }

    bool ends(std::string_view s) {
        if (s.size() > b_.size()) return false;
        if (b_.compare(b_.size() - s.size(), s.size(), s) != 0) return false;
        j_ = b_.size() - s.size();
        return true;
    }

    void set_to(std::string_view s) { b_.replace(j_, b_.size() - j_, s); }

    void replace_if_m0(std::string_view s) {
        if (measure() > 0) set_to(s);
    }

    void step1ab() {
        if (b_.back() == 's') {
            if (ends("sses"))
                set_to("ss");
            else if (ends("ies"))
                set_to("i");
            else if (b_.size() >= 2 && b_[b_.size() - 2] != 's')
                b_.pop_back();
        }
        if (ends("eed")) {
            if (measure() > 0) b_.pop_back();
            return;
        }
        if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
            b_.resize(j_);
            if (ends("at"))
                set_to("ate");
            else if (ends("bl"))
                set_to("ble");
            else if (ends("iz"))
                set_to("ize");
            else if (double_cons(b_.size())) {
                const char c = b_.back();
                if (c != 'l' && c != 's' && c != 'z') b_.pop_back();
            } else {
                j_ = b_.size();
                if (measure() == 1 && cvc(b_.size())) b_.push_back('e');
            }
        }
    }

    void step1c() {
        if (ends("y") && vowel_in_stem()) b_.back() = 'i';
    }

    void step2() {
        static const std::pair<std::string_view, std::string_view> rules[] = {
            {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},   {"anci", "ance"},
            {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},     {"entli", "ent"},
            {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
            {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
            {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
        };
        for (const auto &[suffix, repl] : rules)
            if (ends(suffix)) {
                replace_if_m0(repl);
                return;
            }
    }

    void step3() {
        static const std::pair<std::string_view, std::string_view> rules[] = {
            {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
            {"ical", "ic"},  {"ful", ""},   {"ness", ""},
        };
        for (const auto &[suffix, repl] : rules)
            if (ends(suffix)) {
                replace_if_m0(repl);
                return;
            }
    }

    void step4() {
        // longer suffixes precede the shorter ones they end with (ement, ment, ent)
        static const std::string_view suffixes[] = {
            "al",  "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
            "ent", "ion",  "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize",
        };
        for (auto suffix : suffixes) {
            if (!ends(suffix)) continue;
            if (suffix == "ion" && !(j_ > 0 && (b_[j_ - 1] == 's' || b_[j_ - 1] == 't'))) return;
            if (measure() > 1) b_.resize(j_);
            return;
        }
    }

    void step5() {
        j_ = b_.size();
        if (b_.back() == 'e') {
            j_ = b_.size() - 1;
            const int m = measure();
            if (m > 1 || (m == 1 && !cvc(b_.size() - 1))) b_.pop_back();
        }
        j_ = b_.size();
        if (b_.back() == 'l' && double_cons(b_.size()) && measure() > 1) b_.pop_back();
    }
};

} // namespace porter

/// Porter stemming algorithm (original step set). Words of length <= 2 are
/// returned unchanged.
inline std::string stem(std::string_view token) { return porter::Stemmer(std::string(token)).run(); }

struct NGramCounts {
    std::size_t n = 1;
    std::map<NGram, int> counts;

    int total() const {
        int t = 0;
        for (const auto &[g, c] : counts) t += c;
        return t;
    }
    int count(const NGram &g) const {
        auto it = counts.find(g);
        return it == counts.end() ? 0 : it->second;
    }
};

inline NGramCounts ngrams(const TokenSeq &seq, std::size_t n) {
    if (n == 0) throw UsageError("ngrams: n must be >= 1");
    NGramCounts out{n, {}};
    if (seq.size() < n) return out;
    for (std::size_t i = 0; i + n <= seq.size(); ++i)
        ++out.counts[NGram(seq.begin() + static_cast<std::ptrdiff_t>(i),
                           seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return out;
}

/// Disjoint groups of interchangeable tokens.
class SynonymTable {
  public:
    SynonymTable() = default;

    void add_group(const std::vector<std::string> &tokens) {
        std::set<std::string> group;
        for (const auto &t : tokens) {
            if (lookup_.contains(t))
                throw ValidationError("synonym token '" + t + "' appears in more than one group");
            group.insert(t);
        }
        if (group.size() < 2) return;
        for (const auto &t : group) lookup_[t] = groups_.size();
        groups_.push_back(std::move(group));
    }

    /// Group id of a token, or -1.
    long group_of(const std::string &token) const {
        auto it = lookup_.find(token);
        return it == lookup_.end() ? -1 : static_cast<long>(it->second);
    }

    bool synonyms(const std::string &a, const std::string &b) const {
        const long ga = group_of(a);
        return ga >= 0 && ga == group_of(b);
    }

    const std::vector<std::set<std::string>> &groups() const { return groups_; }

    /// Small color-domain table.
    static SynonymTable builtin() {
        SynonymTable t;
        t.add_group({"gray", "grey"});
        t.add_group({"purple", "violet"});
        t.add_group({"cyan", "aqua", "turquoise"});
        t.add_group({"pink", "magenta"});
        t.add_group({"light", "pale"});
        t.add_group({"dark", "deep"});
        t.add_group({"white", "whitish"});
        return t;
    }

    /// One group per line, tokens separated by whitespace. Blank lines and
    /// lines starting with '#' are skipped.
    static SynonymTable load(const std::string &path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open synonym file '" + path + "'");
        SynonymTable t;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            t.add_group(tokenize(line));
        }
        return t;
    }

  private:
    std::vector<std::set<std::string>> groups_;
    std::unordered_map<std::string, std::size_t> lookup_;
};

} // namespace commeval
