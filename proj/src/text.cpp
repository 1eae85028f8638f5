#include "memex/text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <ctime>
#include <unordered_set>

namespace memex::text {

std::vector<std::string> tokenize(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : s) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string normalize_content(const std::string& s) {
    std::string out;
    bool in_space = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out.push_back(' ');
            in_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    while (!out.empty()) {
        char c = out.back();
        if (c == '.' || c == '!' || c == '?' || c == ',' || c == ';' || c == ':') {
            out.pop_back();
        } else {
            break;
        }
    }
    return out;
}

double jaccard(const std::string& a, const std::string& b) {
    auto ta = tokenize(a);
    auto tb = tokenize(b);
    std::set<std::string> sa(ta.begin(), ta.end());
    std::set<std::string> sb(tb.begin(), tb.end());
    if (sa.empty() && sb.empty()) return 1.0;
    size_t inter = 0;
    for (const auto& t : sa) inter += sb.count(t);
    size_t uni = sa.size() + sb.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {
const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> kStop = {
        "a",     "an",    "and",   "are",  "as",    "at",    "be",    "but",  "by",
        "did",   "do",    "does",  "for",  "from",  "had",   "has",   "have", "he",
        "her",   "hers",  "him",   "his",  "how",   "i",     "if",    "in",   "is",
        "it",    "its",   "me",    "my",   "no",    "not",   "of",    "on",   "or",
        "our",   "she",   "so",    "that", "the",   "their", "them",  "then", "there",
        "these", "they",  "this",  "to",   "up",    "was",   "we",    "were", "what",
        "when",  "where", "which", "who",  "while", "why",   "will",  "with", "would",
        "you",   "your",  "yes",   "about"};
    return kStop;
}
}  // namespace

bool is_stopword(const std::string& lower_token) {
    return stopwords().count(lower_token) > 0;
}

std::set<std::string> reference_keywords(const std::string& s) {
    std::set<std::string> out;
    // Capitalized multi-char words and numerals.
    std::string word;
    bool starts_upper = false;
    auto flush = [&]() {
        if (word.size() >= 2) {
            std::string lower = to_lower(word);
            bool numeral = std::all_of(word.begin(), word.end(), [](unsigned char c) {
                return std::isdigit(c);
            });
            if ((starts_upper || numeral) && !is_stopword(lower)) out.insert(lower);
        }
        word.clear();
        starts_upper = false;
    };
    for (unsigned char c : s) {
        if (std::isalnum(c)) {
            if (word.empty()) starts_upper = std::isupper(c);
            word.push_back(static_cast<char>(c));
        } else {
            flush();
        }
    }
    flush();
    // Quoted spans kept as phrase keywords.
    for (char quote : {'"', '\''}) {
        size_t pos = 0;
        while (true) {
            size_t open = s.find(quote, pos);
            if (open == std::string::npos) break;
            size_t close = s.find(quote, open + 1);
            if (close == std::string::npos) break;
            std::string span = trim(s.substr(open + 1, close - open - 1));
            if (span.size() >= 2 && span.size() <= 60 &&
                span.find(' ') != std::string::npos) {
                out.insert(to_lower(span));
            }
            pos = close + 1;
        }
    }
    return out;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

bool parse_timestamp(const std::string& s, Timestamp& out) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    int n = std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &se);
    if (n != 6) {
        h = mi = se = 0;
        n = std::sscanf(s.c_str(), "%d-%d-%d", &y, &mo, &d);
        if (n != 3) return false;
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 ||
        se < 0 || se > 60) {
        return false;
    }
    std::tm tm{};
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = se;
    out = static_cast<Timestamp>(timegm(&tm));
    return true;
}

std::string format_timestamp(Timestamp t) {
    std::time_t tt = static_cast<std::time_t>(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::string format_date(Timestamp t) {
    return format_timestamp(t).substr(0, 10);
}

double age_days(Timestamp created_at, Timestamp now) {
    double d = static_cast<double>(now - created_at) / 86400.0;
    return d < 0.0 ? 0.0 : d;
}

}  // namespace memex::text
