#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace memex::text {

/// Lowercase and split on runs of non-alphanumeric characters.
std::vector<std::string> tokenize(const std::string& s);

std::string to_lower(std::string s);
std::string trim(const std::string& s);

/// Dedup key normalization: lowercase, collapse whitespace, strip terminal punctuation.
std::string normalize_content(const std::string& s);

/// Token-set Jaccard similarity. J(empty, empty) = 1 by convention.
double jaccard(const std::string& a, const std::string& b);

bool is_stopword(const std::string& lower_token);

/// Salient keywords of a text span: capitalized multi-char tokens, quoted
/// spans, and numerals, with stop-words removed. Returned lowercased.
std::set<std::string> reference_keywords(const std::string& s);

std::string join(const std::vector<std::string>& parts, const std::string& sep);

// --- timestamps (unix seconds, UTC) ---
using Timestamp = std::int64_t;

/// Accepts "YYYY-MM-DD" (midnight) or "YYYY-MM-DDTHH:MM:SS" with optional "Z".
/// Returns false on malformed input.
bool parse_timestamp(const std::string& s, Timestamp& out);

/// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_timestamp(Timestamp t);

/// "YYYY-MM-DD"
std::string format_date(Timestamp t);

double age_days(Timestamp created_at, Timestamp now);

}  // namespace memex::text
