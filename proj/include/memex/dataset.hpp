#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "memex/extraction.hpp"
#include "memex/types.hpp"

namespace memex {

enum class BenchmarkKind { free_text, mcq };
const char* to_string(BenchmarkKind k);

struct QaItem {
    std::string question_id;
    std::string question;
    std::string reference;
    std::string category;
    std::optional<std::array<std::string, 4>> options;  // present for MCQ items
};

struct DatasetSample {
    std::string sample_id;
    std::vector<Session> sessions;
    std::vector<QaItem> qa;
};

struct Dataset {
    std::string name;
    BenchmarkKind kind = BenchmarkKind::free_text;
    std::vector<DatasetSample> samples;
};

/// Accepts the documented toy schema ({name, samples:[{sample_id, sessions,
/// qa}]}), a bare sample list, a single sample object, and conversation-dict
/// samples using session_<N>/session_<N>_date_time keys.
Dataset load_dataset(const json& j);
Dataset load_dataset_file(const std::string& path);

/// QA-only file ({qa:[...]} or a bare array); merged into single-sample runs.
std::vector<QaItem> load_qa_file(const std::string& path);

}  // namespace memex
