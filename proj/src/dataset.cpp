#include "memex/dataset.hpp"

#include <fstream>

namespace memex {

const char* to_string(BenchmarkKind k) {
    return k == BenchmarkKind::mcq ? "mcq" : "free_text";
}

namespace {

QaItem qa_from_json(const json& q, size_t index) {
    QaItem item;
    item.question_id = q.value("question_id", "q" + std::to_string(index));
    item.question = q.at("question").get<std::string>();
    if (q.contains("answer")) {
        const json& a = q["answer"];
        item.reference = a.is_string() ? a.get<std::string>() : a.dump();
    }
    if (q.contains("category")) {
        const json& c = q["category"];
        item.category = c.is_string() ? c.get<std::string>() : c.dump();
    }
    const char* option_keys[] = {"options", "choices"};
    for (const char* key : option_keys) {
        if (q.contains(key) && q[key].is_array() && q[key].size() == 4) {
            std::array<std::string, 4> opts;
            for (size_t i = 0; i < 4; ++i) opts[i] = q[key][i].get<std::string>();
            item.options = opts;
            break;
        }
    }
    return item;
}

std::vector<Turn> turns_from_json(const json& arr) {
    std::vector<Turn> turns;
    for (const auto& t : arr) {
        Turn turn;
        if (t.is_object()) {
            turn.speaker = t.value("speaker", "speaker");
            turn.text = t.value("text", t.value("clean_text", ""));
        } else if (t.is_string()) {
            turn.speaker = "speaker";
            turn.text = t.get<std::string>();
        }
        if (!turn.text.empty()) turns.push_back(std::move(turn));
    }
    return turns;
}

DatasetSample sample_from_json(const json& s, size_t index) {
    DatasetSample sample;
    sample.sample_id = s.value("sample_id", "sample-" + std::to_string(index));

    if (s.contains("sessions") && s["sessions"].is_array()) {
        for (const auto& sess : s["sessions"]) {
            Session session;
            session.session_id =
                sess.value("session_id", "session-" + std::to_string(sample.sessions.size()));
            session.date = sess.value("date", "");
            session.turns = turns_from_json(sess.value("turns", json::array()));
            sample.sessions.push_back(std::move(session));
        }
    } else if (s.contains("conversation") && s["conversation"].is_object()) {
        // conversation dict: session_1, session_1_date_time, session_2, ...
        const json& conv = s["conversation"];
        for (int n = 1;; ++n) {
            std::string key = "session_" + std::to_string(n);
            if (!conv.contains(key)) break;
            Session session;
            session.session_id = key;
            std::string date_key = key + "_date_time";
            if (conv.contains(date_key) && conv[date_key].is_string()) {
                session.date = conv[date_key].get<std::string>().substr(0, 10);
            }
            session.turns = turns_from_json(conv[key]);
            sample.sessions.push_back(std::move(session));
        }
    }

    size_t qi = 0;
    for (const auto& q : s.value("qa", json::array())) {
        sample.qa.push_back(qa_from_json(q, qi++));
    }
    return sample;
}

}  // namespace

Dataset load_dataset(const json& j) {
    Dataset ds;
    json samples = json::array();
    if (j.is_array()) {
        samples = j;
        ds.name = "dataset";
    } else if (j.is_object() && j.contains("samples")) {
        samples = j["samples"];
        ds.name = j.value("name", "dataset");
    } else if (j.is_object()) {
        samples.push_back(j);
        ds.name = j.value("name", "dataset");
    } else {
        throw std::runtime_error("dataset must be an object or array");
    }
    size_t i = 0;
    for (const auto& s : samples) ds.samples.push_back(sample_from_json(s, i++));

    bool all_mcq = !ds.samples.empty();
    for (const auto& s : ds.samples) {
        for (const auto& q : s.qa) {
            if (!q.options) {
                all_mcq = false;
                break;
            }
        }
        if (s.qa.empty()) all_mcq = false;
    }
    ds.kind = all_mcq ? BenchmarkKind::mcq : BenchmarkKind::free_text;
    return ds;
}

Dataset load_dataset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read dataset file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("dataset parse failure in " + path + ": " + e.what());
    }
    return load_dataset(j);
}

std::vector<QaItem> load_qa_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read qa file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("qa parse failure in " + path + ": " + e.what());
    }
    const json& arr = j.is_array() ? j : j.at("qa");
    std::vector<QaItem> out;
    size_t i = 0;
    for (const auto& q : arr) out.push_back(qa_from_json(q, i++));
    return out;
}

}  // namespace memex
