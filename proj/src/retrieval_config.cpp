#include "memex/retrieval_config.hpp"

#include <algorithm>
#include <cmath>

namespace memex {

const char* to_string(FusionMode m) {
    switch (m) {
        case FusionMode::sum: return "sum";
        case FusionMode::rrf: return "rrf";
        case FusionMode::weighted_sum: return "weighted_sum";
    }
    return "sum";
}

std::optional<FusionMode> fusion_mode_from_string(const std::string& s) {
    if (s == "sum") return FusionMode::sum;
    if (s == "rrf") return FusionMode::rrf;
    if (s == "weighted_sum") return FusionMode::weighted_sum;
    return std::nullopt;
}

const char* to_string(AnswerStyle s) {
    switch (s) {
        case AnswerStyle::concise: return "concise";
        case AnswerStyle::explanatory: return "explanatory";
        case AnswerStyle::verifying: return "verifying";
        case AnswerStyle::inferential: return "inferential";
        case AnswerStyle::strict: return "strict";
        case AnswerStyle::list: return "list";
    }
    return "concise";
}

std::optional<AnswerStyle> answer_style_from_string(const std::string& s) {
    const char* names[] = {"concise", "explanatory", "verifying", "inferential", "strict",
                           "list"};
    for (int i = 0; i < 6; ++i) {
        if (s == names[i]) return static_cast<AnswerStyle>(i);
    }
    return std::nullopt;
}

const char* to_string(VerificationStyle s) {
    return s == VerificationStyle::strict ? "strict" : "multi_candidate";
}

std::optional<VerificationStyle> verification_style_from_string(const std::string& s) {
    if (s == "strict") return VerificationStyle::strict;
    if (s == "multi_candidate") return VerificationStyle::multi_candidate;
    return std::nullopt;
}

bool RetrievalConfig::operator==(const RetrievalConfig& o) const {
    return config_to_json(*this) == config_to_json(o);
}

namespace {

using Kind = ConfigFieldSpec::Kind;

ConfigFieldSpec int_field(const std::string& name, double min, double max,
                          int RetrievalConfig::*member) {
    ConfigFieldSpec f;
    f.name = name;
    f.kind = Kind::integer;
    f.min = min;
    f.max = max;
    f.get = [member](const RetrievalConfig& c) { return json(c.*member); };
    f.set = [member](RetrievalConfig& c, const json& v) {
        if (v.is_number_integer() || (v.is_number_float() &&
                                      std::floor(v.get<double>()) == v.get<double>())) {
            c.*member = static_cast<int>(v.get<double>());
            return true;
        }
        return false;
    };
    return f;
}

ConfigFieldSpec real_field(const std::string& name, double min, double max,
                           double RetrievalConfig::*member) {
    ConfigFieldSpec f;
    f.name = name;
    f.kind = Kind::real;
    f.min = min;
    f.max = max;
    f.get = [member](const RetrievalConfig& c) { return json(c.*member); };
    f.set = [member](RetrievalConfig& c, const json& v) {
        if (v.is_number()) {
            c.*member = v.get<double>();
            return true;
        }
        return false;
    };
    return f;
}

ConfigFieldSpec bool_field(const std::string& name, bool RetrievalConfig::*member) {
    ConfigFieldSpec f;
    f.name = name;
    f.kind = Kind::boolean;
    f.get = [member](const RetrievalConfig& c) { return json(c.*member); };
    f.set = [member](RetrievalConfig& c, const json& v) {
        if (v.is_boolean()) {
            c.*member = v.get<bool>();
            return true;
        }
        return false;
    };
    return f;
}

std::vector<ConfigFieldSpec> build_fields() {
    std::vector<ConfigFieldSpec> fields;

    fields.push_back(int_field("semantic_top_k", 3, 30, &RetrievalConfig::semantic_top_k));
    fields.push_back(int_field("keyword_top_k", 3, 30, &RetrievalConfig::keyword_top_k));
    fields.push_back(
        int_field("structured_top_k", 3, 30, &RetrievalConfig::structured_top_k));
    fields.push_back(int_field("max_context", 6, 30, &RetrievalConfig::max_context));

    fields.push_back(bool_field("enable_semantic_view", &RetrievalConfig::enable_semantic_view));
    fields.push_back(bool_field("enable_keyword_view", &RetrievalConfig::enable_keyword_view));
    fields.push_back(
        bool_field("enable_structured_view", &RetrievalConfig::enable_structured_view));

    {
        ConfigFieldSpec f;
        f.name = "fusion_mode";
        f.kind = Kind::enumeration;
        f.enum_values = {"sum", "rrf", "weighted_sum"};
        f.get = [](const RetrievalConfig& c) { return json(to_string(c.fusion_mode)); };
        f.set = [](RetrievalConfig& c, const json& v) {
            if (!v.is_string()) return false;
            auto m = fusion_mode_from_string(v.get<std::string>());
            if (!m) return false;
            c.fusion_mode = *m;
            return true;
        };
        fields.push_back(std::move(f));
    }

    fields.push_back(real_field("w_sem", 0.1, 2.5, &RetrievalConfig::w_sem));
    fields.push_back(real_field("w_kw", 0.1, 2.5, &RetrievalConfig::w_kw));
    fields.push_back(real_field("w_str", 0.1, 2.5, &RetrievalConfig::w_str));
    fields.push_back(int_field("rrf_k", 1, 100, &RetrievalConfig::rrf_k));
    fields.push_back(
        real_field("importance_weight", 0.0, 2.5, &RetrievalConfig::importance_weight));
    fields.push_back(real_field("recency_weight", 0.0, 2.5, &RetrievalConfig::recency_weight));

    fields.push_back(bool_field("enable_entity_swap", &RetrievalConfig::enable_entity_swap));
    fields.push_back(int_field("swap_topic_top_k", 3, 30, &RetrievalConfig::swap_topic_top_k));
    fields.push_back(int_field("swap_merge_top_k", 3, 30, &RetrievalConfig::swap_merge_top_k));

    fields.push_back(
        bool_field("enable_query_decomposition", &RetrievalConfig::enable_query_decomposition));
    fields.push_back(
        int_field("decomposition_max_subqs", 1, 5, &RetrievalConfig::decomposition_max_subqs));
    fields.push_back(int_field("decomposition_merge_top_k", 3, 30,
                               &RetrievalConfig::decomposition_merge_top_k));

    fields.push_back(int_field("reflection_rounds", 0, 3, &RetrievalConfig::reflection_rounds));

    fields.push_back(
        bool_field("enable_answer_verification", &RetrievalConfig::enable_answer_verification));
    {
        ConfigFieldSpec f;
        f.name = "verification_style";
        f.kind = Kind::enumeration;
        f.enum_values = {"strict", "multi_candidate"};
        f.get = [](const RetrievalConfig& c) { return json(to_string(c.verification_style)); };
        f.set = [](RetrievalConfig& c, const json& v) {
            if (!v.is_string()) return false;
            auto m = verification_style_from_string(v.get<std::string>());
            if (!m) return false;
            c.verification_style = *m;
            return true;
        };
        fields.push_back(std::move(f));
    }
    fields.push_back(real_field("verification_confidence_threshold", 0.0, 1.0,
                                &RetrievalConfig::verification_confidence_threshold));
    {
        ConfigFieldSpec f;
        f.name = "answer_style";
        f.kind = Kind::enumeration;
        f.enum_values = {"concise", "explanatory", "verifying", "inferential", "strict",
                         "list"};
        f.get = [](const RetrievalConfig& c) { return json(to_string(c.answer_style)); };
        f.set = [](RetrievalConfig& c, const json& v) {
            if (!v.is_string()) return false;
            auto m = answer_style_from_string(v.get<std::string>());
            if (!m) return false;
            c.answer_style = *m;
            return true;
        };
        fields.push_back(std::move(f));
    }

    {
        ConfigFieldSpec f;
        f.name = "time_decay_half_life_days";
        f.kind = Kind::optional_real;
        f.min = 0.5;
        f.max = 365.0;
        f.get = [](const RetrievalConfig& c) {
            return c.time_decay_half_life_days ? json(*c.time_decay_half_life_days)
                                               : json(nullptr);
        };
        f.set = [](RetrievalConfig& c, const json& v) {
            if (v.is_null()) {
                c.time_decay_half_life_days.reset();
                return true;
            }
            if (v.is_number()) {
                c.time_decay_half_life_days = v.get<double>();
                return true;
            }
            return false;
        };
        fields.push_back(std::move(f));
    }
    {
        ConfigFieldSpec f;
        f.name = "reference_date";
        f.kind = Kind::optional_date;
        f.get = [](const RetrievalConfig& c) {
            return c.reference_date ? json(*c.reference_date) : json(nullptr);
        };
        f.set = [](RetrievalConfig& c, const json& v) {
            if (v.is_null()) {
                c.reference_date.reset();
                return true;
            }
            if (v.is_string()) {
                Timestamp t;
                if (!text::parse_timestamp(v.get<std::string>(), t)) return false;
                c.reference_date = v.get<std::string>();
                return true;
            }
            return false;
        };
        fields.push_back(std::move(f));
    }
    return fields;
}

}  // namespace

const std::vector<ConfigFieldSpec>& config_fields() {
    static const std::vector<ConfigFieldSpec> kFields = build_fields();
    return kFields;
}

const ConfigFieldSpec* find_config_field(const std::string& name) {
    for (const auto& f : config_fields()) {
        if (f.name == name) return &f;
    }
    return nullptr;
}

json config_to_json(const RetrievalConfig& cfg) {
    json j = json::object();
    for (const auto& f : config_fields()) j[f.name] = f.get(cfg);
    json overrides = json::object();
    for (const auto& [cat, partial] : cfg.per_category_overrides) overrides[cat] = partial;
    j["per_category_overrides"] = std::move(overrides);
    return j;
}

RetrievalConfig config_from_json(const json& j) {
    RetrievalConfig cfg;
    if (!j.is_object()) throw std::runtime_error("config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "per_category_overrides") {
            if (!it.value().is_object())
                throw std::runtime_error("per_category_overrides must be an object");
            for (auto cat = it.value().begin(); cat != it.value().end(); ++cat) {
                if (!cat.value().is_object())
                    throw std::runtime_error("per_category_overrides." + cat.key() +
                                             " must be an object");
                for (auto f = cat.value().begin(); f != cat.value().end(); ++f) {
                    if (!find_config_field(f.key()))
                        throw std::runtime_error("unknown config field in override: " +
                                                 f.key());
                }
                cfg.per_category_overrides[cat.key()] = cat.value();
            }
            continue;
        }
        const ConfigFieldSpec* spec = find_config_field(it.key());
        if (!spec) throw std::runtime_error("unknown config field: " + it.key());
        if (!spec->set(cfg, it.value()))
            throw std::runtime_error("bad value for config field " + it.key() + ": " +
                                     it.value().dump());
    }
    return clamp_config(cfg);
}

namespace {

json clamp_value(const ConfigFieldSpec& f, const json& v) {
    switch (f.kind) {
        case Kind::integer: {
            double x = v.get<double>();
            x = std::clamp(x, f.min, f.max);
            return json(static_cast<int>(std::llround(x)));
        }
        case Kind::real: {
            double x = std::clamp(v.get<double>(), f.min, f.max);
            return json(x);
        }
        case Kind::optional_real: {
            if (v.is_null()) return v;
            double x = std::clamp(v.get<double>(), f.min, f.max);
            return json(x);
        }
        default:
            return v;
    }
}

}  // namespace

RetrievalConfig clamp_config(const RetrievalConfig& cfg) {
    RetrievalConfig out = cfg;
    for (const auto& f : config_fields()) {
        switch (f.kind) {
            case Kind::integer:
            case Kind::real:
            case Kind::optional_real:
                f.set(out, clamp_value(f, f.get(out)));
                break;
            default:
                break;  // bools, enums and dates carry no numeric range
        }
    }
    // Clamp override values recursively; drop entries that are not valid
    // fields or carry unusable values (an invalid enum override falls back to
    // the incumbent global value by simply not overriding it).
    std::map<std::string, json> overrides;
    for (const auto& [cat, partial] : cfg.per_category_overrides) {
        if (!partial.is_object()) continue;
        json cleaned = json::object();
        for (auto it = partial.begin(); it != partial.end(); ++it) {
            const ConfigFieldSpec* spec = find_config_field(it.key());
            if (!spec) continue;
            RetrievalConfig probe = out;
            if (!spec->set(probe, it.value())) continue;
            switch (spec->kind) {
                case Kind::integer:
                case Kind::real:
                case Kind::optional_real:
                    cleaned[it.key()] = clamp_value(*spec, it.value());
                    break;
                default:
                    cleaned[it.key()] = it.value();
                    break;
            }
        }
        if (!cleaned.empty()) overrides[cat] = std::move(cleaned);
    }
    out.per_category_overrides = std::move(overrides);
    return out;
}

ApplyStatus apply_config_field(RetrievalConfig& cfg, const std::string& name,
                               const json& value) {
    const ConfigFieldSpec* spec = find_config_field(name);
    if (!spec) return ApplyStatus::unknown_field;
    if (!spec->set(cfg, value)) return ApplyStatus::type_mismatch;
    return ApplyStatus::applied;
}

DeltaOutcome apply_delta(const RetrievalConfig& cfg,
                         const std::map<std::string, json>& parameter_suggestions,
                         const std::map<std::string, json>& per_category_proposals) {
    DeltaOutcome out;
    out.config = cfg;
    for (const auto& [name, value] : parameter_suggestions) {
        switch (apply_config_field(out.config, name, value)) {
            case ApplyStatus::applied:
                break;
            case ApplyStatus::unknown_field:
                out.unknown_fields.push_back(name);
                break;
            case ApplyStatus::type_mismatch:
                out.rejected_fields.push_back(name);
                break;
        }
    }
    for (const auto& [cat, partial] : per_category_proposals) {
        if (!partial.is_object()) continue;
        json& target = out.config.per_category_overrides[cat];
        if (!target.is_object()) target = json::object();
        for (auto it = partial.begin(); it != partial.end(); ++it) {
            if (!find_config_field(it.key())) {
                out.unknown_fields.push_back(cat + "." + it.key());
                continue;
            }
            target[it.key()] = it.value();
        }
        if (target.empty()) out.config.per_category_overrides.erase(cat);
    }
    out.config = clamp_config(out.config);
    return out;
}

RetrievalConfig perturb_config(const RetrievalConfig& cfg, double scale,
                               std::mt19937_64& rng) {
    if (scale == 0.0) return cfg;
    RetrievalConfig out = cfg;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    for (const auto& f : config_fields()) {
        if (f.kind == Kind::integer || f.kind == Kind::real) {
            if (coin(rng) >= 0.3) continue;
            double width = f.max - f.min;
            double delta = unit(rng) * scale * width;
            json cur = f.get(out);
            f.set(out, json(cur.get<double>() + delta));
        } else if (f.kind == Kind::optional_real) {
            // null stays null under exploration; only diagnosis enables it
            json cur = f.get(out);
            if (cur.is_null()) continue;
            if (coin(rng) >= 0.3) continue;
            double width = f.max - f.min;
            f.set(out, json(cur.get<double>() + unit(rng) * scale * width));
        }
    }
    if (coin(rng) < 0.3) {
        std::vector<const ConfigFieldSpec*> enums;
        for (const auto& f : config_fields()) {
            if (f.kind == Kind::enumeration) enums.push_back(&f);
        }
        if (!enums.empty()) {
            std::uniform_int_distribution<size_t> pick(0, enums.size() - 1);
            const ConfigFieldSpec* f = enums[pick(rng)];
            std::uniform_int_distribution<size_t> val(0, f->enum_values.size() - 1);
            f->set(out, json(f->enum_values[val(rng)]));
        }
    }
    return clamp_config(out);
}

RetrievalConfig effective_config(const RetrievalConfig& cfg, const std::string& category) {
    auto it = cfg.per_category_overrides.find(category);
    if (category.empty() || it == cfg.per_category_overrides.end()) return cfg;
    RetrievalConfig out = cfg;
    const json& partial = it->second;
    if (partial.is_object()) {
        for (auto f = partial.begin(); f != partial.end(); ++f) {
            apply_config_field(out, f.key(), f.value());
        }
    }
    return clamp_config(out);
}

}  // namespace memex
