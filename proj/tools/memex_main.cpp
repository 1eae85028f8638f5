#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "memex/answering.hpp"
#include "memex/consolidation.hpp"
#include "memex/dataset.hpp"
#include "memex/evaluation.hpp"
#include "memex/evolution.hpp"
#include "memex/extraction.hpp"
#include "memex/gateway.hpp"
#include "memex/prompts.hpp"
#include "memex/retrieval.hpp"
#include "memex/store.hpp"

namespace fs = std::filesystem;
using namespace memex;

namespace {

constexpr const char* kPinnedEpoch = "2025-01-01T00:00:00Z";

struct CommonOptions {
    std::string backend = "stub";
    std::string stub_script;
    std::string endpoint = "http://localhost:8080/v1";
    std::string model = "gpt-4o";
    std::string prompts_dir = "prompts";
    std::string now_str;
    long seed = -1;
    std::string scope_str = "user:default|workspace:main";
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--backend", opts.backend, "LLM backend: stub | http")
        ->check(CLI::IsMember({"stub", "http"}));
    cmd->add_option("--stub-script", opts.stub_script, "stub script JSON (stub backend)");
    cmd->add_option("--endpoint", opts.endpoint, "chat-completions base URL (http backend)");
    cmd->add_option("--model", opts.model, "model name (http backend)");
    cmd->add_option("--prompts", opts.prompts_dir, "prompt templates directory");
    cmd->add_option("--now", opts.now_str, "pin the engine clock (ISO-8601)");
    cmd->add_option("--seed", opts.seed, "RNG seed; with the stub backend also pins the clock");
    cmd->add_option("--scope", opts.scope_str, "base scope user:<u>|workspace:<w>");
}

struct Runtime {
    std::shared_ptr<Gateway> gateway;
    PromptLibrary prompts;
    Timestamp now = 0;
    std::mt19937_64 rng;
    Scope scope;
};

Runtime make_runtime(const CommonOptions& opts, const std::string& argv0,
                     const std::string& transcript_path = "") {
    Runtime rt{nullptr, PromptLibrary::load(PromptLibrary::resolve_dir(opts.prompts_dir, argv0)),
               0, std::mt19937_64(0), Scope{}};

    if (opts.backend == "stub") {
        if (opts.stub_script.empty())
            throw std::runtime_error("--backend stub requires --stub-script");
        rt.gateway = std::make_shared<StubGateway>(StubScript::from_file(opts.stub_script));
    } else {
        HttpGatewayConfig cfg;
        std::string url = opts.endpoint;
        auto scheme = url.find("://");
        auto path_start = scheme == std::string::npos ? url.find('/')
                                                      : url.find('/', scheme + 3);
        if (path_start != std::string::npos) {
            cfg.base_url = url.substr(0, path_start);
            cfg.path_prefix = url.substr(path_start);
        } else {
            cfg.base_url = url;
            cfg.path_prefix = "";
        }
        cfg.model = opts.model;
        if (const char* key = std::getenv("MEMEX_API_KEY")) cfg.api_key = key;
        rt.gateway = std::make_shared<HttpGateway>(cfg);
    }
    if (!transcript_path.empty()) {
        rt.gateway = std::make_shared<TranscriptingGateway>(rt.gateway, transcript_path);
    }

    if (!opts.now_str.empty()) {
        if (!text::parse_timestamp(opts.now_str, rt.now))
            throw std::runtime_error("bad --now value: " + opts.now_str);
    } else if (opts.backend == "stub" && opts.seed >= 0) {
        // byte-reproducible artifacts need a deterministic clock
        text::parse_timestamp(kPinnedEpoch, rt.now);
    } else {
        rt.now = static_cast<Timestamp>(std::time(nullptr));
    }

    std::uint64_t seed = opts.seed >= 0 ? static_cast<std::uint64_t>(opts.seed)
                                        : std::random_device{}();
    rt.rng.seed(seed);

    auto scope = Scope::parse(opts.scope_str);
    if (!scope) throw std::runtime_error("bad --scope value: " + opts.scope_str);
    rt.scope = *scope;
    return rt;
}

Scope scope_for_sample(const Scope& base, const Dataset& ds, const DatasetSample& sample) {
    Scope s = base.base();
    if (ds.samples.size() > 1) s.workspace = base.workspace + "-" + sample.sample_id;
    return s;
}

RetrievalConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return clamp_config(RetrievalConfig{});
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path);
    json j;
    in >> j;
    return config_from_json(j);
}

int cmd_ingest(const CommonOptions& opts, const std::string& argv0,
               const std::string& dataset_path, const std::string& store_path,
               const std::string& cache_dir) {
    Dataset ds = load_dataset_file(dataset_path);
    Runtime rt = make_runtime(opts, argv0);
    SqliteMemoryStore store(store_path.empty() ? ":memory:" : store_path);
    HashingEmbedder embedder;
    ExtractionConfig extraction;
    if (!cache_dir.empty()) fs::create_directories(cache_dir);

    json per_sample = json::array();
    IngestSummary totals;
    for (const auto& sample : ds.samples) {
        Scope scope = scope_for_sample(rt.scope, ds, sample);
        IngestSummary s = ingest_conversation(sample.sessions, scope, extraction,
                                              *rt.gateway, rt.prompts, store, embedder,
                                              rt.now, rt.rng);
        if (!cache_dir.empty()) {
            std::ofstream cache(fs::path(cache_dir) / (sample.sample_id + ".json"));
            cache << s.cache_json(sample.sample_id, scope).dump(1) << "\n";
        }
        json entry = s.to_json();
        entry["sample_id"] = sample.sample_id;
        per_sample.push_back(std::move(entry));
        totals.windows += s.windows;
        totals.units_extracted += s.units_extracted;
        totals.units_stored += s.units_stored;
        totals.failed_windows += s.failed_windows;
        totals.coverage_gaps += s.coverage_gaps;
    }
    json out;
    out["samples"] = std::move(per_sample);
    out["totals"] = totals.to_json();
    out["store"] = store_path.empty() ? ":memory:" : store_path;
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_consolidate(const CommonOptions& opts, const std::string& store_path) {
    SqliteMemoryStore store(store_path);
    Timestamp now = 0;
    if (!opts.now_str.empty()) {
        if (!text::parse_timestamp(opts.now_str, now))
            throw std::runtime_error("bad --now value");
    } else {
        now = static_cast<Timestamp>(std::time(nullptr));
    }
    auto scope = Scope::parse(opts.scope_str);
    if (!scope) throw std::runtime_error("bad --scope value");
    ConsolidationConfig cfg;
    auto report = consolidate(store, *scope, now, cfg);
    std::cout << report.to_json().dump() << "\n";
    return 0;
}

int cmd_query(const CommonOptions& opts, const std::string& argv0,
              const std::string& store_path, const std::string& query,
              const std::string& config_path, int top_n) {
    if (!fs::exists(store_path)) {
        std::cerr << "store not found: " << store_path << "\n";
        return 1;
    }
    SqliteMemoryStore store(store_path);
    RetrievalConfig cfg = load_config_or_default(config_path);
    Runtime rt = make_runtime(opts, argv0);
    HashingEmbedder embedder;
    RetrievalIndex index = build_index(store, rt.scope);

    Gateway* gw = opts.backend == "stub" && opts.stub_script.empty() ? nullptr
                                                                     : rt.gateway.get();
    RetrievalResult result =
        retrieve(query, "", index, cfg, gw, &rt.prompts, embedder, rt.now);
    int printed = 0;
    for (const auto& c : result.candidates) {
        if (printed++ >= top_n) break;
        json line = c.to_json();
        const MemoryUnit* u = index.unit_by_id(c.memory_id);
        if (u) line["content"] = u->content;
        std::cout << line.dump() << "\n";
    }
    return 0;
}

int cmd_eval(const CommonOptions& opts, const std::string& argv0,
             const std::string& dataset_path, const std::string& qa_path,
             const std::string& store_path, const std::string& config_path,
             const std::string& out_dir) {
    Dataset ds = load_dataset_file(dataset_path);
    if (!qa_path.empty()) {
        if (ds.samples.size() != 1)
            throw std::runtime_error("--qa requires a single-sample dataset");
        ds.samples[0].qa = load_qa_file(qa_path);
    }
    fs::create_directories(out_dir);
    Runtime rt = make_runtime(opts, argv0, (fs::path(out_dir) / "transcript.jsonl").string());
    SqliteMemoryStore store(store_path.empty() ? ":memory:" : store_path);
    HashingEmbedder embedder;
    RetrievalConfig cfg = load_config_or_default(config_path);

    ExtractionConfig extraction;
    ConsolidationConfig consolidation;
    if (store.count() == 0) {
        for (const auto& sample : ds.samples) {
            Scope scope = scope_for_sample(rt.scope, ds, sample);
            ingest_conversation(sample.sessions, scope, extraction, *rt.gateway, rt.prompts,
                                store, embedder, rt.now, rt.rng);
            consolidate(store, scope, rt.now, consolidation);
        }
    }

    std::vector<SampleContext> contexts;
    for (const auto& sample : ds.samples) {
        SampleContext ctx;
        ctx.sample_id = sample.sample_id;
        ctx.scope = scope_for_sample(rt.scope, ds, sample);
        ctx.index = build_index(store, ctx.scope);
        ctx.qa = sample.qa;
        contexts.push_back(std::move(ctx));
    }
    EvaluateOptions eval_options;
    eval_options.kind = ds.kind;
    eval_options.log_path = (fs::path(out_dir) / "raw_results.jsonl").string();
    eval_options.consolidation = consolidation;
    RoundOutcome outcome = evaluate_round(contexts, store, cfg, *rt.gateway, rt.prompts,
                                          embedder, rt.now, eval_options);
    std::ofstream summary(fs::path(out_dir) / "round_summary.json");
    summary << outcome.summary.to_json().dump(1) << "\n";
    std::cout << outcome.summary.to_json().dump() << "\n";
    return 0;
}

int cmd_evolve(const CommonOptions& opts, const std::string& argv0,
               const std::string& dataset_path, const std::string& qa_path,
               const std::string& config_path, const std::string& guards_path,
               const std::string& out_dir, int max_rounds, const std::string& mode,
               const std::string& store_path) {
    Dataset ds = load_dataset_file(dataset_path);
    if (!qa_path.empty()) {
        if (ds.samples.size() != 1)
            throw std::runtime_error("--qa requires a single-sample dataset");
        ds.samples[0].qa = load_qa_file(qa_path);
    }
    for (const auto& s : ds.samples) {
        if (s.qa.empty())
            throw std::runtime_error("sample " + s.sample_id + " has no QA items");
    }

    EvolutionOptions options;
    if (!guards_path.empty()) {
        std::ifstream in(guards_path);
        if (!in) throw std::runtime_error("cannot read guards file " + guards_path);
        json g;
        in >> g;
        options.guards.revert_threshold =
            g.value("revert_threshold", options.guards.revert_threshold);
        options.guards.convergence_eps =
            g.value("convergence_eps", options.guards.convergence_eps);
        options.guards.max_rounds = g.value("max_rounds", options.guards.max_rounds);
        options.guards.perturb_scale = g.value("perturb_scale", options.guards.perturb_scale);
    }
    if (max_rounds > 0) options.guards.max_rounds = max_rounds;
    options.diagnosis_mode = mode == "rubric" ? DiagnosisMode::rubric : DiagnosisMode::llm;
    options.benchmark_name = ds.name;
    options.kind = ds.kind;
    options.run_dir = out_dir;

    fs::create_directories(out_dir);
    Runtime rt = make_runtime(opts, argv0, (fs::path(out_dir) / "transcript.jsonl").string());
    options.scope = rt.scope;

    RetrievalConfig theta0 = load_config_or_default(config_path);
    SqliteMemoryStore store(store_path.empty() ? ":memory:" : store_path);
    options.skip_ingest = store.count() > 0;
    HashingEmbedder embedder;

    // Run manifest, written before round 0 and immutable afterwards.
    {
        json manifest;
        manifest["run_id"] = fs::path(out_dir).filename().string();
        manifest["dataset"] = dataset_path;
        manifest["theta0"] = config_path.empty() ? "(default)" : config_path;
        manifest["guards"] = json{{"revert_threshold", options.guards.revert_threshold},
                                  {"convergence_eps", options.guards.convergence_eps},
                                  {"max_rounds", options.guards.max_rounds},
                                  {"perturb_scale", options.guards.perturb_scale}};
        manifest["backend"] = opts.backend;
        manifest["seed"] = opts.seed;
        manifest["engine_version"] = kEngineVersion;
        manifest["created_at"] = text::format_timestamp(rt.now);
        std::ofstream m(fs::path(out_dir) / "manifest.json");
        m << manifest.dump(1) << "\n";
    }

    EvolutionOutcome outcome = run_evolution(ds.samples, theta0, *rt.gateway, rt.prompts,
                                             store, embedder, rt.now, rt.rng, options);

    // Trajectory table on stderr for humans.
    std::fprintf(stderr, "%-6s %-8s %-8s %s\n", "round", "branch", "score", "change");
    double prev = 0.0;
    for (const auto& e : outcome.state.history) {
        std::fprintf(stderr, "%-6d %-8s %-8.4f %+.4f\n", e.round, e.branch.c_str(), e.score,
                     e.round == 0 ? 0.0 : e.score - prev);
        prev = e.score;
    }

    json out;
    out["best_config_path"] = (fs::path(out_dir) / "best_config.json").string();
    out["state_path"] = (fs::path(out_dir) / "state.json").string();
    out["rounds"] = outcome.state.history.size();
    out["best_score"] = outcome.state.best_score;
    out["reason"] = outcome.state.reason;
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_export(const std::string& run_dir, const std::string& what,
               const std::string& out_path) {
    if (!fs::exists(run_dir)) {
        std::cerr << "run directory not found: " << run_dir << "\n";
        return 1;
    }
    if (what == "best-config") {
        fs::path src = fs::path(run_dir) / "best_config.json";
        if (!fs::exists(src)) {
            std::cerr << "missing artifact: " << src << "\n";
            return 1;
        }
        // closure check: the export must load as a theta0 for a new run
        std::ifstream in(src);
        json j;
        in >> j;
        RetrievalConfig cfg = config_from_json(j);
        fs::path dst = out_path.empty() ? src : fs::path(out_path);
        if (dst != src) {
            std::ofstream out(dst);
            out << config_to_json(cfg).dump(1) << "\n";
        }
        std::cout << dst.string() << "\n";
        return 0;
    }
    if (what == "trajectory") {
        fs::path state_path = fs::path(run_dir) / "state.json";
        if (!fs::exists(state_path)) {
            std::cerr << "missing artifact: " << state_path << "\n";
            return 1;
        }
        std::ifstream in(state_path);
        json state;
        in >> state;
        fs::path dst = out_path.empty() ? fs::path(run_dir) / "trajectory.csv"
                                        : fs::path(out_path);
        std::ofstream out(dst);
        out << "round,branch,score\n";
        for (const auto& e : state["history"]) {
            out << e["round"].get<int>() << "," << e["branch"].get<std::string>() << ","
                << e["score"].get<double>() << "\n";
        }
        std::cout << dst.string() << "\n";
        return 0;
    }
    if (what == "transcript") {
        fs::path src = fs::path(run_dir) / "transcript.jsonl";
        if (!fs::exists(src)) {
            std::cerr << "missing artifact: " << src << "\n";
            return 1;
        }
        fs::path dst = out_path.empty() ? src : fs::path(out_path);
        if (dst != src) fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
        std::cout << dst.string() << "\n";
        return 0;
    }
    std::cerr << "unknown export target: " << what << "\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"memex: self-evolving long-term memory engine"};
    app.require_subcommand(1);

    CommonOptions opts;

    std::string dataset_path, qa_path, store_path, config_path, guards_path, out_dir;
    std::string cache_dir;
    std::string query_string, export_what = "best-config", export_out, run_dir;
    std::string diagnosis_mode = "llm";
    int top_n = 10;
    int max_rounds = 0;

    auto* ingest = app.add_subcommand("ingest", "extract a conversation dataset into a store");
    add_common(ingest, opts);
    ingest->add_option("--dataset", dataset_path)->required();
    ingest->add_option("--store", store_path);
    ingest->add_option("--cache", cache_dir, "write per-sample extraction caches here");

    auto* consolidate_cmd =
        app.add_subcommand("consolidate", "dedup, decay and prune a store");
    consolidate_cmd->add_option("--store", store_path)->required();
    consolidate_cmd->add_option("--scope", opts.scope_str);
    consolidate_cmd->add_option("--now", opts.now_str);

    auto* query = app.add_subcommand("query", "rank stored memories for a query");
    add_common(query, opts);
    query->add_option("--store", store_path)->required();
    query->add_option("--query", query_string)->required();
    query->add_option("--config", config_path);
    query->add_option("--top-n", top_n);

    auto* eval = app.add_subcommand("eval", "run one evaluation round");
    add_common(eval, opts);
    eval->add_option("--dataset", dataset_path)->required();
    eval->add_option("--qa", qa_path);
    eval->add_option("--store", store_path);
    eval->add_option("--config", config_path);
    eval->add_option("--out", out_dir)->required();

    auto* evolve = app.add_subcommand("evolve", "run the self-evolution loop");
    add_common(evolve, opts);
    evolve->add_option("--dataset", dataset_path)->required();
    evolve->add_option("--qa", qa_path);
    evolve->add_option("--config", config_path, "theta0 JSON (default: minimal baseline)");
    evolve->add_option("--guards", guards_path, "guard config JSON");
    evolve->add_option("--out", out_dir)->required();
    evolve->add_option("--max-rounds", max_rounds);
    evolve->add_option("--store", store_path);
    evolve->add_option("--diagnosis", diagnosis_mode, "diagnosis mode: llm | rubric")
        ->check(CLI::IsMember({"llm", "rubric"}));

    auto* export_cmd = app.add_subcommand("export", "export run artifacts");
    export_cmd->add_option("--run", run_dir)->required();
    export_cmd->add_option("--what", export_what)
        ->check(CLI::IsMember({"best-config", "trajectory", "transcript"}));
    export_cmd->add_option("--out", export_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed())
            return cmd_ingest(opts, argv[0], dataset_path, store_path, cache_dir);
        if (consolidate_cmd->parsed()) return cmd_consolidate(opts, store_path);
        if (query->parsed())
            return cmd_query(opts, argv[0], store_path, query_string, config_path, top_n);
        if (eval->parsed())
            return cmd_eval(opts, argv[0], dataset_path, qa_path, store_path, config_path,
                            out_dir);
        if (evolve->parsed())
            return cmd_evolve(opts, argv[0], dataset_path, qa_path, config_path, guards_path,
                              out_dir, max_rounds, diagnosis_mode, store_path);
        if (export_cmd->parsed()) return cmd_export(run_dir, export_what, export_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
