#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "memex/answering.hpp"

using namespace memex;

namespace {

const PromptLibrary& prompts() {
    static PromptLibrary lib = PromptLibrary::load(MEMEX_PROMPTS_DIR);
    return lib;
}

Timestamp ts(const std::string& s) {
    Timestamp t = 0;
    REQUIRE(text::parse_timestamp(s, t));
    return t;
}

std::vector<MemoryUnit> tiny_context() {
    MemoryUnit u;
    u.memory_id = "m1";
    u.scope = *Scope::parse("user:u|workspace:w");
    u.memory_type = MemoryType::episodic;
    u.content = "The trip was to Paris in 2019";
    u.created_at = ts("2023-05-01");
    u.updated_at = u.created_at;
    return {u};
}

StubGateway stub_for(const std::string& rules) {
    return StubGateway(StubScript::from_json(json::parse(rules)));
}

}  // namespace

TEST_CASE("unknown-answer class membership") {
    CHECK(is_unknown_answer("unknown"));
    CHECK(is_unknown_answer("Unknown."));
    CHECK(is_unknown_answer(" Not Specified "));
    CHECK(is_unknown_answer("not mentioned"));
    CHECK(is_unknown_answer(""));
    CHECK_FALSE(is_unknown_answer("Paris"));
}

TEST_CASE("context rendering") {
    auto ctx = tiny_context();
    std::string rendered = render_context(ctx);
    CHECK(rendered == "[1] (episodic, 2023-05-01) The trip was to Paris in 2019\n");
    CHECK(render_context({}).empty());
}

TEST_CASE("generate_answer parses the JSON contract") {
    SUBCASE("clean parse with default confidence") {
        auto stub = stub_for(
            R"({"rules":[{"match":"","responses":["{\"reasoning\":\"r\",\"answer\":\"Paris\"}"]}]})");
        auto res = generate_answer("Where was the trip?", "", std::nullopt, tiny_context(),
                                   AnswerStyle::concise, stub, prompts());
        CHECK(res.answer == "Paris");
        CHECK(res.confidence == doctest::Approx(0.5));
        CHECK_FALSE(res.failed);
    }
    SUBCASE("prose answer triggers the repair reprompt") {
        auto stub = stub_for(R"({"rules":[
          {"match":"not valid JSON","responses":["{\"reasoning\":\"r\",\"answer\":\"Paris\"}"]},
          {"match":"","responses":["The answer is Paris, obviously."]}
        ]})");
        auto res = generate_answer("Where was the trip?", "", std::nullopt, tiny_context(),
                                   AnswerStyle::concise, stub, prompts());
        CHECK(res.answer == "Paris");
    }
    SUBCASE("both passes unparseable -> unknown sentinel") {
        auto stub = stub_for(R"({"rules":[{"match":"","responses":["still prose"]}]})");
        auto res = generate_answer("Where?", "", std::nullopt, tiny_context(),
                                   AnswerStyle::concise, stub, prompts());
        CHECK(res.answer == "unknown");
        CHECK(res.confidence == 0.0);
        CHECK(res.failed);
    }
    SUBCASE("explicit confidence is honored") {
        auto stub = stub_for(
            R"({"rules":[{"match":"","responses":["{\"answer\":\"Rome\",\"confidence\":0.9}"]}]})");
        auto res = generate_answer("Where?", "", std::nullopt, tiny_context(),
                                   AnswerStyle::concise, stub, prompts());
        CHECK(res.confidence == doctest::Approx(0.9));
    }
}

TEST_CASE("MCQ answers are constrained to a single letter") {
    std::array<std::string, 4> options = {"red", "green", "blue", "yellow"};
    SUBCASE("verbose letter answers reduce to the letter") {
        auto stub = stub_for(
            R"({"rules":[{"match":"","responses":["{\"reasoning\":\"r\",\"answer\":\"Answer: b)\"}"]}]})");
        auto res = generate_answer("Pick one", "simple", options, tiny_context(),
                                   AnswerStyle::concise, stub, prompts());
        CHECK(res.answer == "B");
    }
    SUBCASE("no letter found -> unknown") {
        auto stub = stub_for(
            R"({"rules":[{"match":"","responses":["{\"reasoning\":\"r\",\"answer\":\"the green one\"}"]}]})");
        auto res = generate_answer("Pick one", "simple", options, tiny_context(),
                                   AnswerStyle::concise, stub, prompts());
        CHECK(res.answer == "unknown");
    }
    SUBCASE("mcq template carries the options") {
        auto stub = stub_for(
            R"({"rules":[{"match":"yellow","responses":["{\"answer\":\"D\"}"]},
                          {"match":"","responses":["{\"answer\":\"A\"}"]}]})");
        auto res = generate_answer("Pick one", "simple", options, tiny_context(),
                                   AnswerStyle::concise, stub, prompts());
        CHECK(res.answer == "D");
    }
}

TEST_CASE("category routing picks the adversarial and inferential branches") {
    SUBCASE("category 5 routes to the adversarial template") {
        auto stub = stub_for(R"({"rules":[
          {"match":"deliberately swap person names","responses":["{\"answer\":\"swap-route\"}"]},
          {"match":"","responses":["{\"answer\":\"default-route\"}"]}
        ]})");
        auto res = generate_answer("Did Melanie go?", "5", std::nullopt, tiny_context(),
                                   AnswerStyle::concise, stub, prompts());
        CHECK(res.answer == "swap-route");
    }
    SUBCASE("category 3 routes to the inferential template") {
        auto stub = stub_for(R"({"rules":[
          {"match":"INFERENCE or COUNTERFACTUAL","responses":["{\"answer\":\"inf-route\"}"]},
          {"match":"","responses":["{\"answer\":\"default-route\"}"]}
        ]})");
        auto res = generate_answer("Would Melanie enjoy sailing?", "3", std::nullopt,
                                   tiny_context(), AnswerStyle::concise, stub, prompts());
        CHECK(res.answer == "inf-route");
    }
    SUBCASE("unrouted categories use the configured style") {
        auto stub = stub_for(R"({"rules":[
          {"match":"enumerate ALL matching items","responses":["{\"answer\":\"list-route\"}"]},
          {"match":"","responses":["{\"answer\":\"default-route\"}"]}
        ]})");
        auto res = generate_answer("Which hobbies?", "4", std::nullopt, tiny_context(),
                                   AnswerStyle::list, stub, prompts());
        CHECK(res.answer == "list-route");
    }
}

TEST_CASE("verify_answer gating") {
    RetrievalConfig cfg;
    cfg.enable_answer_verification = true;

    AnswerResult unknown_candidate;
    unknown_candidate.answer = "Unknown";
    unknown_candidate.confidence = 0.9;

    SUBCASE("Unknown answers are replaced") {
        auto stub = stub_for(
            R"({"rules":[{"match":"Candidate answer","responses":["{\"reasoning\":\"r\",\"answer\":\"2019\"}"]}]})");
        auto res = verify_answer("When was the trip?", tiny_context(), unknown_candidate,
                                 cfg, stub, prompts());
        CHECK(res.answer == "2019");
        CHECK(res.verified);
    }
    SUBCASE("confident non-unknown candidates skip verification") {
        AnswerResult confident;
        confident.answer = "Paris";
        confident.confidence = 0.9;
        auto stub = stub_for(
            R"({"rules":[{"match":"","responses":["{\"answer\":\"SHOULD NOT RUN\"}"]}]})");
        auto res = verify_answer("Where?", tiny_context(), confident, cfg, stub, prompts());
        CHECK(res.answer == "Paris");
        CHECK_FALSE(res.verified);
    }
    SUBCASE("low confidence triggers verification") {
        AnswerResult hesitant;
        hesitant.answer = "Paris";
        hesitant.confidence = 0.3;  // below the 0.6 default threshold
        auto stub = stub_for(
            R"({"rules":[{"match":"","responses":["{\"answer\":\"Paris, France\"}"]}]})");
        auto res = verify_answer("Where?", tiny_context(), hesitant, cfg, stub, prompts());
        CHECK(res.answer == "Paris, France");
        CHECK(res.verified);
    }
    SUBCASE("gateway failure returns the candidate unchanged") {
        auto stub = stub_for(
            R"({"rules":[{"match":"","responses":["x"],"fail_n_times":99}]})");
        auto res = verify_answer("When?", tiny_context(), unknown_candidate, cfg, stub,
                                 prompts());
        CHECK(res.answer == "Unknown");
        CHECK_FALSE(res.verified);
    }
    SUBCASE("multi_candidate style uses its template") {
        RetrievalConfig multi = cfg;
        multi.verification_style = VerificationStyle::multi_candidate;
        auto stub = stub_for(R"({"rules":[
          {"match":"Consider 2-3 candidate answers","responses":["{\"answer\":\"via-multi\"}"]},
          {"match":"","responses":["{\"answer\":\"via-strict\"}"]}
        ]})");
        auto res = verify_answer("When?", tiny_context(), unknown_candidate, multi, stub,
                                 prompts());
        CHECK(res.answer == "via-multi");
    }
}

TEST_CASE("answer_question end to end") {
    SqliteMemoryStore store;
    HashingEmbedder embedder;
    MemoryUnit u;
    u.memory_id = "m1";
    u.scope = *Scope::parse("user:u|workspace:w");
    u.memory_type = MemoryType::episodic;
    u.content = "Melanie roasted marshmallows while camping";
    u.created_at = ts("2023-05-01");
    u.updated_at = u.created_at;
    store.put(u);
    auto index = build_index(store, *Scope::parse("user:u|workspace:w"));

    SUBCASE("deterministic answer and sources") {
        RetrievalConfig cfg;
        auto stub = stub_for(
            R"({"rules":[{"match":"","responses":["{\"reasoning\":\"r\",\"answer\":\"roasted marshmallows\"}"]}]})");
        auto outcome = answer_question("What did Melanie roast while camping?", "", std::nullopt,
                                       index, cfg, stub, prompts(), embedder,
                                       ts("2023-06-01"));
        CHECK(outcome.result.answer == "roasted marshmallows");
        REQUIRE(outcome.retrieval.candidates.size() == 1);
        CHECK(outcome.retrieval.candidates[0].memory_id == "m1");
        CHECK_FALSE(outcome.result.verified);
    }
    SUBCASE("verification off means verified stays false even for Unknown") {
        RetrievalConfig cfg;
        auto stub = stub_for(
            R"({"rules":[{"match":"","responses":["{\"answer\":\"unknown\"}"]}]})");
        auto outcome = answer_question("What?", "", std::nullopt, index, cfg, stub,
                                       prompts(), embedder, ts("2023-06-01"));
        CHECK_FALSE(outcome.result.verified);
    }
    SUBCASE("empty store still generates with an empty context block") {
        SqliteMemoryStore empty_store;
        auto empty_index = build_index(empty_store, *Scope::parse("user:u|workspace:w"));
        RetrievalConfig cfg;
        auto stub = stub_for(
            R"({"rules":[{"match":"","responses":["{\"answer\":\"nothing stored\"}"]}]})");
        auto outcome = answer_question("What?", "", std::nullopt, empty_index, cfg, stub,
                                       prompts(), embedder, ts("2023-06-01"));
        CHECK(outcome.result.answer == "nothing stored");
        CHECK(outcome.retrieval.context.empty());
    }
    SUBCASE("reflection rounds follow a follow_up_query emitted by the model") {
        RetrievalConfig cfg;
        cfg.reflection_rounds = 1;
        auto stub = stub_for(R"({"rules":[
           {"match":"What did Melanie roast","responses":[
              "{\"answer\":\"let me look again\",\"follow_up_query\":\"marshmallows camping\"}",
              "{\"answer\":\"marshmallows\"}"]}
        ]})");
        auto outcome = answer_question("What did Melanie roast?", "", std::nullopt, index,
                                       cfg, stub, prompts(), embedder, ts("2023-06-01"));
        CHECK(outcome.result.answer == "marshmallows");
    }
}
