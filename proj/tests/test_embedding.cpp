#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "memex/embedding.hpp"

using namespace memex;
using json = nlohmann::json;

namespace {

std::string random_text(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> len(1, 8);
    std::uniform_int_distribution<int> word_len(1, 10);
    std::uniform_int_distribution<int> ch('a', 'z');
    std::string out;
    int words = len(rng);
    for (int w = 0; w < words; ++w) {
        if (w) out.push_back(' ');
        int n = word_len(rng);
        for (int i = 0; i < n; ++i) out.push_back(static_cast<char>(ch(rng)));
    }
    return out;
}

double norm(const EmbeddingVector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("hash_embed determinism and empty input") {
    auto a = hash_embed("apple");
    auto b = hash_embed("apple");
    CHECK(a == b);  // bitwise identical

    auto empty = hash_embed("");
    CHECK(empty.size() == 64);
    CHECK(is_zero_vector(empty));
    auto ws = hash_embed("  \t ");
    CHECK(is_zero_vector(ws));
}

TEST_CASE("hash_embed is order independent across tokens") {
    auto a = hash_embed("apple banana");
    auto b = hash_embed("banana apple");
    CHECK(cosine(a, b) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("golden vectors match the independently generated reference") {
    std::ifstream in(std::string(MEMEX_TEST_DATA_DIR) + "/golden_embeddings.json");
    REQUIRE(in);
    json golden;
    in >> golden;
    REQUIRE(golden.size() == 5);
    for (const auto& item : golden) {
        auto vec = hash_embed(item["text"].get<std::string>(),
                              item["dim"].get<int>());
        auto expected = item["values"].get<std::vector<double>>();
        REQUIRE(vec.size() == expected.size());
        for (size_t i = 0; i < vec.size(); ++i) {
            CHECK(std::fabs(vec[i] - expected[i]) <= 1e-12);
        }
    }
}

TEST_CASE("unit norm for random strings: every non-zero embedding is normalized") {
    std::mt19937_64 rng(7);
    int zero_count = 0;
    for (int i = 0; i < 1000; ++i) {
        auto v = hash_embed(random_text(rng));
        if (is_zero_vector(v)) {
            // opposite-sign hash collisions can cancel exactly; rare
            ++zero_count;
            continue;
        }
        CHECK(std::fabs(norm(v) - 1.0) < 1e-9);
    }
    CHECK(zero_count < 10);
}

TEST_CASE("cosine basics") {
    EmbeddingVector v{0.3, 0.4, 0.5};
    CHECK(cosine(v, v) == doctest::Approx(1.0));
    CHECK(cosine({1, 0}, {0, 1}) == doctest::Approx(0.0));
    double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(cosine({inv_sqrt2, inv_sqrt2}, {1, 0}) == doctest::Approx(0.7071).epsilon(1e-4));
    CHECK(cosine({0, 0}, {1, 1}) == 0.0);
    CHECK_THROWS_AS(cosine({1.0}, {1.0, 2.0}), std::invalid_argument);
}

namespace {

/// Counts backend invocations to pin the batching contract.
class CountingEmbedder : public Embedder {
  public:
    std::string name() const override { return "counting"; }
    int dim() const override { return 4; }
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override {
        ++calls;
        sizes.push_back(texts.size());
        std::vector<EmbeddingVector> out;
        for (const auto& t : texts) out.push_back(hash_embed(t, 4));
        return out;
    }
    int calls = 0;
    std::vector<size_t> sizes;
};

class FlakyEmbedder : public Embedder {
  public:
    std::string name() const override { return "flaky"; }
    int dim() const override { return 4; }
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override {
        if (fail_remaining > 0) {
            --fail_remaining;
            throw std::runtime_error("backend unavailable");
        }
        std::vector<EmbeddingVector> out;
        for (const auto& t : texts) out.push_back(hash_embed(t, 4));
        return out;
    }
    int fail_remaining = 0;
};

}  // namespace

TEST_CASE("embed_batch equals element-wise single embeds") {
    HashingEmbedder hasher(16);
    std::vector<std::string> texts = {"one red apple", "two green pears", "three plums"};
    auto batched = embed_batch(texts, hasher);
    REQUIRE(batched.size() == 3);
    for (size_t i = 0; i < texts.size(); ++i) {
        CHECK(batched[i] == hash_embed(texts[i], 16));
    }
    CHECK(embed_batch({}, hasher).empty());
}

TEST_CASE("embed_batch chunks into batches of 32, order preserved") {
    CountingEmbedder backend;
    std::vector<std::string> texts;
    for (int i = 0; i < 33; ++i) texts.push_back("text " + std::to_string(i));
    auto out = embed_batch(texts, backend, 32);
    CHECK(backend.calls == 2);
    CHECK(backend.sizes == std::vector<size_t>{32, 1});
    REQUIRE(out.size() == 33);
    for (int i = 0; i < 33; ++i) CHECK(out[i] == hash_embed(texts[i], 4));
}

TEST_CASE("embed_batch surfaces per-batch failure with retry count") {
    FlakyEmbedder backend;
    backend.fail_remaining = 100;
    try {
        embed_batch({"a b c"}, backend, 32, 2);
        FAIL("expected failure");
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("batch 0") != std::string::npos);
        CHECK(msg.find("2 retries") != std::string::npos);
    }
    // transient failure recovers within the retry budget
    backend.fail_remaining = 1;
    auto out = embed_batch({"a b c"}, backend, 32, 2);
    CHECK(out.size() == 1);
}
