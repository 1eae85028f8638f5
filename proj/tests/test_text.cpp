#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "memex/text.hpp"

using namespace memex;

TEST_CASE("tokenize lowers and splits on non-alphanumerics") {
    CHECK(text::tokenize("The Cat! sat-on 2 mats") ==
          std::vector<std::string>{"the", "cat", "sat", "on", "2", "mats"});
    CHECK(text::tokenize("").empty());
    CHECK(text::tokenize("...").empty());
}

TEST_CASE("normalize_content collapses whitespace and strips terminal punctuation") {
    CHECK(text::normalize_content("  Apples   are RED!! ") == "apples are red");
    CHECK(text::normalize_content("done.") == "done");
    CHECK(text::normalize_content("") == "");
}

TEST_CASE("jaccard") {
    CHECK(text::jaccard("a b c", "b c d") == doctest::Approx(0.5));
    CHECK(text::jaccard("same text", "same text") == doctest::Approx(1.0));
    CHECK(text::jaccard("alpha", "beta") == doctest::Approx(0.0));
    CHECK(text::jaccard("", "") == doctest::Approx(1.0));
}

TEST_CASE("reference keywords pick capitalized tokens, numerals and quoted spans") {
    auto kws = text::reference_keywords(
        "Melanie went camping near Lake Tahoe in 2019 and read \"War and Peace\" there.");
    CHECK(kws.count("melanie") == 1);
    CHECK(kws.count("lake") == 1);
    CHECK(kws.count("tahoe") == 1);
    CHECK(kws.count("2019") == 1);
    CHECK(kws.count("war and peace") == 1);
    CHECK(kws.count("the") == 0);   // stopword
    CHECK(kws.count("there") == 0); // lowercase
}

TEST_CASE("timestamp round trip") {
    text::Timestamp t = 0;
    REQUIRE(text::parse_timestamp("2023-05-01T10:20:30Z", t));
    CHECK(text::format_timestamp(t) == "2023-05-01T10:20:30Z");
    REQUIRE(text::parse_timestamp("2023-05-01", t));
    CHECK(text::format_timestamp(t) == "2023-05-01T00:00:00Z");
    CHECK(text::format_date(t) == "2023-05-01");
    CHECK_FALSE(text::parse_timestamp("not a date", t));
    CHECK_FALSE(text::parse_timestamp("2023-13-40", t));
}

TEST_CASE("age_days is non-negative") {
    text::Timestamp a = 0, b = 0;
    text::parse_timestamp("2023-05-01", a);
    text::parse_timestamp("2023-05-03", b);
    CHECK(text::age_days(a, b) == doctest::Approx(2.0));
    CHECK(text::age_days(b, a) == doctest::Approx(0.0));
}
