// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <string>

#include "dfr/tokens.hpp"
#include "support.hpp"

using namespace dfr;

TEST_SUITE("tokens") {

TEST_CASE("empty text estimates to zero") { CHECK(estimate_tokens("") == 0); }

TEST_CASE("estimate is deterministic") {
    std::string text = testing::read_file(testing::fixture_dir() / "calibration.Dockerfile");
    CHECK(estimate_tokens(text) == estimate_tokens(text));
}

TEST_CASE("estimate doubles under whitespace-delimited self-concatenation") {
    const char* samples[] = {
        "FROM alpine:3.19",
        "RUN apt-get update && apt-get install -y curl",
        "COPY --from=build /app/dist /srv",
        "a",
        "supercalifragilistic",
    };
    for (const char* t : samples) {
        std::string text(t);
        int once = estimate_tokens(text);
        CHECK(estimate_tokens(text + "\n" + text) == 2 * once);
        CHECK(estimate_tokens(text + " " + text) == 2 * once);
    }
}

TEST_CASE("estimate never falls below a quarter of the word count") {
    for (const auto& path : testing::corpus_files()) {
        std::string text = testing::read_file(path);
        int words = 0;
        bool in_word = false;
        for (char c : text) {
            bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
            if (!space && !in_word) ++words;
            in_word = !space;
        }
        CAPTURE(path.string());
        CHECK(estimate_tokens(text) * 4 >= words);
    }
}

TEST_CASE("calibration Dockerfile lands within 15% of its 1200-token reference") {
    std::string text = testing::read_file(testing::fixture_dir() / "calibration.Dockerfile");
    int estimate = estimate_tokens(text);
    CHECK(estimate >= 1020);
    CHECK(estimate <= 1380);
}

TEST_CASE("retrieval tokens keep image references and flags whole") {
    auto tokens = retrieval_tokens("FROM node:9.11-slim AS build");
    REQUIRE(tokens.size() == 4);
    CHECK(tokens[0] == "from");
    CHECK(tokens[1] == "node:9.11-slim");
    CHECK(tokens[2] == "as");
    CHECK(tokens[3] == "build");

    auto copy = retrieval_tokens("COPY --from=build /app/dist ./dist");
    REQUIRE(copy.size() == 4);
    CHECK(copy[1] == "from=build");
    CHECK(copy[2] == "app/dist");
    CHECK(copy[3] == "dist");
}

TEST_CASE("retrieval tokens strip punctuation and lowercase") {
    auto tokens = retrieval_tokens("RUN echo \"Hello, World!\"");
    REQUIRE(tokens.size() == 4);
    CHECK(tokens[2] == "hello");
    CHECK(tokens[3] == "world");
    CHECK(retrieval_tokens("[\"node\", \"app.js\"]") ==
          std::vector<std::string>{"node", "app.js"});
    CHECK(retrieval_tokens("   \t\n").empty());
}

}  // TEST_SUITE
