// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "dfr/ast.hpp"
#include "dfr/errors.hpp"
#include "support.hpp"

using namespace dfr;

TEST_SUITE("ast") {

TEST_CASE("single FROM parses to one stage") {
    DockerfileAst ast = parse("FROM alpine:3.19");
    REQUIRE(ast.stages.size() == 1);
    CHECK(ast.stages[0].base.name == "alpine");
    CHECK(ast.stages[0].base.tag == "3.19");
    CHECK(ast.stages[0].base.registry.empty());
    CHECK(ast.stages[0].alias.empty());
    CHECK(ast.stages[0].instructions.size() == 1);  // the FROM itself
}

TEST_CASE("multi-stage file resolves stage-source flag") {
    std::string text =
        "FROM node:9.11 AS build\n"
        "WORKDIR /app\n"
        "COPY . .\n"
        "RUN npm install && npm run build\n"
        "FROM node:9.11-slim\n"
        "COPY --from=build /app/dist /srv\n"
        "CMD [\"node\", \"/srv/main.js\"]\n";
    DockerfileAst ast = parse(text);
    REQUIRE(ast.stages.size() == 2);
    CHECK(ast.stages[0].alias == "build");
    CHECK(ast.stages[1].base.tag == "9.11-slim");
    const Instruction& copy = ast.stages[1].instructions[1];
    CHECK(copy.kind == InstructionKind::Copy);
    CHECK(copy.flags.at("from") == "build");
    // Round-trip equality.
    CHECK(ast_equal(parse(serialize(ast)), ast));
}

TEST_CASE("unknown instruction keyword raises SyntaxError with line") {
    try {
        parse("RRUN apt-get update");
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& err) {
        CHECK(err.line() == 1);
        CHECK(std::string(err.what()).find("RRUN") != std::string::npos);
    }
}

TEST_CASE("FROM-less file is rejected") {
    CHECK_THROWS_AS(parse("RUN echo hi\n"), SyntaxError);
    CHECK_THROWS_AS(parse(""), SyntaxError);
    CHECK_THROWS_AS(parse("# only a comment\n"), SyntaxError);
}

TEST_CASE("only ARG may precede the first FROM") {
    DockerfileAst ast = parse("ARG TAG=3.19\nFROM alpine:${TAG}\n");
    REQUIRE(ast.global_args.size() == 1);
    CHECK(ast.global_args[0].kind == InstructionKind::Arg);
    CHECK_THROWS_AS(parse("ENV X=1\nFROM alpine\n"), SyntaxError);
}

TEST_CASE("serialize is the identity on unmodified input") {
    std::string t = "FROM alpine:3.19\n";
    CHECK(serialize(parse(t)) == t);
    for (const auto& path : testing::corpus_files()) {
        std::string text = testing::read_file(path);
        CAPTURE(path.string());
        CHECK(serialize(parse(text)) == text);
    }
}

TEST_CASE("round-trip: corpus files reparse to an equal AST") {
    for (const auto& path : testing::corpus_files()) {
        std::string text = testing::read_file(path);
        CAPTURE(path.string());
        DockerfileAst first = parse(text);
        DockerfileAst second = parse(serialize(first));
        CHECK(ast_equal(first, second));
    }
}

TEST_CASE("a tag edit rewrites only the FROM line") {
    std::string text =
        "# pinned base\n"
        "FROM ubuntu:20.04\n"
        "\n"
        "RUN apt-get update\n"
        "CMD [\"bash\"]\n";
    DockerfileAst ast = parse(text);
    ImageRef base = ast.stages[0].base;
    base.tag = "22.04";
    set_stage_base(ast.stages[0], base);
    std::string out = serialize(ast);
    CHECK(out ==
          "# pinned base\n"
          "FROM ubuntu:22.04\n"
          "\n"
          "RUN apt-get update\n"
          "CMD [\"bash\"]\n");
}

TEST_CASE("an inserted stage keeps round-trip equality") {
    DockerfileAst ast = parse(
        "FROM node:18-slim\n"
        "COPY . /app\n"
        "CMD [\"node\", \"/app/index.js\"]\n");
    Stage builder;
    builder.base = parse_image_ref("node:18");
    builder.alias = "deps";
    Instruction from;
    from.kind = InstructionKind::From;
    from.args = {"node:18", "AS", "deps"};
    builder.instructions.push_back(from);
    Instruction run;
    run.kind = InstructionKind::Run;
    run.args = {"npm ci"};
    builder.instructions.push_back(run);
    ast.stages.insert(ast.stages.begin(), builder);
    DockerfileAst reparsed = parse(serialize(ast));
    CHECK(ast_equal(reparsed, ast));
    REQUIRE(reparsed.stages.size() == 2);
    CHECK(reparsed.stages[0].alias == "deps");
}

TEST_CASE("line continuations fold into one logical instruction") {
    std::string text =
        "FROM debian:12\n"
        "RUN apt-get update && \\\n"
        "    apt-get install -y \\\n"
        "        curl \\\n"
        "        git\n";
    DockerfileAst ast = parse(text);
    REQUIRE(ast.stages[0].instructions.size() == 2);
    const Instruction& run = ast.stages[0].instructions[1];
    REQUIRE(run.args.size() == 1);
    CHECK(run.args[0] == "apt-get update && apt-get install -y curl git");
    CHECK(run.span.start_line == 2);
    CHECK(run.span.end_line == 5);
    CHECK(run.raw ==
          "RUN apt-get update && \\\n"
          "    apt-get install -y \\\n"
          "        curl \\\n"
          "        git");
    CHECK(serialize(ast) == text);
}

TEST_CASE("comments are captured with spans, including inside continuations") {
    std::string text =
        "# syntax=docker/dockerfile:1\n"
        "FROM alpine:3.18\n"
        "RUN apk add --no-cache \\\n"
        "    # transport\n"
        "    curl\n"
        "# done\n";
    DockerfileAst ast = parse(text);
    REQUIRE(ast.comments.size() == 3);
    CHECK(ast.comments[0].text == "# syntax=docker/dockerfile:1");
    CHECK(ast.comments[0].span.start_line == 1);
    CHECK(ast.comments[1].text == "    # transport");
    CHECK(ast.comments[1].span.start_line == 4);
    CHECK(ast.comments[2].span.start_line == 6);
    const Instruction& run = ast.stages[0].instructions[1];
    CHECK(run.args[0] == "apk add --no-cache curl");
    CHECK(serialize(ast) == text);
}

TEST_CASE("heredoc payload is captured opaquely and survives round-trip") {
    std::string text =
        "FROM debian:bookworm-slim\n"
        "RUN <<EOT\n"
        "apt-get update\n"
        "apt-get install -y curl\n"
        "EOT\n"
        "CMD [\"bash\"]\n";
    DockerfileAst ast = parse(text);
    REQUIRE(ast.stages[0].instructions.size() == 3);
    const Instruction& run = ast.stages[0].instructions[1];
    CHECK(run.kind == InstructionKind::Run);
    CHECK(run.span.start_line == 2);
    CHECK(run.span.end_line == 5);
    CHECK(run.args[0].find("apt-get install -y curl") != std::string::npos);
    CHECK(serialize(ast) == text);
}

TEST_CASE("flags are split from arguments") {
    DockerfileAst ast = parse(
        "FROM alpine AS a\n"
        "FROM alpine\n"
        "COPY --from=a --chown=app:app /src /dst\n");
    const Instruction& copy = ast.stages[1].instructions[1];
    CHECK(copy.flags.at("from") == "a");
    CHECK(copy.flags.at("chown") == "app:app");
    REQUIRE(copy.args.size() == 2);
    CHECK(copy.args[0] == "/src");
    CHECK(copy.args[1] == "/dst");
}

TEST_CASE("malformed flag is rejected") {
    CHECK_THROWS_AS(parse("FROM alpine\nCOPY --=oops a b\n"), SyntaxError);
}

TEST_CASE("image references decompose into registry, name, tag, digest") {
    ImageRef ref = parse_image_ref("registry.example.com:5000/team/app:1.2");
    CHECK(ref.registry == "registry.example.com:5000");
    CHECK(ref.name == "team/app");
    CHECK(ref.tag == "1.2");
    CHECK(image_ref_string(ref) == "registry.example.com:5000/team/app:1.2");

    ImageRef plain = parse_image_ref("scratch");
    CHECK(plain.name == "scratch");
    CHECK(plain.tag.empty());

    ImageRef digest = parse_image_ref("nginx@sha256:abc123");
    CHECK(digest.name == "nginx");
    CHECK(digest.digest == "sha256:abc123");
    CHECK(image_ref_string(digest) == "nginx@sha256:abc123");

    CHECK_THROWS_AS(parse_image_ref("nginx:1.25@sha256:abc123"), SyntaxError);
}

TEST_CASE("FROM naming a prior stage is a stage reference") {
    DockerfileAst ast = parse(
        "FROM golang:1.21 AS deps\n"
        "RUN go mod download\n"
        "FROM deps AS build\n"
        "RUN go build -o /out/app .\n");
    CHECK(ast.stages[1].base.is_stage_ref());
    CHECK(ast.stages[1].base.stage_alias == "deps");
    CHECK(image_ref_string(ast.stages[1].base) == "deps");
}

TEST_CASE("duplicate stage alias is rejected") {
    CHECK_THROWS_AS(parse("FROM alpine AS a\nFROM debian AS a\n"), SyntaxError);
}

TEST_CASE("stage-source references must point backwards") {
    CHECK_THROWS_AS(parse("FROM alpine AS a\nCOPY --from=a /x /y\n"), SyntaxError);
    CHECK_THROWS_AS(parse("FROM alpine\nCOPY --from=0 /x /y\n"), SyntaxError);
    CHECK_THROWS_AS(
        parse("FROM alpine\nCOPY --from=later /x /y\nFROM debian AS later\n"), SyntaxError);
    // Unknown names are external image references, not errors.
    DockerfileAst ast = parse("FROM alpine\nCOPY --from=nginx:1.25 /etc/nginx /etc/nginx\n");
    CHECK(ast.stages[0].instructions[1].flags.at("from") == "nginx:1.25");
}

TEST_CASE("exec-form tokens decode JSON arrays and wrap shell form") {
    CHECK(exec_form_tokens(R"(["node", "app.js"])") ==
          std::vector<std::string>{"node", "app.js"});
    CHECK(exec_form_tokens("node  app.js") ==
          std::vector<std::string>{"/bin/sh", "-c", "node app.js"});
    // Malformed JSON falls back to shell form, as the engine does.
    CHECK(exec_form_tokens(R"(["node", app.js])") ==
          std::vector<std::string>{"/bin/sh", "-c", R"(["node", app.js])"});
    CHECK(exec_form_tokens("").empty());
}

TEST_CASE("fingerprint extracts context COPY pairs and startup commands") {
    DockerfileAst ast = parse(
        "FROM node:18\n"
        "COPY app /app\n"
        "CMD [\"node\",\"app\"]\n");
    FunctionalFingerprint fp = functional_fingerprint(ast);
    REQUIRE(fp.copy_add_entries.size() == 1);
    CHECK(fp.copy_add_entries.count({"app", "/app"}) == 1);
    CHECK(fp.cmd == std::vector<std::string>{"node", "app"});
    CHECK(fp.entrypoint.empty());
}

TEST_CASE("fingerprint ignores RUN order") {
    DockerfileAst a = parse(
        "FROM alpine\nRUN echo one\nRUN echo two\nCOPY x /x\nCMD [\"/x\"]\n");
    DockerfileAst b = parse(
        "FROM alpine\nRUN echo two\nRUN echo one\nCOPY x /x\nCMD [\"/x\"]\n");
    CHECK(functional_fingerprint(a) == functional_fingerprint(b));
}

TEST_CASE("fingerprint excludes stage-sourced COPY after stage extraction") {
    DockerfileAst before = parse(
        "FROM node:9.11\n"
        "COPY package.json /app/package.json\n"
        "COPY src /app/src\n"
        "RUN npm install\n"
        "CMD [\"node\", \"/app/src/main.js\"]\n");
    DockerfileAst after = parse(
        "FROM node:9.11 AS build\n"
        "COPY package.json /app/package.json\n"
        "COPY src /app/src\n"
        "RUN npm install\n"
        "FROM node:9.11-slim\n"
        "COPY package.json /app/package.json\n"
        "COPY src /app/src\n"
        "COPY --from=build /app/node_modules /app/node_modules\n"
        "CMD [\"node\", \"/app/src/main.js\"]\n");
    CHECK(functional_fingerprint(before) == functional_fingerprint(after));
}

TEST_CASE("fingerprint reacts to CMD and COPY changes") {
    DockerfileAst base = parse("FROM alpine\nCOPY a /a\nCMD [\"/a\"]\n");
    FunctionalFingerprint fp = functional_fingerprint(base);
    CHECK(functional_fingerprint(parse("FROM alpine\nCOPY a /a\nCMD [\"/b\"]\n")) != fp);
    CHECK(functional_fingerprint(parse("FROM alpine\nCOPY b /a\nCMD [\"/a\"]\n")) != fp);
    CHECK(functional_fingerprint(parse("FROM alpine\nCOPY a /a\nENTRYPOINT [\"sh\"]\nCMD [\"/a\"]\n")) != fp);
}

TEST_CASE("last CMD and last ENTRYPOINT of the final stage win") {
    DockerfileAst ast = parse(
        "FROM alpine\n"
        "CMD [\"first\"]\n"
        "ENTRYPOINT [\"ep1\"]\n"
        "CMD [\"second\"]\n"
        "ENTRYPOINT [\"ep2\"]\n");
    FunctionalFingerprint fp = functional_fingerprint(ast);
    CHECK(fp.cmd == std::vector<std::string>{"second"});
    CHECK(fp.entrypoint == std::vector<std::string>{"ep2"});
}

TEST_CASE("multi-source COPY fans out to one entry per source") {
    DockerfileAst ast = parse("FROM alpine\nCOPY a b /dst/\n");
    FunctionalFingerprint fp = functional_fingerprint(ast);
    CHECK(fp.copy_add_entries.count({"a", "/dst/"}) == 1);
    CHECK(fp.copy_add_entries.count({"b", "/dst/"}) == 1);
}

TEST_CASE("JSON-form COPY arguments are decoded") {
    DockerfileAst ast = parse("FROM alpine\nCOPY [\"my file\", \"/dst\"]\n");
    const Instruction& copy = ast.stages[0].instructions[1];
    REQUIRE(copy.args.size() == 2);
    CHECK(copy.args[0] == "my file");
}

TEST_CASE("rename_stage rewrites the alias and its references") {
    DockerfileAst ast = parse(
        "FROM golang:1.21 AS builder\n"
        "RUN go build -o /out/app .\n"
        "FROM alpine\n"
        "COPY --from=builder /out/app /app\n");
    rename_stage(ast, 0, "compile");
    CHECK(ast.stages[0].alias == "compile");
    CHECK(ast.stages[1].instructions[1].flags.at("from") == "compile");
    DockerfileAst reparsed = parse(serialize(ast));
    CHECK(ast_equal(reparsed, ast));
}

TEST_CASE("MAINTAINER is accepted") {
    DockerfileAst ast = parse("FROM ubuntu:16.04\nMAINTAINER ops@example.com\n");
    CHECK(ast.stages[0].instructions[1].kind == InstructionKind::Maintainer);
}

TEST_CASE("keyword lookup is case-insensitive and total") {
    CHECK(instruction_from_keyword("from") == InstructionKind::From);
    CHECK(instruction_from_keyword("Healthcheck") == InstructionKind::Healthcheck);
    CHECK(!instruction_from_keyword("INCLUDE").has_value());
    for (int k = 0; k < 18; ++k) {
        auto kind = static_cast<InstructionKind>(k);
        CHECK(instruction_from_keyword(instruction_keyword(kind)) == kind);
    }
}

TEST_CASE("property: fingerprint is invariant under RUN/ENV/WORKDIR/LABEL permutation") {
    for (int iter = 0; iter < 40; ++iter) {
        std::vector<std::string> movable = {
            "RUN apk add --no-cache curl",
            "RUN echo step-" + std::to_string(testing::pick(1, 99)),
            "ENV MODE=prod",
            "WORKDIR /srv",
            "LABEL team=infra",
        };
        std::string head = "FROM alpine:3.19\n";
        std::string tail = "COPY app /srv/app\nCMD [\"/srv/app\"]\n";
        std::string text = head;
        for (const auto& line : movable) text += line + "\n";
        text += tail;
        DockerfileAst original = parse(text);
        std::shuffle(movable.begin(), movable.end(), testing::rng());
        std::string permuted = head;
        for (const auto& line : movable) permuted += line + "\n";
        permuted += tail;
        CHECK(functional_fingerprint(parse(permuted)) == functional_fingerprint(original));
    }
}

}  // TEST_SUITE
