// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "dfr/ast.hpp"
#include "dfr/build_harness.hpp"
#include "support.hpp"

using namespace dfr;
using nlohmann::json;

namespace {

std::filesystem::path make_context_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("dfr_ctx_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

void put_file(const std::filesystem::path& dir, const std::string& name,
              const std::string& content) {
    std::filesystem::create_directories((dir / name).parent_path());
    std::ofstream out(dir / name, std::ios::binary);
    out << content;
}

FailureCategory category_for_fixture(const std::string& stem) {
    std::string prefix = stem.substr(0, stem.find('-'));
    if (prefix == "syntax") return FailureCategory::Syntax;
    if (prefix == "missingbase") return FailureCategory::MissingBaseImage;
    if (prefix == "buildcontext") return FailureCategory::BuildContext;
    if (prefix == "dependency") return FailureCategory::Dependency;
    return FailureCategory::Other;
}

/// Engine whose preflight always fails.
struct DownEngine : StubEngine {
    bool available() override { return false; }
};

/// Stub that records which base images were pulled.
struct RecordingEngine : StubEngine {
    std::vector<std::string> pulled;
    void pull(const std::string& image_ref) override { pulled.push_back(image_ref); }
};

/// Loopback server emulating the container daemon's build API.
struct FakeDaemon {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    int build_calls = 0;
    int delete_calls = 0;
    std::vector<std::string> pulls;
    std::string last_build_query;
    std::size_t last_body_size = 0;
    bool fail_builds = false;

    FakeDaemon() {
        server.Get("/_ping", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("OK", "text/plain");
        });
        server.Post("/build", [this](const httplib::Request& req, httplib::Response& res) {
            ++build_calls;
            last_build_query = req.target;
            last_body_size = req.body.size();
            std::string body;
            if (fail_builds) {
                body = json{{"stream", "Step 2/3 : COPY missing.txt /x\n"}}.dump() + "\n" +
                       json{{"error",
                             "failed to compute cache key: \"/missing.txt\": not found"}}
                           .dump() +
                       "\n";
            } else {
                body = json{{"stream", "Step 1/1 : FROM alpine\n"}}.dump() + "\n" +
                       json{{"stream", "Successfully built f00db4b3\n"}}.dump() + "\n";
            }
            res.set_content(body, "application/json");
        });
        server.Get(R"(/images/([^/]+)/json)",
                   [](const httplib::Request&, httplib::Response& res) {
                       res.set_content(json{{"Size", 123456789}}.dump(), "application/json");
                   });
        server.Delete(R"(/images/(.+))", [this](const httplib::Request&, httplib::Response& res) {
            ++delete_calls;
            res.set_content("[]", "application/json");
        });
        server.Post("/images/create", [this](const httplib::Request& req, httplib::Response& res) {
            pulls.push_back(req.target);
            res.set_content("{}", "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~FakeDaemon() {
        server.stop();
        thread.join();
    }

    std::string endpoint() const { return "127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_SUITE("build_harness") {

TEST_CASE("log fixtures classify per real engine wording") {
    auto logs_dir = testing::fixture_dir() / "logs";
    FailureRuleset from_asset = FailureRuleset::load(testing::asset_dir() / "failure_patterns.json");
    int count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(logs_dir)) {
        if (entry.path().extension() != ".log") continue;
        ++count;
        std::string text = testing::read_file(entry.path());
        FailureCategory expected = category_for_fixture(entry.path().stem().string());
        INFO("fixture: ", entry.path().filename().string());
        CHECK(classify_failure(text) == expected);
        // The editable JSON ruleset ships the same rules as the built-in table.
        CHECK(from_asset.classify(text) == expected);
    }
    CHECK(count >= 12);
}

TEST_CASE("classification is total, deterministic, and ordered") {
    CHECK(classify_failure("complete gibberish ~~ no engine ever said this") ==
          FailureCategory::Other);
    CHECK(classify_failure("x") == classify_failure("x"));

    // Rule order resolves logs matching several categories.
    CHECK(classify_failure("unknown instruction: FOO\nE: Unable to locate package bar") ==
          FailureCategory::Syntax);
    CHECK(classify_failure("pull access denied\nfailed to compute cache key") ==
          FailureCategory::MissingBaseImage);
    CHECK(classify_failure("COPY failed: stat x\n404 Not Found") ==
          FailureCategory::BuildContext);
    // Matching is case-insensitive.
    CHECK(classify_failure("UNKNOWN INSTRUCTION: RUNN") == FailureCategory::Syntax);
}

TEST_CASE("failure ruleset file parses and validates") {
    auto ruleset = FailureRuleset::load(testing::asset_dir() / "failure_patterns.json");
    REQUIRE(ruleset.rules().size() == 4);
    CHECK(ruleset.rules()[0].category == FailureCategory::Syntax);
    CHECK(ruleset.rules()[1].category == FailureCategory::MissingBaseImage);
    CHECK(ruleset.rules()[2].category == FailureCategory::BuildContext);
    CHECK(ruleset.rules()[3].category == FailureCategory::Dependency);

    CHECK_THROWS_AS(FailureRuleset::from_json_text("not json"), CorpusError);
    CHECK_THROWS_AS(FailureRuleset::from_json_text("{}"), CorpusError);
    CHECK_THROWS_AS(
        FailureRuleset::from_json_text(R"({"rules":[{"category":"Nope","patterns":[]}]})"),
        CorpusError);
}

TEST_CASE("stub engine success is deterministic and averaged") {
    auto context = make_context_dir("ok");
    MeasurementConfig config;
    StubEngine engine;
    std::string text = "FROM alpine:3.19\nRUN echo hi\n";

    BuildResult first = build_and_measure(text, context, config, engine);
    REQUIRE(first.success);
    CHECK_FALSE(first.failure.has_value());
    REQUIRE(first.image_size_mb.has_value());
    CHECK(*first.image_size_mb > 0.0);
    REQUIRE(first.build_duration_s.has_value());
    REQUIRE(first.per_run_durations_s.size() == 3);

    double sum = 0.0;
    for (double d : first.per_run_durations_s) {
        CHECK(d > 0.0);
        sum += d;
    }
    CHECK(*first.build_duration_s == doctest::Approx(sum / 3.0).epsilon(1e-12));

    BuildResult second = build_and_measure(text, context, config, engine);
    CHECK(*second.image_size_mb == *first.image_size_mb);
    CHECK(*second.build_duration_s == *first.build_duration_s);

    // Different Dockerfile, different pseudo-measurements.
    BuildResult other = build_and_measure("FROM alpine:3.19\nRUN echo other\n", context, config,
                                          engine);
    CHECK(*other.image_size_mb != *first.image_size_mb);
    std::filesystem::remove_all(context);
}

TEST_CASE("stub engine rejects bare ENV at build time") {
    auto context = make_context_dir("env");
    MeasurementConfig config;
    StubEngine engine;
    // Parses leniently, fails the engine's arity check like real daemons.
    std::string text = "FROM alpine:3.19\nENV DEBUG\n";
    CHECK_NOTHROW(parse(text));

    BuildResult result = build_and_measure(text, context, config, engine);
    REQUIRE_FALSE(result.success);
    CHECK_FALSE(result.image_size_mb.has_value());
    CHECK_FALSE(result.build_duration_s.has_value());
    CHECK(result.per_run_durations_s.empty());
    REQUIRE(result.failure.has_value());
    CHECK(*result.failure == FailureCategory::Syntax);
    CHECK(result.log.find("ENV must have two arguments") != std::string::npos);
    CHECK(result.log.find("line 2") != std::string::npos);
    std::filesystem::remove_all(context);
}

TEST_CASE("stub engine verifies context sources") {
    auto context = make_context_dir("copy");
    MeasurementConfig config;
    StubEngine engine;

    BuildResult missing =
        build_and_measure("FROM alpine\nCOPY missing.txt /x\n", context, config, engine);
    REQUIRE_FALSE(missing.success);
    CHECK(*missing.failure == FailureCategory::BuildContext);

    put_file(context, "present.txt", "hello");
    BuildResult found =
        build_and_measure("FROM alpine\nCOPY present.txt /x\n", context, config, engine);
    CHECK(found.success);

    // Wildcards and --from sources are not checked against the context.
    CHECK(build_and_measure("FROM alpine\nCOPY *.csv /data/\n", context, config, engine).success);
    CHECK(build_and_measure("FROM golang:1.22 AS build\nFROM alpine\nCOPY --from=build "
                            "/out/app /usr/bin/app\n",
                            context, config, engine)
              .success);
    std::filesystem::remove_all(context);
}

TEST_CASE("stub engine reports unknown base images") {
    auto context = make_context_dir("base");
    MeasurementConfig config;
    StubEngine engine;
    BuildResult result =
        build_and_measure("FROM acme/does-not-exist:1.0\n", context, config, engine);
    REQUIRE_FALSE(result.success);
    CHECK(*result.failure == FailureCategory::MissingBaseImage);
    std::filesystem::remove_all(context);
}

TEST_CASE("preflight failures are distinct from build failures") {
    MeasurementConfig config;
    StubEngine engine;
    CHECK_THROWS_AS(
        build_and_measure("FROM alpine\n", "/nonexistent/context/dir", config, engine),
        ContextError);

    auto context = make_context_dir("preflight");
    MeasurementConfig zero_runs;
    zero_runs.runs = 0;
    CHECK_THROWS_AS(build_and_measure("FROM alpine\n", context, zero_runs, engine), ContextError);

    DownEngine down;
    CHECK_THROWS_AS(build_and_measure("FROM alpine\n", context, config, down),
                    EngineUnavailable);
    std::filesystem::remove_all(context);
}

TEST_CASE("per-run logs are persisted when requested") {
    auto context = make_context_dir("logs");
    auto log_dir = std::filesystem::temp_directory_path() / "dfr_run_logs";
    std::filesystem::remove_all(log_dir);
    MeasurementConfig config;
    config.log_dir = log_dir;
    StubEngine engine;
    build_and_measure("FROM alpine:3.19\n", context, config, engine);
    CHECK(std::filesystem::exists(log_dir / "run-1.log"));
    CHECK(std::filesystem::exists(log_dir / "run-2.log"));
    CHECK(std::filesystem::exists(log_dir / "run-3.log"));
    CHECK_FALSE(std::filesystem::exists(log_dir / "run-4.log"));
    std::filesystem::remove_all(log_dir);
    std::filesystem::remove_all(context);
}

TEST_CASE("base images are pulled once before timed runs") {
    auto context = make_context_dir("pull");
    MeasurementConfig config;
    RecordingEngine engine;
    std::string text =
        "FROM golang:1.22 AS build\n"
        "RUN go build -o /out/app ./...\n"
        "FROM alpine:3.19\n"
        "COPY --from=build /out/app /usr/bin/app\n";
    build_and_measure(text, context, config, engine);
    REQUIRE(engine.pulled.size() == 2);
    CHECK(engine.pulled[0] == "golang:1.22");
    CHECK(engine.pulled[1] == "alpine:3.19");

    RecordingEngine timed;
    MeasurementConfig with_pull = config;
    with_pull.include_pull_time = true;
    build_and_measure(text, context, with_pull, timed);
    CHECK(timed.pulled.empty());

    // Stage references and scratch are never pulled.
    RecordingEngine scratch_engine;
    build_and_measure("FROM scratch\nCOPY app /app\n", context, config, scratch_engine);
    CHECK(scratch_engine.pulled.empty());
    std::filesystem::remove_all(context);
}

TEST_CASE("http engine speaks the daemon build protocol") {
    FakeDaemon daemon;
    auto context = make_context_dir("http");
    put_file(context, "app/main.go", "package main\n");

    MeasurementConfig config;
    config.engine_endpoint = daemon.endpoint();
    HttpEngine engine(daemon.endpoint());
    REQUIRE(engine.available());

    BuildResult result =
        build_and_measure("FROM alpine:3.19\nCOPY app /app\n", context, config, engine);
    REQUIRE(result.success);
    CHECK(daemon.build_calls == 3);
    CHECK(daemon.delete_calls == 1);
    REQUIRE(daemon.pulls.size() == 1);
    CHECK(daemon.pulls[0].find("fromImage=alpine:3.19") != std::string::npos);
    CHECK(daemon.last_build_query.find("nocache=true") != std::string::npos);
    CHECK(daemon.last_body_size % 512 == 0);  // tar stream
    CHECK(*result.image_size_mb == doctest::Approx(123.456789));
    CHECK(result.log.find("Successfully built") != std::string::npos);

    daemon.fail_builds = true;
    BuildResult failed =
        build_and_measure("FROM alpine:3.19\nCOPY app /app\n", context, config, engine);
    REQUIRE_FALSE(failed.success);
    CHECK(*failed.failure == FailureCategory::BuildContext);
    std::filesystem::remove_all(context);
}

TEST_CASE("context archives are well-formed ustar") {
    auto context = make_context_dir("tar");
    put_file(context, "hello.txt", "hi there");
    put_file(context, "nested/app.py", "print('x')\n");
    std::string dockerfile = "FROM alpine\nCOPY hello.txt /\n";
    std::string archive = tar_context(context, dockerfile);

    CHECK(archive.size() % 512 == 0);
    // First entry is the injected Dockerfile.
    CHECK(archive.substr(0, 10) == std::string("Dockerfile"));
    CHECK(archive.substr(257, 5) == "ustar");
    std::size_t size_field = std::stoul(archive.substr(124, 11), nullptr, 8);
    CHECK(size_field == dockerfile.size());
    CHECK(archive.substr(512, dockerfile.size()) == dockerfile);
    // Header checksum verifies (field read as spaces while summing).
    std::string header = archive.substr(0, 512);
    unsigned stored = std::stoul(header.substr(148, 6), nullptr, 8);
    for (int i = 148; i < 156; ++i) header[i] = ' ';
    unsigned sum = 0;
    for (unsigned char c : header) sum += c;
    CHECK(sum == stored);
    // Context files ride along; the archive ends with two zero blocks.
    CHECK(archive.find("hello.txt") != std::string::npos);
    CHECK(archive.find("nested/app.py") != std::string::npos);
    CHECK(archive.substr(archive.size() - 1024) == std::string(1024, '\0'));
    std::filesystem::remove_all(context);
}

TEST_CASE("engine factory maps kinds") {
    MeasurementConfig config;
    CHECK(dynamic_cast<StubEngine*>(make_engine("stub", config).get()) != nullptr);
    CHECK(dynamic_cast<HttpEngine*>(make_engine("http", config).get()) != nullptr);
    CHECK(dynamic_cast<CliEngine*>(make_engine("cli", config).get()) != nullptr);
    CHECK_THROWS_AS(make_engine("podmanx", config), EngineUnavailable);
}

TEST_CASE("behavior preservation matches the functional fingerprint") {
    auto before = parse("FROM alpine\nCOPY app /app\nCMD [\"node\",\"a\"]\n");
    auto same = parse("FROM alpine\nCOPY app /app\nCMD [\"node\",\"a\"]\n");
    auto changed_cmd = parse("FROM alpine\nCOPY app /app\nCMD [\"node\",\"b\"]\n");
    CHECK(behavior_preserved(before, same));
    CHECK_FALSE(behavior_preserved(before, changed_cmd));
    CHECK(behavior_preserved(changed_cmd, changed_cmd));
    // Symmetry.
    CHECK(behavior_preserved(same, before));
    CHECK_FALSE(behavior_preserved(changed_cmd, before));

    // Merging RUN instructions preserves behavior.
    auto split_runs = parse("FROM alpine\nRUN apt-get update\nRUN apt-get install -y curl\n"
                            "COPY app /app\nCMD [\"/app/run\"]\n");
    auto merged_runs = parse("FROM alpine\nRUN apt-get update && apt-get install -y curl\n"
                             "COPY app /app\nCMD [\"/app/run\"]\n");
    CHECK(behavior_preserved(split_runs, merged_runs));

    for (const auto& file : testing::corpus_files()) {
        auto ast = parse(testing::read_file(file));
        CHECK(behavior_preserved(ast, ast));
    }
}

}
