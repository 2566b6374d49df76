// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "dfr/ast.hpp"
#include "dfr/llm_client.hpp"
#include "support.hpp"

using namespace dfr;
using nlohmann::json;

namespace {

std::filesystem::path fresh_store_path(const std::string& tag) {
    auto path = std::filesystem::temp_directory_path() / ("dfr_replay_" + tag + ".jsonl");
    std::filesystem::remove(path);
    return path;
}

std::filesystem::path write_reply_file(const std::string& tag, const std::string& content) {
    auto path = std::filesystem::temp_directory_path() / ("dfr_reply_" + tag + ".txt");
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

/// Loopback chat-completions server for transport tests.
struct TestServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::string seen_auth;
    json seen_body;
    int status = 200;
    std::string reply_content = "FROM alpine\n";

    TestServer() {
        server.Post("/v1/chat/completions",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        seen_auth = req.get_header_value("Authorization");
                        seen_body = json::parse(req.body, nullptr, false);
                        if (status != 200) {
                            res.status = status;
                            res.set_content("upstream exploded", "text/plain");
                            return;
                        }
                        json reply{{"choices",
                                    json::array({json{{"message",
                                                       json{{"content", reply_content}}}}})}};
                        res.set_content(reply.dump(), "application/json");
                    });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~TestServer() {
        server.stop();
        thread.join();
    }

    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_SUITE("llm_client") {

TEST_CASE("prompt_hash is stable across calls and processes") {
    CHECK(prompt_hash("FROM alpine\n") == 0x94a7dbf5dc506feaull);
    CHECK(prompt_hash("") == 0xcbf29ce484222325ull);
    CHECK(prompt_hash("FROM alpine\n") == prompt_hash("FROM alpine\n"));
    CHECK(prompt_hash("FROM alpine") != prompt_hash("FROM alpine\n"));
}

TEST_CASE("replay store survives a reload") {
    auto path = fresh_store_path("roundtrip");
    CompletionExchange exchange;
    exchange.prompt_hash = prompt_hash("hello");
    exchange.response_text = "FROM alpine\n";
    exchange.model = "gpt-4o";
    exchange.latency_ms = 42;
    {
        ReplayStore store(path);
        CHECK(store.size() == 0);
        store.record(exchange);
        CHECK(store.size() == 1);
    }
    ReplayStore reloaded(path);
    CHECK(reloaded.size() == 1);
    auto found = reloaded.lookup(exchange.prompt_hash);
    REQUIRE(found.has_value());
    CHECK(found->response_text == "FROM alpine\n");
    CHECK(found->model == "gpt-4o");
    CHECK(found->latency_ms == 42);
    CHECK_FALSE(reloaded.lookup(prompt_hash("other")).has_value());
    std::filesystem::remove(path);
}

TEST_CASE("file backend echoes the file content") {
    auto reply = write_reply_file("echo", "FROM alpine");
    BackendConfig config;
    config.endpoint = "file:" + reply.string();
    LlmClient client(config);
    CHECK(client.complete_text("anything") == "FROM alpine");
    AssembledPrompt prompt;
    prompt.text = "anything else";
    CHECK(client.complete(prompt) == "FROM alpine");
    std::filesystem::remove(reply);
}

TEST_CASE("recorded exchanges replay without any backend") {
    auto store_path = fresh_store_path("record_replay");
    auto reply = write_reply_file("record", "FROM debian:stable-slim\n");

    BackendConfig record_config;
    record_config.endpoint = "file:" + reply.string();
    LlmClient recorder(record_config);
    recorder.set_record_store(std::make_shared<ReplayStore>(store_path));
    std::string live = recorder.complete_text("refactor prompt");
    CHECK(live == "FROM debian:stable-slim\n");

    BackendConfig replay_config;
    replay_config.endpoint = "replay";
    LlmClient replayer(replay_config);
    replayer.set_replay_store(std::make_shared<ReplayStore>(store_path));
    CHECK(replayer.complete_text("refactor prompt") == live);
    CHECK_THROWS_AS(replayer.complete_text("never recorded"), ReplayMiss);

    std::filesystem::remove(store_path);
    std::filesystem::remove(reply);
}

TEST_CASE("replay endpoint without a store is a miss") {
    BackendConfig config;
    config.endpoint = "replay";
    LlmClient client(config);
    CHECK_THROWS_AS(client.complete_text("anything"), ReplayMiss);
}

TEST_CASE("http backend speaks the chat-completions protocol") {
    TestServer server;
    server.reply_content = "```dockerfile\nFROM alpine:3.20\n```";
    setenv("DFR_TEST_TOKEN", "sekret", 1);

    BackendConfig config;
    config.endpoint = server.endpoint();
    config.auth_env = "DFR_TEST_TOKEN";
    LlmClient client(config);
    auto store = std::make_shared<ReplayStore>(fresh_store_path("http"));
    client.set_record_store(store);

    std::string response = client.complete_text("please refactor");
    CHECK(response == "```dockerfile\nFROM alpine:3.20\n```");

    CHECK(server.seen_auth == "Bearer sekret");
    REQUIRE(server.seen_body.is_object());
    CHECK(server.seen_body["model"] == "gpt-4o");
    CHECK(server.seen_body["temperature"] == 0.0);
    REQUIRE(server.seen_body["messages"].size() == 1);
    CHECK(server.seen_body["messages"][0]["role"] == "user");
    CHECK(server.seen_body["messages"][0]["content"] == "please refactor");

    CHECK(store->size() == 1);
    auto recorded = store->lookup(prompt_hash("please refactor"));
    REQUIRE(recorded.has_value());
    CHECK(recorded->response_text == response);
    unsetenv("DFR_TEST_TOKEN");
}

TEST_CASE("http error statuses surface the body without retrying") {
    TestServer server;
    server.status = 500;
    BackendConfig config;
    config.endpoint = server.endpoint();
    config.backoff_base_s = 0.001;
    LlmClient client(config);
    CHECK_THROWS_WITH_AS(client.complete_text("boom"),
                         doctest::Contains("upstream exploded"), BackendError);
}

TEST_CASE("transport failures exhaust retries then throw") {
    BackendConfig config;
    config.endpoint = "http://127.0.0.1:1";  // reserved port: connection refused
    config.max_retries = 2;
    config.backoff_base_s = 0.001;
    config.timeout_s = 0.5;
    LlmClient client(config);
    CHECK_THROWS_AS(client.complete_text("anything"), TransportError);
}

TEST_CASE("backend settings are validated") {
    BackendConfig sampling;
    sampling.endpoint = "replay";
    sampling.temperature = 0.7;
    CHECK_THROWS_AS(LlmClient{sampling}, BackendError);

    BackendConfig no_timeout;
    no_timeout.endpoint = "replay";
    no_timeout.timeout_s = 0.0;
    CHECK_THROWS_AS(LlmClient{no_timeout}, BackendError);

    BackendConfig blank;
    CHECK_THROWS_AS(LlmClient{blank}, BackendError);
}

TEST_CASE("extract_dockerfile strips the first fence") {
    CHECK(extract_dockerfile("```dockerfile\nFROM alpine\n```") == "FROM alpine\n");
    CHECK(extract_dockerfile("```\nFROM alpine\n```") == "FROM alpine\n");
    CHECK(extract_dockerfile("Sure, here you go:\n"
                             "```dockerfile\n"
                             "FROM alpine\n"
                             "RUN true\n"
                             "```\n"
                             "Let me know if this helps.") == "FROM alpine\nRUN true\n");
    // Only the first fenced block counts.
    CHECK(extract_dockerfile("```\nFROM busybox\n```\n```\nFROM alpine\n```") ==
          "FROM busybox\n");
}

TEST_CASE("extract_dockerfile accepts bare Dockerfile text") {
    CHECK(extract_dockerfile("FROM node:20\nRUN npm ci\n") == "FROM node:20\nRUN npm ci\n");
    CHECK(extract_dockerfile("FROM alpine") == "FROM alpine\n");
    CHECK(extract_dockerfile("from alpine") == "from alpine\n");
    CHECK(extract_dockerfile("ARG VERSION=1\nFROM alpine:3.20\n") ==
          "ARG VERSION=1\nFROM alpine:3.20\n");
    CHECK(extract_dockerfile("# build stage\nFROM alpine\n") == "# build stage\nFROM alpine\n");
}

TEST_CASE("extract_dockerfile rejects prose and broken output") {
    CHECK_THROWS_AS(extract_dockerfile("I cannot refactor this."), ExtractionError);
    CHECK_THROWS_AS(extract_dockerfile(""), ExtractionError);
    CHECK_THROWS_AS(extract_dockerfile("```\nTOTALLY NOT DOCKER\n```"), ExtractionError);
    // Parses as prose even though a Dockerfile appears later in the text.
    CHECK_THROWS_AS(extract_dockerfile("Here is the file:\nFROM alpine\n"), ExtractionError);
}

TEST_CASE("fence round-trip preserves serialized Dockerfiles") {
    for (const auto& file : testing::corpus_files()) {
        std::string text = testing::read_file(file);
        if (text.empty() || text.back() != '\n') text += '\n';
        std::string wrapped = "```dockerfile\n" + text + "```";
        CHECK(extract_dockerfile(wrapped) == text);
    }
}

}
