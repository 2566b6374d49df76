// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "dfr/errors.hpp"
#include "dfr/prompting.hpp"

namespace dfr {

/// Completion backend settings. The endpoint selects the transport:
/// an http(s) URL talks to a chat-completions server, `file:PATH` replies
/// with the file's content (offline static backend), and `replay` serves
/// recorded exchanges only.
struct BackendConfig {
    std::string endpoint;
    std::string model = "gpt-4o";
    double temperature = 0.0;  // pinned: deterministic outputs
    double timeout_s = 60.0;
    int max_retries = 3;
    std::string auth_env;         // name of the env var holding the bearer token
    double backoff_base_s = 1.0;  // first retry delay; doubles per attempt

    void validate() const;
};

/// One prompt/response pair as persisted in a replay store.
struct CompletionExchange {
    std::uint64_t prompt_hash = 0;
    std::string response_text;
    std::string model;
    int latency_ms = 0;
};

/// FNV-1a 64-bit hash of the prompt text; stable across processes.
std::uint64_t prompt_hash(std::string_view text);

/// JSONL-backed map from prompt hash to recorded exchange. Thread-safe.
class ReplayStore {
  public:
    /// Opens (and loads, if present) the store at path. The file is created
    /// on the first record.
    explicit ReplayStore(std::filesystem::path path);

    std::optional<CompletionExchange> lookup(std::uint64_t hash) const;
    void record(const CompletionExchange& exchange);
    std::size_t size() const;

  private:
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::map<std::uint64_t, CompletionExchange> entries_;
};

class LlmClient {
  public:
    explicit LlmClient(BackendConfig config);

    /// Every successful exchange is appended to this store.
    void set_record_store(std::shared_ptr<ReplayStore> store);
    /// Source of responses for the `replay` endpoint.
    void set_replay_store(std::shared_ptr<ReplayStore> store);

    /// Sends the prompt and returns the backend's text. Transport failures
    /// are retried max_retries times with exponential backoff; HTTP error
    /// statuses surface as BackendError with the body; a replay miss is
    /// ReplayMiss.
    std::string complete(const AssembledPrompt& prompt);
    std::string complete_text(const std::string& prompt_text);

  private:
    BackendConfig config_;
    std::shared_ptr<ReplayStore> record_store_;
    std::shared_ptr<ReplayStore> replay_store_;

    std::string dispatch(const std::string& prompt_text);
    std::string via_http(const std::string& prompt_text);
    std::string via_file(const std::string& path);
};

/// Pulls a Dockerfile out of a model response: the first fenced code block
/// if any, else the whole text when it already starts like a Dockerfile.
/// The result is newline-terminated and guaranteed to parse.
std::string extract_dockerfile(const std::string& response_text);

}  // namespace dfr
