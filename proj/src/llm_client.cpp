// SPDX-License-Identifier: Apache-2.0
#include "dfr/llm_client.hpp"

#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "dfr/ast.hpp"

namespace dfr {

namespace {

using nlohmann::json;

std::string hash_to_hex(std::uint64_t hash) {
    char buffer[17];
    std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(hash));
    return buffer;
}

std::uint64_t hex_to_hash(const std::string& hex) {
    return std::strtoull(hex.c_str(), nullptr, 16);
}

}  // namespace

void BackendConfig::validate() const {
    if (temperature != 0.0) {
        throw BackendError("temperature is pinned to 0 for deterministic outputs");
    }
    if (!(timeout_s > 0.0)) {
        throw BackendError("timeout_s must be positive");
    }
    if (endpoint.empty()) {
        throw BackendError("endpoint must be set");
    }
}

std::uint64_t prompt_hash(std::string_view text) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

ReplayStore::ReplayStore(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) continue;
        CompletionExchange exchange;
        exchange.prompt_hash = hex_to_hash(doc.value("prompt_hash", std::string{"0"}));
        exchange.response_text = doc.value("response_text", std::string{});
        exchange.model = doc.value("model", std::string{});
        exchange.latency_ms = doc.value("latency_ms", 0);
        entries_[exchange.prompt_hash] = std::move(exchange);
    }
}

std::optional<CompletionExchange> ReplayStore::lookup(std::uint64_t hash) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(hash);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ReplayStore::record(const CompletionExchange& exchange) {
    std::lock_guard lock(mutex_);
    entries_[exchange.prompt_hash] = exchange;
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw BackendError("cannot open replay store for append: " + path_.string());
    json doc{{"prompt_hash", hash_to_hex(exchange.prompt_hash)},
             {"response_text", exchange.response_text},
             {"model", exchange.model},
             {"latency_ms", exchange.latency_ms}};
    out << doc.dump() << '\n';
}

std::size_t ReplayStore::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

LlmClient::LlmClient(BackendConfig config) : config_(std::move(config)) { config_.validate(); }

void LlmClient::set_record_store(std::shared_ptr<ReplayStore> store) {
    record_store_ = std::move(store);
}

void LlmClient::set_replay_store(std::shared_ptr<ReplayStore> store) {
    replay_store_ = std::move(store);
}

std::string LlmClient::complete(const AssembledPrompt& prompt) {
    return complete_text(prompt.text);
}

std::string LlmClient::complete_text(const std::string& prompt_text) {
    std::uint64_t hash = prompt_hash(prompt_text);
    if (config_.endpoint == "replay") {
        if (!replay_store_) throw ReplayMiss("replay backend selected without a replay store");
        auto exchange = replay_store_->lookup(hash);
        if (!exchange) {
            throw ReplayMiss("no recorded response for prompt hash " + hash_to_hex(hash));
        }
        return exchange->response_text;
    }

    auto start = std::chrono::steady_clock::now();
    std::string response;
    int attempt = 0;
    for (;;) {
        try {
            response = dispatch(prompt_text);
            break;
        } catch (const TransportError&) {
            if (attempt >= config_.max_retries) throw;
            double delay = config_.backoff_base_s * static_cast<double>(1 << attempt);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            ++attempt;
        }
    }
    auto elapsed = std::chrono::steady_clock::now() - start;

    if (record_store_) {
        CompletionExchange exchange;
        exchange.prompt_hash = hash;
        exchange.response_text = response;
        exchange.model = config_.model;
        exchange.latency_ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count());
        record_store_->record(exchange);
    }
    return response;
}

std::string LlmClient::dispatch(const std::string& prompt_text) {
    if (config_.endpoint.rfind("file:", 0) == 0) {
        return via_file(config_.endpoint.substr(5));
    }
    return via_http(prompt_text);
}

std::string LlmClient::via_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TransportError("static backend file missing: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string LlmClient::via_http(const std::string& prompt_text) {
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(std::chrono::duration<double>(config_.timeout_s));
    client.set_read_timeout(std::chrono::duration<double>(config_.timeout_s));

    httplib::Headers headers;
    if (!config_.auth_env.empty()) {
        if (const char* token = std::getenv(config_.auth_env.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
    }

    json body{{"model", config_.model},
              {"temperature", config_.temperature},
              {"messages", json::array({json{{"role", "user"}, {"content", prompt_text}}})}};

    auto result = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
    if (!result) {
        throw TransportError("request to " + config_.endpoint +
                             " failed: " + httplib::to_string(result.error()));
    }
    if (result->status < 200 || result->status >= 300) {
        throw BackendError("backend returned status " + std::to_string(result->status) + ": " +
                           result->body);
    }
    json doc = json::parse(result->body, nullptr, false);
    if (doc.is_discarded()) {
        throw BackendError("backend returned a non-JSON body");
    }
    try {
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw BackendError("backend response missing choices[0].message.content");
    }
}

std::string extract_dockerfile(const std::string& response_text) {
    std::vector<std::string> lines;
    std::istringstream in(response_text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }

    std::string candidate;
    bool found_fence = false;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].rfind("```", 0) != 0) continue;
        for (std::size_t j = i + 1; j < lines.size(); ++j) {
            if (lines[j].rfind("```", 0) == 0) {
                found_fence = true;
                for (std::size_t k = i + 1; k < j; ++k) {
                    candidate += lines[k];
                    candidate += '\n';
                }
                break;
            }
        }
        break;
    }

    if (!found_fence) {
        for (const auto& text_line : lines) {
            std::size_t pos = text_line.find_first_not_of(" \t");
            if (pos == std::string::npos) continue;
            std::string head = text_line.substr(pos);
            for (char& c : head) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            auto starts_keyword = [&head](std::string_view keyword) {
                if (head.rfind(keyword, 0) != 0) return false;
                return head.size() == keyword.size() || head[keyword.size()] == ' ' ||
                       head[keyword.size()] == '\t';
            };
            if (starts_keyword("FROM") || starts_keyword("ARG") || head.front() == '#') {
                candidate = response_text;
                if (candidate.back() != '\n') candidate += '\n';
            }
            break;
        }
    }

    if (candidate.empty()) {
        throw ExtractionError("response contains no Dockerfile");
    }
    try {
        parse(candidate);
    } catch (const SyntaxError& err) {
        throw ExtractionError(std::string("extracted text does not parse: ") + err.what());
    }
    return candidate;
}

}  // namespace dfr
