// SPDX-License-Identifier: Apache-2.0
#include "dfr/build_harness.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

#include <sys/socket.h>

#include <httplib.h>
#include <json.hpp>

namespace dfr {

namespace {

using nlohmann::json;

std::string lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::uint64_t fnv64(std::string_view text) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

FailureCategory category_from_name(const std::string& name) {
    if (name == "BuildContext") return FailureCategory::BuildContext;
    if (name == "Dependency") return FailureCategory::Dependency;
    if (name == "Syntax") return FailureCategory::Syntax;
    if (name == "MissingBaseImage") return FailureCategory::MissingBaseImage;
    if (name == "Other") return FailureCategory::Other;
    throw CorpusError("unknown failure category: " + name);
}

/// Builds serialize process-wide so duration samples never overlap.
std::mutex& build_mutex() {
    static std::mutex mutex;
    return mutex;
}

void persist_log(const MeasurementConfig& config, int run_index, const std::string& log) {
    if (config.log_dir.empty()) return;
    std::filesystem::create_directories(config.log_dir);
    std::ofstream out(config.log_dir / ("run-" + std::to_string(run_index + 1) + ".log"),
                      std::ios::binary);
    out << log;
}

std::vector<std::string> external_base_refs(const DockerfileAst& ast) {
    std::vector<std::string> refs;
    for (const auto& stage : ast.stages) {
        if (stage.base.is_stage_ref()) continue;
        std::string ref = image_ref_string(stage.base);
        if (ref == "scratch") continue;
        if (std::find(refs.begin(), refs.end(), ref) == refs.end()) refs.push_back(ref);
    }
    return refs;
}

bool has_glob(const std::string& path) {
    return path.find('*') != std::string::npos || path.find('?') != std::string::npos ||
           path.find('[') != std::string::npos;
}

bool is_remote_source(const std::string& path) {
    return path.rfind("http://", 0) == 0 || path.rfind("https://", 0) == 0 ||
           path.rfind("git@", 0) == 0;
}

/// ustar header for one regular file.
std::string tar_header(const std::string& name, std::uint64_t size) {
    std::array<char, 512> block{};
    auto put = [&block](std::size_t offset, std::string_view value) {
        std::copy(value.begin(), value.end(), block.begin() + static_cast<long>(offset));
    };
    char field[16];
    put(0, name.substr(0, 99));
    put(100, "0000644");
    put(108, "0000000");
    put(116, "0000000");
    std::snprintf(field, sizeof field, "%011llo", static_cast<unsigned long long>(size));
    put(124, field);
    put(136, "00000000000");
    block[156] = '0';
    put(257, "ustar");
    put(263, "00");
    // Checksum is computed with the checksum field itself read as spaces.
    std::fill(block.begin() + 148, block.begin() + 156, ' ');
    unsigned sum = 0;
    for (unsigned char c : block) sum += c;
    std::snprintf(field, sizeof field, "%06o", sum);
    put(148, field);
    block[154] = '\0';
    block[155] = ' ';
    return std::string(block.data(), block.size());
}

void tar_append_file(std::string& archive, const std::string& name, const std::string& content) {
    archive += tar_header(name, content.size());
    archive += content;
    std::size_t padding = (512 - content.size() % 512) % 512;
    archive.append(padding, '\0');
}

std::string run_command(const std::string& command, int* exit_code) {
    std::string output;
    FILE* pipe = popen((command + " 2>&1").c_str(), "r");
    if (!pipe) {
        *exit_code = -1;
        return output;
    }
    char buffer[4096];
    while (std::size_t n = std::fread(buffer, 1, sizeof buffer, pipe)) output.append(buffer, n);
    *exit_code = pclose(pipe);
    return output;
}

std::string shell_quote(const std::string& arg) {
    std::string out = "'";
    for (char c : arg) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    out += "'";
    return out;
}

}  // namespace

const char* failure_category_name(FailureCategory category) {
    switch (category) {
        case FailureCategory::BuildContext: return "BuildContext";
        case FailureCategory::Dependency: return "Dependency";
        case FailureCategory::Syntax: return "Syntax";
        case FailureCategory::MissingBaseImage: return "MissingBaseImage";
        case FailureCategory::Other: return "Other";
    }
    return "Other";
}

FailureRuleset FailureRuleset::built_in() {
    FailureRuleset ruleset;
    ruleset.rules_ = {
        {FailureCategory::Syntax,
         {"dockerfile parse error", "unknown instruction:", "unknown flag:",
          "must have two arguments", "requires at least two arguments",
          "empty continuation line", "no build stage in current context",
          "circular dependency detected"}},
        {FailureCategory::MissingBaseImage,
         {"manifest unknown", "pull access denied", "repository does not exist",
          "not found: manifest", "no such image", "failed to resolve source metadata"}},
        {FailureCategory::BuildContext,
         {"forbidden path outside the build context", "not found in build context",
          "failed to compute cache key", "failed to calculate checksum", "copy failed:",
          "add failed:", "excluded by .dockerignore"}},
        {FailureCategory::Dependency,
         {"unable to locate package", "unmet dependencies", "failed to fetch",
          "could not find a version that satisfies", "no matching distribution found",
          "npm err! 404", "npm err! code e404", "eresolve", "unable to select packages",
          "could not find gem", "no package matching", "unable to find a match",
          "404 not found"}},
    };
    return ruleset;
}

FailureRuleset FailureRuleset::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError("cannot open failure ruleset: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return from_json_text(buffer.str());
}

FailureRuleset FailureRuleset::from_json_text(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("rules")) {
        throw CorpusError("failure ruleset must be a JSON object with a rules array");
    }
    FailureRuleset ruleset;
    for (const auto& entry : doc.at("rules")) {
        Rule rule;
        rule.category = category_from_name(entry.at("category").get<std::string>());
        for (const auto& pattern : entry.at("patterns")) {
            rule.patterns.push_back(lower(pattern.get<std::string>()));
        }
        ruleset.rules_.push_back(std::move(rule));
    }
    return ruleset;
}

FailureCategory FailureRuleset::classify(std::string_view log_text) const {
    std::string haystack = lower(log_text);
    for (const auto& rule : rules_) {
        for (const auto& pattern : rule.patterns) {
            if (haystack.find(lower(pattern)) != std::string::npos) return rule.category;
        }
    }
    return FailureCategory::Other;
}

FailureCategory classify_failure(std::string_view log_text) {
    static const FailureRuleset ruleset = FailureRuleset::built_in();
    return ruleset.classify(log_text);
}

// --- StubEngine -------------------------------------------------------------

ContainerEngine::EngineBuild StubEngine::build(const std::string& dockerfile_text,
                                               const std::filesystem::path& context_dir,
                                               const std::string& tag,
                                               const MeasurementConfig& config) {
    (void)config;
    EngineBuild result;
    std::ostringstream log;
    DockerfileAst ast;
    try {
        ast = parse(dockerfile_text);
    } catch (const SyntaxError& err) {
        log << "ERROR: dockerfile parse error: " << err.what() << "\n";
        result.log = log.str();
        return result;
    }

    int step = 0;
    for (const auto& stage : ast.stages) {
        for (const auto& instruction : stage.instructions) {
            ++step;
            log << "Step " << step << ": " << instruction_keyword(instruction.kind) << "\n";

            if (instruction.kind == InstructionKind::From && !stage.base.is_stage_ref()) {
                std::string ref = image_ref_string(stage.base);
                if (ref.find("does-not-exist") != std::string::npos ||
                    stage.base.tag == "no-such-tag") {
                    log << "ERROR: failed to solve: " << ref
                        << ": pull access denied, repository does not exist or may require "
                           "authorization\n";
                    result.log = log.str();
                    return result;
                }
            }

            // Real engines reject bare ENV/LABEL at build time even though
            // the instruction parses.
            if ((instruction.kind == InstructionKind::Env ||
                 instruction.kind == InstructionKind::Label) &&
                instruction.args.size() == 1 &&
                instruction.args[0].find('=') == std::string::npos) {
                log << "ERROR: dockerfile parse error on line " << instruction.span.start_line
                    << ": " << instruction_keyword(instruction.kind)
                    << " must have two arguments\n";
                result.log = log.str();
                return result;
            }

            if ((instruction.kind == InstructionKind::Copy ||
                 instruction.kind == InstructionKind::Add) &&
                !instruction.flags.count("from") && instruction.args.size() >= 2) {
                for (std::size_t i = 0; i + 1 < instruction.args.size(); ++i) {
                    const std::string& source = instruction.args[i];
                    if (has_glob(source) || is_remote_source(source)) continue;
                    // Sources are always context-relative; a leading '/' means
                    // the context root, never the host filesystem.
                    std::string relative = source;
                    while (!relative.empty() && relative.front() == '/') relative.erase(0, 1);
                    std::filesystem::path local =
                        relative.empty() ? context_dir : context_dir / relative;
                    if (!std::filesystem::exists(local)) {
                        log << "ERROR: failed to compute cache key: failed to calculate "
                               "checksum of ref: \"/"
                            << source << "\": not found\n";
                        result.log = log.str();
                        return result;
                    }
                }
            }
        }
    }

    std::uint64_t hash = fnv64(dockerfile_text);
    std::uint64_t size_bytes = 20'000'000ull + hash % 180'000'000ull;
    result.success = true;
    result.duration_s = 0.5 + static_cast<double>(hash % 1000ull) / 100.0;
    log << "Successfully built " << std::hex << hash << std::dec << "\n";
    log << "Successfully tagged " << tag << "\n";
    result.log = log.str();
    sizes_[tag] = size_bytes;
    return result;
}

std::optional<std::uint64_t> StubEngine::image_size_bytes(const std::string& tag) {
    auto it = sizes_.find(tag);
    if (it == sizes_.end()) return std::nullopt;
    return it->second;
}

void StubEngine::remove_image(const std::string& tag) { sizes_.erase(tag); }

// --- HttpEngine -------------------------------------------------------------

namespace {

/// Client for a daemon endpoint: an absolute path means a unix socket.
std::unique_ptr<httplib::Client> daemon_client(const std::string& endpoint, double timeout_s) {
    std::unique_ptr<httplib::Client> client;
    if (!endpoint.empty() && endpoint.front() == '/') {
        client = std::make_unique<httplib::Client>(endpoint, 80);
        client->set_address_family(AF_UNIX);
    } else {
        client = std::make_unique<httplib::Client>("http://" + endpoint);
    }
    client->set_connection_timeout(std::chrono::duration<double>(std::min(timeout_s, 5.0)));
    client->set_read_timeout(std::chrono::duration<double>(timeout_s));
    client->set_write_timeout(std::chrono::duration<double>(timeout_s));
    return client;
}

}  // namespace

std::string tar_context(const std::filesystem::path& context_dir,
                        const std::string& dockerfile_text) {
    std::string archive;
    tar_append_file(archive, "Dockerfile", dockerfile_text);
    if (std::filesystem::is_directory(context_dir)) {
        for (const auto& entry : std::filesystem::recursive_directory_iterator(context_dir)) {
            if (!entry.is_regular_file()) continue;
            auto relative = std::filesystem::relative(entry.path(), context_dir).generic_string();
            if (relative == "Dockerfile") continue;
            std::ifstream in(entry.path(), std::ios::binary);
            std::ostringstream content;
            content << in.rdbuf();
            tar_append_file(archive, relative, content.str());
        }
    }
    archive.append(1024, '\0');  // end-of-archive marker
    return archive;
}

HttpEngine::HttpEngine(std::string endpoint) : endpoint_(std::move(endpoint)) {
    if (endpoint_.empty()) endpoint_ = "/var/run/docker.sock";
}

bool HttpEngine::available() {
    auto client = daemon_client(endpoint_, 5.0);
    auto result = client->Get("/_ping");
    return result && result->status == 200;
}

ContainerEngine::EngineBuild HttpEngine::build(const std::string& dockerfile_text,
                                               const std::filesystem::path& context_dir,
                                               const std::string& tag,
                                               const MeasurementConfig& config) {
    EngineBuild build_result;
    auto client = daemon_client(endpoint_, config.timeout_s);
    std::string body = tar_context(context_dir, dockerfile_text);
    std::string path = "/build?t=" + tag + "&dockerfile=Dockerfile";
    if (config.no_cache) path += "&nocache=true";
    if (!config.network) path += "&networkmode=none";

    auto start = std::chrono::steady_clock::now();
    auto response = client->Post(path, body, "application/x-tar");
    build_result.duration_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (!response) {
        throw EngineUnavailable("build request failed: " + httplib::to_string(response.error()));
    }
    // The body is a JSON-lines progress stream; an "error" record marks failure.
    std::ostringstream log;
    bool errored = false;
    std::istringstream stream(response->body);
    std::string line;
    while (std::getline(stream, line)) {
        json record = json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object()) continue;
        if (record.contains("stream")) log << record["stream"].get<std::string>();
        if (record.contains("status")) log << record["status"].get<std::string>() << "\n";
        if (record.contains("error")) {
            log << record["error"].get<std::string>() << "\n";
            errored = true;
        }
    }
    build_result.log = log.str();
    build_result.success = response->status == 200 && !errored;
    if (response->status != 200 && build_result.log.empty()) {
        build_result.log = response->body;
    }
    return build_result;
}

std::optional<std::uint64_t> HttpEngine::image_size_bytes(const std::string& tag) {
    auto client = daemon_client(endpoint_, 30.0);
    auto response = client->Get("/images/" + tag + "/json");
    if (!response || response->status != 200) return std::nullopt;
    json doc = json::parse(response->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("Size")) return std::nullopt;
    return doc["Size"].get<std::uint64_t>();
}

void HttpEngine::remove_image(const std::string& tag) {
    auto client = daemon_client(endpoint_, 30.0);
    client->Delete("/images/" + tag + "?force=true");
}

void HttpEngine::pull(const std::string& image_ref) {
    auto client = daemon_client(endpoint_, 600.0);
    client->Post("/images/create?fromImage=" + image_ref, "", "text/plain");
}

// --- CliEngine --------------------------------------------------------------

CliEngine::CliEngine(std::string binary) : binary_(std::move(binary)) {}

bool CliEngine::available() {
    int code = 0;
    run_command(binary_ + " version --format '{{.Server.Version}}'", &code);
    return code == 0;
}

ContainerEngine::EngineBuild CliEngine::build(const std::string& dockerfile_text,
                                              const std::filesystem::path& context_dir,
                                              const std::string& tag,
                                              const MeasurementConfig& config) {
    auto dockerfile_path =
        std::filesystem::temp_directory_path() / ("dfr-build-" + tag + ".Dockerfile");
    {
        std::ofstream out(dockerfile_path, std::ios::binary);
        out << dockerfile_text;
    }

    std::ostringstream command;
    command << "timeout " << static_cast<long>(config.timeout_s) << " " << binary_ << " build";
    if (config.no_cache) command << " --no-cache";
    if (!config.network) command << " --network=none";
    command << " -t " << shell_quote(tag) << " -f " << shell_quote(dockerfile_path.string())
            << " " << shell_quote(context_dir.string());

    EngineBuild result;
    auto start = std::chrono::steady_clock::now();
    int code = 0;
    result.log = run_command(command.str(), &code);
    result.duration_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.success = code == 0;
    std::filesystem::remove(dockerfile_path);
    return result;
}

std::optional<std::uint64_t> CliEngine::image_size_bytes(const std::string& tag) {
    int code = 0;
    std::string output =
        run_command(binary_ + " image inspect --format '{{.Size}}' " + shell_quote(tag), &code);
    if (code != 0) return std::nullopt;
    try {
        return std::stoull(output);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

void CliEngine::remove_image(const std::string& tag) {
    int code = 0;
    run_command(binary_ + " rmi -f " + shell_quote(tag), &code);
}

void CliEngine::pull(const std::string& image_ref) {
    int code = 0;
    run_command(binary_ + " pull " + shell_quote(image_ref), &code);
}

// --- Harness ----------------------------------------------------------------

std::unique_ptr<ContainerEngine> make_engine(const std::string& kind,
                                             const MeasurementConfig& config) {
    if (kind == "stub") return std::make_unique<StubEngine>();
    if (kind == "http") return std::make_unique<HttpEngine>(config.engine_endpoint);
    if (kind == "cli") {
        return std::make_unique<CliEngine>(
            config.engine_endpoint.empty() ? "docker" : config.engine_endpoint);
    }
    throw EngineUnavailable("unknown engine kind: " + kind);
}

BuildResult build_and_measure(const std::string& dockerfile_text,
                              const std::filesystem::path& context_dir,
                              const MeasurementConfig& config, ContainerEngine& engine) {
    if (config.runs < 1) throw ContextError("runs must be at least 1");
    if (!std::filesystem::is_directory(context_dir)) {
        throw ContextError("build context missing: " + context_dir.string());
    }
    if (!engine.available()) {
        throw EngineUnavailable("container engine unreachable at " +
                                (config.engine_endpoint.empty() ? std::string("default endpoint")
                                                                : config.engine_endpoint));
    }

    std::lock_guard serialize_builds(build_mutex());

    if (!config.include_pull_time) {
        try {
            DockerfileAst ast = parse(dockerfile_text);
            for (const auto& ref : external_base_refs(ast)) engine.pull(ref);
        } catch (const SyntaxError&) {
            // The engine will surface its own diagnostic during the build.
        }
    }

    std::string tag = "dfr-measure-" + std::to_string(fnv64(dockerfile_text) % 1000000000ull);
    BuildResult result;
    for (int run = 0; run < config.runs; ++run) {
        auto build = engine.build(dockerfile_text, context_dir, tag, config);
        persist_log(config, run, build.log);
        if (!build.success) {
            result.success = false;
            result.log = build.log;
            result.failure = classify_failure(build.log);
            result.per_run_durations_s.clear();
            return result;
        }
        result.per_run_durations_s.push_back(build.duration_s);
        result.log = build.log;
    }

    auto size_bytes = engine.image_size_bytes(tag);
    engine.remove_image(tag);
    if (!size_bytes) {
        throw EngineUnavailable("image inspect failed after a successful build");
    }

    result.success = true;
    result.image_size_mb = static_cast<double>(*size_bytes) / 1e6;
    double sum = 0.0;
    for (double d : result.per_run_durations_s) sum += d;
    result.build_duration_s = sum / static_cast<double>(result.per_run_durations_s.size());
    return result;
}

bool behavior_preserved(const DockerfileAst& before, const DockerfileAst& after) {
    return functional_fingerprint(before) == functional_fingerprint(after);
}

}  // namespace dfr
