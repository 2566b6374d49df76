// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dfr/ast.hpp"
#include "dfr/errors.hpp"

namespace dfr {

enum class FailureCategory { BuildContext, Dependency, Syntax, MissingBaseImage, Other };

const char* failure_category_name(FailureCategory category);

/// Measurement protocol settings. Builds run `runs` times sequentially with
/// caches disabled and the mean duration is reported.
struct MeasurementConfig {
    int runs = 3;
    bool no_cache = true;
    bool network = true;
    double timeout_s = 600.0;
    std::string engine_endpoint;
    /// Pull base images before the timed runs unless set, so network pull
    /// time does not pollute duration variance.
    bool include_pull_time = false;
    /// When non-empty, per-run build logs are written here as run-N.log.
    std::filesystem::path log_dir;
};

struct BuildResult {
    bool success = false;
    std::optional<double> image_size_mb;
    std::optional<double> build_duration_s;  // mean over per_run_durations_s
    std::vector<double> per_run_durations_s;
    std::string log;
    std::optional<FailureCategory> failure;
};

/// Ordered first-match classifier over engine-log substrings. Patterns are
/// matched case-insensitively; an unmatched log is FailureCategory::Other.
class FailureRuleset {
  public:
    struct Rule {
        FailureCategory category;
        std::vector<std::string> patterns;
    };

    static FailureRuleset built_in();
    static FailureRuleset load(const std::filesystem::path& path);
    static FailureRuleset from_json_text(const std::string& text);

    FailureCategory classify(std::string_view log_text) const;
    const std::vector<Rule>& rules() const { return rules_; }

  private:
    std::vector<Rule> rules_;
};

/// Classification with the built-in ruleset; deterministic and total.
FailureCategory classify_failure(std::string_view log_text);

/// Minimal container-engine surface the harness needs: build an image from
/// a Dockerfile plus context, inspect its size, and remove it.
class ContainerEngine {
  public:
    struct EngineBuild {
        bool success = false;
        std::string log;
        double duration_s = 0.0;
    };

    virtual ~ContainerEngine() = default;

    virtual bool available() = 0;
    virtual EngineBuild build(const std::string& dockerfile_text,
                              const std::filesystem::path& context_dir, const std::string& tag,
                              const MeasurementConfig& config) = 0;
    virtual std::optional<std::uint64_t> image_size_bytes(const std::string& tag) = 0;
    virtual void remove_image(const std::string& tag) = 0;
    /// Fetch a base image ahead of the timed runs. Default: no-op.
    virtual void pull(const std::string& image_ref) { (void)image_ref; }
};

/// Offline engine with deterministic results; used for tests and dry runs.
/// Accepts whatever the core parser accepts, then applies the checks real
/// engines perform at build time: instruction arity, context-relative COPY
/// and ADD sources, and base-image availability. Successful builds report a
/// pseudo size and duration derived from the Dockerfile text alone.
class StubEngine : public ContainerEngine {
  public:
    bool available() override { return true; }
    EngineBuild build(const std::string& dockerfile_text,
                      const std::filesystem::path& context_dir, const std::string& tag,
                      const MeasurementConfig& config) override;
    std::optional<std::uint64_t> image_size_bytes(const std::string& tag) override;
    void remove_image(const std::string& tag) override;

  private:
    std::map<std::string, std::uint64_t> sizes_;  // tag -> pseudo size
};

/// Engine speaking the container daemon's HTTP API over a local unix socket
/// (default /var/run/docker.sock) or host:port endpoint.
class HttpEngine : public ContainerEngine {
  public:
    explicit HttpEngine(std::string endpoint = "/var/run/docker.sock");

    bool available() override;
    EngineBuild build(const std::string& dockerfile_text,
                      const std::filesystem::path& context_dir, const std::string& tag,
                      const MeasurementConfig& config) override;
    std::optional<std::uint64_t> image_size_bytes(const std::string& tag) override;
    void remove_image(const std::string& tag) override;
    void pull(const std::string& image_ref) override;

  private:
    std::string endpoint_;
};

/// Engine shelling out to the container CLI; fallback when the socket API
/// is unavailable.
class CliEngine : public ContainerEngine {
  public:
    explicit CliEngine(std::string binary = "docker");

    bool available() override;
    EngineBuild build(const std::string& dockerfile_text,
                      const std::filesystem::path& context_dir, const std::string& tag,
                      const MeasurementConfig& config) override;
    std::optional<std::uint64_t> image_size_bytes(const std::string& tag) override;
    void remove_image(const std::string& tag) override;
    void pull(const std::string& image_ref) override;

  private:
    std::string binary_;
};

/// Engine factory for the CLI's --engine flag: "stub", "http", or "cli".
std::unique_ptr<ContainerEngine> make_engine(const std::string& kind,
                                             const MeasurementConfig& config);

/// Runs the full measurement protocol: context and engine preflight, base
/// pulls, `config.runs` sequential no-cache builds (stopping at the first
/// failure, which is classified), size inspection in decimal MB, and image
/// cleanup. Builds are serialized process-wide.
BuildResult build_and_measure(const std::string& dockerfile_text,
                              const std::filesystem::path& context_dir,
                              const MeasurementConfig& config, ContainerEngine& engine);

/// True iff the functional fingerprints match (application files and
/// startup commands unchanged).
bool behavior_preserved(const DockerfileAst& before, const DockerfileAst& after);

/// Minimal ustar archive of context_dir (regular files only) with
/// dockerfile_text added as ./Dockerfile; the wire format for HTTP builds.
std::string tar_context(const std::filesystem::path& context_dir,
                        const std::string& dockerfile_text);

}  // namespace dfr
