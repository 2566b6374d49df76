// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dfr/ast.hpp"
#include "dfr/build_harness.hpp"
#include "dfr/demo_store.hpp"
#include "dfr/evaluation.hpp"
#include "dfr/llm_client.hpp"
#include "dfr/prompting.hpp"
#include "dfr/refactoring.hpp"
#include "dfr/retrieval.hpp"
#include "dfr/tokens.hpp"

namespace {

using nlohmann::json;

struct GlobalOptions {
    std::string corpus_path;
    std::string template_path = "assets/prompt_template.txt";
    std::string taxonomy_path = "assets/taxonomy.json";
    int shots = 0;
    int context_window = 128000;
    std::string backend = "replay";
    std::string replay_path;
    std::string record_path;
    std::string output_dir = "out";
    std::string engine_kind = "stub";
    std::string engine_endpoint;
    std::string model = "gpt-4o";
    std::string auth_env;
    int runs = 3;
    double timeout_s = 600.0;
    bool include_pull_time = false;
};

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw dfr::Error("cannot read " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw dfr::Error("cannot write " + path.string());
    out << content;
}

std::string run_capture(const std::string& command, int* exit_code) {
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
    for (char c : arg) out += (c == '\'') ? std::string("'\\''") : std::string(1, c);
    out += "'";
    return out;
}

dfr::MeasurementConfig measurement_config(const GlobalOptions& options) {
    dfr::MeasurementConfig config;
    config.runs = options.runs;
    config.timeout_s = options.timeout_s;
    config.engine_endpoint = options.engine_endpoint;
    config.include_pull_time = options.include_pull_time;
    return config;
}

dfr::LlmClient make_client(const GlobalOptions& options) {
    dfr::BackendConfig config;
    config.endpoint = options.backend;
    config.model = options.model;
    config.auth_env = options.auth_env;
    dfr::LlmClient client(config);
    if (!options.replay_path.empty()) {
        client.set_replay_store(std::make_shared<dfr::ReplayStore>(options.replay_path));
    }
    if (!options.record_path.empty()) {
        client.set_record_store(std::make_shared<dfr::ReplayStore>(options.record_path));
    }
    return client;
}

json breakdown_json(const dfr::ScoredDemonstration& scored, bool full) {
    json doc{{"id", scored.demo.id}, {"total", scored.score.total}};
    if (full) {
        doc["textual_similarity"] = scored.score.textual_similarity;
        doc["understandability"] = scored.score.understandability;
        doc["maintainability"] = scored.score.maintainability;
        doc["image_size"] = scored.score.image_size;
        doc["build_duration"] = scored.score.build_duration;
    }
    return doc;
}

/// Mean rendered-block token estimate over the corpus, used to enforce the
/// startup budget before any demonstrations are selected.
int mean_demo_tokens(const dfr::PromptTemplate& prompt_template, const dfr::Corpus& corpus) {
    if (corpus.demos.empty()) return 0;
    long total = 0;
    for (const auto& demo : corpus.demos) {
        std::string block = prompt_template.demo_format;
        auto fill = [&block](const std::string& slot, const std::string& value) {
            auto at = block.find(slot);
            if (at != std::string::npos) block.replace(at, slot.size(), value);
        };
        fill("{{v_before}}", demo.v_before);
        fill("{{v_after}}", demo.v_after);
        fill("{{actions}}", dfr::render_actions(demo.actions));
        total += dfr::estimate_tokens(block);
    }
    return static_cast<int>(total / static_cast<long>(corpus.demos.size()));
}

int cmd_refactor(const std::string& dockerfile_arg, const std::string& context_arg,
                 const GlobalOptions& options) {
    std::filesystem::path dockerfile_path = dockerfile_arg;
    std::filesystem::path context_dir =
        context_arg.empty() ? dockerfile_path.parent_path() : std::filesystem::path(context_arg);
    if (context_dir.empty()) context_dir = ".";
    std::filesystem::path out_dir = options.output_dir;
    std::filesystem::create_directories(out_dir);

    std::string before_text = read_file(dockerfile_path);
    dfr::DockerfileAst before_ast = dfr::parse(before_text);

    dfr::Taxonomy taxonomy = dfr::Taxonomy::load(options.taxonomy_path);
    dfr::PromptTemplate prompt_template =
        dfr::PromptTemplate::load(options.template_path, taxonomy);

    std::vector<dfr::ScoredDemonstration> selected;
    if (options.shots > 0) {
        if (options.corpus_path.empty()) {
            throw dfr::Error("--corpus is required when shots > 0");
        }
        dfr::Corpus corpus = dfr::load_corpus(options.corpus_path);

        dfr::AssembledPrompt zero_shot =
            dfr::assemble(prompt_template, {}, before_ast, options.context_window);
        int preamble_tokens = dfr::estimate_tokens(prompt_template.task_description + "\n\n" +
                                                   prompt_template.action_catalog + "\n");
        int query_tokens = zero_shot.token_estimate - preamble_tokens;
        int allowed = dfr::max_shots(options.context_window, preamble_tokens,
                                     std::max(1, mean_demo_tokens(prompt_template, corpus)),
                                     query_tokens);
        if (options.shots > allowed) {
            throw dfr::BudgetError("requested shots " + std::to_string(options.shots) +
                                   " exceed the window's capacity of " + std::to_string(allowed));
        }
        selected = dfr::select_demonstrations(corpus, before_ast,
                                              static_cast<std::size_t>(options.shots));
    }

    json breakdowns = json::array();
    for (const auto& scored : selected) breakdowns.push_back(breakdown_json(scored, true));
    write_file(out_dir / "score_breakdowns.json", breakdowns.dump(2) + "\n");

    dfr::AssembledPrompt prompt =
        dfr::assemble(prompt_template, selected, before_ast, options.context_window);
    write_file(out_dir / "prompt.txt", prompt.text);

    dfr::LlmClient client = make_client(options);
    std::string response = client.complete(prompt);
    std::string after_text = dfr::extract_dockerfile(response);
    write_file(out_dir / "refactored.Dockerfile", after_text);

    dfr::MeasurementConfig config = measurement_config(options);
    auto engine = dfr::make_engine(options.engine_kind, config);

    dfr::MeasurementConfig before_config = config;
    before_config.log_dir = (out_dir / "logs" / "before").string();
    dfr::MeasurementConfig after_config = config;
    after_config.log_dir = (out_dir / "logs" / "after").string();

    json report{{"dockerfile", dockerfile_arg},
                {"backend", options.backend},
                {"shots_requested", options.shots},
                {"shots_used", prompt.shots},
                {"demo_ids", prompt.demo_ids},
                {"prompt_tokens", prompt.token_estimate}};

    dfr::BuildResult before_build =
        build_and_measure(before_text, context_dir, before_config, *engine);
    write_file(out_dir / "build_before.json", dfr::build_result_to_json(before_build));
    if (!before_build.success) {
        report["behavior_preserved"] = false;
        report["build_failure"] = dfr::failure_category_name(*before_build.failure);
        write_file(out_dir / "report.json", report.dump(2) + "\n");
        std::cerr << "original build failed: "
                  << dfr::failure_category_name(*before_build.failure) << "\n";
        return 2;
    }

    dfr::BuildResult after_build =
        build_and_measure(after_text, context_dir, after_config, *engine);
    write_file(out_dir / "build_after.json", dfr::build_result_to_json(after_build));
    if (!after_build.success) {
        report["behavior_preserved"] = false;
        report["build_failure"] = dfr::failure_category_name(*after_build.failure);
        write_file(out_dir / "report.json", report.dump(2) + "\n");
        std::cerr << "build failed: " << dfr::failure_category_name(*after_build.failure)
                  << "\n";
        return 2;
    }

    dfr::DockerfileAst after_ast = dfr::parse(after_text);
    bool preserved = dfr::behavior_preserved(before_ast, after_ast);
    report["behavior_preserved"] = preserved;
    report["before"] = json{{"image_size_mb", *before_build.image_size_mb},
                            {"build_duration_s", *before_build.build_duration_s}};
    report["after"] = json{{"image_size_mb", *after_build.image_size_mb},
                           {"build_duration_s", *after_build.build_duration_s}};
    report["size_reduction_mb"] = *before_build.image_size_mb - *after_build.image_size_mb;
    report["size_reduction_pct"] =
        1.0 - *after_build.image_size_mb / *before_build.image_size_mb;
    report["duration_reduction_s"] =
        *before_build.build_duration_s - *after_build.build_duration_s;
    report["duration_reduction_pct"] =
        1.0 - *after_build.build_duration_s / *before_build.build_duration_s;
    report["actions"] = json::parse(dfr::actions_to_json(
        dfr::detect_refactorings(before_ast, after_ast)));
    write_file(out_dir / "report.json", report.dump(2) + "\n");

    if (!preserved) {
        std::cerr << "behavior changed: application files or startup command differ\n";
        return 3;
    }
    return 0;
}

int cmd_detect(const std::string& before_arg, const std::string& after_arg) {
    dfr::DockerfileAst before = dfr::parse(read_file(before_arg));
    dfr::DockerfileAst after = dfr::parse(read_file(after_arg));
    std::cout << dfr::actions_to_json(dfr::detect_refactorings(before, after)) << "\n";
    return 0;
}

int cmd_retrieve(const std::string& dockerfile_arg, std::size_t n, bool explain,
                 const GlobalOptions& options) {
    if (options.corpus_path.empty()) throw dfr::Error("--corpus is required");
    dfr::Corpus corpus = dfr::load_corpus(options.corpus_path);
    dfr::DockerfileAst query = dfr::parse(read_file(dockerfile_arg));
    auto selected = dfr::select_demonstrations(corpus, query, n);
    json out = json::array();
    for (const auto& scored : selected) out.push_back(breakdown_json(scored, explain));
    std::cout << out.dump(2) << "\n";
    return 0;
}

dfr::EvaluationPair pair_from_json(const json& doc) {
    dfr::EvaluationPair pair;
    pair.id = doc.value("id", std::string{});
    pair.before = dfr::build_result_from_json(doc.at("before").dump());
    pair.after = dfr::build_result_from_json(doc.at("after").dump());
    if (doc.contains("understandability_delta") && !doc["understandability_delta"].is_null()) {
        pair.understandability_delta = doc["understandability_delta"].get<int>();
    }
    if (doc.contains("maintainability_delta") && !doc["maintainability_delta"].is_null()) {
        pair.maintainability_delta = doc["maintainability_delta"].get<int>();
    }
    pair.behavior_ok = doc.value("behavior_ok", true);
    return pair;
}

int cmd_evaluate(const std::string& records_arg, const GlobalOptions& options) {
    std::filesystem::path records_path = records_arg;
    std::vector<dfr::EvaluationPair> pairs;

    if (std::filesystem::is_directory(records_path)) {
        std::vector<std::filesystem::path> dirs;
        for (const auto& entry : std::filesystem::directory_iterator(records_path)) {
            if (entry.is_directory() &&
                std::filesystem::exists(entry.path() / "build_before.json") &&
                std::filesystem::exists(entry.path() / "build_after.json")) {
                dirs.push_back(entry.path());
            }
        }
        std::sort(dirs.begin(), dirs.end());
        for (const auto& dir : dirs) {
            dfr::EvaluationPair pair;
            pair.id = dir.filename().string();
            pair.before = dfr::build_result_from_json(read_file(dir / "build_before.json"));
            pair.after = dfr::build_result_from_json(read_file(dir / "build_after.json"));
            pairs.push_back(std::move(pair));
        }
    } else {
        std::ifstream in(records_path);
        if (!in) throw dfr::Error("cannot read " + records_path.string());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            pairs.push_back(pair_from_json(json::parse(line)));
        }
    }

    dfr::AggregateReport report = dfr::aggregate(pairs);
    std::filesystem::path out_dir = options.output_dir;
    write_file(out_dir / "report.json", dfr::render_report_json(report));
    write_file(out_dir / "report.md", dfr::render_report_markdown(report));
    std::cout << dfr::render_report_markdown(report);
    return 0;
}

int cmd_evolve(const std::string& repo_arg, const std::string& rel_arg,
               const GlobalOptions& options) {
    int exit_code = 0;
    std::string list = run_capture(
        "git -C " + shell_quote(repo_arg) + " rev-list --reverse HEAD -- " + shell_quote(rel_arg),
        &exit_code);
    if (exit_code != 0) throw dfr::Error("git rev-list failed: " + list);

    std::vector<std::string> commits;
    std::istringstream stream(list);
    std::string line;
    while (std::getline(stream, line)) {
        if (!line.empty()) commits.push_back(line);
    }
    if (static_cast<int>(commits.size()) < 10) {
        throw dfr::TooFewCommits("lifecycle analysis needs at least 10 commits touching " +
                                 rel_arg + ", found " + std::to_string(commits.size()));
    }

    dfr::MeasurementConfig config = measurement_config(options);
    auto engine = dfr::make_engine(options.engine_kind, config);
    std::filesystem::path rel_path = rel_arg;

    std::vector<dfr::CommitMeasurement> history;
    std::string previous_text;
    for (std::size_t i = 0; i < commits.size(); ++i) {
        // Read-only checkout: extract the commit's tree, never touch the repo.
        auto tree_dir = std::filesystem::temp_directory_path() /
                        ("dfr_evolve_" + std::to_string(i) + "_" + commits[i].substr(0, 8));
        std::filesystem::remove_all(tree_dir);
        std::filesystem::create_directories(tree_dir);
        std::string extract = run_capture("git -C " + shell_quote(repo_arg) + " archive " +
                                              shell_quote(commits[i]) + " | tar -x -C " +
                                              shell_quote(tree_dir.string()),
                                          &exit_code);
        if (exit_code != 0) throw dfr::Error("checkout of " + commits[i] + " failed: " + extract);

        dfr::CommitMeasurement measurement;
        auto dockerfile_path = tree_dir / rel_path;
        if (std::filesystem::exists(dockerfile_path)) {
            std::string text = read_file(dockerfile_path);
            auto context_dir = dockerfile_path.parent_path();
            try {
                dfr::BuildResult build = build_and_measure(text, context_dir, config, *engine);
                if (build.success) {
                    measurement.image_size_mb = build.image_size_mb;
                    measurement.build_duration_s = build.build_duration_s;
                }
            } catch (const dfr::Error&) {
                // Unbuildable commit: the carry-forward rule fills it later.
            }
            if (!previous_text.empty()) {
                try {
                    auto actions = dfr::detect_refactorings(dfr::parse(previous_text),
                                                            dfr::parse(text));
                    for (const auto& action : actions) {
                        if (action.type != dfr::kUnclassified) {
                            measurement.refactoring_detected = true;
                        }
                    }
                } catch (const dfr::SyntaxError&) {
                }
            }
            previous_text = text;
        }
        history.push_back(measurement);
        std::filesystem::remove_all(tree_dir);
    }

    dfr::LifecycleProfile profile = dfr::lifecycle_profile(history);
    std::filesystem::path out_dir = options.output_dir;
    write_file(out_dir / "lifecycle.csv", dfr::render_lifecycle_csv(profile));
    std::cout << "wrote " << (out_dir / "lifecycle.csv").string() << " ("
              << commits.size() << " commits)\n";
    return 0;
}

int cmd_ingest(const std::string& before_arg, const std::string& after_arg,
               const std::string& context_arg, const dfr::IngestMetadata& metadata,
               const GlobalOptions& options) {
    if (options.corpus_path.empty()) throw dfr::Error("--corpus is required");
    std::string before_text = read_file(before_arg);
    std::string after_text = read_file(after_arg);
    std::filesystem::path context_dir =
        context_arg.empty() ? std::filesystem::path(before_arg).parent_path()
                            : std::filesystem::path(context_arg);
    if (context_dir.empty()) context_dir = ".";

    dfr::MeasurementConfig config = measurement_config(options);
    auto engine = dfr::make_engine(options.engine_kind, config);

    dfr::IngestMeasurements measurements;
    dfr::BuildResult before_build =
        build_and_measure(before_text, context_dir, config, *engine);
    measurements.before_build_ok = before_build.success;
    if (before_build.success) {
        measurements.image_size_before_mb = *before_build.image_size_mb;
        measurements.build_duration_before_s = *before_build.build_duration_s;
    }
    dfr::BuildResult after_build = build_and_measure(after_text, context_dir, config, *engine);
    measurements.after_build_ok = after_build.success;
    if (after_build.success) {
        measurements.image_size_after_mb = *after_build.image_size_mb;
        measurements.build_duration_after_s = *after_build.build_duration_s;
    }

    dfr::Demonstration demo =
        dfr::ingest_pair(before_text, after_text, metadata, measurements);
    dfr::append_demonstration(options.corpus_path, demo);
    std::cout << "ingested " << demo.id << " into " << options.corpus_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dockerfile refactoring toolkit: retrieval-augmented prompting, "
                 "build measurement, and evolution analysis"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Key/value config file; command-line flags win");

    GlobalOptions options;
    app.add_option("--corpus", options.corpus_path, "Demonstration corpus (JSONL)");
    app.add_option("--template", options.template_path, "Prompt template file");
    app.add_option("--taxonomy", options.taxonomy_path, "Refactoring taxonomy JSON");
    app.add_option("--shots", options.shots, "Demonstrations to include in the prompt")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--window", options.context_window, "Model context window in tokens");
    app.add_option("--backend", options.backend,
                   "LLM endpoint: http(s) URL, file:PATH, or 'replay'");
    app.add_option("--replay", options.replay_path, "Replay store consulted by the replay backend");
    app.add_option("--record", options.record_path, "Store where live exchanges are recorded");
    app.add_option("--output", options.output_dir, "Artifact directory");
    app.add_option("--engine", options.engine_kind, "Container engine: stub, http, or cli")
        ->check(CLI::IsMember({"stub", "http", "cli"}));
    app.add_option("--endpoint", options.engine_endpoint, "Engine socket path or host:port");
    app.add_option("--model", options.model, "Model name sent to the backend");
    app.add_option("--auth-env", options.auth_env,
                   "Environment variable holding the backend bearer token");
    app.add_option("--runs", options.runs, "Timed builds per measurement")
        ->check(CLI::PositiveNumber);
    app.add_option("--timeout", options.timeout_s, "Per-build timeout in seconds");
    app.add_flag("--include-pull-time", options.include_pull_time,
                 "Skip the pre-pull; timed runs include image pulls");

    int rc = 0;

    auto* refactor = app.add_subcommand("refactor", "Refactor one Dockerfile end to end");
    refactor->fallthrough();
    std::string refactor_dockerfile, refactor_context;
    refactor->add_option("dockerfile", refactor_dockerfile, "Dockerfile to refactor")
        ->required();
    refactor->add_option("--context", refactor_context,
                         "Build context directory (default: the Dockerfile's directory)");
    refactor->callback(
        [&] { rc = cmd_refactor(refactor_dockerfile, refactor_context, options); });

    auto* detect = app.add_subcommand("detect", "Classify refactorings between two versions");
    detect->fallthrough();
    std::string detect_before, detect_after;
    detect->add_option("before", detect_before)->required();
    detect->add_option("after", detect_after)->required();
    detect->callback([&] { rc = cmd_detect(detect_before, detect_after); });

    auto* retrieve = app.add_subcommand("retrieve", "Rank corpus demonstrations for a query");
    retrieve->fallthrough();
    std::string retrieve_dockerfile;
    std::size_t retrieve_n = 5;
    bool retrieve_explain = false;
    retrieve->add_option("dockerfile", retrieve_dockerfile)->required();
    retrieve->add_option("--n", retrieve_n, "How many demonstrations to return");
    retrieve->add_flag("--explain", retrieve_explain, "Include per-component score breakdowns");
    retrieve->callback(
        [&] { rc = cmd_retrieve(retrieve_dockerfile, retrieve_n, retrieve_explain, options); });

    auto* evaluate = app.add_subcommand("evaluate", "Aggregate paired build measurements");
    evaluate->fallthrough();
    std::string evaluate_records;
    evaluate->add_option("records", evaluate_records,
                         "Pairs JSONL file, or a directory of refactor output directories")
        ->required();
    evaluate->callback([&] { rc = cmd_evaluate(evaluate_records, options); });

    auto* evolve = app.add_subcommand("evolve", "Per-commit lifecycle profile of a repository");
    evolve->fallthrough();
    std::string evolve_repo, evolve_rel = "Dockerfile";
    evolve->add_option("repo", evolve_repo, "Git repository path")->required();
    evolve->add_option("dockerfile", evolve_rel, "Dockerfile path inside the repository");
    evolve->callback([&] { rc = cmd_evolve(evolve_repo, evolve_rel, options); });

    auto* ingest = app.add_subcommand("ingest", "Validate and add a before/after pair");
    ingest->fallthrough();
    std::string ingest_before, ingest_after, ingest_context;
    dfr::IngestMetadata metadata;
    ingest->add_option("before", ingest_before)->required();
    ingest->add_option("after", ingest_after)->required();
    ingest->add_option("--context", ingest_context,
                       "Build context for both versions (default: the before file's directory)");
    ingest->add_option("--id", metadata.id)->required();
    ingest->add_option("--project", metadata.project);
    ingest->add_option("--commit", metadata.commit);
    ingest->add_option("--understandability", metadata.understandability)
        ->check(CLI::Range(-1, 1));
    ingest->add_option("--maintainability", metadata.maintainability)->check(CLI::Range(-1, 1));
    ingest->callback([&] { rc = cmd_ingest(ingest_before, ingest_after, ingest_context, metadata, options); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const dfr::IngestRejection& e) {
        std::cerr << "rejected (" << dfr::IngestRejection::reason_name(e.reason())
                  << "): " << e.what() << "\n";
        return 1;
    } catch (const dfr::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
