// SPDX-License-Identifier: Apache-2.0
#include "dfr/demo_store.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dfr/ast.hpp"
#include "dfr/tokens.hpp"

namespace dfr {

namespace {

using nlohmann::json;

void check_discrete(const char* field, int value) {
    if (value < -1 || value > 1) {
        throw CorpusError(std::string(field) + " must be -1, 0, or 1, got " +
                          std::to_string(value));
    }
}

void check_positive(const char* field, double value) {
    if (!(value > 0.0)) {
        throw CorpusError(std::string(field) + " must be positive, got " +
                          std::to_string(value));
    }
}

QualityAnnotation annotation_from_json(const json& node) {
    QualityAnnotation annotation;
    annotation.understandability = node.at("understandability").get<int>();
    annotation.maintainability = node.at("maintainability").get<int>();
    annotation.image_size_before_mb = node.at("image_size_before_mb").get<double>();
    annotation.image_size_after_mb = node.at("image_size_after_mb").get<double>();
    annotation.build_duration_before_s = node.at("build_duration_before_s").get<double>();
    annotation.build_duration_after_s = node.at("build_duration_after_s").get<double>();
    check_discrete("understandability", annotation.understandability);
    check_discrete("maintainability", annotation.maintainability);
    check_positive("image_size_before_mb", annotation.image_size_before_mb);
    check_positive("image_size_after_mb", annotation.image_size_after_mb);
    check_positive("build_duration_before_s", annotation.build_duration_before_s);
    check_positive("build_duration_after_s", annotation.build_duration_after_s);
    return annotation;
}

json annotation_to_json(const QualityAnnotation& annotation) {
    return json{{"understandability", annotation.understandability},
                {"maintainability", annotation.maintainability},
                {"image_size_before_mb", annotation.image_size_before_mb},
                {"image_size_after_mb", annotation.image_size_after_mb},
                {"build_duration_before_s", annotation.build_duration_before_s},
                {"build_duration_after_s", annotation.build_duration_after_s}};
}

}  // namespace

Demonstration validate_record(const std::string& json_line) {
    json doc = json::parse(json_line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw CorpusError("line is not a JSON object");
    }
    Demonstration demo;
    try {
        demo.id = doc.at("id").get<std::string>();
        demo.project = doc.at("project").get<std::string>();
        demo.commit = doc.value("commit", std::string{});
        demo.v_before = doc.at("v_before").get<std::string>();
        demo.v_after = doc.at("v_after").get<std::string>();
        if (doc.contains("actions")) {
            demo.actions = actions_from_json(doc["actions"].dump());
        }
        demo.annotation = annotation_from_json(doc.at("annotation"));
    } catch (const json::exception& err) {
        throw CorpusError(std::string("malformed record: ") + err.what());
    }

    DockerfileAst before_ast, after_ast;
    try {
        before_ast = parse(demo.v_before);
    } catch (const SyntaxError& err) {
        throw CorpusError("v_before does not parse (line " + std::to_string(err.line()) +
                          "): " + err.what());
    }
    try {
        after_ast = parse(demo.v_after);
    } catch (const SyntaxError& err) {
        throw CorpusError("v_after does not parse (line " + std::to_string(err.line()) +
                          "): " + err.what());
    }
    if (!(functional_fingerprint(before_ast) == functional_fingerprint(after_ast))) {
        throw CorpusError("behavior fingerprint differs between v_before and v_after");
    }
    return demo;
}

CorpusStats compute_stats(const std::vector<Demonstration>& demos) {
    CorpusStats stats;
    stats.doc_count = demos.size();
    std::size_t total_len = 0;
    for (const auto& demo : demos) {
        auto tokens = retrieval_tokens(demo.v_before);
        total_len += tokens.size();
        std::set<std::string> seen(tokens.begin(), tokens.end());
        for (const auto& term : seen) ++stats.doc_freq[term];
    }
    stats.avg_doc_len =
        demos.empty() ? 0.0 : static_cast<double>(total_len) / static_cast<double>(demos.size());
    return stats;
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError("cannot open corpus file: " + path.string());
    Corpus corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            corpus.demos.push_back(validate_record(line));
        } catch (const CorpusError& err) {
            corpus.diagnostics.push_back("record " + std::to_string(lineno) + ": " + err.what());
        }
    }
    if (corpus.demos.empty()) {
        throw CorpusError("no valid records in " + path.string() +
                          (corpus.diagnostics.empty()
                               ? ""
                               : " (first problem: " + corpus.diagnostics.front() + ")"));
    }
    corpus.stats = compute_stats(corpus.demos);
    return corpus;
}

std::string demonstration_to_json(const Demonstration& demo) {
    json doc{{"id", demo.id},
             {"project", demo.project},
             {"commit", demo.commit},
             {"v_before", demo.v_before},
             {"v_after", demo.v_after},
             {"actions", json::parse(actions_to_json(demo.actions))},
             {"annotation", annotation_to_json(demo.annotation)}};
    return doc.dump();
}

void append_demonstration(const std::filesystem::path& path, const Demonstration& demo) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw CorpusError("cannot open corpus file for append: " + path.string());
    out << demonstration_to_json(demo) << '\n';
}

bool is_sar_candidate(std::string_view commit_message) {
    static const std::regex pattern(R"(\b(refactor|fix|improve))",
                                    std::regex::icase | std::regex::optimize);
    static const std::regex mention(R"(\bdockerfile)",
                                    std::regex::icase | std::regex::optimize);
    return std::regex_search(commit_message.begin(), commit_message.end(), pattern) &&
           std::regex_search(commit_message.begin(), commit_message.end(), mention);
}

Demonstration ingest_pair(const std::string& v_before, const std::string& v_after,
                          const IngestMetadata& metadata,
                          const IngestMeasurements& measurements) {
    if (!measurements.before_build_ok) {
        throw IngestRejection(IngestRejection::Reason::BuildBefore,
                              "pre-refactoring version failed to build");
    }
    if (!measurements.after_build_ok) {
        throw IngestRejection(IngestRejection::Reason::BuildAfter,
                              "post-refactoring version failed to build");
    }
    DockerfileAst before_ast = parse(v_before);
    DockerfileAst after_ast = parse(v_after);
    if (!(functional_fingerprint(before_ast) == functional_fingerprint(after_ast))) {
        throw IngestRejection(IngestRejection::Reason::BehaviorChange,
                              "application files or startup commands differ");
    }
    Demonstration demo;
    demo.id = metadata.id;
    demo.project = metadata.project;
    demo.commit = metadata.commit;
    demo.v_before = v_before;
    demo.v_after = v_after;
    demo.actions = detect_refactorings(before_ast, after_ast);
    demo.annotation.understandability = metadata.understandability;
    demo.annotation.maintainability = metadata.maintainability;
    demo.annotation.image_size_before_mb = measurements.image_size_before_mb;
    demo.annotation.image_size_after_mb = measurements.image_size_after_mb;
    demo.annotation.build_duration_before_s = measurements.build_duration_before_s;
    demo.annotation.build_duration_after_s = measurements.build_duration_after_s;
    check_discrete("understandability", demo.annotation.understandability);
    check_discrete("maintainability", demo.annotation.maintainability);
    check_positive("image_size_before_mb", demo.annotation.image_size_before_mb);
    check_positive("image_size_after_mb", demo.annotation.image_size_after_mb);
    check_positive("build_duration_before_s", demo.annotation.build_duration_before_s);
    check_positive("build_duration_after_s", demo.annotation.build_duration_after_s);
    return demo;
}

SplitResult split_corpus(const std::vector<Demonstration>& demos, double train_fraction) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0) {
        throw CorpusError("train_fraction must lie strictly between 0 and 1");
    }
    std::map<std::string, std::vector<const Demonstration*>> by_project;
    for (const auto& demo : demos) by_project[demo.project].push_back(&demo);

    // Largest projects first so the greedy assignment can balance the tail;
    // name breaks ties to keep the split deterministic.
    std::vector<std::pair<std::string, std::vector<const Demonstration*>>> projects(
        by_project.begin(), by_project.end());
    std::sort(projects.begin(), projects.end(), [](const auto& a, const auto& b) {
        if (a.second.size() != b.second.size()) return a.second.size() > b.second.size();
        return a.first < b.first;
    });

    SplitResult result;
    double train_target = train_fraction * static_cast<double>(demos.size());
    for (const auto& [name, records] : projects) {
        double train_gap = train_target - static_cast<double>(result.train.size());
        double test_gap = (static_cast<double>(demos.size()) - train_target) -
                          static_cast<double>(result.test.size());
        auto& side = train_gap >= test_gap ? result.train : result.test;
        for (const auto* record : records) side.push_back(*record);
    }
    return result;
}

}  // namespace dfr
