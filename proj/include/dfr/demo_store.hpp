// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dfr/errors.hpp"
#include "dfr/refactoring.hpp"

namespace dfr {

/// Developer-agreed quality judgments plus the measured build metrics for
/// one before/after pair. Discrete fields take -1, 0, or 1; the measured
/// fields are strictly positive.
struct QualityAnnotation {
    int understandability = 0;
    int maintainability = 0;
    double image_size_before_mb = 0.0;
    double image_size_after_mb = 0.0;
    double build_duration_before_s = 0.0;
    double build_duration_after_s = 0.0;

    bool operator==(const QualityAnnotation&) const = default;
};

/// One retrieval-corpus record: a refactoring shown to the model as an
/// input/output example together with the actions that were applied.
struct Demonstration {
    std::string id;
    std::string project;
    std::string commit;
    std::string v_before;
    std::string v_after;
    std::vector<RefactoringAction> actions;
    QualityAnnotation annotation;

    bool operator==(const Demonstration&) const = default;
};

/// Aggregates over the tokenized v_before texts, consumed by BM25.
struct CorpusStats {
    std::size_t doc_count = 0;
    double avg_doc_len = 0.0;
    std::map<std::string, std::size_t> doc_freq;

    bool operator==(const CorpusStats&) const = default;
};

struct Corpus {
    std::vector<Demonstration> demos;
    CorpusStats stats;
    std::vector<std::string> diagnostics;  // one line per rejected record
};

/// Loads a JSON-Lines corpus, validating every record. Invalid records are
/// dropped with a diagnostic; an empty result raises CorpusError.
Corpus load_corpus(const std::filesystem::path& path);

/// Validates one record and normalizes it into a Demonstration.
/// Throws CorpusError with the reason when the record breaks an invariant.
Demonstration validate_record(const std::string& json_line);

/// Serializes one demonstration as a single JSON line.
std::string demonstration_to_json(const Demonstration& demo);

/// Appends one demonstration to a JSONL corpus file (single-writer contract).
void append_demonstration(const std::filesystem::path& path, const Demonstration& demo);

/// True when a commit message self-affirms a Dockerfile refactoring:
/// it matches refactor*/fix*/improve* and mentions "Dockerfile",
/// both case-insensitive.
bool is_sar_candidate(std::string_view commit_message);

struct IngestMetadata {
    std::string id;
    std::string project;
    std::string commit;
    int understandability = 0;
    int maintainability = 0;
};

struct IngestMeasurements {
    bool before_build_ok = false;
    bool after_build_ok = false;
    double image_size_before_mb = 0.0;
    double image_size_after_mb = 0.0;
    double build_duration_before_s = 0.0;
    double build_duration_after_s = 0.0;
};

/// Admits a pair into the corpus only when both versions built and the
/// behavior fingerprints match; the rejection reason names the first filter
/// that failed (build-before, build-after, behavior-change).
Demonstration ingest_pair(const std::string& v_before, const std::string& v_after,
                          const IngestMetadata& metadata,
                          const IngestMeasurements& measurements);

struct SplitResult {
    std::vector<Demonstration> train;
    std::vector<Demonstration> test;
};

/// Deterministic project-disjoint split: no project contributes to both
/// sides, and the train side holds about train_fraction of the records.
SplitResult split_corpus(const std::vector<Demonstration>& demos, double train_fraction);

/// Recomputes corpus statistics from a demonstration list.
CorpusStats compute_stats(const std::vector<Demonstration>& demos);

}  // namespace dfr
