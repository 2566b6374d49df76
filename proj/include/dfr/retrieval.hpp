// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "dfr/ast.hpp"
#include "dfr/demo_store.hpp"
#include "dfr/errors.hpp"

namespace dfr {

/// The five equally weighted ranking components for one demonstration
/// against one query, plus their 0.2-weighted sum.
struct ScoreBreakdown {
    double textual_similarity = 0.0;  // BM25 normalized to [0,1] by the per-query max
    int understandability = 0;
    int maintainability = 0;
    double image_size = 0.0;
    double build_duration = 0.0;
    double total = 0.0;

    bool operator==(const ScoreBreakdown&) const = default;
};

struct ScoredDemonstration {
    Demonstration demo;
    ScoreBreakdown score;
};

/// Okapi BM25 of one document against a tokenized query. Query tokens are
/// consumed as given, repeated terms contributing once per occurrence.
double bm25(const std::vector<std::string>& query_tokens,
            const std::vector<std::string>& doc_tokens, const CorpusStats& stats,
            double k1 = 1.2, double b = 0.75);

/// 1 - after/before: positive is an improvement, unbounded below.
double image_size_score(double before_mb, double after_mb);
double build_duration_score(double before_s, double after_s);

/// Scores one demonstration. `bm25_normalizer` is the per-query maximum raw
/// BM25 over the corpus; a zero maximum maps every textual component to 0.
ScoreBreakdown demonstration_score(const Demonstration& demo,
                                   const std::vector<std::string>& query_tokens,
                                   const CorpusStats& stats, double bm25_normalizer);

/// The n highest-scoring demonstrations in ascending total order, so the
/// strongest example sits closest to the query in the assembled prompt.
/// Ties resolve by demonstration id.
std::vector<ScoredDemonstration> select_demonstrations(const Corpus& corpus,
                                                       const DockerfileAst& query, std::size_t n);

}  // namespace dfr
