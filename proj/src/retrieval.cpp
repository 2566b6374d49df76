// SPDX-License-Identifier: Apache-2.0
#include "dfr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dfr/tokens.hpp"

namespace dfr {

double bm25(const std::vector<std::string>& query_tokens,
            const std::vector<std::string>& doc_tokens, const CorpusStats& stats, double k1,
            double b) {
    if (query_tokens.empty() || doc_tokens.empty() || stats.doc_count == 0) return 0.0;
    std::map<std::string, double> tf;
    for (const auto& token : doc_tokens) tf[token] += 1.0;
    double doc_len = static_cast<double>(doc_tokens.size());
    double avg_len = stats.avg_doc_len > 0.0 ? stats.avg_doc_len : doc_len;
    double n_docs = static_cast<double>(stats.doc_count);

    double score = 0.0;
    for (const auto& term : query_tokens) {
        auto it = tf.find(term);
        if (it == tf.end()) continue;
        auto df_it = stats.doc_freq.find(term);
        double df = df_it == stats.doc_freq.end() ? 0.0 : static_cast<double>(df_it->second);
        double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
        double freq = it->second;
        score += idf * freq * (k1 + 1.0) / (freq + k1 * (1.0 - b + b * doc_len / avg_len));
    }
    return score;
}

double image_size_score(double before_mb, double after_mb) {
    if (!(before_mb > 0.0) || !(after_mb > 0.0)) {
        throw DomainError("image sizes must be positive");
    }
    return 1.0 - after_mb / before_mb;
}

double build_duration_score(double before_s, double after_s) {
    if (!(before_s > 0.0) || !(after_s > 0.0)) {
        throw DomainError("build durations must be positive");
    }
    return 1.0 - after_s / before_s;
}

ScoreBreakdown demonstration_score(const Demonstration& demo,
                                   const std::vector<std::string>& query_tokens,
                                   const CorpusStats& stats, double bm25_normalizer) {
    ScoreBreakdown breakdown;
    double raw = bm25(query_tokens, retrieval_tokens(demo.v_before), stats);
    breakdown.textual_similarity = bm25_normalizer > 0.0 ? raw / bm25_normalizer : 0.0;
    breakdown.understandability = demo.annotation.understandability;
    breakdown.maintainability = demo.annotation.maintainability;
    breakdown.image_size = image_size_score(demo.annotation.image_size_before_mb,
                                            demo.annotation.image_size_after_mb);
    breakdown.build_duration = build_duration_score(demo.annotation.build_duration_before_s,
                                                    demo.annotation.build_duration_after_s);
    breakdown.total = 0.2 * (breakdown.textual_similarity +
                             static_cast<double>(breakdown.understandability) +
                             static_cast<double>(breakdown.maintainability) +
                             breakdown.image_size + breakdown.build_duration);
    return breakdown;
}

std::vector<ScoredDemonstration> select_demonstrations(const Corpus& corpus,
                                                       const DockerfileAst& query,
                                                       std::size_t n) {
    if (n == 0) return {};
    if (n > corpus.demos.size()) {
        throw SelectionError("requested " + std::to_string(n) + " demonstrations from a corpus of " +
                             std::to_string(corpus.demos.size()));
    }
    std::string query_text = query.raw_text.empty() ? serialize(query) : query.raw_text;
    std::vector<std::string> query_tokens = retrieval_tokens(query_text);

    double normalizer = 0.0;
    for (const auto& demo : corpus.demos) {
        normalizer = std::max(
            normalizer, bm25(query_tokens, retrieval_tokens(demo.v_before), corpus.stats));
    }

    std::vector<ScoredDemonstration> scored;
    scored.reserve(corpus.demos.size());
    for (const auto& demo : corpus.demos) {
        scored.push_back({demo, demonstration_score(demo, query_tokens, corpus.stats, normalizer)});
    }
    // Top-n by total, then present ascending so the best example is last.
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.score.total != b.score.total) return a.score.total > b.score.total;
        return a.demo.id < b.demo.id;
    });
    scored.resize(n);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.score.total != b.score.total) return a.score.total < b.score.total;
        return a.demo.id < b.demo.id;
    });
    return scored;
}

}  // namespace dfr
