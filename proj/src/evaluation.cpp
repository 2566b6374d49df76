// SPDX-License-Identifier: Apache-2.0
#include "dfr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace dfr {

namespace {

using nlohmann::json;

/// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& values) {
    std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    double n = static_cast<double>(xs.size());
    double mean_x = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double mean_y = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double covariance = 0.0, var_x = 0.0, var_y = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double dx = xs[i] - mean_x;
        double dy = ys[i] - mean_y;
        covariance += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if (var_x == 0.0 || var_y == 0.0) {
        throw InsufficientData("a constant series has no rank variance");
    }
    return covariance / std::sqrt(var_x * var_y);
}

/// Tallies one continuous metric; entries are (before, after) per pair.
MetricAggregate tally_continuous(const std::vector<std::pair<double, double>>& entries,
                                 int successful_pairs) {
    MetricAggregate metric;
    double total_before = 0.0;
    for (const auto& [before, after] : entries) {
        if (after < before)
            ++metric.improved;
        else if (after > before)
            ++metric.worsened;
        else
            ++metric.unchanged;
        metric.total_reduction += before - after;
        total_before += before;
    }
    if (successful_pairs > 0) {
        metric.improvement_rate = static_cast<double>(metric.improved) / successful_pairs;
        metric.deterioration_rate = static_cast<double>(metric.worsened) / successful_pairs;
        metric.average_reduction_abs = metric.total_reduction / successful_pairs;
    }
    if (total_before > 0.0) {
        metric.average_reduction_pct = metric.total_reduction / total_before;
    }
    return metric;
}

/// Tallies a {-1,0,1} quality delta; a successful pair without an annotated
/// delta counts as unchanged.
MetricAggregate tally_discrete(const std::vector<std::optional<int>>& deltas,
                               int successful_pairs) {
    MetricAggregate metric;
    for (const auto& delta : deltas) {
        int value = delta.value_or(0);
        if (value > 0)
            ++metric.improved;
        else if (value < 0)
            ++metric.worsened;
        else
            ++metric.unchanged;
    }
    if (successful_pairs > 0) {
        metric.improvement_rate = static_cast<double>(metric.improved) / successful_pairs;
        metric.deterioration_rate = static_cast<double>(metric.worsened) / successful_pairs;
    }
    return metric;
}

long round_half_away(double value) {
    return static_cast<long>(value >= 0.0 ? std::floor(value + 0.5) : std::ceil(value - 0.5));
}

json metric_to_json(const MetricAggregate& metric, bool continuous) {
    json doc{{"improved", metric.improved},
             {"worsened", metric.worsened},
             {"unchanged", metric.unchanged},
             {"improvement_rate", metric.improvement_rate},
             {"deterioration_rate", metric.deterioration_rate}};
    if (continuous) {
        doc["average_reduction_abs"] = metric.average_reduction_abs;
        doc["average_reduction_pct"] = metric.average_reduction_pct;
        doc["total_reduction"] = metric.total_reduction;
    }
    return doc;
}

std::string format_value(double value) {
    std::ostringstream out;
    out.precision(4);
    out << std::fixed << value;
    return out.str();
}

}  // namespace

AggregateReport aggregate(const std::vector<EvaluationPair>& pairs) {
    if (pairs.empty()) throw EmptyInput("aggregate requires at least one pair");

    AggregateReport report;
    report.pair_count = static_cast<int>(pairs.size());

    std::vector<std::pair<double, double>> sizes;
    std::vector<std::pair<double, double>> durations;
    std::vector<std::optional<int>> understandability;
    std::vector<std::optional<int>> maintainability;

    for (const auto& pair : pairs) {
        if (!pair.before.success || !pair.after.success) continue;
        ++report.successful_pairs;
        if (pair.before.image_size_mb && pair.after.image_size_mb) {
            sizes.emplace_back(*pair.before.image_size_mb, *pair.after.image_size_mb);
        }
        if (pair.before.build_duration_s && pair.after.build_duration_s) {
            durations.emplace_back(*pair.before.build_duration_s, *pair.after.build_duration_s);
        }
        understandability.push_back(pair.understandability_delta);
        maintainability.push_back(pair.maintainability_delta);
    }

    report.build_success_rate =
        static_cast<double>(report.successful_pairs) / report.pair_count;
    report.image_size = tally_continuous(sizes, report.successful_pairs);
    report.build_duration = tally_continuous(durations, report.successful_pairs);
    report.understandability = tally_discrete(understandability, report.successful_pairs);
    report.maintainability = tally_discrete(maintainability, report.successful_pairs);
    return report;
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) {
        throw LengthMismatch("series lengths differ: " + std::to_string(xs.size()) + " vs " +
                             std::to_string(ys.size()));
    }
    if (xs.size() < 2) throw InsufficientData("correlation needs at least two points");
    return pearson(average_ranks(xs), average_ranks(ys));
}

std::vector<std::pair<int, int>> segment_lifecycle(int commit_count) {
    if (commit_count < 10) {
        throw TooFewCommits("lifecycle analysis needs at least 10 commits, got " +
                            std::to_string(commit_count));
    }
    std::vector<std::pair<int, int>> ranges;
    int base = commit_count / 10;
    int extra = commit_count % 10;
    int start = 0;
    for (int decile = 0; decile < 10; ++decile) {
        int size = base + (decile < extra ? 1 : 0);
        ranges.emplace_back(start, start + size);
        start += size;
    }
    return ranges;
}

std::vector<double> carry_forward(const std::vector<std::optional<double>>& series) {
    bool any_present =
        std::any_of(series.begin(), series.end(), [](const auto& v) { return v.has_value(); });
    if (!any_present) throw AllMissing("every entry in the series is missing");

    std::vector<double> filled(series.size(), 0.0);
    std::vector<bool> done(series.size(), false);
    // Backward pass: each gap takes the next present value.
    std::optional<double> next;
    for (std::size_t i = series.size(); i-- > 0;) {
        if (series[i].has_value()) next = *series[i];
        if (next.has_value()) {
            filled[i] = *next;
            done[i] = true;
        }
    }
    // Trailing gaps (nothing ahead) take the last present value.
    std::optional<double> previous;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series[i].has_value()) previous = *series[i];
        if (!done[i]) filled[i] = *previous;
    }
    return filled;
}

LifecycleProfile lifecycle_profile(const std::vector<CommitMeasurement>& history) {
    auto ranges = segment_lifecycle(static_cast<int>(history.size()));

    std::vector<std::optional<double>> sizes, durations;
    for (const auto& commit : history) {
        sizes.push_back(commit.image_size_mb);
        durations.push_back(commit.build_duration_s);
    }
    std::vector<double> size_series = carry_forward(sizes);
    std::vector<double> duration_series = carry_forward(durations);
    double size_base = size_series.front();
    double duration_base = duration_series.front();

    int first_refactoring_decile = -1;
    LifecycleProfile profile;
    for (int decile = 0; decile < 10; ++decile) {
        auto [start, end] = ranges[decile];
        double size_sum = 0.0, duration_sum = 0.0;
        int refactorings = 0;
        for (int i = start; i < end; ++i) {
            size_sum += (size_series[i] - size_base) / size_base * 100.0;
            duration_sum += (duration_series[i] - duration_base) / duration_base * 100.0;
            if (history[i].refactoring_detected) {
                ++refactorings;
                if (first_refactoring_decile < 0) first_refactoring_decile = decile;
            }
        }
        int count = end - start;
        profile.mean_size_increase_pct[decile] = count ? size_sum / count : 0.0;
        profile.mean_duration_increase_pct[decile] = count ? duration_sum / count : 0.0;
        profile.refactoring_commit_proportion[decile] =
            count ? static_cast<double>(refactorings) / count : 0.0;
    }
    for (int decile = 0; decile < 10; ++decile) {
        profile.cumulative_first_refactoring_pct[decile] =
            (first_refactoring_decile >= 0 && decile >= first_refactoring_decile) ? 100.0 : 0.0;
    }
    return profile;
}

LifecycleProfile mean_profile(const std::vector<LifecycleProfile>& profiles) {
    if (profiles.empty()) throw EmptyInput("no profiles to average");
    LifecycleProfile mean;
    for (const auto& profile : profiles) {
        for (int d = 0; d < 10; ++d) {
            mean.mean_size_increase_pct[d] += profile.mean_size_increase_pct[d];
            mean.mean_duration_increase_pct[d] += profile.mean_duration_increase_pct[d];
            mean.refactoring_commit_proportion[d] += profile.refactoring_commit_proportion[d];
            mean.cumulative_first_refactoring_pct[d] +=
                profile.cumulative_first_refactoring_pct[d];
        }
    }
    double n = static_cast<double>(profiles.size());
    for (int d = 0; d < 10; ++d) {
        mean.mean_size_increase_pct[d] /= n;
        mean.mean_duration_increase_pct[d] /= n;
        mean.refactoring_commit_proportion[d] /= n;
        mean.cumulative_first_refactoring_pct[d] /= n;
    }
    return mean;
}

std::string format_percent(double fraction) {
    return std::to_string(round_half_away(fraction * 100.0)) + "%";
}

std::string format_rate(int numerator, int denominator) {
    double fraction = denominator ? static_cast<double>(numerator) / denominator : 0.0;
    return format_percent(fraction) + " (" + std::to_string(numerator) + "/" +
           std::to_string(denominator) + ")";
}

std::string render_report_json(const AggregateReport& report) {
    json doc{{"pair_count", report.pair_count},
             {"successful_pairs", report.successful_pairs},
             {"build_success_rate", report.build_success_rate},
             {"image_size", metric_to_json(report.image_size, true)},
             {"build_duration", metric_to_json(report.build_duration, true)},
             {"understandability", metric_to_json(report.understandability, false)},
             {"maintainability", metric_to_json(report.maintainability, false)}};
    return doc.dump(2) + "\n";
}

std::string render_report_markdown(const AggregateReport& report) {
    int pairs = report.successful_pairs;
    auto continuous_row = [pairs](const std::string& name, const MetricAggregate& metric,
                                  const std::string& unit) {
        std::ostringstream row;
        row << "| " << name << " | " << format_rate(metric.improved, pairs) << " | "
            << format_rate(metric.worsened, pairs) << " | "
            << round_half_away(metric.average_reduction_abs) << " " << unit << " ("
            << format_percent(metric.average_reduction_pct) << ") | "
            << round_half_away(metric.total_reduction) << " " << unit << " |\n";
        return row.str();
    };
    auto discrete_row = [pairs](const std::string& name, const MetricAggregate& metric) {
        std::ostringstream row;
        row << "| " << name << " | " << format_rate(metric.improved, pairs) << " | "
            << format_rate(metric.worsened, pairs) << " | — | — |\n";
        return row.str();
    };

    std::ostringstream out;
    out << "Build success rate: "
        << format_rate(report.successful_pairs, report.pair_count) << "\n\n";
    out << "| Metric | Improvement Rate | Deterioration Rate | Average Reduction | "
           "Total Reduction |\n";
    out << "|---|---|---|---|---|\n";
    out << continuous_row("Image size", report.image_size, "MB");
    out << continuous_row("Build duration", report.build_duration, "s");
    out << discrete_row("Understandability", report.understandability);
    out << discrete_row("Maintainability", report.maintainability);
    return out.str();
}

std::string render_lifecycle_csv(const LifecycleProfile& profile) {
    std::ostringstream out;
    out << "decile,metric,value\n";
    for (int d = 0; d < 10; ++d) {
        out << d + 1 << ",size_increase_pct," << format_value(profile.mean_size_increase_pct[d])
            << "\n";
    }
    for (int d = 0; d < 10; ++d) {
        out << d + 1 << ",duration_increase_pct,"
            << format_value(profile.mean_duration_increase_pct[d]) << "\n";
    }
    for (int d = 0; d < 10; ++d) {
        out << d + 1 << ",refactoring_proportion,"
            << format_value(profile.refactoring_commit_proportion[d]) << "\n";
    }
    for (int d = 0; d < 10; ++d) {
        out << d + 1 << ",cumulative_first_refactoring_pct,"
            << format_value(profile.cumulative_first_refactoring_pct[d]) << "\n";
    }
    return out.str();
}

std::string build_result_to_json(const BuildResult& result) {
    json doc{{"success", result.success},
             {"per_run_durations_s", result.per_run_durations_s},
             {"log", result.log}};
    if (result.image_size_mb) doc["image_size_mb"] = *result.image_size_mb;
    if (result.build_duration_s) doc["build_duration_s"] = *result.build_duration_s;
    if (result.failure) doc["failure"] = failure_category_name(*result.failure);
    return doc.dump(2) + "\n";
}

BuildResult build_result_from_json(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw CorpusError("build result is not a JSON object");
    }
    BuildResult result;
    result.success = doc.value("success", false);
    if (doc.contains("image_size_mb")) result.image_size_mb = doc["image_size_mb"].get<double>();
    if (doc.contains("build_duration_s")) {
        result.build_duration_s = doc["build_duration_s"].get<double>();
    }
    if (doc.contains("per_run_durations_s")) {
        result.per_run_durations_s = doc["per_run_durations_s"].get<std::vector<double>>();
    }
    result.log = doc.value("log", std::string{});
    if (doc.contains("failure")) {
        std::string name = doc["failure"].get<std::string>();
        for (FailureCategory category :
             {FailureCategory::BuildContext, FailureCategory::Dependency, FailureCategory::Syntax,
              FailureCategory::MissingBaseImage, FailureCategory::Other}) {
            if (name == failure_category_name(category)) result.failure = category;
        }
    }
    return result;
}

}  // namespace dfr
