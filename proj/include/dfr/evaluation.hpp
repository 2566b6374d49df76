// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dfr/build_harness.hpp"
#include "dfr/errors.hpp"

namespace dfr {

enum class Variant { Original, Developer, Automated };

/// One measured build of one Dockerfile variant. Quality deltas compare the
/// variant against its original and are present only when both builds of the
/// pair succeeded.
struct EvaluationRecord {
    std::string id;
    Variant variant = Variant::Automated;
    BuildResult build;
    std::optional<int> understandability_delta;  // -1, 0, or +1
    std::optional<int> maintainability_delta;
    bool behavior_ok = false;
};

/// Original build joined with its refactored counterpart.
struct EvaluationPair {
    std::string id;
    BuildResult before;
    BuildResult after;
    std::optional<int> understandability_delta;
    std::optional<int> maintainability_delta;
    bool behavior_ok = true;
};

/// Improvement/deterioration tallies for one metric over the successfully
/// built pairs. Reductions are meaningful for continuous metrics only.
struct MetricAggregate {
    int improved = 0;
    int worsened = 0;
    int unchanged = 0;
    double improvement_rate = 0.0;
    double deterioration_rate = 0.0;
    double average_reduction_abs = 0.0;  // total_reduction / successful pairs
    double average_reduction_pct = 0.0;  // total_reduction / sum of before values
    double total_reduction = 0.0;        // sum of (before - after)
};

struct AggregateReport {
    int pair_count = 0;
    int successful_pairs = 0;  // both builds succeeded
    double build_success_rate = 0.0;
    MetricAggregate image_size;       // MB
    MetricAggregate build_duration;   // seconds
    MetricAggregate understandability;
    MetricAggregate maintainability;
};

/// Per-decile evolution series, all relative to the first commit; the
/// cumulative series steps to 100 at the decile of the first refactoring.
struct LifecycleProfile {
    std::array<double, 10> mean_size_increase_pct{};
    std::array<double, 10> mean_duration_increase_pct{};
    std::array<double, 10> refactoring_commit_proportion{};
    std::array<double, 10> cumulative_first_refactoring_pct{};
};

/// One commit's measurements; a failed build leaves both values empty.
struct CommitMeasurement {
    std::optional<double> image_size_mb;
    std::optional<double> build_duration_s;
    bool refactoring_detected = false;
};

/// Tallies improvements (strictly better after), deteriorations, and
/// reductions over all successfully built pairs.
AggregateReport aggregate(const std::vector<EvaluationPair>& pairs);

/// Rank correlation with average ranks for ties.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

/// Ten contiguous [start, end) index ranges covering commit_count commits;
/// earlier deciles take the extra commit when the count is not divisible.
std::vector<std::pair<int, int>> segment_lifecycle(int commit_count);

/// Fills gaps with the next present value; trailing gaps take the last
/// present value.
std::vector<double> carry_forward(const std::vector<std::optional<double>>& series);

/// Decile profile of one project's commit history.
LifecycleProfile lifecycle_profile(const std::vector<CommitMeasurement>& history);

/// Unweighted per-decile mean across projects.
LifecycleProfile mean_profile(const std::vector<LifecycleProfile>& profiles);

/// Integer percent, rounding half away from zero: 12.5% prints as "13%".
std::string format_percent(double fraction);

/// Printed rate with its fraction: "82% (105/128)".
std::string format_rate(int numerator, int denominator);

std::string render_report_json(const AggregateReport& report);
std::string render_report_markdown(const AggregateReport& report);
std::string render_lifecycle_csv(const LifecycleProfile& profile);

std::string build_result_to_json(const BuildResult& result);
BuildResult build_result_from_json(const std::string& text);

}  // namespace dfr
