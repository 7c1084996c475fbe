#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mt3d/config.hpp"
#include "mt3d/types.hpp"

namespace mt3d {

// Threshold sweep used for both metrics: 101 uniformly spaced thresholds, the
// reported value is the mean fraction over the grid (AUC of the step curve).
struct MetricCurve {
    std::vector<double> thresholds;
    std::vector<double> fractions;
    double auc = 0.0;
};

// Success: fraction of frames with IoU strictly above each threshold in [0,1].
MetricCurve success_curve(const std::vector<double>& ious);
double success_auc(const std::vector<double>& ious);

// Precision: fraction of frames with center error strictly below each
// threshold in [0, cap] (cap in meters).
MetricCurve precision_curve(const std::vector<double>& errors, double cap);
double precision_auc(const std::vector<double>& errors, double cap);

struct ClassScore {
    std::string klass;
    double success = 0.0;
    double precision = 0.0;
    std::uint64_t frame_count = 0;
};

struct AggregateResult {
    std::vector<ClassScore> per_class;
    double mean_success = 0.0;    // frame-count weighted
    double mean_precision = 0.0;  // frame-count weighted
};

AggregateResult aggregate(const std::vector<ClassScore>& scores);

// Single dense cross-attention pass over n tokens at width C:
// 4nC^2 (projections) + 2n^2C (token-pair terms). Complexity contrast only.
std::uint64_t flops_attention_baseline(const Config& cfg, std::uint64_t n);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys);

struct BenchRow {
    int n = 0;
    std::uint64_t flops_ours = 0;
    std::uint64_t flops_attn = 0;
    double steps_per_sec = 0.0;  // median over repetitions
};

struct BenchReport {
    std::vector<BenchRow> rows;
    double slope_ours = 0.0;  // log-log slope of the analytic counts
    double slope_attn = 0.0;
};

// Time the full forward path (tokenize + fusion + attention + propagation +
// Bi-SSM) on seeded synthetic clouds of each size against a full memory bank.
BenchReport run_bench(const Config& cfg, const std::vector<int>& sizes, int reps,
                      std::uint64_t seed = 7);

}  // namespace mt3d
