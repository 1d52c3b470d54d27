#pragma once

#include <string>
#include <vector>

#include "stpose/common.hpp"

namespace stpose {

// N frames of predicted and true joint locations in world millimetres. All
// metrics run in double regardless of what precision produced the numbers.
struct PredictionSet {
  int joints = 0;
  std::vector<std::vector<double>> pred;   // N rows of 3K
  std::vector<std::vector<double>> truth;  // same shape

  void validate() const;  // congruent shapes, nonempty, all finite
};

// err_k: mean over frames of the 3D Euclidean distance for joint k.
std::vector<double> per_joint_error(const PredictionSet& set);

// mean of per_joint_error.
double average_error(const PredictionSet& set);

// For each threshold, the fraction of frames whose worst-joint distance is
// within it: the empirical CDF of per-frame max-joint error. Thresholds must
// be sorted ascending.
std::vector<double> accuracy_curve(const PredictionSet& set, const std::vector<double>& thresholds);

// 0..80 mm step 1 mm, the plotting default.
std::vector<double> default_thresholds();

struct MetricsReport {
  std::vector<double> per_joint;  // K
  double average = 0;
  std::vector<double> thresholds;
  std::vector<double> fractions;
};

MetricsReport compute_metrics(const PredictionSet& set, const std::vector<double>& thresholds);

// Average error of w*J_temp + (1-w)*J_spa against the shared truth, one row
// per grid value. Both sets must carry identical truth.
struct SweepRow {
  double w = 0;
  double avg_error = 0;
};
std::vector<SweepRow> fixed_weight_fusion_sweep(const PredictionSet& temporal,
                                                const PredictionSet& spatial,
                                                const std::vector<double>& w_grid);

// report CSV: one "joint,error_mm" row per joint plus an "average,<mm>" row.
void write_report_csv(const std::string& path, const MetricsReport& report);
// curve CSV: "threshold_mm,fraction" rows.
void write_curve_csv(const std::string& path, const MetricsReport& report);
// sweep CSV: "w,avg_error_mm" rows.
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

// Standalone SVG line plot of the accuracy curve; pure emission.
void write_curve_svg(const std::string& path, const MetricsReport& report);

}  // namespace stpose
