#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "aio/head/head.hpp"

namespace aio::inline AIO_ABI {

inline constexpr double kPrecisionThreshold = 20;  // pixels

/// Overlap with a normalised centre-distance penalty:
/// IoU - rho^2 / c^2 over the enclosing-box diagonal c, clamped to [0,1].
double complete_iou(const BBox& pred, const BBox& gt);

/// Swappable definitions of the two metrics without a fixed protocol.
struct MetricPlugins {
  std::string complete_name = "complete_iou";
  std::function<double(const BBox& pred, const BBox& gt)> complete = complete_iou;
  std::string accuracy_name = "mean_iou";
  std::function<double(const std::vector<double>& ious)> accuracy;  // mean when empty
};

struct Curve {
  std::vector<double> thresholds, values;
};

struct SequenceMetrics {
  std::string id;
  std::size_t frames = 0;
  double P = 0, P_norm = 0, AUC = 0, cAUC = 0, ACC = 0;
  Curve success, complete_success, precision, norm_precision;
};

struct MetricReport {
  std::vector<SequenceMetrics> sequences;  // sorted by id
  SequenceMetrics average;                 // per-sequence mean, curves included
  std::string complete_name, accuracy_name;
};

/// Scores aligned prediction / ground-truth trajectories. Frames whose
/// ground truth has no area (target absent) are skipped.
SequenceMetrics compute_metrics(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                                const MetricPlugins& plugins = {});

MetricReport aggregate(std::vector<SequenceMetrics> sequences, const MetricPlugins& plugins = {});

std::string report_json(const MetricReport& r);
/// "threshold,value" lines.
std::string curve_csv(const Curve& c);
/// metrics.json, per_sequence.csv and success/complete_success/precision/
/// norm_precision curve CSVs.
void write_report(const MetricReport& r, const std::filesystem::path& dir);

}  // namespace aio::inline AIO_ABI
