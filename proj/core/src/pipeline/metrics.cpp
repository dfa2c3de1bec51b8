#include "aio/pipeline/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "aio/numcore/errors.hpp"
#include "json.hpp"

namespace aio::inline AIO_ABI {

double complete_iou(const BBox& pred, const BBox& gt) {
  const double dx = pred.cx - gt.cx, dy = pred.cy - gt.cy;
  const double ex = std::max(pred.x1(), gt.x1()) - std::min(pred.x0(), gt.x0());
  const double ey = std::max(pred.y1(), gt.y1()) - std::min(pred.y0(), gt.y0());
  const double c2 = ex * ex + ey * ey;
  const double penalty = c2 > 0 ? (dx * dx + dy * dy) / c2 : 0;
  return std::clamp(iou(pred, gt) - penalty, 0.0, 1.0);
}

namespace {

// Thresholds k / denom for k = 0..steps, computed by division so that
// values such as 0.5 are exact.
Curve sweep(const std::vector<double>& scores, std::size_t steps, double denom, bool at_least) {
  Curve c;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = double(k) / denom;
    std::size_t hits = 0;
    for (double s : scores) hits += at_least ? s >= t : s <= t;
    c.thresholds.push_back(t);
    c.values.push_back(scores.empty() ? 0 : double(hits) / double(scores.size()));
  }
  return c;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0 : s / double(v.size());
}

bool has_area(const BBox& b) { return b.w > 0 && b.h > 0; }

}  // namespace

SequenceMetrics compute_metrics(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                                const MetricPlugins& plugins) {
  if (pred.size() != gt.size()) {
    throw ContractError("metrics: " + std::to_string(pred.size()) + " predictions for " + std::to_string(gt.size()) +
                        " ground-truth frames");
  }
  std::vector<double> ious, complete, errors, norm_errors;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto &g = gt[i], &p = pred[i];
    if (!has_area(g)) continue;
    ious.push_back(has_area(p) ? iou(p, g) : 0.0);
    complete.push_back(has_area(p) ? plugins.complete(p, g) : 0.0);
    const double dx = p.cx - g.cx, dy = p.cy - g.cy;
    errors.push_back(std::sqrt(dx * dx + dy * dy));
    norm_errors.push_back(std::sqrt((dx / g.w) * (dx / g.w) + (dy / g.h) * (dy / g.h)));
  }
  SequenceMetrics m;
  m.frames = ious.size();
  m.success = sweep(ious, 20, 20, true);
  m.complete_success = sweep(complete, 20, 20, true);
  m.precision = sweep(errors, 50, 1, false);
  m.norm_precision = sweep(norm_errors, 100, 200, false);
  std::size_t within = 0;
  for (double e : errors) within += e <= kPrecisionThreshold;
  m.P = errors.empty() ? 0 : double(within) / double(errors.size());
  m.P_norm = mean(m.norm_precision.values);
  m.AUC = mean(m.success.values);
  m.cAUC = mean(m.complete_success.values);
  m.ACC = plugins.accuracy ? plugins.accuracy(ious) : mean(ious);
  return m;
}

MetricReport aggregate(std::vector<SequenceMetrics> seqs, const MetricPlugins& plugins) {
  std::sort(seqs.begin(), seqs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  MetricReport r;
  r.complete_name = plugins.complete_name;
  r.accuracy_name = plugins.accuracy_name;
  auto& avg = r.average;
  avg.id = "average";
  if (!seqs.empty()) {
    const auto n = double(seqs.size());
    avg.success = seqs[0].success;
    avg.complete_success = seqs[0].complete_success;
    avg.precision = seqs[0].precision;
    avg.norm_precision = seqs[0].norm_precision;
    for (auto* c : {&avg.success, &avg.complete_success, &avg.precision, &avg.norm_precision})
      std::fill(c->values.begin(), c->values.end(), 0.0);
    for (const auto& s : seqs) {
      avg.frames += s.frames;
      avg.P += s.P / n;
      avg.P_norm += s.P_norm / n;
      avg.AUC += s.AUC / n;
      avg.cAUC += s.cAUC / n;
      avg.ACC += s.ACC / n;
      for (std::size_t k = 0; k < avg.success.values.size(); ++k) {
        avg.success.values[k] += s.success.values[k] / n;
        avg.complete_success.values[k] += s.complete_success.values[k] / n;
      }
      for (std::size_t k = 0; k < avg.precision.values.size(); ++k) avg.precision.values[k] += s.precision.values[k] / n;
      for (std::size_t k = 0; k < avg.norm_precision.values.size(); ++k)
        avg.norm_precision.values[k] += s.norm_precision.values[k] / n;
    }
  }
  r.sequences = std::move(seqs);
  return r;
}

namespace {

nlohmann::ordered_json scores(const SequenceMetrics& m) {
  return {{"id", m.id}, {"frames", m.frames}, {"P", m.P},     {"P_norm", m.P_norm},
          {"AUC", m.AUC}, {"cAUC", m.cAUC},   {"ACC", m.ACC}};
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write " + p.string());
}

}  // namespace

std::string report_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["average"] = scores(r.average);
  j["plugins"] = {{"cAUC", r.complete_name}, {"ACC", r.accuracy_name}};
  auto& rows = j["sequences"] = nlohmann::ordered_json::array();
  for (const auto& s : r.sequences) rows.push_back(scores(s));
  return j.dump(2) + "\n";
}

std::string curve_csv(const Curve& c) {
  std::string out = "threshold,value\n";
  char buf[64];
  for (std::size_t i = 0; i < c.values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6g,%.17g\n", c.thresholds[i], c.values[i]);
    out += buf;
  }
  return out;
}

void write_report(const MetricReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "metrics.json", report_json(r));
  std::string rows = "seq_id,frames,P,P_norm,AUC,cAUC,ACC\n";
  char buf[256];
  for (const auto& s : r.sequences) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.id.c_str(), s.frames, s.P, s.P_norm,
                  s.AUC, s.cAUC, s.ACC);
    rows += buf;
  }
  write_text(dir / "per_sequence.csv", rows);
  write_text(dir / "success.csv", curve_csv(r.average.success));
  write_text(dir / "complete_success.csv", curve_csv(r.average.complete_success));
  write_text(dir / "precision.csv", curve_csv(r.average.precision));
  write_text(dir / "norm_precision.csv", curve_csv(r.average.norm_precision));
}

}  // namespace aio::inline AIO_ABI
