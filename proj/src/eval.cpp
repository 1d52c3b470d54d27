#include "stpose/eval.hpp"

#include <algorithm>
#include <cmath>

#include "bytes.hpp"
#include "stpose/textio.hpp"

namespace stpose {

void PredictionSet::validate() const {
  if (joints < 1) throw ContractError("prediction set: joints must be positive");
  if (pred.empty()) throw ContractError("prediction set: no frames");
  if (truth.size() != pred.size())
    throw ContractError("prediction set: " + std::to_string(pred.size()) + " predictions vs " +
                        std::to_string(truth.size()) + " truth frames");
  const std::size_t d = static_cast<std::size_t>(joints) * 3;
  for (std::size_t n = 0; n < pred.size(); ++n) {
    if (pred[n].size() != d || truth[n].size() != d)
      throw ContractError("prediction set: frame " + std::to_string(n) + " has " +
                          std::to_string(pred[n].size()) + "/" + std::to_string(truth[n].size()) +
                          " values, expected " + std::to_string(d));
    for (double v : pred[n])
      if (!std::isfinite(v)) throw ContractError("prediction set: non-finite prediction in frame " +
                                                 std::to_string(n));
    for (double v : truth[n])
      if (!std::isfinite(v)) throw ContractError("prediction set: non-finite truth in frame " +
                                                 std::to_string(n));
  }
}

namespace {

double joint_dist(const std::vector<double>& a, const std::vector<double>& b, int k) {
  const double dx = a[3 * k] - b[3 * k];
  const double dy = a[3 * k + 1] - b[3 * k + 1];
  const double dz = a[3 * k + 2] - b[3 * k + 2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

std::vector<double> per_joint_error(const PredictionSet& set) {
  set.validate();
  std::vector<double> err(set.joints, 0.0);
  for (std::size_t n = 0; n < set.pred.size(); ++n)
    for (int k = 0; k < set.joints; ++k) err[k] += joint_dist(set.pred[n], set.truth[n], k);
  for (double& e : err) e /= static_cast<double>(set.pred.size());
  return err;
}

double average_error(const PredictionSet& set) {
  const std::vector<double> err = per_joint_error(set);
  double s = 0;
  for (double e : err) s += e;
  return s / static_cast<double>(err.size());
}

std::vector<double> accuracy_curve(const PredictionSet& set, const std::vector<double>& thresholds) {
  set.validate();
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (thresholds[i - 1] > thresholds[i])
      throw ContractError("accuracy curve: thresholds must be sorted ascending");

  std::vector<double> worst(set.pred.size());
  for (std::size_t n = 0; n < set.pred.size(); ++n) {
    double w = 0;
    for (int k = 0; k < set.joints; ++k) w = std::max(w, joint_dist(set.pred[n], set.truth[n], k));
    worst[n] = w;
  }

  std::vector<double> frac(thresholds.size());
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    std::size_t hit = 0;
    for (double w : worst)
      if (w <= thresholds[i]) ++hit;
    frac[i] = static_cast<double>(hit) / static_cast<double>(worst.size());
  }
  return frac;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int mm = 0; mm <= 80; ++mm) t.push_back(mm);
  return t;
}

MetricsReport compute_metrics(const PredictionSet& set, const std::vector<double>& thresholds) {
  MetricsReport r;
  r.per_joint = per_joint_error(set);
  double s = 0;
  for (double e : r.per_joint) s += e;
  r.average = s / static_cast<double>(r.per_joint.size());
  r.thresholds = thresholds;
  r.fractions = accuracy_curve(set, thresholds);
  return r;
}

std::vector<SweepRow> fixed_weight_fusion_sweep(const PredictionSet& temporal,
                                                const PredictionSet& spatial,
                                                const std::vector<double>& w_grid) {
  temporal.validate();
  spatial.validate();
  if (temporal.joints != spatial.joints || temporal.pred.size() != spatial.pred.size())
    throw ContractError("fusion sweep: prediction sets are not congruent");
  if (temporal.truth != spatial.truth)
    throw ContractError("fusion sweep: the two sets carry different ground truth");

  std::vector<SweepRow> rows;
  PredictionSet mixed;
  mixed.joints = temporal.joints;
  mixed.truth = temporal.truth;
  mixed.pred.assign(temporal.pred.size(), std::vector<double>(temporal.pred[0].size()));
  for (double w : w_grid) {
    if (w < 0.0 || w > 1.0) throw ContractError("fusion sweep: w must lie in [0, 1]");
    for (std::size_t n = 0; n < temporal.pred.size(); ++n)
      for (std::size_t i = 0; i < temporal.pred[n].size(); ++i)
        mixed.pred[n][i] = w * temporal.pred[n][i] + (1.0 - w) * spatial.pred[n][i];
    rows.push_back({w, average_error(mixed)});
  }
  return rows;
}

void write_report_csv(const std::string& path, const MetricsReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < report.per_joint.size(); ++k)
    rows.push_back({std::to_string(k), format_double(report.per_joint[k])});
  rows.push_back({"average", format_double(report.average)});
  write_csv(path, "joint,error_mm", rows);
}

void write_curve_csv(const std::string& path, const MetricsReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < report.thresholds.size(); ++i)
    rows.push_back({format_double(report.thresholds[i]), format_double(report.fractions[i])});
  write_csv(path, "threshold_mm,fraction", rows);
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::vector<std::vector<std::string>> out;
  for (const SweepRow& r : rows) out.push_back({format_double(r.w), format_double(r.avg_error)});
  write_csv(path, "w,avg_error_mm", out);
}

void write_curve_svg(const std::string& path, const MetricsReport& report) {
  if (report.thresholds.empty() || report.thresholds.size() != report.fractions.size())
    throw ContractError("curve svg: empty or mismatched curve");
  const double w = 480, h = 320, ml = 48, mr = 16, mt = 16, mb = 40;
  const double x0 = report.thresholds.front();
  const double x1 = std::max(report.thresholds.back(), x0 + 1e-9);
  auto px = [&](double t) { return ml + (t - x0) / (x1 - x0) * (w - ml - mr); };
  auto py = [&](double f) { return h - mb - f * (h - mt - mb); };

  std::string s;
  char buf[160];
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"320\" "
       "viewBox=\"0 0 480 320\">\n";
  s += "<rect width=\"480\" height=\"320\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", ml,
                h - mb, w - mr, h - mb);
  s += buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", ml, mt,
                ml, h - mb);
  s += buf;
  s += "<polyline fill=\"none\" stroke=\"#1565c0\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", px(report.thresholds[i]),
                  py(report.fractions[i]));
    s += buf;
  }
  s += "\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\">max joint "
                "error threshold (mm)</text>\n",
                (ml + w - mr) / 2, h - 10);
  s += buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"14\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\" "
                "transform=\"rotate(-90 14 %.1f)\">fraction of frames</text>\n",
                (mt + h - mb) / 2, (mt + h - mb) / 2);
  s += buf;
  bytes::write_file(path, s);
}

}  // namespace stpose
