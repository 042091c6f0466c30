#include "tpnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "json.hpp"

#include "tpnet/errors.hpp"
#include "tpnet/losses.hpp"

namespace tpnet {

double acc_from_ious(std::span<const double> ious, double m, std::span<const bool> safety) {
  if (ious.empty()) throw ValueError("acc_r1: empty prediction list");
  if (!safety.empty() && safety.size() != ious.size())
    throw ValueError("acc_r1: safety flags do not match prediction count");
  std::size_t hits = 0;
  for (std::size_t j = 0; j < ious.size(); ++j)
    if (ious[j] > m && (safety.empty() || safety[j])) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ious.size());
}

double acc_r1(std::span<const Interval> preds, std::span<const Interval> gts, double m,
              std::span<const bool> safety) {
  if (preds.size() != gts.size())
    throw ValueError("acc_r1: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(gts.size()) + " ground truths");
  std::vector<double> ious(preds.size());
  for (std::size_t j = 0; j < preds.size(); ++j) ious[j] = interval_iou(preds[j], gts[j]);
  return acc_from_ious(ious, m, safety);
}

bool safety_check(const Interval& pred, double canal_slice, double spacing_d_mm, double min_mm,
                  bool canal_below) {
  if (!(spacing_d_mm > 0.0)) throw ValueError("safety_check: spacing must be positive");
  const double gap_slices = canal_below ? canal_slice - pred.end : pred.start - canal_slice;
  return gap_slices * spacing_d_mm >= min_mm;
}

std::vector<TexturePoint> texture_variation_curve(const Volume& volume, std::span<const int> ks,
                                                  const TextureVariationOptions& options) {
  if (options.max_samples < 2) throw ValueError("texture variation needs at least 2 samples");
  const int D = volume.depth, H = volume.height, W = volume.width;
  for (int k : ks)
    if (k < 1 || k >= D)
      throw ValueError("sampling interval k=" + std::to_string(k) + " outside [1, " +
                       std::to_string(D) + ")");

  std::map<int, std::vector<std::uint8_t>> edges;
  auto edge_map = [&](int d) -> const std::vector<std::uint8_t>& {
    auto it = edges.find(d);
    if (it != edges.end()) return it->second;
    std::vector<double> img(static_cast<std::size_t>(H) * W);
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) img[static_cast<std::size_t>(h) * W + w] = volume.at(d, h, w);
    return edges.emplace(d, canny(img, H, W, options.canny)).first->second;
  };

  std::vector<TexturePoint> out;
  for (int k : ks) {
    // Comb of n slices spaced k apart, averaged over every start offset that
    // keeps the comb inside the volume.
    const int n = std::min(options.max_samples, (D - 1) / k + 1);
    const int starts = options.all_offsets ? D - (n - 1) * k : 1;
    double total = 0.0;
    for (int s0 = 0; s0 < starts; ++s0) {
      for (std::size_t p = 0; p < static_cast<std::size_t>(H) * W; ++p) {
        double s = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
          const double v = edge_map(s0 + i * k)[p];
          s += v;
          s2 += v * v;
        }
        const double mean = s / n;
        total += std::sqrt(std::max(0.0, s2 / n - mean * mean));
      }
    }
    out.push_back({k, total / (static_cast<double>(H) * W * starts)});
  }
  return out;
}

EvalResult evaluate(const IntervalPredictor& model, std::span<const PatientRecord> test_set,
                    const EvalOptions& options) {
  if (test_set.empty()) throw ValueError("evaluate: empty test set");
  EvalResult result;
  for (const auto& rec : test_set) {
    PatientEval pe;
    pe.id = rec.id;
    pe.ground_truth = rec.annotation.interval;
    try {
      const Prediction pred = model.predict(rec);
      pe.predicted = pred.interval;
      pe.iou = interval_iou(pred.interval, rec.annotation.interval);
      if (!std::isfinite(pe.iou)) throw NumericError("non-finite IoU");
      if (options.apply_safety && rec.annotation.canal_slice) {
        pe.safety_checked = true;
        pe.safety_ok = safety_check(pred.interval, *rec.annotation.canal_slice,
                                    rec.volume.spacing_mm[0], options.safety_mm);
      }
    } catch (const std::exception& e) {
      pe.iou = 0.0;
      pe.safety_ok = false;
      pe.error = e.what();
    }
    result.per_patient.push_back(std::move(pe));
  }
  std::stable_sort(result.per_patient.begin(), result.per_patient.end(),
                   [](const PatientEval& a, const PatientEval& b) { return a.id < b.id; });
  const std::size_t n = result.per_patient.size();
  std::vector<double> ious(n);
  auto safe = std::make_unique<bool[]>(n);
  for (std::size_t i = 0; i < n; ++i) {
    ious[i] = result.per_patient[i].iou;
    safe[i] = result.per_patient[i].safety_ok;
  }
  for (double m : options.thresholds)
    result.acc_at[m] = acc_from_ious(ious, m, std::span<const bool>(safe.get(), n));
  return result;
}

void write_eval_report(const EvalResult& result, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string());
  os << std::fixed << std::setprecision(6);
  for (const auto& pe : result.per_patient)
    os << pe.id << " " << pe.iou << " " << (pe.safety_ok ? 1 : 0) << "\n";
  os << std::setprecision(2);
  for (const auto& [m, acc] : result.acc_at) os << "acc@" << m << " " << acc << "\n";
  if (!os) throw IoError("failed writing " + path.string());
}

void write_eval_summary(const EvalResult& result, const std::filesystem::path& path) {
  nlohmann::json j;
  j["patients"] = nlohmann::json::array();
  for (const auto& pe : result.per_patient) {
    nlohmann::json p{{"id", pe.id},
                     {"iou", pe.iou},
                     {"safety_ok", pe.safety_ok},
                     {"safety_checked", pe.safety_checked},
                     {"pred", {pe.predicted.start, pe.predicted.end}},
                     {"gt", {pe.ground_truth.start, pe.ground_truth.end}}};
    if (!pe.error.empty()) p["error"] = pe.error;
    j["patients"].push_back(std::move(p));
  }
  j["acc"] = nlohmann::json::object();
  for (const auto& [m, acc] : result.acc_at) {
    std::ostringstream key;
    key << m;
    j["acc"][key.str()] = acc;
  }
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string());
  os << j.dump(2) << "\n";
}

}  // namespace tpnet
