#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tpnet/canny.hpp"
#include "tpnet/predictor.hpp"

namespace tpnet {

inline const std::vector<double> kDefaultIouThresholds{0.6, 0.7, 0.8};

// Percentage of items with IoU strictly greater than m (and, when safety flags
// are given, passing the safety check).
double acc_r1(std::span<const Interval> preds, std::span<const Interval> gts, double m,
              std::span<const bool> safety = {});
double acc_from_ious(std::span<const double> ious, double m, std::span<const bool> safety = {});

// Distance from the implant end to the canal landmark, in millimetres, must be
// at least min_mm (inclusive). With canal_below = false the canal is taken to
// lie before the implant start instead.
bool safety_check(const Interval& pred, double canal_slice, double spacing_d_mm,
                  double min_mm = 1.5, bool canal_below = true);

struct TextureVariationOptions {
  int max_samples = 3;      // slices s, s+k, s+2k, ... (at most this many, all < D)
  bool all_offsets = true;  // average over every start s; false uses s = 0 only
  CannyParams canny;
};

struct TexturePoint {
  int k = 0;
  double variation = 0.0;
};

// Mean over pixels of the across-slice standard deviation of the Canny edge
// maps of the sampled slices, for each sampling interval k.
std::vector<TexturePoint> texture_variation_curve(const Volume& volume, std::span<const int> ks,
                                                  const TextureVariationOptions& options = {});

struct PatientEval {
  std::string id;
  double iou = 0.0;
  bool safety_ok = true;
  bool safety_checked = false;
  Interval predicted;
  Interval ground_truth;
  std::string error;  // non-empty when the pipeline failed for this patient
};

struct EvalResult {
  std::vector<PatientEval> per_patient;  // sorted by id
  std::map<double, double> acc_at;       // threshold -> percentage
};

struct EvalOptions {
  std::vector<double> thresholds = kDefaultIouThresholds;
  bool apply_safety = true;
  double safety_mm = 1.5;
};

// Runs the predictor per patient; failures score IoU 0 and are recorded.
EvalResult evaluate(const IntervalPredictor& model, std::span<const PatientRecord> test_set,
                    const EvalOptions& options = {});

// One line per patient ("id iou safety_ok") plus an "acc@m" footer.
void write_eval_report(const EvalResult& result, const std::filesystem::path& path);
// JSON summary: thresholds, accuracies, per-patient entries.
void write_eval_summary(const EvalResult& result, const std::filesystem::path& path);

}  // namespace tpnet
