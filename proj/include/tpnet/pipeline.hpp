#pragma once

#include <filesystem>
#include <optional>

#include "tpnet/idpnet.hpp"
#include "tpnet/ird.hpp"
#include "tpnet/predictor.hpp"

namespace tpnet {

struct PipelineOptions {
  int crop_hw = 32;
  int crop_d = 64;
  // Skip the detector and crop at the annotated position (debug path).
  bool oracle_position = false;
};

// Detector on the crown slice -> peak -> crop -> depth network -> interval in
// original-volume slice coordinates.
class TpnetPipeline final : public IntervalPredictor {
 public:
  // `detector` may be absent only when oracle_position is set.
  TpnetPipeline(std::optional<Detector> detector, DepthNet depthnet, PipelineOptions options);

  Prediction predict(const PatientRecord& record) const override;
  std::array<double, 2> locate(const PatientRecord& record) const;

 private:
  std::optional<Detector> detector_;
  DepthNet depthnet_;
  PipelineOptions options_;
};

// Returns the annotation itself; useful for checking evaluation plumbing.
class OracleModel final : public IntervalPredictor {
 public:
  Prediction predict(const PatientRecord& record) const override;
};

// Writes two PPM images into `directory`: the crown slice with the detected
// (red) and annotated (green) positions, and a depth x width cut through the
// detected row with predicted (red) and annotated (green) interval bounds.
void write_overlays(const PatientRecord& record, const Prediction& prediction,
                    const std::filesystem::path& directory);

}  // namespace tpnet
