#include "tpnet/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "tpnet/errors.hpp"
#include "tpnet/losses.hpp"
#include "tpnet/plot.hpp"

namespace tpnet {

TpnetPipeline::TpnetPipeline(std::optional<Detector> detector, DepthNet depthnet,
                             PipelineOptions options)
    : detector_(std::move(detector)), depthnet_(std::move(depthnet)), options_(options) {
  if (!detector_ && !options_.oracle_position)
    throw ConfigError("pipeline needs a detector unless the oracle position is used");
}

std::array<double, 2> TpnetPipeline::locate(const PatientRecord& record) const {
  if (options_.oracle_position) return record.annotation.position;
  NoGradGuard no_grad;
  const Condition cond[] = {record.annotation.condition};
  const DetectorOutput out =
      detector_->forward(Var(slice_tensor(record.volume, record.crown_slice)), cond);
  auto pos = extract_peak(out.heatmap.value(), out.offsets.value(),
                          detector_->config().output_stride());
  pos[0] = std::clamp(pos[0], 0.0, static_cast<double>(record.volume.height - 1));
  pos[1] = std::clamp(pos[1], 0.0, static_cast<double>(record.volume.width - 1));
  return pos;
}

Prediction TpnetPipeline::predict(const PatientRecord& record) const {
  Prediction p;
  p.position = locate(record);
  const Crop crop = crop_subvolume(record.volume, p.position, options_.crop_hw, options_.crop_d);
  p.crop_origin = crop.origin;
  NoGradGuard no_grad;
  const DepthNet::Output out = depthnet_.forward(Var(to_tensor(crop.volume)));
  p.crop_interval = tensor_to_intervals(out.interval.value()).at(0);
  if (!std::isfinite(p.crop_interval.start) || !std::isfinite(p.crop_interval.end))
    throw NumericError("depth network produced a non-finite interval for " + record.id);
  p.interval = to_volume_coordinates(p.crop_interval, crop);
  return p;
}

Prediction OracleModel::predict(const PatientRecord& record) const {
  Prediction p;
  p.interval = record.annotation.interval;
  p.crop_interval = record.annotation.interval;
  p.position = record.annotation.position;
  return p;
}

void write_overlays(const PatientRecord& record, const Prediction& prediction,
                    const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());
  const Volume& v = record.volume;
  auto gray = [](float x) { return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0f, 1.0f) * 255.0f)); };

  RgbImage axial(v.width, v.height);
  for (int h = 0; h < v.height; ++h)
    for (int w = 0; w < v.width; ++w) {
      const auto g = gray(v.at(record.crown_slice, h, w));
      axial.set(h, w, g, g, g);
    }
  auto cross = [](RgbImage& img, std::array<double, 2> p, std::uint8_t r, std::uint8_t g) {
    const int row = static_cast<int>(std::lround(p[0])), col = static_cast<int>(std::lround(p[1]));
    for (int k = -2; k <= 2; ++k) {
      img.set(row + k, col, r, g, 0);
      img.set(row, col + k, r, g, 0);
    }
  };
  cross(axial, record.annotation.position, 0, 255);
  cross(axial, prediction.position, 255, 0);
  write_ppm(directory / "axial.ppm", axial);

  const int row = std::clamp(static_cast<int>(std::lround(prediction.position[0])), 0, v.height - 1);
  RgbImage cut(v.width, v.depth);
  for (int d = 0; d < v.depth; ++d)
    for (int w = 0; w < v.width; ++w) {
      const auto g = gray(v.at(d, row, w));
      cut.set(d, w, g, g, g);
    }
  auto hline = [&](double d, std::uint8_t r, std::uint8_t g) {
    const int y = static_cast<int>(std::lround(d));
    for (int w = 0; w < v.width; w += 2) cut.set(y, w, r, g, 0);
  };
  hline(record.annotation.interval.start, 0, 255);
  hline(record.annotation.interval.end, 0, 255);
  hline(prediction.interval.start, 255, 0);
  hline(prediction.interval.end, 255, 0);
  write_ppm(directory / "depth_cut.ppm", cut);
}

}  // namespace tpnet
