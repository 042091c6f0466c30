#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tpnet/interval.hpp"
#include "tpnet/tensor.hpp"

namespace tpnet {

enum class Condition { left = 0, middle = 1, right = 2 };

std::string_view to_string(Condition c);
Condition parse_condition(std::string_view s);
// Horizontal mirror: left <-> right.
Condition mirrored(Condition c);

// Dense CBCT stand-in, depth-major (d, h, w), intensities in [0, 1].
struct Volume {
  int depth = 0;
  int height = 0;
  int width = 0;
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};  // (d, h, w)
  std::vector<float> voxels;

  Volume() = default;
  Volume(int d, int h, int w, std::array<double, 3> spacing, float fill = 0.0f);

  std::size_t index(int d, int h, int w) const {
    return (static_cast<std::size_t>(d) * height + h) * width + w;
  }
  float at(int d, int h, int w) const { return voxels[index(d, h, w)]; }
  float& at(int d, int h, int w) { return voxels[index(d, h, w)]; }

  // Throws ValueError when any invariant (sizes, spacing, range) is violated.
  void validate() const;

  bool operator==(const Volume&) const = default;
};

// 1 x 1 x D x H x W network input.
Tensor to_tensor(const Volume& v);
// 1 x 1 x 1 x H x W image of one axial slice.
Tensor slice_tensor(const Volume& v, int d);

struct ImplantAnnotation {
  std::array<double, 2> position{0.0, 0.0};  // (row, col) on the crown slice
  Interval interval;
  Condition condition = Condition::middle;
  std::optional<double> canal_slice;

  bool operator==(const ImplantAnnotation&) const = default;
};

struct PatientRecord {
  std::string id;
  Volume volume;
  ImplantAnnotation annotation;
  int crown_slice = 0;

  void validate() const;
  bool operator==(const PatientRecord&) const = default;
};

struct PhantomConfig {
  int depth = 96;
  int height = 64;
  int width = 64;
  double spacing_mm = 0.25;
  int teeth = 8;
  double texture_amplitude = 0.3;
  bool nerve_canal = true;

  // Full-size scan geometry (432 x 776 x 776); never needed by tests.
  static PhantomConfig paper_scale();
  void validate() const;
  bool operator==(const PhantomConfig&) const = default;
};

struct ToothPlacement {
  double row = 0.0;
  double col = 0.0;
  double angle = 0.0;  // radians on the jaw arc, pi = image left
  double crown_top = 0.0;
  double root_end = 0.0;
  double crown_radius = 0.0;
  double root_radius = 0.0;
};

// Geometry the generator renders from; exposed so tests can build region
// masks that match the rendered phantom exactly.
struct PhantomLayout {
  double arc_row = 0.0;
  double arc_col = 0.0;
  double arc_radius = 0.0;
  double band_half_width = 0.0;
  double arc_angle_min = 0.0;
  double arc_angle_max = 0.0;
  std::vector<ToothPlacement> teeth;  // present teeth only
  ToothPlacement gap;                 // where the missing tooth would be
  double bone_crest = 0.0;
  double implant_end = 0.0;
  std::optional<double> canal_slice;
  int crown_slice = 0;

  // Radius of a tooth cross-section at slice d, or a negative value when the
  // slice is outside the tooth's vertical extent.
  static double tooth_radius_at(const ToothPlacement& t, double d, double bone_crest);
  bool in_tooth(int d, int h, int w) const;
  // Cylinder of the missing tooth's crown radius over the implant interval.
  bool in_gap(int d, int h, int w) const;
};

PhantomLayout phantom_layout(const PhantomConfig& config, std::uint64_t seed);
PatientRecord generate_phantom(const PhantomConfig& config, std::uint64_t seed);

inline constexpr int kVolumeFormatVersion = 1;

// Writes volume.raw (little-endian float32, depth-major) and meta.txt
// (key=value lines) into `directory`, creating it if needed.
void write_volume(const PatientRecord& record, const std::filesystem::path& directory);
PatientRecord read_volume(const std::filesystem::path& directory);

struct DatasetSplit {
  std::vector<PatientRecord> train;
  std::vector<PatientRecord> test;
};

// Seeded shuffle, then the first floor(train_fraction * N) records train.
DatasetSplit dataset_split(std::vector<PatientRecord> records, double train_fraction,
                           std::uint64_t seed);

}  // namespace tpnet
