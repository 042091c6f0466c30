#include "tpnet/phantom.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "tpnet/errors.hpp"
#include "tpnet/rng.hpp"

namespace tpnet {

namespace {

constexpr double kPi = std::numbers::pi;

constexpr float kBackground = 0.03f;
constexpr float kGum = 0.18f;
constexpr float kBone = 0.42f;
constexpr float kEnamel = 0.88f;
constexpr float kDentin = 0.66f;
constexpr float kPulp = 0.30f;
constexpr float kCanal = 0.08f;

// Smooth lattice noise in roughly [-1, 1], separate lattice spacing for the
// depth axis and the in-slice axes.
class ValueNoise {
 public:
  ValueNoise(int depth, int height, int width, double step_d, double step_hw, Rng& rng)
      : step_d_(step_d), step_hw_(step_hw) {
    nd_ = static_cast<int>(std::ceil(depth / step_d)) + 2;
    nh_ = static_cast<int>(std::ceil(height / step_hw)) + 2;
    nw_ = static_cast<int>(std::ceil(width / step_hw)) + 2;
    lattice_.resize(static_cast<std::size_t>(nd_) * nh_ * nw_);
    for (auto& v : lattice_) v = rng.uniform(-1.0, 1.0);
  }

  double operator()(double d, double h, double w) const {
    const double fd = d / step_d_, fh = h / step_hw_, fw = w / step_hw_;
    const int id = static_cast<int>(fd), ih = static_cast<int>(fh), iw = static_cast<int>(fw);
    const double td = smooth(fd - id), th = smooth(fh - ih), tw = smooth(fw - iw);
    double acc = 0.0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c) {
          const double wgt = (a ? td : 1 - td) * (b ? th : 1 - th) * (c ? tw : 1 - tw);
          acc += wgt * lattice_[(static_cast<std::size_t>(id + a) * nh_ + ih + b) * nw_ + iw + c];
        }
    return acc;
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

  double step_d_, step_hw_;
  int nd_ = 0, nh_ = 0, nw_ = 0;
  std::vector<double> lattice_;
};

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::left:
      return "left";
    case Condition::middle:
      return "middle";
    case Condition::right:
      return "right";
  }
  return "middle";
}

Condition parse_condition(std::string_view s) {
  if (s == "left") return Condition::left;
  if (s == "middle") return Condition::middle;
  if (s == "right") return Condition::right;
  throw ValueError("unknown condition token '" + std::string(s) + "'");
}

Condition mirrored(Condition c) {
  if (c == Condition::left) return Condition::right;
  if (c == Condition::right) return Condition::left;
  return c;
}

Volume::Volume(int d, int h, int w, std::array<double, 3> spacing, float fill)
    : depth(d), height(h), width(w), spacing_mm(spacing) {
  if (d < 0 || h < 0 || w < 0) throw ValueError("negative volume dimension");
  voxels.assign(static_cast<std::size_t>(d) * h * w, fill);
}

void Volume::validate() const {
  if (depth < 8 || height < 8 || width < 8)
    throw ValueError("volume dimensions must be >= 8, got " + std::to_string(depth) + "x" +
                     std::to_string(height) + "x" + std::to_string(width));
  for (double s : spacing_mm)
    if (!(s > 0.0) || !std::isfinite(s)) throw ValueError("voxel spacing must be positive");
  if (voxels.size() != static_cast<std::size_t>(depth) * height * width)
    throw ValueError("voxel count does not match dimensions");
  for (float v : voxels)
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
      throw ValueError("voxel intensity outside [0, 1]");
}

Tensor to_tensor(const Volume& v) {
  return Tensor({1, 1, v.depth, v.height, v.width},
                std::vector<double>(v.voxels.begin(), v.voxels.end()));
}

Tensor slice_tensor(const Volume& v, int d) {
  if (d < 0 || d >= v.depth) throw ValueError("slice index out of range");
  const auto first = v.voxels.begin() + static_cast<std::ptrdiff_t>(v.index(d, 0, 0));
  return Tensor({1, 1, 1, v.height, v.width},
                std::vector<double>(first, first + static_cast<std::ptrdiff_t>(v.height) * v.width));
}

void PatientRecord::validate() const {
  volume.validate();
  const auto& a = annotation;
  if (!(0.0 <= a.interval.start && a.interval.start < a.interval.end &&
        a.interval.end <= volume.depth))
    throw ValueError("annotation interval must satisfy 0 <= start < end <= depth");
  if (a.position[0] < 0.0 || a.position[0] >= volume.height || a.position[1] < 0.0 ||
      a.position[1] >= volume.width)
    throw ValueError("annotation position outside the slice");
  if (crown_slice < 0 || crown_slice >= volume.depth)
    throw ValueError("crown_slice outside [0, depth)");
}

PhantomConfig PhantomConfig::paper_scale() {
  PhantomConfig c;
  c.depth = 432;
  c.height = 776;
  c.width = 776;
  return c;
}

void PhantomConfig::validate() const {
  if (depth < 8 || height < 8 || width < 8)
    throw ConfigError("phantom dimensions must be >= 8 on every axis");
  if (!(spacing_mm > 0.0)) throw ConfigError("phantom spacing must be positive");
  if (teeth < 3) throw ConfigError("phantom needs at least 3 tooth positions for an interior gap");
  if (texture_amplitude < 0.0 || texture_amplitude >= 1.0)
    throw ConfigError("texture_amplitude must lie in [0, 1)");
}

double PhantomLayout::tooth_radius_at(const ToothPlacement& t, double d, double bone_crest) {
  if (d < t.crown_top || d > t.root_end) return -1.0;
  if (d < bone_crest) {
    const double cap = t.crown_radius;
    if (d < t.crown_top + cap) {
      const double u = (t.crown_top + cap - d) / cap;
      return t.crown_radius * std::sqrt(std::max(0.0, 1.0 - u * u));
    }
    return t.crown_radius;
  }
  const double span = std::max(t.root_end - bone_crest, 1e-9);
  const double f = std::clamp((d - bone_crest) / span, 0.0, 1.0);
  const double r = t.crown_radius + f * (t.root_radius - t.crown_radius);
  const double cap = t.root_radius;
  if (d > t.root_end - cap) {
    const double u = (d - (t.root_end - cap)) / cap;
    return r * std::sqrt(std::max(0.0, 1.0 - u * u));
  }
  return r;
}

bool PhantomLayout::in_tooth(int d, int h, int w) const {
  for (const auto& t : teeth) {
    const double r = tooth_radius_at(t, d, bone_crest);
    if (r <= 0.0) continue;
    if (std::hypot(h - t.row, w - t.col) <= r) return true;
  }
  return false;
}

bool PhantomLayout::in_gap(int d, int h, int w) const {
  if (d < bone_crest || d >= implant_end) return false;
  return std::hypot(h - gap.row, w - gap.col) <= gap.crown_radius;
}

PhantomLayout phantom_layout(const PhantomConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed({seed, 0x70A47u}));
  const double D = config.depth, H = config.height, W = config.width;

  PhantomLayout L;
  L.arc_row = 0.70 * H;
  L.arc_col = 0.5 * W;
  L.arc_radius = 0.36 * std::min(H, W);
  L.arc_angle_max = 0.92 * kPi;
  L.arc_angle_min = 0.08 * kPi;
  const double step = (L.arc_angle_max - L.arc_angle_min) / (config.teeth - 1);
  const double arc_spacing = L.arc_radius * step;
  const double crown_radius = 0.38 * arc_spacing;
  if (crown_radius < 1.0)
    throw ConfigError("teeth would be narrower than one voxel; enlarge the slice or use fewer teeth");
  L.band_half_width = 1.1 * crown_radius + 2.0;
  if (L.arc_row + L.band_half_width >= H || L.arc_row - L.arc_radius - L.band_half_width < 0.0)
    throw ConfigError("jaw arc does not fit inside the slice");

  L.bone_crest = D * rng.uniform(0.25, 0.35);
  L.implant_end = L.bone_crest + D * rng.uniform(0.25, 0.375);
  // The canal sits 1.75-3.5 mm below the planned implant, so every annotated
  // plan respects the 1.5 mm safety distance whatever the slice spacing.
  if (config.nerve_canal) L.canal_slice = L.implant_end + rng.uniform(1.75, 3.5) / config.spacing_mm;
  L.crown_slice = static_cast<int>(std::floor(L.bone_crest - D * rng.uniform(0.03, 0.06)));
  L.crown_slice = std::clamp(L.crown_slice, 0, config.depth - 1);

  const int gap_index = static_cast<int>(rng.uniform_int(1, config.teeth - 2));
  for (int i = 0; i < config.teeth; ++i) {
    ToothPlacement t;
    t.angle = L.arc_angle_max - i * step + rng.uniform(-0.08, 0.08) * step;
    t.row = L.arc_row - L.arc_radius * std::sin(t.angle);
    t.col = L.arc_col + L.arc_radius * std::cos(t.angle);
    t.crown_radius = crown_radius * rng.uniform(0.9, 1.1);
    t.root_radius = t.crown_radius * rng.uniform(0.5, 0.65);
    t.crown_top = L.bone_crest - D * rng.uniform(0.10, 0.16);
    // Neighbours of the gap bound the implant: their roots end where it does.
    const bool neighbour = i == gap_index - 1 || i == gap_index + 1;
    const double jitter = neighbour ? rng.uniform(-0.01, 0.01) : rng.uniform(-0.05, 0.05);
    t.root_end = std::min(L.implant_end + D * jitter, D - 1.0);
    if (i == gap_index) {
      t.crown_radius = crown_radius;
      L.gap = t;
    } else {
      L.teeth.push_back(t);
    }
  }
  if (L.gap.row < 0 || L.gap.row >= H || L.gap.col < 0 || L.gap.col >= W)
    throw ConfigError("degenerate gap placement outside the slice");
  return L;
}

PatientRecord generate_phantom(const PhantomConfig& config, std::uint64_t seed) {
  const PhantomLayout L = phantom_layout(config, seed);
  Rng rng(derive_seed({seed, 0x7E87u}));
  const int D = config.depth, H = config.height, W = config.width;
  const double scale = std::min(H, W) / 64.0;
  // Octaves: coarse anatomy-scale drift down to fine trabecular grain.
  const ValueNoise coarse(D, H, W, 16.0, 8.0 * scale, rng);
  const ValueNoise medium(D, H, W, 8.0, 4.0 * scale, rng);
  const ValueNoise fine(D, H, W, 4.0, 2.0 * scale, rng);
  std::vector<float> tooth_gain(L.teeth.size());
  for (auto& g : tooth_gain) g = static_cast<float>(rng.uniform(0.93, 1.07));

  PatientRecord rec;
  rec.id = "phantom-" + std::to_string(seed);
  rec.volume = Volume(D, H, W, {config.spacing_mm, config.spacing_mm, config.spacing_mm});
  const double amp = config.texture_amplitude;
  std::vector<double> radii(L.teeth.size());
  for (int d = 0; d < D; ++d) {
    for (std::size_t t = 0; t < L.teeth.size(); ++t)
      radii[t] = PhantomLayout::tooth_radius_at(L.teeth[t], d, L.bone_crest);
    const double bone_mix = std::clamp(d - L.bone_crest + 0.5, 0.0, 1.0);
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        float v = kBackground;
        const double rr = std::hypot(h - L.arc_row, w - L.arc_col);
        const double phi = std::atan2(L.arc_row - h, w - L.arc_col);
        const bool in_band = std::abs(rr - L.arc_radius) <= L.band_half_width &&
                             phi >= L.arc_angle_min - 0.06 * kPi &&
                             phi <= L.arc_angle_max + 0.06 * kPi;
        if (in_band) {
          v = static_cast<float>(kGum * (1.0 - bone_mix) + kBone * bone_mix);
          if (L.canal_slice && std::abs(d - *L.canal_slice) <= 1.5 &&
              std::abs(rr - L.arc_radius) <= 1.5)
            v = kCanal;
        }
        for (std::size_t t = 0; t < L.teeth.size(); ++t) {
          if (radii[t] <= 0.0) continue;
          const double dist = std::hypot(h - L.teeth[t].row, w - L.teeth[t].col);
          if (dist > radii[t]) continue;
          if (d < L.bone_crest)
            v = kEnamel * tooth_gain[t];
          else
            v = dist <= 0.3 * radii[t] ? kPulp : kDentin * tooth_gain[t];
        }
        if (v > kBackground) {
          const double n = 0.5 * coarse(d, h, w) + 0.3 * medium(d, h, w) + 0.2 * fine(d, h, w);
          v = static_cast<float>(v * (1.0 + amp * n));
        }
        rec.volume.at(d, h, w) = std::clamp(v, 0.0f, 1.0f);
      }
  }

  auto& a = rec.annotation;
  a.position = {L.gap.row, L.gap.col};
  a.interval = {L.bone_crest, L.implant_end};
  a.canal_slice = L.canal_slice;
  if (L.gap.angle > 2.0 * kPi / 3.0)
    a.condition = Condition::left;
  else if (L.gap.angle < kPi / 3.0)
    a.condition = Condition::right;
  else
    a.condition = Condition::middle;
  rec.crown_slice = L.crown_slice;
  rec.validate();
  return rec;
}

void write_volume(const PatientRecord& record, const std::filesystem::path& directory) {
  record.validate();
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create directory " + directory.string() + ": " + ec.message());

  const auto& v = record.volume;
  {
    std::ofstream raw(directory / "volume.raw", std::ios::binary | std::ios::trunc);
    if (!raw) throw IoError("cannot open " + (directory / "volume.raw").string());
    std::vector<std::uint32_t> words(v.voxels.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
      std::uint32_t u;
      std::memcpy(&u, &v.voxels[i], sizeof u);
      words[i] = to_little_endian(u);
    }
    raw.write(reinterpret_cast<const char*>(words.data()),
              static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
    if (!raw) throw IoError("failed writing volume.raw");
  }
  std::ofstream meta(directory / "meta.txt", std::ios::trunc);
  if (!meta) throw IoError("cannot open " + (directory / "meta.txt").string());
  const auto& a = record.annotation;
  meta << "version=" << kVolumeFormatVersion << "\n"
       << "id=" << record.id << "\n"
       << "depth=" << v.depth << "\n"
       << "height=" << v.height << "\n"
       << "width=" << v.width << "\n"
       << "spacing_d=" << format_double(v.spacing_mm[0]) << "\n"
       << "spacing_h=" << format_double(v.spacing_mm[1]) << "\n"
       << "spacing_w=" << format_double(v.spacing_mm[2]) << "\n"
       << "start=" << format_double(a.interval.start) << "\n"
       << "end=" << format_double(a.interval.end) << "\n"
       << "pos_row=" << format_double(a.position[0]) << "\n"
       << "pos_col=" << format_double(a.position[1]) << "\n"
       << "condition=" << to_string(a.condition) << "\n"
       << "crown_slice=" << record.crown_slice << "\n"
       << "canal_slice=" << (a.canal_slice ? format_double(*a.canal_slice) : "none") << "\n";
  if (!meta) throw IoError("failed writing meta.txt");
}

PatientRecord read_volume(const std::filesystem::path& directory) {
  std::ifstream meta(directory / "meta.txt");
  if (!meta) throw IoError("missing file " + (directory / "meta.txt").string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(meta, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed meta line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto field = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError("meta.txt: missing field '" + key + "'");
    return it->second;
  };
  auto as_int = [&](const std::string& key) {
    try {
      std::size_t pos = 0;
      const int v = std::stoi(field(key), &pos);
      if (pos != field(key).size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::logic_error&) {
      throw IoError("meta.txt: field '" + key + "' is not an integer");
    }
  };
  auto as_double = [&](const std::string& key) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(field(key), &pos);
      if (pos != field(key).size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::logic_error&) {
      throw IoError("meta.txt: field '" + key + "' is not a number");
    }
  };

  const int version = as_int("version");
  if (version != kVolumeFormatVersion)
    throw IoError("meta.txt: field 'version' has unsupported value " + std::to_string(version));

  PatientRecord rec;
  rec.id = kv.count("id") ? kv["id"] : directory.filename().string();
  const int depth = as_int("depth"), height = as_int("height"), width = as_int("width");
  for (auto [key, value] : {std::pair{"depth", depth}, {"height", height}, {"width", width}})
    if (value < 8) throw ValueError(std::string("meta.txt: field '") + key + "' must be >= 8");
  rec.volume = Volume(depth, height, width,
                      {as_double("spacing_d"), as_double("spacing_h"), as_double("spacing_w")});
  auto& a = rec.annotation;
  a.interval = {as_double("start"), as_double("end")};
  a.position = {as_double("pos_row"), as_double("pos_col")};
  try {
    a.condition = parse_condition(field("condition"));
  } catch (const ValueError&) {
    throw IoError("meta.txt: field 'condition' has unknown value '" + field("condition") + "'");
  }
  rec.crown_slice = as_int("crown_slice");
  if (field("canal_slice") != "none") a.canal_slice = as_double("canal_slice");

  const auto raw_path = directory / "volume.raw";
  std::ifstream raw(raw_path, std::ios::binary);
  if (!raw) throw IoError("missing file " + raw_path.string());
  const auto expected = rec.volume.voxels.size() * sizeof(float);
  const auto actual = std::filesystem::file_size(raw_path);
  if (actual != expected)
    throw IoError("volume.raw: payload size " + std::to_string(actual) +
                  " bytes does not match header (depth*height*width*4 = " +
                  std::to_string(expected) + ")");
  std::vector<std::uint32_t> words(rec.volume.voxels.size());
  raw.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(expected));
  if (!raw) throw IoError("volume.raw: short read");
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::uint32_t u = to_little_endian(words[i]);
    std::memcpy(&rec.volume.voxels[i], &u, sizeof u);
  }
  rec.validate();
  return rec;
}

DatasetSplit dataset_split(std::vector<PatientRecord> records, double train_fraction,
                           std::uint64_t seed) {
  if (records.size() < 2) throw ValueError("dataset_split needs at least 2 records");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValueError("train_fraction must lie strictly between 0 and 1");
  const std::size_t n = records.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed({seed, 0x5B117u}));
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
  // Tolerance absorbs representation error such as 0.29 * 100 = 28.999...
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * n + 1e-9));
  DatasetSplit split;
  for (std::size_t i = 0; i < n; ++i)
    (i < n_train ? split.train : split.test).push_back(std::move(records[order[i]]));
  return split;
}

}  // namespace tpnet
