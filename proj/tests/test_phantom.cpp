#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "tpnet/dataset.hpp"
#include "tpnet/errors.hpp"
#include "tpnet/phantom.hpp"
#include "tpnet/rng.hpp"

using namespace tpnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tpnet_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<PatientRecord> small_records(int n) {
  std::vector<PatientRecord> out;
  PhantomConfig cfg;
  cfg.depth = 16;
  cfg.height = 16;
  cfg.width = 16;
  cfg.teeth = 6;
  for (int i = 0; i < n; ++i) {
    PatientRecord r = generate_phantom(cfg, static_cast<std::uint64_t>(i));
    r.id = "p" + std::to_string(i);
    out.push_back(std::move(r));
  }
  return out;
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string replace_line(const std::string& text, const std::string& key, const std::string& value) {
  std::istringstream is(text);
  std::string line, out;
  while (std::getline(is, line)) {
    if (line.rfind(key + "=", 0) == 0) line = key + "=" + value;
    out += line + "\n";
  }
  return out;
}

}  // namespace

TEST(GeneratePhantom, IsBitIdenticalForTheSameSeed) {
  const PhantomConfig cfg;
  const PatientRecord a = generate_phantom(cfg, 7);
  const PatientRecord b = generate_phantom(cfg, 7);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a.volume == generate_phantom(cfg, 8).volume);
}

TEST(GeneratePhantom, AnnotationInvariantsHold) {
  const PhantomConfig cfg;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const PatientRecord r = generate_phantom(cfg, seed);
    const auto& a = r.annotation;
    EXPECT_LE(0.0, a.interval.start);
    EXPECT_LT(a.interval.start, a.interval.end);
    EXPECT_LE(a.interval.end, cfg.depth);
    EXPECT_GE(a.position[0], 0.0);
    EXPECT_LT(a.position[0], cfg.height);
    EXPECT_GE(a.position[1], 0.0);
    EXPECT_LT(a.position[1], cfg.width);
    ASSERT_TRUE(a.canal_slice.has_value());
    EXPECT_GT(*a.canal_slice, a.interval.end);
    EXPECT_GE(r.crown_slice, 0);
    EXPECT_LT(r.crown_slice, cfg.depth);
    for (float v : r.volume.voxels) {
      ASSERT_TRUE(std::isfinite(v));
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(GeneratePhantom, ToothRegionIsBrighterThanTheGap) {
  const PhantomConfig cfg;
  const PatientRecord r = generate_phantom(cfg, 7);
  const PhantomLayout layout = phantom_layout(cfg, 7);
  double tooth = 0.0, gap = 0.0;
  long nt = 0, ng = 0;
  for (int d = 0; d < cfg.depth; ++d)
    for (int h = 0; h < cfg.height; ++h)
      for (int w = 0; w < cfg.width; ++w) {
        if (layout.in_tooth(d, h, w)) {
          tooth += r.volume.at(d, h, w);
          ++nt;
        } else if (layout.in_gap(d, h, w)) {
          gap += r.volume.at(d, h, w);
          ++ng;
        }
      }
  ASSERT_GT(nt, 0);
  ASSERT_GT(ng, 0);
  EXPECT_GT(tooth / nt, gap / ng);
}

TEST(GeneratePhantom, GroundTruthIntervalMatchesLayout) {
  const PhantomConfig cfg;
  const PhantomLayout layout = phantom_layout(cfg, 3);
  const PatientRecord r = generate_phantom(cfg, 3);
  EXPECT_DOUBLE_EQ(r.annotation.interval.start, layout.bone_crest);
  EXPECT_DOUBLE_EQ(r.annotation.interval.end, layout.implant_end);
  EXPECT_DOUBLE_EQ(r.annotation.position[0], layout.gap.row);
  EXPECT_DOUBLE_EQ(r.annotation.position[1], layout.gap.col);
  EXPECT_EQ(r.crown_slice, layout.crown_slice);
}

TEST(GeneratePhantom, ConditionFollowsGapAngle) {
  const PhantomConfig cfg;
  std::set<Condition> seen;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const PhantomLayout layout = phantom_layout(cfg, seed);
    const Condition c = generate_phantom(cfg, seed).annotation.condition;
    seen.insert(c);
    // Angle pi is the image-left end of the arc.
    if (layout.gap.angle > 2.0 * std::numbers::pi / 3.0) EXPECT_EQ(c, Condition::left);
    else if (layout.gap.angle < std::numbers::pi / 3.0) EXPECT_EQ(c, Condition::right);
    else EXPECT_EQ(c, Condition::middle);
  }
  EXPECT_EQ(seen.size(), 3u);
}

TEST(GeneratePhantom, RejectsInvalidDimensions) {
  PhantomConfig cfg;
  cfg.depth = 7;
  EXPECT_THROW(generate_phantom(cfg, 1), ConfigError);
  cfg = PhantomConfig{};
  cfg.spacing_mm = 0.0;
  EXPECT_THROW(generate_phantom(cfg, 1), ConfigError);
  cfg = PhantomConfig{};
  cfg.teeth = 2;  // no interior gap possible
  EXPECT_THROW(generate_phantom(cfg, 1), ConfigError);
}

TEST(GeneratePhantom, PaperScalePresetHasFullScanSize) {
  const PhantomConfig p = PhantomConfig::paper_scale();
  EXPECT_EQ(p.depth, 432);
  EXPECT_EQ(p.height, 776);
  EXPECT_EQ(p.width, 776);
  EXPECT_NO_THROW(p.validate());
}

TEST(VolumeIo, RoundTripIsExact) {
  const fs::path dir = scratch_dir("roundtrip");
  for (std::uint64_t seed : {0u, 7u, 19u}) {
    const PatientRecord r = generate_phantom(PhantomConfig{}, seed);
    write_volume(r, dir / std::to_string(seed));
    const PatientRecord back = read_volume(dir / std::to_string(seed));
    EXPECT_TRUE(back == r);
    EXPECT_EQ(back.volume.voxels, r.volume.voxels);
  }
  PatientRecord no_canal = generate_phantom(PhantomConfig{}, 2);
  no_canal.annotation.canal_slice.reset();
  write_volume(no_canal, dir / "nocanal");
  EXPECT_TRUE(read_volume(dir / "nocanal") == no_canal);
  fs::remove_all(dir);
}

TEST(VolumeIo, TruncatedPayloadIsASizeMismatch) {
  const fs::path dir = scratch_dir("truncated");
  write_volume(small_records(1)[0], dir);
  const auto size = fs::file_size(dir / "volume.raw");
  fs::resize_file(dir / "volume.raw", size - 1);
  try {
    read_volume(dir);
    FAIL() << "expected an error";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("size"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(VolumeIo, ZeroDepthHeaderFailsValidation) {
  const fs::path dir = scratch_dir("zerodepth");
  write_volume(small_records(1)[0], dir);
  write_text(dir / "meta.txt", replace_line(read_text(dir / "meta.txt"), "depth", "0"));
  EXPECT_THROW(read_volume(dir), Error);
  try {
    read_volume(dir);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("depth"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(VolumeIo, ErrorsNameTheOffendingField) {
  const fs::path dir = scratch_dir("fields");
  write_volume(small_records(1)[0], dir);
  const std::string meta = read_text(dir / "meta.txt");

  write_text(dir / "meta.txt", replace_line(meta, "version", "99"));
  try {
    read_volume(dir);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }

  write_text(dir / "meta.txt", replace_line(meta, "spacing_h", "abc"));
  try {
    read_volume(dir);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("spacing_h"), std::string::npos) << e.what();
  }

  write_text(dir / "meta.txt", replace_line(meta, "condition", "upper"));
  EXPECT_THROW(read_volume(dir), IoError);

  fs::remove(dir / "volume.raw");
  write_text(dir / "meta.txt", meta);
  EXPECT_THROW(read_volume(dir), IoError);
  EXPECT_THROW(read_volume(dir / "does-not-exist"), IoError);
  fs::remove_all(dir);
}

TEST(DatasetSplit, PaperProportions) {
  // Sizes only matter here, so tiny stand-in records are enough.
  std::vector<PatientRecord> recs(400);
  for (int i = 0; i < 400; ++i) recs[static_cast<std::size_t>(i)].id = "r" + std::to_string(i);
  const DatasetSplit s = dataset_split(recs, 0.8, 1);
  EXPECT_EQ(s.train.size(), 320u);
  EXPECT_EQ(s.test.size(), 80u);
}

TEST(DatasetSplit, TwoRecordsHalfAndHalf) {
  const auto recs = small_records(2);
  const DatasetSplit s = dataset_split(recs, 0.5, 3);
  ASSERT_EQ(s.train.size(), 1u);
  ASSERT_EQ(s.test.size(), 1u);
  EXPECT_NE(s.train[0].id, s.test[0].id);
}

TEST(DatasetSplit, SeedsChangeMembershipNotSizes) {
  std::vector<PatientRecord> recs(10);
  for (int i = 0; i < 10; ++i) recs[static_cast<std::size_t>(i)].id = "r" + std::to_string(i);
  std::set<std::set<std::string>> memberships;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const DatasetSplit s = dataset_split(recs, 0.8, seed);
    EXPECT_EQ(s.train.size(), 8u);
    EXPECT_EQ(s.test.size(), 2u);
    std::set<std::string> train;
    for (const auto& r : s.train) train.insert(r.id);
    memberships.insert(train);
  }
  EXPECT_GT(memberships.size(), 1u);
  EXPECT_TRUE(dataset_split(recs, 0.8, 5).train == dataset_split(recs, 0.8, 5).train);
}

TEST(DatasetSplit, PartitionPropertyOverRandomFractions) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 40));
    const double f = rng.uniform(0.01, 0.99);
    std::vector<PatientRecord> recs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) recs[static_cast<std::size_t>(i)].id = std::to_string(i);
    const DatasetSplit s = dataset_split(recs, f, rng.next_u64());
    EXPECT_EQ(s.train.size(), static_cast<std::size_t>(std::floor(f * n + 1e-9)));
    std::set<std::string> all;
    for (const auto& r : s.train) all.insert(r.id);
    for (const auto& r : s.test) EXPECT_TRUE(all.insert(r.id).second) << "overlap " << r.id;
    EXPECT_EQ(all.size(), static_cast<std::size_t>(n));
  }
}

TEST(DatasetSplit, RejectsBadInput) {
  EXPECT_THROW(dataset_split(small_records(1), 0.5, 1), Error);
  EXPECT_THROW(dataset_split(small_records(3), 0.0, 1), Error);
  EXPECT_THROW(dataset_split(small_records(3), 1.0, 1), Error);
}

TEST(Dataset, WriteReadPreservesSplit) {
  const fs::path dir = scratch_dir("dataset");
  DataConfig cfg;
  cfg.phantom.depth = 16;
  cfg.phantom.height = 32;
  cfg.phantom.width = 32;
  cfg.num_patients = 5;
  const DatasetSplit s = dataset_split(generate_dataset(cfg, 4), 0.6, 4);
  write_dataset(s, dir);
  const DatasetSplit back = read_dataset(dir);
  EXPECT_TRUE(back.train == s.train);
  EXPECT_TRUE(back.test == s.test);
  fs::remove_all(dir);
}
