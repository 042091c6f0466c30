#include "tpnet/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "tpnet/errors.hpp"
#include "tpnet/rng.hpp"

namespace tpnet {

std::vector<PatientRecord> generate_dataset(const DataConfig& config, std::uint64_t seed) {
  std::vector<PatientRecord> out;
  out.reserve(static_cast<std::size_t>(config.num_patients));
  for (int i = 0; i < config.num_patients; ++i) {
    PatientRecord rec = generate_phantom(config.phantom, derive_seed({seed, static_cast<std::uint64_t>(i)}));
    char id[32];
    std::snprintf(id, sizeof id, "patient-%04d", i);
    rec.id = id;
    out.push_back(std::move(rec));
  }
  return out;
}

void write_dataset(const DatasetSplit& split, const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());
  std::ofstream index(directory / "split.txt");
  if (!index) throw IoError("cannot write " + (directory / "split.txt").string());
  std::set<std::string> seen;
  auto emit = [&](const std::vector<PatientRecord>& records, const char* tag) {
    for (const auto& r : records) {
      if (!seen.insert(r.id).second) throw ValueError("duplicate patient id '" + r.id + "'");
      write_volume(r, directory / r.id);
      index << tag << " " << r.id << "\n";
    }
  };
  emit(split.train, "train");
  emit(split.test, "test");
  if (!index) throw IoError("failed writing split.txt");
}

DatasetSplit read_dataset(const std::filesystem::path& directory) {
  std::ifstream index(directory / "split.txt");
  if (!index) throw IoError("missing " + (directory / "split.txt").string());
  DatasetSplit split;
  std::string tag, id;
  while (index >> tag >> id) {
    if (tag == "train") split.train.push_back(read_volume(directory / id));
    else if (tag == "test") split.test.push_back(read_volume(directory / id));
    else throw IoError("split.txt: unknown tag '" + tag + "'");
  }
  return split;
}

}  // namespace tpnet
