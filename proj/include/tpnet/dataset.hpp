#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tpnet/config.hpp"

namespace tpnet {

// Patient i is generate_phantom(config.phantom, derive_seed({seed, i})).
std::vector<PatientRecord> generate_dataset(const DataConfig& config, std::uint64_t seed);

// <dir>/<id>/{volume.raw, meta.txt} per record plus <dir>/split.txt listing
// "train <id>" / "test <id>" lines.
void write_dataset(const DatasetSplit& split, const std::filesystem::path& directory);
DatasetSplit read_dataset(const std::filesystem::path& directory);

}  // namespace tpnet
