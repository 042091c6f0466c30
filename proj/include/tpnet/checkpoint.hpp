#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "tpnet/config.hpp"
#include "tpnet/optim.hpp"

namespace tpnet {

inline constexpr int kCheckpointFormatVersion = 1;

// On disk a checkpoint is a directory:
//   weights.bin / weights.manifest     named float64 arrays (little endian)
//   optimizer.bin / optimizer.manifest optimizer buffers, same layout
//   state.json                         kind, format version, epoch, history
//   config.ini                         resolved experiment config
// Manifest lines: "<name> <d0>x<d1>x<d2>x<d3>x<d4> f64 <byte offset> <count>"
// after a "tpnet-arrays <version>" header.
struct Checkpoint {
  std::string kind;  // "ird" or "idpnet"
  int epoch = 0;     // completed epochs
  long long step = 0;
  ExperimentConfig config;
  nlohmann::json history = nlohmann::json::array();
  NamedTensors weights;
  NamedTensors optimizer;
};

void write_arrays(const NamedTensors& arrays, const std::filesystem::path& bin,
                  const std::filesystem::path& manifest);
NamedTensors read_arrays(const std::filesystem::path& bin, const std::filesystem::path& manifest);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& directory);
// Throws CheckpointError when the kind differs from `expected_kind` (if not
// empty), on version mismatch, or on malformed contents.
Checkpoint load_checkpoint(const std::filesystem::path& directory,
                           const std::string& expected_kind = "");

NamedTensors export_weights(const ParameterSet& params);
// Copies values into the existing parameters; names, order and shapes must match.
void import_weights(ParameterSet& params, const NamedTensors& weights);

class Detector;
class DepthNet;
Detector load_detector(const std::filesystem::path& directory);
DepthNet load_depthnet(const std::filesystem::path& directory);

}  // namespace tpnet
