#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "tpnet/config.hpp"
#include "tpnet/idpnet.hpp"
#include "tpnet/ird.hpp"
#include "tpnet/losses.hpp"

namespace tpnet {

struct StepLog {
  int epoch = 0;
  int step_in_epoch = 0;
  long long global_step = 0;  // 1-based count of optimizer steps so far
  double lr = 0.0;
  std::vector<std::string> batch_ids;
  LossReport report;          // depth network terms (zero for the detector)
  double focal = 0.0;         // detector terms (zero for the depth network)
  double offset = 0.0;
  double loss = 0.0;          // the scalar that was minimized
  double mean_iou = 0.0;      // depth network: batch mean IoU before the update

  nlohmann::json to_json() const;
};

struct TrainOptions {
  std::filesystem::path output_dir;            // empty: write nothing
  std::optional<std::filesystem::path> resume; // checkpoint directory
  std::function<void(const StepLog&)> on_step;
  std::ostream* progress = nullptr;            // one line per epoch when set
};

// Per-epoch records (JSON objects with at least "epoch", "lr", "mean_loss").
struct TrainResultBase {
  nlohmann::json history = nlohmann::json::array();
  long long steps = 0;
  int epochs_completed = 0;
};

struct IrdTrainResult : TrainResultBase {
  Detector model;
};

struct IdpTrainResult : TrainResultBase {
  DepthNet model;
};

// Detector on crown slices: focal + offset L1, augmentations per config.
IrdTrainResult train_ird(const ExperimentConfig& config, std::span<const PatientRecord> train_set,
                         const TrainOptions& options = {});

// Depth network on ground-truth-centred crops: l_reg (+ l_tiou) (+ l_tpl).
IdpTrainResult train_idpnet(const ExperimentConfig& config,
                            std::span<const PatientRecord> train_set,
                            const TrainOptions& options = {});

// Dispatches on config.train.stage; returns the final checkpoint directory.
std::filesystem::path train_stage(const ExperimentConfig& config,
                                  std::span<const PatientRecord> train_set,
                                  const TrainOptions& options);

// Epoch-shuffled sample order, seeded by (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

}  // namespace tpnet
