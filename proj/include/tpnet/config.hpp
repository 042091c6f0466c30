#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tpnet/idpnet.hpp"
#include "tpnet/ird.hpp"
#include "tpnet/phantom.hpp"

namespace tpnet {

enum class Stage { ird, idpnet };
enum class OptimizerKind { adam, sgd };

struct TrainConfig {
  Stage stage = Stage::idpnet;
  int batch_size = 1;
  double base_lr = 1e-3;
  int epochs = 40;
  std::vector<int> lr_drop_epochs{20, 30};
  OptimizerKind optimizer = OptimizerKind::sgd;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs between periodic checkpoints; 0 = final only
  int max_steps = 0;         // stop early after this many optimizer steps; 0 = full schedule

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct LossConfig {
  bool enable_tiou = true;
  bool enable_tpl = true;
  int tpl_k = 10;
  double tpl_margin = 0.1;

  bool operator==(const LossConfig&) const = default;
};

struct AugmentConfig {
  bool random_crop = true;
  bool random_scale = true;
  bool random_flip = true;
  double crop_min = 0.7;  // crop side as a fraction of the image side, upper bound 1
  double scale_min = 0.8;
  double scale_max = 1.2;
  double flip_prob = 0.5;

  bool operator==(const AugmentConfig&) const = default;
};

struct DataConfig {
  PhantomConfig phantom;
  int num_patients = 100;
  double train_fraction = 0.8;
  std::uint64_t data_seed = 0;
  int crop_hw = 32;
  int crop_d = 64;
  double heatmap_sigma = 2.0;  // output pixels

  bool operator==(const DataConfig&) const = default;
};

struct ExperimentConfig {
  TrainConfig train;
  LossConfig loss;
  AugmentConfig augment;
  DetectorConfig detector;
  DepthNetConfig depthnet;
  DataConfig data;

  // Adam, batch 8, lr 1e-3 dropped /10 at epochs 40 and 60 of 80.
  static ExperimentConfig ird_preset();
  // SGD, batch 1, lr 1e-3 dropped /10 at epochs 20 and 30 of 40; flip only.
  static ExperimentConfig idpnet_preset();

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

std::string to_string(Stage s);
std::string to_string(OptimizerKind k);

// INI text: [train] [loss] [augment] [detector] [depthnet] [data] sections of
// key = value lines; lists are comma separated. Keys absent from the text keep
// the preset value of the stage named in [train] stage (default idpnet).
// Unknown sections or keys are errors.
std::string to_ini(const ExperimentConfig& config);
ExperimentConfig parse_ini(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

// base_lr * 10^-(number of drop epochs <= epoch).
double lr_at(int epoch, const TrainConfig& config);

}  // namespace tpnet
