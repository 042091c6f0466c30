#include "tpnet/train.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>

#include "tpnet/augment.hpp"
#include "tpnet/checkpoint.hpp"
#include "tpnet/errors.hpp"
#include "tpnet/optim.hpp"
#include "tpnet/plot.hpp"
#include "tpnet/rng.hpp"

namespace tpnet {

nlohmann::json StepLog::to_json() const {
  return nlohmann::json{{"epoch", epoch},
                        {"step_in_epoch", step_in_epoch},
                        {"global_step", global_step},
                        {"lr", lr},
                        {"batch", batch_ids},
                        {"loss", loss},
                        {"focal", focal},
                        {"offset", offset},
                        {"l_reg", report.l_reg},
                        {"l_tiou", report.l_tiou},
                        {"l_tpl", report.l_tpl},
                        {"l_con", report.l_con},
                        {"l_icon", report.l_icon},
                        {"l_total", report.l_total},
                        {"mean_iou", mean_iou}};
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed({seed, 0x5348554646ULL, static_cast<std::uint64_t>(epoch)}));
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  return order;
}

namespace {

std::uint64_t sample_seed(std::uint64_t seed, int epoch, std::size_t index) {
  return derive_seed({seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(index)});
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& c) {
  if (c.optimizer == OptimizerKind::adam)
    return std::make_unique<Adam>(c.beta1, c.beta2, 1e-8, c.weight_decay);
  return std::make_unique<Sgd>(c.momentum, c.weight_decay);
}

struct StepOutcome {
  Var loss;
  StepLog log;
};

// Shared epoch/batch loop: resume, optimizer, logging, checkpoints, plots.
// `step_fn(batch, epoch)` builds the loss graph for one mini-batch.
template <class StepFn>
void run_training(const ExperimentConfig& config, const std::string& kind, ParameterSet& params,
                  const std::vector<std::string>& ids, const TrainOptions& options,
                  StepFn step_fn, TrainResultBase& result) {
  config.validate();
  const TrainConfig& tc = config.train;
  if (ids.empty()) throw ValueError("training set is empty");
  auto optimizer = make_optimizer(tc);

  int start_epoch = 0;
  if (options.resume) {
    const Checkpoint ckpt = load_checkpoint(*options.resume, kind);
    const bool same_model = kind == "ird" ? ckpt.config.detector == config.detector
                                          : ckpt.config.depthnet == config.depthnet;
    if (!same_model)
      throw CheckpointError("checkpoint model configuration differs from the requested one");
    if (ckpt.config.train.optimizer != tc.optimizer)
      throw CheckpointError("checkpoint optimizer '" + to_string(ckpt.config.train.optimizer) +
                            "' differs from '" + to_string(tc.optimizer) + "'");
    import_weights(params, ckpt.weights);
    optimizer->load_state(ckpt.optimizer);
    result.history = ckpt.history;
    result.steps = ckpt.step;
    start_epoch = ckpt.epoch;
    if (start_epoch > tc.epochs)
      throw CheckpointError("checkpoint epoch " + std::to_string(start_epoch) +
                            " beyond the configured schedule");
  }
  result.epochs_completed = start_epoch;

  const bool write = !options.output_dir.empty();
  std::ofstream log_stream;
  if (write) {
    std::error_code ec;
    std::filesystem::create_directories(options.output_dir, ec);
    if (ec) throw IoError("cannot create " + options.output_dir.string() + ": " + ec.message());
    save_config(config, options.output_dir / "config.ini");
    log_stream.open(options.output_dir / "train_log.jsonl",
                    options.resume ? std::ios::app : std::ios::trunc);
    if (!log_stream) throw IoError("cannot write training log");
  }

  auto make_checkpoint = [&](int epochs_done) {
    Checkpoint c;
    c.kind = kind;
    c.epoch = epochs_done;
    c.step = result.steps;
    c.config = config;
    c.history = result.history;
    c.weights = export_weights(params);
    c.optimizer = optimizer->state();
    return c;
  };

  bool stop = false;
  for (int epoch = start_epoch; epoch < tc.epochs && !stop; ++epoch) {
    const double lr = lr_at(epoch, tc);
    const auto order = epoch_order(ids.size(), tc.seed, epoch);
    nlohmann::json sums = nlohmann::json::object();
    int steps_in_epoch = 0;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t last = std::min(order.size(), first + static_cast<std::size_t>(tc.batch_size));
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(first),
                                           order.begin() + static_cast<std::ptrdiff_t>(last));
      params.zero_grad();
      StepOutcome out = step_fn(batch, epoch);
      StepLog& log = out.log;
      log.epoch = epoch;
      log.step_in_epoch = steps_in_epoch;
      log.global_step = result.steps + 1;
      log.lr = lr;
      for (std::size_t i : batch) log.batch_ids.push_back(ids[i]);
      log.loss = out.loss.value()[0];

      if (!std::isfinite(log.loss)) {
        std::string batch_text;
        for (const auto& id : log.batch_ids) batch_text += (batch_text.empty() ? "" : ",") + id;
        if (write) {
          std::ofstream dump(options.output_dir / "nonfinite_dump.json");
          dump << log.to_json().dump(2) << "\n";
        }
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(log.global_step) + ", batch [" + batch_text + "]");
      }

      backward(out.loss);
      optimizer->step(params, lr);
      ++result.steps;
      ++steps_in_epoch;

      const nlohmann::json j = log.to_json();
      if (write) log_stream << j.dump() << "\n";
      if (options.on_step) options.on_step(log);
      for (const char* key : {"loss", "focal", "offset", "l_reg", "l_tiou", "l_tpl", "l_con",
                              "l_icon", "l_total", "mean_iou"})
        sums[key] = sums.value(key, 0.0) + j[key].get<double>();

      if (tc.max_steps > 0 && result.steps >= tc.max_steps && last < order.size()) {
        stop = true;
        break;
      }
    }
    if (stop) break;

    nlohmann::json record{{"epoch", epoch}, {"lr", lr}, {"steps", steps_in_epoch}};
    for (auto& [key, value] : sums.items()) {
      const std::string name = key == "loss" ? "mean_loss" : key == "mean_iou" ? key : "mean_" + key;
      record[name] = value.template get<double>() / steps_in_epoch;
    }
    result.history.push_back(record);
    result.epochs_completed = epoch + 1;
    if (options.progress)
      *options.progress << kind << " epoch " << epoch + 1 << "/" << tc.epochs << " lr " << lr
                        << " loss " << record["mean_loss"].get<double>() << std::endl;
    if (write && tc.checkpoint_every > 0 && (epoch + 1) % tc.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch-%04d", epoch + 1);
      save_checkpoint(make_checkpoint(epoch + 1), options.output_dir / "checkpoints" / name);
    }
    if (tc.max_steps > 0 && result.steps >= tc.max_steps) stop = true;
  }

  if (write) {
    save_checkpoint(make_checkpoint(result.epochs_completed), options.output_dir / "final");
    Series loss{"mean loss", {}, {}};
    for (const auto& r : result.history) {
      loss.x.push_back(r["epoch"].get<double>() + 1);
      loss.y.push_back(r["mean_loss"].get<double>());
    }
    write_line_plot_svg(options.output_dir / "training_curve.svg", kind + " training", "epoch",
                        "mean loss", {loss});
  }
}

}  // namespace

IrdTrainResult train_ird(const ExperimentConfig& config, std::span<const PatientRecord> train_set,
                         const TrainOptions& options) {
  IrdTrainResult result{{}, Detector(config.detector, derive_seed({config.train.seed, 1}))};
  Detector& det = result.model;
  const int stride = config.detector.output_stride();

  std::vector<IrdSample> base;
  std::vector<std::string> ids;
  for (const auto& rec : train_set) {
    base.push_back({slice_tensor(rec.volume, rec.crown_slice), rec.annotation.position,
                    rec.annotation.condition});
    ids.push_back(rec.id);
  }

  auto step_fn = [&](const std::vector<std::size_t>& batch, int epoch) {
    std::vector<Tensor> images, targets;
    std::vector<Condition> conditions;
    std::vector<std::array<double, 2>> offsets;
    std::vector<PeakPixel> peaks;
    for (std::size_t i : batch) {
      const IrdSample s = augment_ird(base[i], config.augment, sample_seed(config.train.seed, epoch, i));
      const int rows = s.image.shape()[3] / stride, cols = s.image.shape()[4] / stride;
      const HeatmapTarget ht = heatmap_target_for(s.position, stride, rows, cols);
      images.push_back(s.image);
      targets.push_back(gaussian_target({s.position[0] / stride, s.position[1] / stride},
                                        config.data.heatmap_sigma, rows, cols));
      conditions.push_back(s.condition);
      offsets.push_back(ht.offset);
      peaks.push_back(ht.peak);
    }
    const DetectorOutput out = det.forward(Var(stack_batch(images)), conditions);
    const Var focal = focal_loss(out.heatmap, stack_batch(targets));
    const Var off = offset_l1_loss(out.offsets, offsets, peaks);
    StepOutcome o;
    o.loss = add(focal, off);
    o.log.focal = focal.value()[0];
    o.log.offset = off.value()[0];
    return o;
  };

  run_training(config, "ird", det.params(), ids, options, step_fn, result);
  return result;
}

IdpTrainResult train_idpnet(const ExperimentConfig& config,
                            std::span<const PatientRecord> train_set,
                            const TrainOptions& options) {
  IdpTrainResult result{{}, DepthNet(config.depthnet, derive_seed({config.train.seed, 2}))};
  DepthNet& net = result.model;
  const LossSwitches switches{config.loss.enable_tiou, config.loss.enable_tpl};

  std::vector<Crop> crops;
  std::vector<Interval> gts;
  std::vector<std::string> ids;
  for (const auto& rec : train_set) {
    crops.push_back(crop_subvolume(rec.volume, rec.annotation.position, config.data.crop_hw,
                                   config.data.crop_d));
    gts.push_back(to_crop_coordinates(rec.annotation.interval, crops.back()));
    ids.push_back(rec.id);
  }

  bool warned = false;
  auto step_fn = [&](const std::vector<std::size_t>& batch, int epoch) {
    std::vector<Tensor> inputs;
    std::vector<Interval> batch_gt;
    for (std::size_t i : batch) {
      Volume v = crops[i].volume;
      augment_idpnet(v, config.augment, sample_seed(config.train.seed, epoch, i));
      inputs.push_back(to_tensor(v));
      batch_gt.push_back(gts[i]);
    }
    const DepthNet::Output out = net.forward(Var(stack_batch(inputs)));
    const Var reg = l_reg(out.interval, batch_gt);
    const Var tiou = switches.enable_tiou ? l_tiou(out.interval, batch_gt) : Var();
    Var con, icon;
    if (switches.enable_tpl) {
      TplTerms terms = l_tpl(texture_extract(out.feature), config.loss.tpl_k, config.loss.tpl_margin);
      if (!terms.icon_active && !warned && options.progress) {
        *options.progress << "warning: texture stack depth " << out.feature.shape()[2]
                          << " <= k=" << config.loss.tpl_k << "; inconsistency term is 0\n";
        warned = true;
      }
      con = terms.con;
      icon = terms.icon;
    }
    TotalLoss total = l_total(reg, tiou, con, icon, switches);
    StepOutcome o;
    o.loss = total.total;
    o.log.report = total.report;
    const auto pred = tensor_to_intervals(out.interval.value());
    double iou = 0.0;
    for (std::size_t j = 0; j < pred.size(); ++j) iou += interval_iou(pred[j], batch_gt[j]);
    o.log.mean_iou = iou / static_cast<double>(pred.size());
    return o;
  };

  run_training(config, "idpnet", net.params(), ids, options, step_fn, result);
  return result;
}

std::filesystem::path train_stage(const ExperimentConfig& config,
                                  std::span<const PatientRecord> train_set,
                                  const TrainOptions& options) {
  if (options.output_dir.empty()) throw ConfigError("train_stage needs an output directory");
  if (config.train.stage == Stage::ird)
    train_ird(config, train_set, options);
  else
    train_idpnet(config, train_set, options);
  return options.output_dir / "final";
}

}  // namespace tpnet
