// Experiment driver: data generation, training, evaluation, prediction and
// texture analysis. Errors print one line "error: <category>: <message>".

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "tpnet/checkpoint.hpp"
#include "tpnet/config.hpp"
#include "tpnet/dataset.hpp"
#include "tpnet/errors.hpp"
#include "tpnet/metrics.hpp"
#include "tpnet/pipeline.hpp"
#include "tpnet/plot.hpp"
#include "tpnet/train.hpp"

namespace fs = std::filesystem;
using namespace tpnet;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string resume;
  std::string data;
};

ExperimentConfig resolve_config(const Common& c, std::optional<Stage> stage) {
  ExperimentConfig cfg;
  if (!c.config.empty()) {
    cfg = load_config(c.config);
    if (stage && cfg.train.stage != *stage)
      throw ConfigError("config stage '" + to_string(cfg.train.stage) + "' does not match command");
  } else {
    cfg = stage == Stage::ird ? ExperimentConfig::ird_preset() : ExperimentConfig::idpnet_preset();
  }
  return cfg;
}

DatasetSplit load_or_generate(const Common& c, const ExperimentConfig& cfg) {
  if (!c.data.empty()) return read_dataset(c.data);
  return dataset_split(generate_dataset(cfg.data, cfg.data.data_seed), cfg.data.train_fraction,
                       cfg.data.data_seed);
}

void require_out(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out is required");
}

void add_common(CLI::App* app, Common& c, bool with_resume, bool with_data) {
  app->add_option("--config", c.config, "INI experiment config (default: stage preset)");
  app->add_option("--seed", c.seed, "Seed override");
  app->add_option("--out", c.out, "Output directory");
  if (with_resume) app->add_option("--resume", c.resume, "Checkpoint directory to resume from");
  if (with_data) app->add_option("--data", c.data, "Dataset directory from generate-data");
}

int cmd_generate(const Common& c) {
  require_out(c);
  ExperimentConfig cfg = resolve_config(c, std::nullopt);
  if (c.seed) cfg.data.data_seed = *c.seed;
  const DatasetSplit split = dataset_split(generate_dataset(cfg.data, cfg.data.data_seed),
                                           cfg.data.train_fraction, cfg.data.data_seed);
  write_dataset(split, c.out);
  save_config(cfg, fs::path(c.out) / "config.ini");
  std::cout << "wrote " << split.train.size() << " train / " << split.test.size()
            << " test patients to " << c.out << "\n";
  return 0;
}

int cmd_train(const Common& c, Stage stage) {
  require_out(c);
  ExperimentConfig cfg = resolve_config(c, stage);
  if (c.seed) cfg.train.seed = *c.seed;
  cfg.validate();
  const DatasetSplit split = load_or_generate(c, cfg);
  TrainOptions opt;
  opt.output_dir = c.out;
  if (!c.resume.empty()) opt.resume = fs::path(c.resume);
  opt.progress = &std::cerr;
  const fs::path final_dir = train_stage(cfg, split.train, opt);
  std::cout << "final checkpoint: " << final_dir.string() << "\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& ird, const std::string& idp, bool oracle) {
  require_out(c);
  ExperimentConfig cfg = resolve_config(c, std::nullopt);
  if (c.seed) cfg.data.data_seed = *c.seed;
  const DatasetSplit split = load_or_generate(c, cfg);
  const Checkpoint idp_ckpt = load_checkpoint(idp, "idpnet");
  std::optional<Detector> det;
  if (!oracle) {
    if (ird.empty()) throw ConfigError("--ird is required unless --oracle-position is set");
    det = load_detector(ird);
  }
  const TpnetPipeline pipe(std::move(det), load_depthnet(idp),
                           {idp_ckpt.config.data.crop_hw, idp_ckpt.config.data.crop_d, oracle});
  const EvalResult r = evaluate(pipe, split.test);
  fs::create_directories(c.out);
  write_eval_report(r, fs::path(c.out) / "report.txt");
  write_eval_summary(r, fs::path(c.out) / "summary.json");
  for (const auto& [m, acc] : r.acc_at) std::cout << "acc@" << m << " " << acc << "\n";
  return 0;
}

int cmd_predict(const Common& c, const std::string& ird, const std::string& idp,
                const std::string& patient, bool oracle, bool overlays) {
  const PatientRecord rec = read_volume(patient);
  const Checkpoint idp_ckpt = load_checkpoint(idp, "idpnet");
  std::optional<Detector> det;
  if (!oracle) {
    if (ird.empty()) throw ConfigError("--ird is required unless --oracle-position is set");
    det = load_detector(ird);
  }
  const TpnetPipeline pipe(std::move(det), load_depthnet(idp),
                           {idp_ckpt.config.data.crop_hw, idp_ckpt.config.data.crop_d, oracle});
  const Prediction p = pipe.predict(rec);
  const nlohmann::json j{{"id", rec.id},
                         {"interval", {p.interval.start, p.interval.end}},
                         {"crop_interval", {p.crop_interval.start, p.crop_interval.end}},
                         {"position", {p.position[0], p.position[1]}},
                         {"crop_origin", {p.crop_origin[0], p.crop_origin[1], p.crop_origin[2]}}};
  std::cout << j.dump() << "\n";
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    std::ofstream(fs::path(c.out) / "prediction.json") << j.dump(2) << "\n";
    if (overlays) write_overlays(rec, p, c.out);
  }
  return 0;
}

int cmd_texture(const Common& c, std::vector<int> ks, int patients) {
  require_out(c);
  ExperimentConfig cfg = resolve_config(c, std::nullopt);
  if (c.seed) cfg.data.data_seed = *c.seed;
  if (patients < 1) throw ConfigError("--patients must be at least 1");
  cfg.data.num_patients = std::max(patients, 2);
  const auto records = generate_dataset(cfg.data, cfg.data.data_seed);
  std::vector<double> mean(ks.size(), 0.0);
  for (int i = 0; i < patients; ++i) {
    const auto curve = texture_variation_curve(records[static_cast<std::size_t>(i)].volume, ks);
    for (std::size_t j = 0; j < ks.size(); ++j) mean[j] += curve[j].variation / patients;
  }
  fs::create_directories(c.out);
  nlohmann::json j = nlohmann::json::array();
  Series s{"mean over patients", {}, {}};
  for (std::size_t i = 0; i < ks.size(); ++i) {
    j.push_back({{"k", ks[i]}, {"variation", mean[i]}});
    s.x.push_back(ks[i]);
    s.y.push_back(mean[i]);
    std::cout << "k=" << ks[i] << " variation=" << mean[i] << "\n";
  }
  std::ofstream(fs::path(c.out) / "texture_curve.json") << j.dump(2) << "\n";
  write_line_plot_svg(fs::path(c.out) / "texture_curve.svg", "Texture variation",
                      "sampling interval k", "edge-map std", {s});
  return 0;
}

int exit_code(const std::string& category) {
  if (category == "config") return 2;
  if (category == "io") return 3;
  if (category == "shape") return 4;
  if (category == "value") return 5;
  if (category == "numeric") return 6;
  if (category == "checkpoint") return 7;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TPNet implant depth prediction on synthetic CBCT phantoms"};
  app.require_subcommand(1);

  Common gen, tird, tidp, ev, pr, tex;
  std::string ev_ird, ev_idp, pr_ird, pr_idp, pr_patient;
  bool ev_oracle = false, pr_oracle = false, pr_overlay = false;
  std::vector<int> ks{1, 5, 10, 15, 20};
  int tex_patients = 5;

  auto* g = app.add_subcommand("generate-data", "Generate a phantom dataset with a train/test split");
  add_common(g, gen, false, false);
  auto* ti = app.add_subcommand("train-ird", "Train the implant region detector");
  add_common(ti, tird, true, true);
  auto* td = app.add_subcommand("train-idpnet", "Train the depth prediction network");
  add_common(td, tidp, true, true);
  auto* e = app.add_subcommand("eval", "Evaluate the full pipeline on the test split");
  add_common(e, ev, false, true);
  e->add_option("--ird", ev_ird, "Detector checkpoint directory");
  e->add_option("--idpnet", ev_idp, "Depth network checkpoint directory")->required();
  e->add_flag("--oracle-position", ev_oracle, "Crop at the annotated position instead of detecting");
  auto* p = app.add_subcommand("predict", "Predict the implant interval for one patient");
  add_common(p, pr, false, false);
  p->add_option("--ird", pr_ird, "Detector checkpoint directory");
  p->add_option("--idpnet", pr_idp, "Depth network checkpoint directory")->required();
  p->add_option("--patient", pr_patient, "Patient volume directory")->required();
  p->add_flag("--oracle-position", pr_oracle, "Crop at the annotated position instead of detecting");
  p->add_flag("--overlay", pr_overlay, "Write PPM overlays into --out");
  auto* t = app.add_subcommand("analyze-texture", "Texture variation versus sampling interval");
  add_common(t, tex, false, false);
  t->add_option("--ks", ks, "Sampling intervals");
  t->add_option("--patients", tex_patients, "Number of phantoms to average");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*ti) return cmd_train(tird, Stage::ird);
    if (*td) return cmd_train(tidp, Stage::idpnet);
    if (*e) return cmd_eval(ev, ev_ird, ev_idp, ev_oracle);
    if (*p) return cmd_predict(pr, pr_ird, pr_idp, pr_patient, pr_oracle, pr_overlay);
    if (*t) return cmd_texture(tex, ks, tex_patients);
  } catch (const Error& err) {
    std::cerr << "error: " << err.category() << ": " << err.what() << "\n";
    return exit_code(err.category());
  } catch (const std::exception& err) {
    std::cerr << "error: internal: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
