#include "tpnet/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "tpnet/errors.hpp"

namespace tpnet {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
    throw ConfigError("'" + key + "': expected a number, got '" + text + "'");
  return v;
}

long long parse_integer(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError("'" + key + "': expected an integer, got '" + text + "'");
  return v;
}

int parse_int(const std::string& key, const std::string& text) {
  const long long v = parse_integer(key, text);
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError("'" + key + "': out of range");
  return static_cast<int>(v);
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError("'" + key + "': expected a non-negative integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError("'" + key + "': expected true/false, got '" + text + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, item));
  return out;
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define TP_FIELD(sec, name, member, fmt, parse)                                          \
  Field {                                                                                \
    sec, name, [](const ExperimentConfig& c) { return fmt(c.member); },                  \
        [](ExperimentConfig& c, const std::string& v) { c.member = parse(sec "." name, v); } \
  }

std::string fmt_int(int v) { return std::to_string(v); }
std::string fmt_u64(std::uint64_t v) { return std::to_string(v); }
std::string fmt_bool(bool v) { return v ? "true" : "false"; }

Stage parse_stage(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "ird") return Stage::ird;
  if (t == "idpnet") return Stage::idpnet;
  throw ConfigError("'" + key + "': expected ird or idpnet, got '" + v + "'");
}

OptimizerKind parse_optimizer(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "adam") return OptimizerKind::adam;
  if (t == "sgd") return OptimizerKind::sgd;
  throw ConfigError("'" + key + "': expected adam or sgd, got '" + v + "'");
}

std::string fmt_stage(Stage s) { return to_string(s); }
std::string fmt_optimizer(OptimizerKind k) { return to_string(k); }

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      TP_FIELD("train", "stage", train.stage, fmt_stage, parse_stage),
      TP_FIELD("train", "batch_size", train.batch_size, fmt_int, parse_int),
      TP_FIELD("train", "base_lr", train.base_lr, fmt_double, parse_double),
      TP_FIELD("train", "epochs", train.epochs, fmt_int, parse_int),
      TP_FIELD("train", "lr_drop_epochs", train.lr_drop_epochs, fmt_int_list, parse_int_list),
      TP_FIELD("train", "optimizer", train.optimizer, fmt_optimizer, parse_optimizer),
      TP_FIELD("train", "momentum", train.momentum, fmt_double, parse_double),
      TP_FIELD("train", "beta1", train.beta1, fmt_double, parse_double),
      TP_FIELD("train", "beta2", train.beta2, fmt_double, parse_double),
      TP_FIELD("train", "weight_decay", train.weight_decay, fmt_double, parse_double),
      TP_FIELD("train", "seed", train.seed, fmt_u64, parse_u64),
      TP_FIELD("train", "checkpoint_every", train.checkpoint_every, fmt_int, parse_int),
      TP_FIELD("train", "max_steps", train.max_steps, fmt_int, parse_int),
      TP_FIELD("loss", "enable_tiou", loss.enable_tiou, fmt_bool, parse_bool),
      TP_FIELD("loss", "enable_tpl", loss.enable_tpl, fmt_bool, parse_bool),
      TP_FIELD("loss", "tpl_k", loss.tpl_k, fmt_int, parse_int),
      TP_FIELD("loss", "tpl_margin", loss.tpl_margin, fmt_double, parse_double),
      TP_FIELD("augment", "random_crop", augment.random_crop, fmt_bool, parse_bool),
      TP_FIELD("augment", "random_scale", augment.random_scale, fmt_bool, parse_bool),
      TP_FIELD("augment", "random_flip", augment.random_flip, fmt_bool, parse_bool),
      TP_FIELD("augment", "crop_min", augment.crop_min, fmt_double, parse_double),
      TP_FIELD("augment", "scale_min", augment.scale_min, fmt_double, parse_double),
      TP_FIELD("augment", "scale_max", augment.scale_max, fmt_double, parse_double),
      TP_FIELD("augment", "flip_prob", augment.flip_prob, fmt_double, parse_double),
      TP_FIELD("detector", "widths", detector.widths, fmt_int_list, parse_int_list),
      TP_FIELD("detector", "blocks_per_stage", detector.blocks_per_stage, fmt_int, parse_int),
      TP_FIELD("detector", "stem_width", detector.stem_width, fmt_int, parse_int),
      TP_FIELD("detector", "decoder_widths", detector.decoder_widths, fmt_int_list,
               parse_int_list),
      TP_FIELD("detector", "embed_dim", detector.embed_dim, fmt_int, parse_int),
      TP_FIELD("detector", "head_width", detector.head_width, fmt_int, parse_int),
      TP_FIELD("depthnet", "widths3d", depthnet.widths3d, fmt_int_list, parse_int_list),
      TP_FIELD("depthnet", "widths2d", depthnet.widths2d, fmt_int_list, parse_int_list),
      TP_FIELD("depthnet", "decoder_widths", depthnet.decoder_widths, fmt_int_list,
               parse_int_list),
      TP_FIELD("depthnet", "head_hidden", depthnet.head_hidden, fmt_int, parse_int),
      TP_FIELD("data", "depth", data.phantom.depth, fmt_int, parse_int),
      TP_FIELD("data", "height", data.phantom.height, fmt_int, parse_int),
      TP_FIELD("data", "width", data.phantom.width, fmt_int, parse_int),
      TP_FIELD("data", "spacing_mm", data.phantom.spacing_mm, fmt_double, parse_double),
      TP_FIELD("data", "teeth", data.phantom.teeth, fmt_int, parse_int),
      TP_FIELD("data", "texture_amplitude", data.phantom.texture_amplitude, fmt_double,
               parse_double),
      TP_FIELD("data", "nerve_canal", data.phantom.nerve_canal, fmt_bool, parse_bool),
      TP_FIELD("data", "num_patients", data.num_patients, fmt_int, parse_int),
      TP_FIELD("data", "train_fraction", data.train_fraction, fmt_double, parse_double),
      TP_FIELD("data", "data_seed", data.data_seed, fmt_u64, parse_u64),
      TP_FIELD("data", "crop_hw", data.crop_hw, fmt_int, parse_int),
      TP_FIELD("data", "crop_d", data.crop_d, fmt_int, parse_int),
      TP_FIELD("data", "heatmap_sigma", data.heatmap_sigma, fmt_double, parse_double),
  };
  return f;
}

#undef TP_FIELD

}  // namespace

std::string to_string(Stage s) { return s == Stage::ird ? "ird" : "idpnet"; }
std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("train.epochs must be positive");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (!(base_lr > 0.0)) throw ConfigError("train.base_lr must be positive");
  for (std::size_t i = 0; i < lr_drop_epochs.size(); ++i) {
    if (i > 0 && lr_drop_epochs[i] <= lr_drop_epochs[i - 1])
      throw ConfigError("train.lr_drop_epochs must be strictly increasing");
    if (lr_drop_epochs[i] < 0 || lr_drop_epochs[i] >= epochs)
      throw ConfigError("train.lr_drop_epochs entries must lie in [0, epochs)");
  }
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train.momentum must be in [0, 1)");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("train.beta1/beta2 must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be non-negative");
  if (max_steps < 0) throw ConfigError("train.max_steps must be non-negative");
}

ExperimentConfig ExperimentConfig::ird_preset() {
  ExperimentConfig c;
  c.train.stage = Stage::ird;
  c.train.batch_size = 8;
  c.train.base_lr = 1e-3;
  c.train.epochs = 80;
  c.train.lr_drop_epochs = {40, 60};
  c.train.optimizer = OptimizerKind::adam;
  return c;
}

ExperimentConfig ExperimentConfig::idpnet_preset() {
  ExperimentConfig c;
  c.train.stage = Stage::idpnet;
  c.train.batch_size = 1;
  c.train.base_lr = 1e-3;
  c.train.epochs = 40;
  c.train.lr_drop_epochs = {20, 30};
  c.train.optimizer = OptimizerKind::sgd;
  c.augment.random_crop = false;
  c.augment.random_scale = false;
  return c;
}

void ExperimentConfig::validate() const {
  train.validate();
  detector.validate();
  depthnet.validate();
  data.phantom.validate();
  if (loss.tpl_k < 1) throw ConfigError("loss.tpl_k must be at least 1");
  if (loss.tpl_margin < 0.0) throw ConfigError("loss.tpl_margin must be non-negative");
  if (!(augment.crop_min > 0.0 && augment.crop_min <= 1.0))
    throw ConfigError("augment.crop_min must be in (0, 1]");
  if (!(augment.scale_min > 0.0 && augment.scale_min <= augment.scale_max))
    throw ConfigError("augment.scale_min/scale_max must satisfy 0 < min <= max");
  if (augment.flip_prob < 0.0 || augment.flip_prob > 1.0)
    throw ConfigError("augment.flip_prob must be in [0, 1]");
  if (data.num_patients < 2) throw ConfigError("data.num_patients must be at least 2");
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0))
    throw ConfigError("data.train_fraction must be in (0, 1)");
  if (data.crop_hw < 1 || data.crop_hw > std::min(data.phantom.height, data.phantom.width))
    throw ConfigError("data.crop_hw must be in [1, min(height, width)]");
  if (data.crop_d < 1 || data.crop_d > data.phantom.depth)
    throw ConfigError("data.crop_d must be in [1, depth]");
  if (data.crop_d % depthnet.depth_stride() != 0 || data.crop_hw % depthnet.spatial_stride() != 0)
    throw ConfigError("data.crop_d/crop_hw must be divisible by the depth network strides");
  if (data.phantom.height != data.phantom.width ||
      data.phantom.height % detector.total_stride() != 0)
    throw ConfigError("detector input (phantom height x width) must be square and divisible by " +
                      std::to_string(detector.total_stride()));
  if (!(data.heatmap_sigma > 0.0)) throw ConfigError("data.heatmap_sigma must be positive");
}

std::string to_ini(const ExperimentConfig& config) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) os << "\n";
      section = f.section;
      os << "[" << section << "]\n";
    }
    os << f.key << " = " << f.get(config) << "\n";
  }
  return os.str();
}

ExperimentConfig parse_ini(const std::string& text) {
  boost::property_tree::ptree tree;
  try {
    std::istringstream is(text);
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()) + ": " + e.message());
  }

  std::map<std::string, const Field*> by_name;
  std::set<std::string> sections;
  for (const auto& f : fields()) {
    by_name[f.section + "." + f.key] = &f;
    sections.insert(f.section);
  }
  for (const auto& [sec, body] : tree) {
    if (!sections.count(sec)) throw ConfigError("unknown section [" + sec + "]");
    for (const auto& [key, value] : body)
      if (!by_name.count(sec + "." + key)) throw ConfigError("unknown key '" + sec + "." + key + "'");
  }

  ExperimentConfig config = ExperimentConfig::idpnet_preset();
  if (auto stage = tree.get_optional<std::string>("train.stage"))
    if (parse_stage("train.stage", *stage) == Stage::ird) config = ExperimentConfig::ird_preset();

  for (const auto& f : fields())
    if (auto v = tree.get_optional<std::string>(f.section + "." + f.key)) f.set(config, *v);
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_ini(ss.str());
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write config " + path.string());
  os << to_ini(config);
  if (!os) throw IoError("failed writing " + path.string());
}

double lr_at(int epoch, const TrainConfig& config) {
  if (epoch < 0 || epoch >= config.epochs)
    throw ValueError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                     std::to_string(config.epochs) + ")");
  double lr = config.base_lr;
  for (int drop : config.lr_drop_epochs)
    if (drop <= epoch) lr /= 10.0;
  return lr;
}

}  // namespace tpnet
