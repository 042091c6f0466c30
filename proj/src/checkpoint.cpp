#include "tpnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tpnet/errors.hpp"
#include "tpnet/idpnet.hpp"
#include "tpnet/ird.hpp"

namespace tpnet {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

constexpr const char* kManifestHeader = "tpnet-arrays";

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

Shape parse_shape(const std::string& text, const std::string& name) {
  Shape s{};
  std::stringstream ss(text);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, 'x')) {
    if (i >= s.size()) throw CheckpointError("array '" + name + "': bad shape '" + text + "'");
    try {
      s[i++] = std::stoi(part);
    } catch (const std::exception&) {
      throw CheckpointError("array '" + name + "': bad shape '" + text + "'");
    }
  }
  if (i != s.size()) throw CheckpointError("array '" + name + "': bad shape '" + text + "'");
  return s;
}

}  // namespace

void write_arrays(const NamedTensors& arrays, const std::filesystem::path& bin,
                  const std::filesystem::path& manifest) {
  std::ofstream data(bin, std::ios::binary);
  std::ofstream man(manifest);
  if (!data || !man) throw IoError("cannot write " + bin.string());
  man << kManifestHeader << " " << kCheckpointFormatVersion << "\n";
  std::size_t offset = 0;
  for (const auto& [name, t] : arrays) {
    if (name.find_first_of(" \t\n") != std::string::npos)
      throw CheckpointError("array name '" + name + "' contains whitespace");
    const std::size_t bytes = t.size() * sizeof(double);
    data.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(bytes));
    man << name << " " << shape_text(t.shape()) << " f64 " << offset << " " << t.size() << "\n";
    offset += bytes;
  }
  if (!data || !man) throw IoError("failed writing " + bin.string());
}

NamedTensors read_arrays(const std::filesystem::path& bin, const std::filesystem::path& manifest) {
  std::ifstream man(manifest);
  if (!man) throw IoError("missing " + manifest.string());
  std::ifstream data(bin, std::ios::binary | std::ios::ate);
  if (!data) throw IoError("missing " + bin.string());
  const auto file_size = static_cast<std::size_t>(data.tellg());

  std::string header;
  int version = -1;
  if (!(man >> header >> version) || header != kManifestHeader)
    throw CheckpointError(manifest.string() + ": not an array manifest");
  if (version != kCheckpointFormatVersion)
    throw CheckpointError(manifest.string() + ": format version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointFormatVersion));

  NamedTensors out;
  std::string name, shape, dtype;
  std::size_t offset = 0, count = 0;
  while (man >> name >> shape >> dtype >> offset >> count) {
    if (dtype != "f64") throw CheckpointError("array '" + name + "': unsupported dtype " + dtype);
    Tensor t(parse_shape(shape, name));
    if (t.size() != count)
      throw CheckpointError("array '" + name + "': count does not match shape " + shape);
    if (offset + count * sizeof(double) > file_size)
      throw CheckpointError("array '" + name + "': payload truncated");
    data.seekg(static_cast<std::streamoff>(offset));
    data.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!data) throw IoError("failed reading array '" + name + "'");
    out.emplace_back(name, std::move(t));
  }
  if (!man.eof()) throw CheckpointError(manifest.string() + ": malformed line after '" + name + "'");
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());
  write_arrays(ckpt.weights, directory / "weights.bin", directory / "weights.manifest");
  write_arrays(ckpt.optimizer, directory / "optimizer.bin", directory / "optimizer.manifest");
  save_config(ckpt.config, directory / "config.ini");
  nlohmann::json state{{"kind", ckpt.kind},
                       {"format_version", kCheckpointFormatVersion},
                       {"epoch", ckpt.epoch},
                       {"step", ckpt.step},
                       {"history", ckpt.history}};
  std::ofstream os(directory / "state.json");
  if (!os) throw IoError("cannot write " + (directory / "state.json").string());
  os << state.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& directory, const std::string& expected_kind) {
  std::ifstream is(directory / "state.json");
  if (!is) throw IoError("missing " + (directory / "state.json").string());
  nlohmann::json state;
  try {
    is >> state;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("state.json: " + std::string(e.what()));
  }
  Checkpoint ckpt;
  try {
    const int version = state.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw CheckpointError("checkpoint format version " + std::to_string(version) +
                            ", expected " + std::to_string(kCheckpointFormatVersion));
    ckpt.kind = state.at("kind").get<std::string>();
    ckpt.epoch = state.at("epoch").get<int>();
    ckpt.step = state.at("step").get<long long>();
    ckpt.history = state.at("history");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("state.json: " + std::string(e.what()));
  }
  if (!expected_kind.empty() && ckpt.kind != expected_kind)
    throw CheckpointError("checkpoint holds a '" + ckpt.kind + "' model, expected '" +
                          expected_kind + "'");
  ckpt.config = load_config(directory / "config.ini");
  ckpt.weights = read_arrays(directory / "weights.bin", directory / "weights.manifest");
  ckpt.optimizer = read_arrays(directory / "optimizer.bin", directory / "optimizer.manifest");
  return ckpt;
}

NamedTensors export_weights(const ParameterSet& params) {
  NamedTensors out;
  for (const auto& [name, p] : params.items()) out.emplace_back(name, p.value());
  return out;
}

void import_weights(ParameterSet& params, const NamedTensors& weights) {
  const auto& items = params.items();
  if (weights.size() != items.size())
    throw CheckpointError("checkpoint has " + std::to_string(weights.size()) +
                          " arrays, model expects " + std::to_string(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& [name, t] = weights[i];
    if (name != items[i].first)
      throw CheckpointError("array " + std::to_string(i) + " is '" + name + "', model expects '" +
                            items[i].first + "'");
    if (t.shape() != items[i].second.shape())
      throw CheckpointError("array '" + name + "' has shape " + to_string(t.shape()) +
                            ", model expects " + to_string(items[i].second.shape()));
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    Var handle = items[i].second;
    handle.mutable_value() = weights[i].second;
  }
}

Detector load_detector(const std::filesystem::path& directory) {
  const Checkpoint ckpt = load_checkpoint(directory, "ird");
  Detector det(ckpt.config.detector, 0);
  import_weights(det.params(), ckpt.weights);
  return det;
}

DepthNet load_depthnet(const std::filesystem::path& directory) {
  const Checkpoint ckpt = load_checkpoint(directory, "idpnet");
  DepthNet net(ckpt.config.depthnet, 0);
  import_weights(net.params(), ckpt.weights);
  return net;
}

}  // namespace tpnet
