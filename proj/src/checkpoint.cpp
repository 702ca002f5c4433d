#include <charconv>
#include <string>

#include "siadv/classifier.hpp"
#include "siadv/data.hpp"

namespace siadv {

namespace {

constexpr int kFormatVersion = 1;

// nlohmann's dump() prints the shortest round-trip form; layer data is
// written by hand so every float carries exactly 17 significant digits.
void append_float(std::string& out, double v) {
  char buf[40];
  const auto res =
      std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  out.append(buf, res.ptr);
}

void append_layer(std::string& out, const std::string& name, std::size_t rows,
                  std::size_t cols, const std::vector<double>& data) {
  out += "    {\"name\": " + nlohmann::json(name).dump() +
         ", \"rows\": " + std::to_string(rows) +
         ", \"cols\": " + std::to_string(cols) + ", \"data\": [";
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (k) out += ", ";
    append_float(out, data[k]);
  }
  out += "]}";
}

DenseLayer read_layer(const nlohmann::json& weight, const nlohmann::json& bias,
                      const std::string& name) {
  DenseLayer layer;
  layer.name = name;
  layer.in = weight.at("rows").get<std::size_t>();
  layer.out = weight.at("cols").get<std::size_t>();
  layer.weight = weight.at("data").get<std::vector<double>>();
  layer.bias = bias.at("data").get<std::vector<double>>();
  if (layer.weight.size() != layer.in * layer.out) {
    throw IntegrityError("checkpoint: layer " + name +
                         ".weight data length does not match rows x cols");
  }
  if (bias.at("rows").get<std::size_t>() != 1 ||
      bias.at("cols").get<std::size_t>() != layer.out ||
      layer.bias.size() != layer.out) {
    throw IntegrityError("checkpoint: layer " + name +
                         ".bias does not match the weight shape");
  }
  return layer;
}

}  // namespace

std::string serialize_params(const ClassifierParams& params) {
  std::string out = "{\n";
  out += "  \"format_version\": " + std::to_string(kFormatVersion) + ",\n";
  out += "  \"arch\": \"" + std::string(arch_name(params.arch)) + "\",\n";
  out += "  \"class_count\": " + std::to_string(params.class_count) + ",\n";
  out += "  \"layers\": [\n";
  bool first = true;
  auto emit = [&](const DenseLayer& layer) {
    if (!first) out += ",\n";
    first = false;
    append_layer(out, layer.name + ".weight", layer.in, layer.out,
                 layer.weight);
    out += ",\n";
    append_layer(out, layer.name + ".bias", 1, layer.out, layer.bias);
  };
  for (const auto& l : params.point_layers) emit(l);
  for (const auto& l : params.head_layers) emit(l);
  out += "\n  ],\n";
  out += "  \"seed\": " + std::to_string(params.seed) + ",\n";
  out += "  \"train_meta\": " + params.train_meta.dump() + "\n}\n";
  return out;
}

ClassifierParams deserialize_params(std::string_view text,
                                    std::optional<Arch> expected) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint is not valid JSON: ") +
                         e.what());
  }
  ClassifierParams params;
  try {
    if (doc.at("format_version").get<int>() != kFormatVersion) {
      throw IntegrityError("checkpoint: unsupported format_version");
    }
    try {
      params.arch = parse_arch(doc.at("arch").get<std::string>());
    } catch (const ParameterError& e) {
      throw IntegrityError(std::string("checkpoint: ") + e.what());
    }
    params.class_count = doc.at("class_count").get<std::size_t>();
    params.seed = doc.at("seed").get<std::uint64_t>();
    params.train_meta = doc.at("train_meta");
    const auto& layers = doc.at("layers");
    if (layers.size() % 2 != 0) {
      throw IntegrityError("checkpoint: weight/bias entries are unpaired");
    }
    for (std::size_t k = 0; k < layers.size(); k += 2) {
      std::string wname = layers[k].at("name").get<std::string>();
      const std::string bname = layers[k + 1].at("name").get<std::string>();
      const auto dot = wname.rfind(".weight");
      if (dot == std::string::npos || bname != wname.substr(0, dot) + ".bias") {
        throw IntegrityError("checkpoint: unexpected layer entry " + wname);
      }
      const std::string name = wname.substr(0, dot);
      DenseLayer layer = read_layer(layers[k], layers[k + 1], name);
      if (name.rfind("point", 0) == 0) {
        params.point_layers.push_back(std::move(layer));
      } else if (name.rfind("head", 0) == 0) {
        params.head_layers.push_back(std::move(layer));
      } else {
        throw IntegrityError("checkpoint: unknown layer " + name);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint: ") + e.what());
  }
  if (expected && *expected != params.arch) {
    throw ShapeError("checkpoint holds " + std::string(arch_name(params.arch)) +
                     " but " + std::string(arch_name(*expected)) +
                     " was expected");
  }
  validate_params(params);
  return params;
}

void save_params(const ClassifierParams& params,
                 const std::filesystem::path& path) {
  write_file_atomic(path, serialize_params(params));
}

ClassifierParams load_params(const std::filesystem::path& path,
                             std::optional<Arch> expected) {
  return deserialize_params(read_file(path), expected);
}

}  // namespace siadv
