#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "siadv/data.hpp"
#include "siadv/error.hpp"

namespace siadv {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

void append_double(std::string& out, double v, int digits) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v,
                                 std::chars_format::general, digits);
  out.append(buf, res.ptr);
}

std::string sample_filename(std::size_t index, int label) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%06zu_%s.xyz", index,
                std::string(class_names()[label]).c_str());
  return buf;
}

}  // namespace

PointCloud parse_xyz(std::string_view text) {
  PointCloud cloud;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{}
                                        : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    Vec3 p;
    const char* cur = line.data();
    const char* end = line.data() + line.size();
    for (int a = 0; a < 3; ++a) {
      if (a > 0) {
        if (cur == end || *cur != ' ') {
          throw ParseError("xyz line " + std::to_string(line_no) +
                           ": expected three space-separated numbers");
        }
        ++cur;
      }
      const auto res = std::from_chars(cur, end, p[a]);
      if (res.ec != std::errc() || !std::isfinite(p[a])) {
        throw ParseError("xyz line " + std::to_string(line_no) +
                         ": malformed number");
      }
      cur = res.ptr;
    }
    if (cur != end) {
      throw ParseError("xyz line " + std::to_string(line_no) +
                       ": trailing characters");
    }
    cloud.points.push_back(p);
  }
  if (cloud.empty()) throw ParseError("xyz: no points");
  return cloud;
}

std::string format_xyz(const PointCloud& cloud) {
  std::string out;
  out.reserve(cloud.size() * 48);
  for (const Vec3& p : cloud.points) {
    for (int a = 0; a < 3; ++a) {
      if (a > 0) out.push_back(' ');
      append_double(out, p[a], 9);
    }
    out.push_back('\n');
  }
  return out;
}

PointCloud read_xyz(const fs::path& path) { return parse_xyz(read_file(path)); }

void write_xyz(const PointCloud& cloud, const fs::path& path) {
  write_file_atomic(path, format_xyz(cloud));
}

std::array<std::uint8_t, 3> quantile_color(double quantile) {
  const double q = std::clamp(quantile, 0.0, 1.0);
  return {static_cast<std::uint8_t>(std::lround(255.0 * q)), 0,
          static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - q)))};
}

std::string format_ply_colored(const PointCloud& cloud,
                               std::span<const double> scalars) {
  if (scalars.size() != cloud.size()) {
    throw ParameterError("write_ply_colored: one scalar per point required");
  }
  const std::size_t n = cloud.size();
  std::vector<double> sorted(scalars.begin(), scalars.end());
  std::sort(sorted.begin(), sorted.end());
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;

  std::string out;
  out += "ply\nformat ascii 1.0\nelement vertex " + std::to_string(n) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out += "end_header\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(),
                                        scalars[i]) - sorted.begin();
    const auto rgb = quantile_color(static_cast<double>(below) / denom);
    for (int a = 0; a < 3; ++a) {
      append_double(out, cloud[i][a], 9);
      out.push_back(' ');
    }
    out += std::to_string(rgb[0]) + ' ' + std::to_string(rgb[1]) + ' ' +
           std::to_string(rgb[2]) + '\n';
  }
  return out;
}

void write_ply_colored(const PointCloud& cloud,
                       std::span<const double> scalars, const fs::path& path) {
  write_file_atomic(path, format_ply_colored(cloud, scalars));
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename into " + path.string() + ": " +
                        ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void save_dataset(const fs::path& dir, const DatasetOnDisk& data) {
  nlohmann::json manifest;
  manifest["seed"] = data.seed;
  manifest["classes"] = nlohmann::json::array();
  for (auto name : class_names()) manifest["classes"].push_back(name);
  manifest["n_train"] = data.train.size();
  manifest["n_test"] = data.test.size();
  manifest["n_points"] = data.n_points;
  manifest["samples"] = nlohmann::json::array();

  auto write_split = [&](const std::vector<PointCloud>& clouds,
                         std::string_view split) {
    const fs::path sub = dir / split;
    fs::create_directories(sub);
    for (std::size_t i = 0; i < clouds.size(); ++i) {
      const int label = clouds[i].label.value_or(-1);
      if (label < 0 || label >= static_cast<int>(kClassCount)) {
        throw ParameterError("save_dataset: sample without a valid label");
      }
      const std::string name = sample_filename(i, label);
      write_xyz(clouds[i], sub / name);
      manifest["samples"].push_back({{"path", std::string(split) + "/" + name},
                                     {"label", label},
                                     {"split", split}});
    }
  };
  fs::create_directories(dir);
  write_split(data.train, "train");
  write_split(data.test, "test");
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

DatasetOnDisk load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::is_regular_file(manifest_path)) {
    throw IoError("no dataset manifest at " + manifest_path.string());
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("manifest: " + std::string(e.what()));
  }
  DatasetOnDisk out;
  try {
    out.seed = manifest.at("seed").get<std::uint64_t>();
    out.n_points = manifest.at("n_points").get<std::size_t>();
    for (const auto& entry : manifest.at("samples")) {
      PointCloud cloud = read_xyz(dir / entry.at("path").get<std::string>());
      cloud.label = entry.at("label").get<int>();
      const std::string split = entry.at("split").get<std::string>();
      (split == "train" ? out.train : out.test).push_back(std::move(cloud));
    }
    if (out.train.size() != manifest.at("n_train").get<std::size_t>() ||
        out.test.size() != manifest.at("n_test").get<std::size_t>()) {
      throw IntegrityError("manifest: sample counts do not match n_train/n_test");
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("manifest: " + std::string(e.what()));
  }
  return out;
}

}  // namespace siadv
