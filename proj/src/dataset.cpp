#include "mlc/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mlc/checksum.hpp"

namespace mlc {

namespace fs = std::filesystem;

double MultilabelDataset::avg_labels_per_image() const {
  if (size() == 0) return 0.0;
  const double total = std::accumulate(labels.begin(), labels.end(), 0.0);
  return total / static_cast<double>(size());
}

std::vector<std::size_t> MultilabelDataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

Tensor MultilabelDataset::batch_features(const std::vector<std::size_t>& rows) const {
  const std::size_t n = image_numel();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (auto r : rows) {
    if (r >= size()) throw std::out_of_range("dataset row " + std::to_string(r));
    out.insert(out.end(), features.begin() + static_cast<std::ptrdiff_t>(r * n),
               features.begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
  }
  return Tensor::from({rows.size(), channels, height, width}, std::move(out));
}

Tensor MultilabelDataset::batch_labels(const std::vector<std::size_t>& rows) const {
  const std::size_t k = classes();
  std::vector<double> out;
  out.reserve(rows.size() * k);
  for (auto r : rows) {
    if (r >= size()) throw std::out_of_range("dataset row " + std::to_string(r));
    for (std::size_t j = 0; j < k; ++j) out.push_back(labels[r * k + j]);
  }
  return Tensor::from({rows.size(), k}, std::move(out));
}

std::vector<std::vector<std::size_t>> MultilabelDataset::label_sets(const std::vector<std::size_t>& rows) const {
  std::vector<std::vector<std::size_t>> out;
  for (auto r : rows) {
    std::vector<std::size_t> s;
    for (std::size_t j = 0; j < classes(); ++j)
      if (labels[r * classes() + j]) s.push_back(j);
    out.push_back(std::move(s));
  }
  return out;
}

void MultilabelDataset::validate() const {
  if (channels == 0 || height == 0 || width == 0 || class_count == 0) {
    throw std::runtime_error("dataset: zero extent");
  }
  if (features.size() != size() * image_numel()) throw std::runtime_error("dataset: feature count does not match");
  if (labels.size() != size() * class_count) throw std::runtime_error("dataset: label count does not match");
  if (!class_names.empty() && class_names.size() != class_count) throw std::runtime_error("dataset: class name count");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) throw std::runtime_error("dataset: label outside {0,1} in row " + std::to_string(i / class_count + 1));
  }
}

void save_dataset(const fs::path& dir, const MultilabelDataset& ds) {
  static_assert(std::endian::native == std::endian::little, "features are stored little-endian");
  ds.validate();
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "features.bin", std::ios::binary);
    out.write(reinterpret_cast<const char*>(ds.features.data()),
              static_cast<std::streamsize>(ds.features.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write failed for " + (dir / "features.bin").string());
  }
  std::ostringstream csv;
  csv << "split";
  for (std::size_t j = 0; j < ds.classes(); ++j) csv << ',' << (ds.class_names.empty() ? "c" + std::to_string(j) : ds.class_names[j]);
  csv << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    csv << (ds.split[i] == Split::kTrain ? "train" : "val");
    for (std::size_t j = 0; j < ds.classes(); ++j) csv << ',' << int(ds.labels[i * ds.classes() + j]);
    csv << '\n';
  }
  const std::string labels_text = csv.str();
  {
    std::ofstream out(dir / "labels.csv");
    out << labels_text;
    if (!out) throw std::runtime_error("write failed for " + (dir / "labels.csv").string());
  }
  nlohmann::json m;
  m["format"] = "mlc-dataset-1";
  m["samples"] = ds.size();
  m["shape"] = {ds.channels, ds.height, ds.width};
  m["classes"] = ds.classes();
  m["dtype"] = "float64-le";
  m["named_classes"] = !ds.class_names.empty();
  m["class_names"] = ds.class_names;
  m["avg_labels_per_image"] = ds.avg_labels_per_image();
  m["checksums"] = {{"features.bin", fnv1a_hex(std::span<const double>(ds.features))},
                    {"labels.csv", fnv1a_hex(std::string_view(labels_text))}};
  std::ofstream out(dir / "manifest.json");
  out << m.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + (dir / "manifest.json").string());
}

namespace {

std::string read_file(const fs::path& p, bool binary) {
  std::ifstream in(p, binary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

MultilabelDataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw std::runtime_error("dataset manifest " + manifest_path.string() + " not found");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(manifest_path, false));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest: " + std::string(e.what()));
  }
  MultilabelDataset ds;
  std::size_t samples;
  try {
    if (m.at("dtype").get<std::string>() != "float64-le") throw std::runtime_error("manifest: unsupported dtype");
    auto shape = m.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) throw std::runtime_error("manifest: shape must be [C, H, W]");
    ds.channels = shape[0], ds.height = shape[1], ds.width = shape[2];
    ds.class_count = m.at("classes").get<std::size_t>();
    samples = m.at("samples").get<std::size_t>();
    if (m.value("named_classes", false)) ds.class_names = m.at("class_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest: " + std::string(e.what()));
  }

  const std::string blob = read_file(dir / "features.bin", true);
  if (blob.size() != samples * ds.image_numel() * sizeof(double)) {
    throw std::runtime_error("features.bin holds " + std::to_string(blob.size()) + " bytes, manifest implies " +
                             std::to_string(samples * ds.image_numel() * sizeof(double)));
  }
  ds.features.resize(samples * ds.image_numel());
  std::memcpy(ds.features.data(), blob.data(), blob.size());
  const auto& sums = m.at("checksums");
  if (sums.at("features.bin").get<std::string>() != fnv1a_hex(std::span<const double>(ds.features))) {
    throw std::runtime_error("features.bin checksum mismatch");
  }

  const std::string text = read_file(dir / "labels.csv", false);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("labels.csv: missing header");
  auto header = split_csv(line);
  if (header.empty() || header[0] != "split" || header.size() != ds.class_count + 1) {
    throw std::runtime_error("labels.csv: header must be split followed by " + std::to_string(ds.class_count) + " classes");
  }
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const std::string where = "labels.csv row " + std::to_string(row);
    auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                               std::to_string(cells.size()));
    }
    if (cells[0] == "train") ds.split.push_back(Split::kTrain);
    else if (cells[0] == "val") ds.split.push_back(Split::kVal);
    else throw std::runtime_error(where + ": unknown split '" + cells[0] + "'");
    for (std::size_t j = 1; j < cells.size(); ++j) {
      if (cells[j] != "0" && cells[j] != "1") {
        throw std::runtime_error(where + ": label '" + cells[j] + "' for class " + header[j] + " is not 0 or 1");
      }
      ds.labels.push_back(cells[j] == "1" ? 1 : 0);
    }
  }
  // Rows are validated first so that malformed content is reported by row.
  if (sums.at("labels.csv").get<std::string>() != fnv1a_hex(std::string_view(text))) {
    throw std::runtime_error("labels.csv checksum mismatch");
  }
  if (row != samples) {
    throw std::runtime_error("labels.csv has " + std::to_string(row) + " rows, manifest says " + std::to_string(samples));
  }
  ds.validate();
  return ds;
}

}  // namespace mlc
