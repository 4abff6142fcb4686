#include "mlc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "mlc/checksum.hpp"

namespace mlc {

namespace {
constexpr char kMagic[8] = {'M', 'L', 'C', 'K', 'P', 'T', '0', '1'};
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& [n, _] : tensors)
    if (n == name) return true;
  return false;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw std::runtime_error("checkpoint has no tensor '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");
  std::vector<double> blob;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"offset", blob.size()}, {"count", t.numel()}});
    blob.insert(blob.end(), t.data().begin(), t.data().end());
  }
  nlohmann::json header{{"config", ckpt.config}, {"tensors", entries},
                        {"checksum", fnv1a_hex(std::span<const double>(blob))}};
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string() + ": ";
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error(where + "not a checkpoint file");
  }
  std::uint64_t len;
  std::memcpy(&len, bytes.data() + 8, sizeof len);
  if (len > bytes.size() - 16) throw std::runtime_error(where + "truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(where + e.what());
  }
  const std::size_t blob_bytes = bytes.size() - 16 - len;
  if (blob_bytes % sizeof(double) != 0) throw std::runtime_error(where + "blob is not a whole number of doubles");
  std::vector<double> blob(blob_bytes / sizeof(double));
  std::memcpy(blob.data(), bytes.data() + 16 + len, blob_bytes);
  if (header.at("checksum").get<std::string>() != fnv1a_hex(std::span<const double>(blob))) {
    throw std::runtime_error(where + "checksum mismatch");
  }
  Checkpoint ckpt;
  ckpt.config = header.at("config");
  for (const auto& e : header.at("tensors")) {
    auto shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::size_t>(), count = e.at("count").get<std::size_t>();
    if (count != numel(shape) || offset + count > blob.size()) {
      throw std::runtime_error(where + "bad extent for '" + e.at("name").get<std::string>() + "'");
    }
    std::vector<double> values(blob.begin() + static_cast<std::ptrdiff_t>(offset),
                               blob.begin() + static_cast<std::ptrdiff_t>(offset + count));
    ckpt.tensors.emplace_back(e.at("name").get<std::string>(), Tensor::from(std::move(shape), std::move(values)));
  }
  return ckpt;
}

}  // namespace mlc
