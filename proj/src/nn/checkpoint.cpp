#include "gridvla/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "gridvla/common/error.hpp"

namespace gridvla::nn {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void append(std::vector<double>& blob, const Tensor& t) {
  blob.insert(blob.end(), t.data().begin(), t.data().end());
}

Tensor read_tensor(const std::vector<double>& blob, const nlohmann::json& shape_json, std::size_t offset,
                   const std::string& what) {
  Shape shape = shape_json.get<Shape>();
  const std::size_t n = shape_size(shape);
  if (offset + n > blob.size()) throw IoError("checkpoint data truncated at " + what);
  return Tensor(std::move(shape), std::vector<double>(blob.begin() + static_cast<long>(offset),
                                                      blob.begin() + static_cast<long>(offset + n)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const nlohmann::json& metadata) {
  nlohmann::json header;
  header["format"] = kCheckpointFormat;
  header["metadata"] = metadata;
  header["entries"] = nlohmann::json::array();
  std::vector<double> blob;
  for (const auto& [name, e] : params.entries()) {
    nlohmann::json j;
    j["name"] = name;
    j["shape"] = e.value.shape();
    j["offset"] = blob.size();
    j["trainable"] = e.trainable;
    append(blob, e.value);
    if (e.adapter) {
      nlohmann::json a;
      a["rank"] = e.adapter->rank;
      a["scale"] = e.adapter->scale;
      a["down_shape"] = e.adapter->down.shape();
      a["down_offset"] = blob.size();
      append(blob, e.adapter->down);
      a["up_shape"] = e.adapter->up.shape();
      a["up_offset"] = blob.size();
      append(blob, e.adapter->up);
      j["adapter"] = a;
    } else {
      j["adapter"] = nullptr;
    }
    header["entries"].push_back(j);
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  const std::uint64_t len = text.size();
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(double)));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw IoError("not a gridvla checkpoint: " + path.string());
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("checkpoint header truncated: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  if (header.value("format", -1) != kCheckpointFormat) {
    throw IoError("unsupported checkpoint format in " + path.string());
  }
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() % sizeof(double) != 0) throw IoError("checkpoint data misaligned: " + path.string());
  std::vector<double> blob(raw.size() / sizeof(double));
  std::memcpy(blob.data(), raw.data(), raw.size());

  Checkpoint ck;
  ck.metadata = header["metadata"];
  for (const auto& j : header["entries"]) {
    const auto name = j["name"].get<std::string>();
    auto& e = ck.params.add(name, read_tensor(blob, j["shape"], j["offset"].get<std::size_t>(), name),
                            j["trainable"].get<bool>());
    if (!j["adapter"].is_null()) {
      const auto& a = j["adapter"];
      LowRankAdapter adapter;
      adapter.rank = a["rank"].get<std::size_t>();
      adapter.scale = a["scale"].get<double>();
      adapter.down = read_tensor(blob, a["down_shape"], a["down_offset"].get<std::size_t>(), name);
      adapter.up = read_tensor(blob, a["up_shape"], a["up_offset"].get<std::size_t>(), name);
      e.adapter = std::move(adapter);
    }
  }
  return ck;
}

}  // namespace gridvla::nn
