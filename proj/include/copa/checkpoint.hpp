#pragma once

// Checkpoint container: a magic tag, a JSON metadata blob, and a list of
// named little-endian float64 arrays. One format serves encoder weights,
// optimizer state, and the negative queue.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "copa/errors.hpp"
#include "copa/nn/tensor.hpp"

namespace copa {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'C', 'O', 'P', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ArrayRecord {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (const auto d : shape) n *= d;
    return n;
  }
};

class Checkpoint {
 public:
  nlohmann::json metadata = nlohmann::json::object();

  void add_array(std::string name, std::vector<std::int64_t> shape, std::vector<double> data) {
    if (has_array(name)) throw UsageError("checkpoint: duplicate array name " + name);
    ArrayRecord rec{std::move(name), std::move(shape), std::move(data)};
    std::int64_t n = rec.numel();
    if (n < 0 || static_cast<std::size_t>(n) != rec.data.size())
      throw ShapeError("checkpoint: array " + rec.name + " shape does not match data length");
    arrays_.push_back(std::move(rec));
  }

  bool has_array(const std::string& name) const {
    for (const auto& a : arrays_)
      if (a.name == name) return true;
    return false;
  }

  const ArrayRecord& array(const std::string& name) const {
    for (const auto& a : arrays_)
      if (a.name == name) return a;
    throw UsageError("checkpoint: no array named " + name);
  }

  const std::vector<ArrayRecord>& arrays() const { return arrays_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_u32(out, kCheckpointVersion);
    const std::string meta = metadata.dump();
    write_u64(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    write_u32(out, static_cast<std::uint32_t>(arrays_.size()));
    for (const auto& a : arrays_) {
      write_u32(out, static_cast<std::uint32_t>(a.name.size()));
      out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
      write_u32(out, static_cast<std::uint32_t>(a.shape.size()));
      for (const auto d : a.shape) write_i64(out, d);
      out.write(reinterpret_cast<const char*>(a.data.data()),
                static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed for " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
      throw FormatError(path + ": not a checkpoint file (bad magic)");
    const std::uint32_t version = read_u32(in, path);
    if (version != kCheckpointVersion)
      throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t meta_len = read_u64(in, path);
    std::string meta(meta_len, '\0');
    if (!in.read(meta.data(), static_cast<std::streamsize>(meta_len)))
      throw FormatError(path + ": truncated metadata");
    Checkpoint ckpt;
    try {
      ckpt.metadata = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path + ": metadata is not valid JSON: " + e.what());
    }
    const std::uint32_t count = read_u32(in, path);
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint32_t name_len = read_u32(in, path);
      std::string name(name_len, '\0');
      if (!in.read(name.data(), name_len)) throw FormatError(path + ": truncated array name");
      const std::uint32_t ndim = read_u32(in, path);
      std::vector<std::int64_t> shape(ndim);
      for (auto& d : shape) d = read_i64(in, path);
      std::int64_t numel = 1;
      for (const auto d : shape) {
        if (d < 0) throw FormatError(path + ": negative dimension in array " + name);
        numel *= d;
      }
      std::vector<double> data(static_cast<std::size_t>(numel));
      if (!in.read(reinterpret_cast<char*>(data.data()),
                   static_cast<std::streamsize>(data.size() * sizeof(double))))
        throw FormatError(path + ": truncated data for array " + name);
      ckpt.add_array(std::move(name), std::move(shape), std::move(data));
    }
    return ckpt;
  }

 private:
  std::vector<ArrayRecord> arrays_;

  static void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_i64(std::ostream& out, std::int64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static std::uint32_t read_u32(std::istream& in, const std::string& path) {
    std::uint32_t v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) throw FormatError(path + ": truncated file");
    return v;
  }
  static std::uint64_t read_u64(std::istream& in, const std::string& path) {
    std::uint64_t v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) throw FormatError(path + ": truncated file");
    return v;
  }
  static std::int64_t read_i64(std::istream& in, const std::string& path) {
    std::int64_t v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) throw FormatError(path + ": truncated file");
    return v;
  }
};

// Store or restore a named parameter set (anything exposing param_refs).
template <class T>
void checkpoint_add_params(Checkpoint& ckpt,
                           const std::vector<std::pair<std::string, nn::Tensor<T>*>>& refs) {
  for (const auto& [name, tensor] : refs) {
    std::vector<std::int64_t> shape(tensor->shape.begin(), tensor->shape.end());
    std::vector<double> data(tensor->data.begin(), tensor->data.end());
    ckpt.add_array(name, std::move(shape), std::move(data));
  }
}

template <class T>
void checkpoint_read_params(const Checkpoint& ckpt,
                            const std::vector<std::pair<std::string, nn::Tensor<T>*>>& refs) {
  for (const auto& [name, tensor] : refs) {
    const ArrayRecord& rec = ckpt.array(name);
    std::vector<std::int64_t> want(tensor->shape.begin(), tensor->shape.end());
    if (rec.shape != want)
      throw ShapeError("checkpoint: array " + name + " shape mismatch");
    for (std::size_t i = 0; i < rec.data.size(); ++i)
      tensor->data[i] = static_cast<T>(rec.data[i]);
  }
}

}  // namespace copa
