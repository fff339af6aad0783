#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "boss/classifier.hpp"
#include "boss/error.hpp"

namespace boss::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline void put_u16(std::string& out, std::uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); }
inline void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
inline void put_u64(std::string& out, std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }
inline void put_f64(std::string& out, double v) { out.append(reinterpret_cast<const char*>(&v), 8); }

/// Bounds-checked little-endian reader over an in-memory byte buffer.
class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  bool done() const noexcept { return pos_ == bytes_.size(); }

  template <typename V>
  V get() {
    if (bytes_.size() - pos_ < sizeof(V)) throw FormatError("unexpected end of file");
    V v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }

  std::string get_bytes(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError("unexpected end of file");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("io", "short write to " + path);
}

}  // namespace boss::io

namespace boss::nn {

inline constexpr char kCheckpointMagic[8] = {'B', 'O', 'S', 'S', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;

  friend bool operator==(const CheckpointRecord&, const CheckpointRecord&) = default;
};

/// Layout: "BOSSCKPT", u32 version, then until EOF per parameter:
/// u32 name length, UTF-8 name, u32 rank, rank x u64 dims, f64 payload.
inline std::string encode_checkpoint(const std::vector<CheckpointRecord>& records) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  io::put_u32(out, kCheckpointVersion);
  for (const auto& r : records) {
    if (shape_size(r.shape) != r.values.size()) throw DimensionError("checkpoint record " + r.name + " size mismatch");
    io::put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    io::put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) io::put_u64(out, d);
    for (double v : r.values) io::put_f64(out, v);
  }
  return out;
}

inline std::vector<CheckpointRecord> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw FormatError("not a BOSSCKPT file");
  io::ByteReader in(bytes);
  in.get_bytes(8);
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  std::vector<CheckpointRecord> records;
  while (!in.done()) {
    CheckpointRecord r;
    r.name = in.get_bytes(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw FormatError("implausible tensor rank in checkpoint");
    for (std::uint32_t i = 0; i < rank; ++i) r.shape.push_back(in.get<std::uint64_t>());
    const std::size_t n = shape_size(r.shape);
    if (n > (std::size_t{1} << 32)) throw FormatError("implausible tensor size in checkpoint");
    r.values.resize(n);
    for (auto& v : r.values) v = in.get<double>();
    records.push_back(std::move(r));
  }
  return records;
}

template <typename T>
std::vector<CheckpointRecord> snapshot(const Classifier<T>& model) {
  std::vector<CheckpointRecord> records;
  for (const auto& p : model.parameters())
    records.push_back({p.name, p.value.shape(), std::vector<double>(p.value.storage().begin(), p.value.storage().end())});
  return records;
}

template <typename T>
void restore(Classifier<T>& model, const std::vector<CheckpointRecord>& records) {
  auto& params = model.parameters();
  if (records.size() != params.size()) throw FormatError("checkpoint parameter count does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (records[i].name != params[i].name || records[i].shape != params[i].value.shape())
      throw FormatError("checkpoint record " + records[i].name + " does not match model parameter " + params[i].name);
    auto& dst = params[i].value.storage();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(records[i].values[j]);
  }
}

template <typename T>
void save_checkpoint(const std::string& path, const Classifier<T>& model) {
  io::write_file(path, encode_checkpoint(snapshot(model)));
}

template <typename T>
void load_checkpoint(const std::string& path, Classifier<T>& model) {
  restore(model, decode_checkpoint(io::read_file(path)));
}

}  // namespace boss::nn
