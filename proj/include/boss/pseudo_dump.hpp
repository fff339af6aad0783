#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "boss/checkpoint.hpp"
#include "boss/classifier.hpp"
#include "boss/dataset.hpp"
#include "boss/error.hpp"
#include "boss/ssl_loss.hpp"

namespace boss::trainer {

struct DumpRecord {
  std::size_t index = 0;   // dataset position
  int label = 0;           // pseudo-label
  double confidence = 0;
  int true_label = 0;      // audit only

  friend bool operator==(const DumpRecord&, const DumpRecord&) = default;
};

/// Confidence descending, then dataset index ascending.
inline bool dump_order(const DumpRecord& a, const DumpRecord& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  return a.index < b.index;
}

inline void sort_dump(std::vector<DumpRecord>& records) { std::sort(records.begin(), records.end(), dump_order); }

/// Pseudo-labels for every pool sample from un-jittered images (the weak view
/// with no flip and no shift), sorted by `dump_order`.
template <typename T>
std::vector<DumpRecord> dump_pseudo_labels(const nn::Classifier<T>& model, const data::Dataset& dataset,
                                           const std::vector<std::size_t>& pool) {
  std::vector<DumpRecord> out;
  out.reserve(pool.size());
  constexpr std::size_t chunk = 256;
  for (std::size_t start = 0; start < pool.size(); start += chunk) {
    std::span<const std::size_t> part(pool.data() + start, std::min(chunk, pool.size() - start));
    const auto pseudo = loss::pseudo_label(model.infer(dataset.gather(part).template cast<T>()));
    for (std::size_t b = 0; b < part.size(); ++b)
      out.push_back({part[b], pseudo.labels[b], pseudo.confidence[b],
                     dataset.true_label(part[b], data::LabelAccess::audit)});
  }
  sort_dump(out);
  return out;
}

/// On-disk layout: three parallel files, each a u64 record count followed by
/// the records (u16 labels, f64 confidences, u16 true labels), plus a u64
/// index file naming the dataset position of each record.
struct DumpFiles {
  std::filesystem::path dir;

  std::filesystem::path labels() const { return dir / "pseudo_labels.u16"; }
  std::filesystem::path confidences() const { return dir / "confidences.f64"; }
  std::filesystem::path true_labels() const { return dir / "true_labels.u16"; }
  std::filesystem::path indices() const { return dir / "indices.u64"; }

  bool exist() const {
    return std::filesystem::exists(labels()) && std::filesystem::exists(confidences()) &&
           std::filesystem::exists(true_labels()) && std::filesystem::exists(indices());
  }
};

struct EncodedDump {
  std::string labels, confidences, true_labels, indices;
};

inline EncodedDump encode_dump(const std::vector<DumpRecord>& records) {
  EncodedDump e;
  const auto n = static_cast<std::uint64_t>(records.size());
  for (auto* s : {&e.labels, &e.confidences, &e.true_labels, &e.indices}) io::put_u64(*s, n);
  for (const auto& r : records) {
    io::put_u16(e.labels, static_cast<std::uint16_t>(r.label));
    io::put_f64(e.confidences, r.confidence);
    io::put_u16(e.true_labels, static_cast<std::uint16_t>(r.true_label));
    io::put_u64(e.indices, r.index);
  }
  return e;
}

inline std::vector<DumpRecord> decode_dump(const EncodedDump& e) {
  io::ByteReader labels(e.labels), conf(e.confidences), truth(e.true_labels), idx(e.indices);
  const auto n = labels.get<std::uint64_t>();
  if (conf.get<std::uint64_t>() != n || truth.get<std::uint64_t>() != n || idx.get<std::uint64_t>() != n)
    throw FormatError("pseudo-label dump files disagree on record count");
  std::vector<DumpRecord> out(n);
  for (auto& r : out) {
    r.label = labels.get<std::uint16_t>();
    r.confidence = conf.get<double>();
    r.true_label = truth.get<std::uint16_t>();
    r.index = idx.get<std::uint64_t>();
  }
  if (!labels.done() || !conf.done() || !truth.done() || !idx.done())
    throw FormatError("trailing bytes in pseudo-label dump");
  return out;
}

inline void write_dump(const DumpFiles& files, const std::vector<DumpRecord>& records) {
  std::filesystem::create_directories(files.dir);
  const auto e = encode_dump(records);
  io::write_file(files.labels().string(), e.labels);
  io::write_file(files.confidences().string(), e.confidences);
  io::write_file(files.true_labels().string(), e.true_labels);
  io::write_file(files.indices().string(), e.indices);
}

inline std::vector<DumpRecord> read_dump(const DumpFiles& files) {
  if (!files.exist()) throw SequencingError("pseudo-label dump not found in " + files.dir.string());
  return decode_dump({io::read_file(files.labels().string()), io::read_file(files.confidences().string()),
                      io::read_file(files.true_labels().string()), io::read_file(files.indices().string())});
}

}  // namespace boss::trainer
