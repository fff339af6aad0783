#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "boss/checkpoint.hpp"
#include "boss/dataset.hpp"
#include "boss/error.hpp"

namespace boss::data {

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarPixels = 3072;

struct CifarRecord {
  std::uint8_t label = 0;
  std::vector<std::uint8_t> pixels;   // R plane, G plane, B plane; each 32x32 row-major

  friend bool operator==(const CifarRecord&, const CifarRecord&) = default;
};

/// Parses a CIFAR-10 binary batch: 1 label byte + 3072 pixel bytes per record.
inline std::vector<CifarRecord> parse_cifar10(const std::string& bytes, const std::string& origin = "<memory>") {
  if (bytes.size() % kCifarRecordBytes != 0)
    throw FormatError(origin + ": length " + std::to_string(bytes.size()) + " is not a multiple of 3073");
  std::vector<CifarRecord> records(bytes.size() / kCifarRecordBytes);
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data()) + r * kCifarRecordBytes;
    if (p[0] > 9)
      throw DataError(origin + ": record " + std::to_string(r) + " has label byte " + std::to_string(p[0]));
    records[r].label = p[0];
    records[r].pixels.assign(p + 1, p + kCifarRecordBytes);
  }
  return records;
}

inline std::string encode_cifar10(const std::vector<CifarRecord>& records) {
  std::string out;
  out.reserve(records.size() * kCifarRecordBytes);
  for (const auto& r : records) {
    if (r.pixels.size() != kCifarPixels) throw FormatError("CIFAR record must carry 3072 pixel bytes");
    out.push_back(static_cast<char>(r.label));
    out.append(reinterpret_cast<const char*>(r.pixels.data()), r.pixels.size());
  }
  return out;
}

struct CifarIngest {
  Dataset dataset;
  std::vector<std::string> warnings;
};

/// Loads CIFAR-10 binary batches. Samples from `test_paths` form the test
/// split; without them a stratified 80/20 split is drawn with `seed`. An empty
/// `id` names the dataset "cifar10-<count>".
inline CifarIngest ingest_cifar10(const std::vector<std::string>& train_paths,
                                  const std::vector<std::string>& test_paths = {}, std::uint64_t seed = 0,
                                  std::string id = {}) {
  std::vector<CifarRecord> records;
  std::vector<std::string> warnings;
  std::size_t train_count = 0;
  auto load = [&](const std::string& path) {
    auto batch = parse_cifar10(io::read_file(path), path);
    if (batch.empty()) warnings.push_back(path + ": empty file, no records");
    records.insert(records.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
  };
  for (const auto& p : train_paths) load(p);
  train_count = records.size();
  for (const auto& p : test_paths) load(p);

  Tensor<double> images(Shape{records.size(), 3, 32, 32});
  std::vector<int> labels(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    labels[i] = records[i].label;
    auto row = images.row(i);
    for (std::size_t k = 0; k < kCifarPixels; ++k) row[k] = records[i].pixels[k] / 255.0;
  }
  if (id.empty()) id = "cifar10-" + std::to_string(records.size());
  Dataset ds(std::move(id), std::move(images), std::move(labels), 10);
  if (test_paths.empty()) {
    ds.split_stratified(0.2, seed);
  } else {
    std::vector<std::size_t> train(train_count), test(records.size() - train_count);
    for (std::size_t i = 0; i < train.size(); ++i) train[i] = i;
    for (std::size_t i = 0; i < test.size(); ++i) test[i] = train_count + i;
    ds.set_split(std::move(train), std::move(test));
  }
  return {std::move(ds), std::move(warnings)};
}

}  // namespace boss::data
