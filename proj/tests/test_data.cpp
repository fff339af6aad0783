#include <gtest/gtest.h>

#include <filesystem>
#include <map>

#include "boss/checkpoint.hpp"
#include "boss/cifar10.hpp"
#include "boss/prototypes.hpp"
#include "boss/synthetic.hpp"

namespace data = boss::data;
namespace fs = std::filesystem;

namespace {

data::Dataset small_synthetic(std::size_t classes = 4, std::size_t per_class = 20, double difficulty = 0.3) {
  data::SyntheticSpec spec;
  spec.classes = classes;
  spec.samples_per_class = per_class;
  spec.image_size = 8;
  spec.difficulty = difficulty;
  spec.seed = 3;
  return data::generate_synthetic(spec);
}

// First training-pool index of each class, read through the prototype-selection channel.
std::vector<std::vector<std::size_t>> first_per_class(const data::Dataset& ds, std::size_t skip = 0) {
  std::vector<std::vector<std::size_t>> out(ds.classes());
  std::vector<std::size_t> seen(ds.classes(), 0);
  for (auto i : ds.train_indices()) {
    const int y = ds.true_label(i, data::LabelAccess::prototype_selection);
    if (out[y].empty() && seen[y]++ >= skip) out[y].push_back(i);
  }
  return out;
}

fs::path temp_file(const std::string& name, const std::string& bytes) {
  const auto p = fs::temp_directory_path() / name;
  boss::io::write_file(p.string(), bytes);
  return p;
}

}  // namespace

TEST(Synthetic, BalancedByConstruction) {
  data::SyntheticSpec spec;
  spec.classes = 4;
  spec.samples_per_class = 500;
  spec.image_size = 8;
  const auto ds = data::generate_synthetic(spec);
  EXPECT_EQ(ds.size(), 2000u);
  std::map<int, int> hist;
  for (std::size_t i = 0; i < ds.size(); ++i) ++hist[ds.true_label(i, data::LabelAccess::audit)];
  for (int c = 0; c < 4; ++c) EXPECT_EQ(hist[c], 500);
  EXPECT_EQ(ds.test_indices().size(), 400u);
  EXPECT_EQ(ds.train_indices().size(), 1600u);
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  const auto a = small_synthetic(), b = small_synthetic();
  EXPECT_EQ(a.images(), b.images());
  EXPECT_EQ(a.id(), b.id());
  EXPECT_EQ(a.train_indices(), b.train_indices());
}

TEST(Synthetic, DifferentSeedsDiffer) {
  data::SyntheticSpec s1, s2;
  s1.samples_per_class = s2.samples_per_class = 5;
  s2.seed = 1;
  EXPECT_FALSE(data::generate_synthetic(s1).images() == data::generate_synthetic(s2).images());
  EXPECT_NE(s1.id(), s2.id());
}

TEST(Synthetic, ZeroDifficultyIsNearestCentroidSeparable) {
  data::SyntheticSpec spec;
  spec.classes = 4;
  spec.samples_per_class = 200;
  spec.image_size = 16;
  spec.difficulty = 0.0;
  const auto ds = data::generate_synthetic(spec);
  const std::size_t d = 3 * 16 * 16;
  std::vector<std::vector<double>> centroid(4, std::vector<double>(d, 0.0));
  std::vector<int> count(4, 0);
  for (auto i : ds.train_indices()) {
    const int y = ds.true_label(i, data::LabelAccess::audit);
    auto r = ds.images().row(i);
    for (std::size_t k = 0; k < d; ++k) centroid[y][k] += r[k];
    ++count[y];
  }
  for (int c = 0; c < 4; ++c)
    for (auto& v : centroid[c]) v /= count[c];
  int right = 0;
  for (auto i : ds.test_indices()) {
    auto r = ds.images().row(i);
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < 4; ++c) {
      double dist = 0;
      for (std::size_t k = 0; k < d; ++k) dist += (r[k] - centroid[c][k]) * (r[k] - centroid[c][k]);
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    right += best == ds.true_label(i, data::LabelAccess::audit);
  }
  EXPECT_GE(double(right) / double(ds.test_indices().size()), 0.99);
}

TEST(Synthetic, PixelsInUnitRange) {
  const auto ds = small_synthetic(4, 10, 1.0);
  for (double v : ds.images().storage()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Synthetic, SpecValidationAndJson) {
  data::SyntheticSpec spec;
  spec.classes = 3;
  spec.class_difficulty = {0.1, 0.2};
  EXPECT_THROW(spec.validate(), boss::ValidationError);
  spec.class_difficulty = {0.1, 0.2, 0.9};
  spec.validate();
  const auto back = data::SyntheticSpec::from_json(spec.to_json());
  EXPECT_EQ(back.class_difficulty, spec.class_difficulty);
  EXPECT_EQ(back.id(), spec.id());
  spec.image_size = 10;
  EXPECT_THROW(spec.validate(), boss::ValidationError);
}

TEST(Dataset, SplitIsStratifiedAndDisjoint) {
  const auto ds = small_synthetic(4, 25);
  std::vector<int> test_hist(4, 0);
  for (auto i : ds.test_indices()) {
    ++test_hist[ds.true_label(i, data::LabelAccess::audit)];
    EXPECT_FALSE(std::binary_search(ds.train_indices().begin(), ds.train_indices().end(), i));
  }
  for (int c = 0; c < 4; ++c) EXPECT_EQ(test_hist[c], 5);
  EXPECT_EQ(ds.train_indices().size() + ds.test_indices().size(), ds.size());
}

TEST(Dataset, LabelReadsAreTalliedByPurpose) {
  const auto ds = small_synthetic();
  ds.reset_label_reads();
  ds.true_label(0, data::LabelAccess::evaluation);
  ds.true_label(1, data::LabelAccess::audit);
  ds.true_label(2, data::LabelAccess::audit);
  EXPECT_EQ(ds.label_reads(), (data::LabelAccessCounts{0, 1, 2}));
  EXPECT_THROW(ds.true_label(ds.size(), data::LabelAccess::audit), boss::ValidationError);
}

TEST(Cifar10, SingleRecordFixture) {
  std::string bytes(1, char(7));
  bytes.append(3072, char(255));
  const auto path = temp_file("boss_cifar_one.bin", bytes);
  const auto ingest = data::ingest_cifar10({path.string()}, {path.string()});
  const auto& ds = ingest.dataset;
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.true_label(0, data::LabelAccess::audit), 7);
  for (double v : ds.images().row(0)) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(ds.train_indices(), (std::vector<std::size_t>{0}));
  EXPECT_EQ(ds.test_indices(), (std::vector<std::size_t>{1}));
  fs::remove(path);
}

TEST(Cifar10, ChannelPlanesAreRowMajor) {
  data::CifarRecord r;
  r.label = 3;
  r.pixels.assign(3072, 0);
  r.pixels[0] = 255;             // R(0,0)
  r.pixels[1024 + 33] = 51;      // G(1,1)
  r.pixels[2048 + 1023] = 102;   // B(31,31)
  const auto parsed = data::parse_cifar10(data::encode_cifar10({r}));
  ASSERT_EQ(parsed.size(), 1u);
  EXPECT_EQ(parsed[0], r);
  const auto path = temp_file("boss_cifar_planes.bin", data::encode_cifar10({r, r}));
  const auto ds = data::ingest_cifar10({path.string()}).dataset;
  const auto img = ds.image(0);
  EXPECT_EQ(img.at(0, 0, 0, 0), 1.0);
  EXPECT_EQ(img[1 * 1024 + 1 * 32 + 1], 51 / 255.0);
  EXPECT_EQ(img[2 * 1024 + 31 * 32 + 31], 102 / 255.0);
  fs::remove(path);
}

TEST(Cifar10, EmptyFileGivesEmptyDatasetWithWarning) {
  const auto path = temp_file("boss_cifar_empty.bin", "");
  const auto ingest = data::ingest_cifar10({path.string()});
  EXPECT_EQ(ingest.dataset.size(), 0u);
  ASSERT_EQ(ingest.warnings.size(), 1u);
  fs::remove(path);
}

TEST(Cifar10, TruncatedFileIsFormatError) {
  EXPECT_THROW(data::parse_cifar10(std::string(3072, '\0')), boss::FormatError);
  const auto path = temp_file("boss_cifar_trunc.bin", std::string(3072, '\0'));
  EXPECT_THROW(data::ingest_cifar10({path.string()}), boss::FormatError);
  fs::remove(path);
}

TEST(Cifar10, BadLabelByteIsDataError) {
  std::string bytes(1, char(10));
  bytes.append(3072, '\0');
  EXPECT_THROW(data::parse_cifar10(bytes), boss::DataError);
}

TEST(Cifar10, MissingFileIsNotFound) {
  EXPECT_THROW(data::ingest_cifar10({"/nonexistent/data_batch_1.bin"}), boss::NotFound);
}

TEST(Prototypes, ValidSetIsRetrievable) {
  const auto ds = small_synthetic();
  data::PrototypeRegistry reg;
  const auto& added = reg.add(data::select_prototypes(ds, first_per_class(ds)));
  EXPECT_EQ(added.id, 1);
  const auto got = reg.get(1);
  EXPECT_EQ(got.per_class, first_per_class(ds));
  EXPECT_EQ(got.provenance, data::Provenance::manual);
  EXPECT_THROW(reg.get(99), boss::NotFound);
  const auto back = data::PrototypeSet::from_json(got.to_json());
  EXPECT_EQ(back.per_class, got.per_class);
}

TEST(Prototypes, MissingClassIsValidationError) {
  const auto ds = small_synthetic();
  auto pcs = first_per_class(ds);
  pcs[0].push_back(first_per_class(ds, 1)[0][0]);
  pcs[1].clear();
  EXPECT_THROW(data::select_prototypes(ds, pcs), boss::ValidationError);
}

TEST(Prototypes, TestSplitIndexRejected) {
  const auto ds = small_synthetic();
  auto pcs = first_per_class(ds);
  pcs[0][0] = ds.test_indices().front();
  EXPECT_THROW(data::select_prototypes(ds, pcs), boss::ValidationError);
}

TEST(Prototypes, AuditFlagsMislabeledPrototype) {
  const auto ds = small_synthetic();
  auto pcs = first_per_class(ds);
  std::swap(pcs[0], pcs[1]);
  const auto set = data::select_prototypes(ds, pcs, true);
  EXPECT_EQ(set.warnings.size(), 2u);
  const auto clean = data::select_prototypes(ds, first_per_class(ds), true);
  EXPECT_TRUE(clean.warnings.empty());
}

TEST(Prototypes, ReplaceChangesOnlyThatClass) {
  const auto ds = small_synthetic();
  data::PrototypeRegistry reg;
  reg.add(data::select_prototypes(ds, first_per_class(ds)));
  const auto alt = first_per_class(ds, 1);
  const auto next = reg.replace(1, 0, alt[0][0], ds);
  EXPECT_EQ(next.id, 2);
  EXPECT_EQ(next.parent, 1);
  EXPECT_EQ(next.provenance, data::Provenance::replaced);
  const auto old = reg.get(1);
  EXPECT_EQ(next.per_class[0][0], alt[0][0]);
  for (std::size_t c = 1; c < 4; ++c) EXPECT_EQ(next.per_class[c], old.per_class[c]);
}

TEST(Prototypes, ReplaceWithSameIndexIsError) {
  const auto ds = small_synthetic();
  const auto set = data::select_prototypes(ds, first_per_class(ds));
  EXPECT_THROW(data::replace_prototype(set, 0, set.per_class[0][0], ds, 2), boss::ValidationError);
  EXPECT_THROW(data::replace_prototype(set, 0, set.per_class[1][0], ds, 2), boss::ValidationError);
  EXPECT_THROW(data::replace_prototype(set, 7, 0, ds, 2), boss::ValidationError);
}

TEST(Prototypes, TwoReplacementsOnTenClassSet) {
  // Refining two weak classes: the descendant differs at two indices and keeps eight.
  const auto ds = small_synthetic(10, 12);
  data::PrototypeRegistry reg;
  reg.add(data::select_prototypes(ds, first_per_class(ds)));
  const auto alt = first_per_class(ds, 1);
  const auto mid = reg.replace(1, 0, alt[0][0], ds);
  const auto last = reg.replace(mid.id, 7, alt[7][0], ds);
  const auto origin = reg.get(1);
  int changed = 0;
  for (std::size_t c = 0; c < 10; ++c) changed += last.per_class[c] != origin.per_class[c];
  EXPECT_EQ(changed, 2);
  EXPECT_EQ(last.parent, mid.id);
  EXPECT_EQ(reg.list().size(), 3u);
}
