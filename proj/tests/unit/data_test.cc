#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "msta/data/dataset.h"
#include "msta/error.h"
#include "msta/util/binary_io.h"

namespace msta {
namespace {

DataGenConfig small_config() {
  DataGenConfig c;
  c.classes = 6;
  c.per_class = 8;
  c.frames = 6;
  c.size = 8;
  c.temporal_pair_fraction = 0.7;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("msta_data_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(p);
  return p;
}

TEST(Generate, ClassLayoutAndNames) {
  auto ds = generate_dataset(small_config());
  const auto& m = ds.manifest();
  EXPECT_EQ(m.classes, (std::vector<std::string>{"class_00_fwd", "class_01_rev", "class_02_fwd", "class_03_rev",
                                                 "class_04_obj", "class_05_obj"}));
  ASSERT_EQ(m.temporal_pairs.size(), 2u);
  EXPECT_EQ(ds.samples().size(), 48u);
  EXPECT_EQ(m.train_ids.size() + m.val_ids.size() + m.test_ids.size(), 48u);
  for (const auto& s : ds.samples()) {
    EXPECT_EQ(s.video.shape(), (Shape{6, 8, 8, 3}));
    for (float v : s.video.data<float>()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(Generate, PairSamplesAreFrameReversedTwins) {
  auto ds = generate_dataset(small_config());
  const auto& m = ds.manifest();
  for (const auto& [fwd, rev] : m.temporal_pairs) {
    for (std::int64_t j = 0; j < m.per_class; ++j) {
      const auto& a = ds.sample(fwd * m.per_class + j).video;
      const auto& b = ds.sample(rev * m.per_class + j).video;
      const std::int64_t T = a.dim(0), n = a.numel() / T;
      for (std::int64_t t = 0; t < T; ++t) {
        for (std::int64_t k = 0; k < n; ++k) ASSERT_EQ(a.at(t * n + k), b.at((T - 1 - t) * n + k));
      }
      // Sorted per-pixel frame statistics coincide.
      for (std::int64_t k = 0; k < n; k += 7) {
        std::vector<double> ca, cb;
        for (std::int64_t t = 0; t < T; ++t) {
          ca.push_back(a.at(t * n + k));
          cb.push_back(b.at(t * n + k));
        }
        std::sort(ca.begin(), ca.end());
        std::sort(cb.begin(), cb.end());
        ASSERT_EQ(ca, cb);
      }
    }
  }
}

TEST(Generate, FrameAverageOracleCannotSeparatePairs) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    DataGenConfig c = small_config();
    c.seed = seed;
    auto ds = generate_dataset(c);
    EXPECT_LE(frame_average_oracle(ds), 0.55);
    EXPECT_DOUBLE_EQ(ds.manifest().oracle_pair_accuracy, frame_average_oracle(ds));
  }
}

TEST(Generate, ValidatesConfig) {
  DataGenConfig c = small_config();
  c.classes = 5;
  EXPECT_THROW(generate_dataset(c), Error);
  c = small_config();
  c.size = 0;
  try {
    generate_dataset(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(Files, SameSeedGivesByteIdenticalFilesAndRoundTrips) {
  auto d1 = temp_dir("a"), d2 = temp_dir("b");
  auto ds = generate_dataset(small_config());
  save_dataset(ds, d1);
  save_dataset(generate_dataset(small_config()), d2);
  for (const char* f : {"data.mstd", "manifest.json"}) {
    EXPECT_EQ(read_file((d1 / f).string()), read_file((d2 / f).string())) << f;
  }
  auto loaded = load_dataset(d1);
  EXPECT_EQ(manifest_to_json(loaded.manifest()), manifest_to_json(ds.manifest()));
  ASSERT_EQ(loaded.samples().size(), ds.samples().size());
  for (std::size_t i = 0; i < ds.samples().size(); ++i) {
    EXPECT_EQ(loaded.samples()[i].id, ds.samples()[i].id);
    EXPECT_EQ(loaded.samples()[i].label, ds.samples()[i].label);
    EXPECT_TRUE(loaded.samples()[i].video.bit_equal(ds.samples()[i].video));
  }
  EXPECT_EQ(read_file((d1 / "data.mstd").string()).substr(0, 4), "MSTD");
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST(Files, TruncatedOrForeignFilesAreFormatErrors) {
  auto dir = temp_dir("bad");
  save_dataset(generate_dataset(small_config()), dir);
  const std::string bytes = read_file((dir / "data.mstd").string());
  write_file((dir / "data.mstd").string(), bytes.substr(0, bytes.size() - 5));
  try {
    load_dataset(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
  write_file((dir / "data.mstd").string(), "XXXX" + bytes.substr(4));
  EXPECT_THROW(load_dataset(dir), Error);
  EXPECT_THROW(manifest_from_json("{\"format\": 3}"), Error);
  std::filesystem::remove_all(dir);
}

TEST(FewShot, CountsAndSeeds) {
  auto ds = generate_dataset(small_config());
  const auto& m = ds.manifest();
  const std::int64_t train_per_class = static_cast<std::int64_t>(m.train_ids.size()) / m.class_count();
  EXPECT_EQ(few_shot_subset(m, train_per_class, 0), m.train_ids);
  auto one = few_shot_subset(m, 1, 0);
  EXPECT_EQ(one.size(), static_cast<std::size_t>(m.class_count()));
  auto a = few_shot_subset(m, 3, 1), b = few_shot_subset(m, 3, 2);
  EXPECT_NE(a, b);
  auto per_class = [&](const std::vector<std::uint64_t>& ids) {
    std::map<std::int64_t, int> n;
    for (auto id : ids) ++n[ds.sample(id).label];
    return n;
  };
  EXPECT_EQ(per_class(a), per_class(b));
  for (const auto& [c, n] : per_class(a)) EXPECT_EQ(n, 3) << c;
  EXPECT_EQ(std::set<std::uint64_t>(a.begin(), a.end()).size(), a.size());
  EXPECT_THROW(few_shot_subset(m, train_per_class + 1, 0), Error);
}

TEST(BaseNovel, DisjointCoverAndPairsTogether) {
  DataGenConfig c = small_config();
  c.classes = 8;
  c.temporal_pair_fraction = 1.0;
  auto ds = generate_dataset(c);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto [base, novel] = base_novel_split(ds.manifest(), 0.5, seed);
    EXPECT_EQ(base.size(), 4u);
    EXPECT_EQ(novel.size(), 4u);
    std::set<std::int64_t> all(base.begin(), base.end());
    for (auto n : novel) EXPECT_TRUE(all.insert(n).second);
    EXPECT_EQ(all.size(), 8u);
    std::set<std::int64_t> bs(base.begin(), base.end());
    for (const auto& [f, r] : ds.manifest().temporal_pairs) EXPECT_EQ(bs.count(f), bs.count(r));
  }
}

TEST(Augment, IdentityGrayscaleAndDoubleFlip) {
  auto ds = generate_dataset(small_config());
  const Tensor& v = ds.samples()[3].video;
  AugmentConfig off{0.0, 0.0, 0.0, 0.0};
  EXPECT_TRUE(augment(v, 11, off).bit_equal(v));

  AugmentConfig gray = off;
  gray.grayscale_p = 1.0;
  auto g = augment(v, 11, gray);
  for (std::int64_t i = 0; i < g.numel(); i += 3) {
    EXPECT_EQ(g.at(i), g.at(i + 1));
    EXPECT_EQ(g.at(i), g.at(i + 2));
  }

  AugmentConfig flip = off;
  flip.flip_p = 1.0;
  EXPECT_FALSE(augment(v, 3, flip).bit_equal(v));
  EXPECT_TRUE(augment(augment(v, 3, flip), 3, flip).bit_equal(v));

  auto full = augment(v, 5);
  EXPECT_EQ(full.shape(), v.shape());
  for (std::int64_t i = 0; i < full.numel(); ++i) {
    ASSERT_GE(full.at(i), 0.0);
    ASSERT_LE(full.at(i), 1.0);
  }
  EXPECT_TRUE(augment(v, 5).bit_equal(full));
}

TEST(Augment, SameTransformOnEveryFrame) {
  Tensor v({2, 4, 4, 3}, DType::kF32);
  for (std::int64_t i = 0; i < v.numel() / 2; ++i) {
    v.set(i, 0.02 * static_cast<double>(i % 40));
    v.set(v.numel() / 2 + i, 0.02 * static_cast<double>(i % 40));
  }
  auto a = augment(v, 9);
  const std::int64_t half = a.numel() / 2;
  for (std::int64_t i = 0; i < half; ++i) EXPECT_EQ(a.at(i), a.at(half + i));
}

TEST(Views, CropsAndStarts) {
  EXPECT_EQ(view_starts(8, 4, 1), (std::vector<std::int64_t>{2}));
  EXPECT_EQ(view_starts(8, 4, 3), (std::vector<std::int64_t>{0, 2, 4}));
  EXPECT_EQ(view_starts(4, 4, 2), (std::vector<std::int64_t>{0, 0}));
  EXPECT_THROW(view_starts(3, 4, 1), Error);
  Tensor v = Tensor::from_values({4, 1, 1, 3}, {0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3});
  EXPECT_EQ(temporal_crop(v, 1, 2).to_vector(), (std::vector<double>{1, 1, 1, 2, 2, 2}));
  EXPECT_THROW(temporal_crop(v, 3, 2), Error);
}

}  // namespace
}  // namespace msta
