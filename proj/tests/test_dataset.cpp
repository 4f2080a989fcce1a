#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "rankiqa/dataset.hpp"
#include "rankiqa/errors.hpp"
#include "rankiqa/pgm.hpp"
#include "test_support.hpp"

using namespace rankiqa;
using namespace rankiqa::testing;

namespace {

RankedGroup make_group(const std::string& id, DistortionKind kind, std::size_t side, std::uint64_t seed) {
  return synthesize_ranked_group(id, synthetic_reference(side, side, seed), DistortionSpec::defaults(kind, seed));
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("sub-image sampling") {
  std::mt19937_64 rng(1);
  const Tensor img = synthetic_reference(64, 64, 1);
  const Crop whole = sample_crop(64, 64, 64, rng);
  CHECK(whole.y == 0);
  CHECK(whole.x == 0);
  CHECK(sample_subimage(img, 64, rng) == img);
  std::set<std::size_t> ys;
  for (int i = 0; i < 1000; ++i) {
    const Crop c = sample_crop(64, 64, 32, rng);
    CHECK(c.y <= 32);
    CHECK(c.x <= 32);
    ys.insert(c.y);
  }
  CHECK(ys.size() > 25);
  CHECK_THROWS_AS(sample_crop(64, 64, 65, rng), ConfigError);
  const Tensor p = sample_subimage(img, 16, rng);
  CHECK(p.shape() == Shape{16, 16});

  CHECK(patch_size_warning(96, 96, 31).has_value());
  CHECK_FALSE(patch_size_warning(96, 96, 32).has_value());
  CHECK(patch_size_warning(90, 150, 40).has_value());
}

TEST_CASE("local contrast normalisation") {
  const Tensor flat({20, 20}, 0.6f);
  for (float v : local_contrast_normalize(flat).data()) CHECK(std::abs(v) < 1e-5f);
  const Tensor img = synthetic_reference(40, 40, 2);
  Tensor brighter = img;
  for (float& v : brighter.data()) v = 0.5f * v + 0.25f;
  const Tensor a = local_contrast_normalize(img, 2.0, 1e-6), b = local_contrast_normalize(brighter, 2.0, 1e-6);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i]) > 0.05f) worst = std::max(worst, std::abs(double(a[i]) - b[i]) / std::abs(a[i]));
  CHECK(worst < 1e-2);
  CHECK_THROWS_AS(local_contrast_normalize(img, 2.0, 0.0), ConfigError);
  const Crop c{3, 5, 16};
  CHECK(network_patch(img, c) == local_contrast_normalize(extract_patch(img, c)));
}

TEST_CASE("one five-level group") {
  const RankedGroup g = make_group("r0", DistortionKind::GaussianBlur, 40, 3);
  std::mt19937_64 rng(2);
  const MiniBatch b = assemble_minibatch({&g}, {32, 1, 1.0f}, rng);
  CHECK(b.size() == 5);
  CHECK(b.images.shape() == Shape{5, 1, 32, 32});
  CHECK(b.labels.comparable_pairs() == 10);
  CHECK(b.distortion_types() == 1);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = i + 1; j < 5; ++j) CHECK(b.labels(i, j) == 1);
}

TEST_CASE("two groups of different kinds form a block diagonal matrix") {
  const RankedGroup a = make_group("r0", DistortionKind::GaussianBlur, 40, 3);
  const RankedGroup n = make_group("r1", DistortionKind::GaussianNoise, 40, 4);
  std::mt19937_64 rng(5);
  const MiniBatch b = assemble_minibatch({&a, &n}, {24, 2, 1.0f}, rng);
  CHECK(b.size() == 10);
  CHECK(b.distortion_types() == 2);
  CHECK(b.kind_counts.at(DistortionKind::GaussianBlur) == 5);
  CHECK(b.kind_counts.at(DistortionKind::GaussianNoise) == 5);
  CHECK(b.labels.is_antisymmetric());
  CHECK(b.labels.comparable_pairs() == 20);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j) {
      const bool same = b.group_ids[i] == b.group_ids[j];
      if (!same || i == j) CHECK(b.labels(i, j) == 0);
      else CHECK(b.labels(i, j) != 0);
    }
}

TEST_CASE("same reference but different kinds are not comparable") {
  const Tensor ref = synthetic_reference(32, 32, 8);
  const auto blur = synthesize_ranked_group("same", ref, DistortionSpec::defaults(DistortionKind::GaussianBlur));
  const auto jpeg = synthesize_ranked_group("same", ref, DistortionSpec::defaults(DistortionKind::JpegProxy));
  std::mt19937_64 rng(1);
  const MiniBatch b = assemble_minibatch({&blur, &jpeg}, {32, 2, 1.0f}, rng);
  CHECK(b.labels(0, 5) == 0);
  CHECK(b.labels(0, 9) == 0);
  CHECK(b.labels.comparable_pairs() == 20);
}

TEST_CASE("crops are aligned across levels and batches are reproducible") {
  const RankedGroup g = make_group("r0", DistortionKind::GaussianBlur, 48, 9);
  std::mt19937_64 r1(77), r2(77);
  const MiniBatch a = assemble_minibatch({&g}, {20, 1, 1.0f}, r1);
  const MiniBatch b = assemble_minibatch({&g}, {20, 1, 1.0f}, r2);
  CHECK(a.images == b.images);

  std::mt19937_64 r3(77);
  const Crop c = sample_crop(48, 48, 20, r3);
  for (std::size_t k = 0; k < 5; ++k) {
    const Tensor expect = network_patch(g.distorted[k], c);
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(a.images[k * 400 + i] == expect[i]);
  }
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(assemble_minibatch({}, {20, 1, 1.0f}, rng), ConfigError);
}

TEST_CASE("batch group schedule") {
  for (std::uint64_t it = 0; it < 40; ++it) {
    const auto idx = batch_group_indices(7, 2, 3, it);
    CHECK(idx.size() == 2);
    CHECK(idx[0] != idx[1]);
    for (auto i : idx) CHECK(i < 7);
    CHECK(idx == batch_group_indices(7, 2, 3, it));
  }
  // Each epoch of a divisible schedule visits every group once.
  std::multiset<std::size_t> seen;
  for (std::uint64_t it = 0; it < 4; ++it)
    for (auto i : batch_group_indices(8, 2, 9, it)) seen.insert(i);
  for (std::size_t g = 0; g < 8; ++g) CHECK(seen.count(g) == 1);
}

TEST_CASE("reference split") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("ref" + std::to_string(i));
  const auto [train, test] = split_by_reference(ids, 0.8, 42);
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
  for (const auto& t : test) CHECK(std::find(train.begin(), train.end(), t) == train.end());
  CHECK(split_by_reference(ids, 0.8, 42) == std::make_pair(train, test));
  std::reverse(ids.begin(), ids.end());
  CHECK(split_by_reference(ids, 0.8, 42) == std::make_pair(train, test));
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto [tr, te] = split_by_reference(ids, 0.7, seed);
    std::set<std::string> u(tr.begin(), tr.end());
    for (const auto& t : te) CHECK(u.insert(t).second);
    CHECK(u.size() == 10);
  }
}

TEST_CASE("corpus generation, labels and loading") {
  TempDir dir("corpus");
  std::vector<std::pair<std::string, Tensor>> refs;
  for (int i = 0; i < 10; ++i) refs.emplace_back("ref" + std::to_string(i), synthetic_reference(24, 24, i));
  const std::vector<DistortionSpec> kinds{DistortionSpec::defaults(DistortionKind::GaussianBlur, 1),
                                          DistortionSpec::defaults(DistortionKind::JpegProxy, 1)};
  const auto manifest = generate_corpus(refs, kinds, dir.path / "corpus");
  CHECK(manifest.distorted_files() == 100);
  CHECK(std::filesystem::exists(corpus_image_path(dir.path / "corpus", DistortionKind::JpegProxy, "ref3", 4)));

  const Corpus corpus = load_corpus(dir.path / "corpus");
  CHECK(corpus.groups.size() == 20);
  CHECK(corpus.manifest.references.size() == 10);

  write_synthetic_labels(manifest, dir.path / "corpus", dir.path / "corpus" / "labels.txt", 5);
  const LabeledDataset ds = load_labeled_dataset(dir.path / "corpus" / "labels.txt");
  CHECK(ds.samples.size() == 100);
  CHECK(ds.train_references.size() == 8);
  CHECK(ds.test_references.size() == 2);
  CHECK(ds.train_indices().size() == 80);
  CHECK(ds.test_indices().size() == 20);
  std::set<std::string> train_refs;
  for (auto i : ds.train_indices()) train_refs.insert(ds.samples[i].reference_id);
  for (auto i : ds.test_indices()) CHECK(train_refs.count(ds.samples[i].reference_id) == 0);
  for (const auto& s : ds.samples) CHECK((s.mos >= 0.0f && s.mos <= 100.0f));
  CHECK(synthetic_mos(0, 5) == 100.0f);
  CHECK(synthetic_mos(4, 5) == 0.0f);
  CHECK(synthetic_mos(1, 5) == 75.0f);

  std::filesystem::remove(corpus_image_path(dir.path / "corpus", DistortionKind::GaussianBlur, "ref2", 1));
  try {
    load_labeled_dataset(dir.path / "corpus" / "labels.txt");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("ref2/level_1.pgm") != std::string::npos);
  }
  CHECK_THROWS_AS(load_corpus(dir.path / "corpus"), FormatError);
}

TEST_CASE("malformed labeled manifest lists offenders") {
  TempDir dir("labels");
  write_pgm(dir.path / "a.pgm", Tensor({4, 4}, 0.5f));
  {
    std::ofstream f(dir.path / "m.txt");
    f << "range 0 100\nsplit_seed 3\na.pgm 50\na.pgm notanumber\na.pgm 250\n";
  }
  try {
    load_labeled_dataset(dir.path / "m.txt");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 4") != std::string::npos);
    CHECK(msg.find("score 250") != std::string::npos);
  }
  {
    std::ofstream f(dir.path / "noheader.txt");
    f << "a.pgm 50\n";
  }
  CHECK_THROWS_AS(load_labeled_dataset(dir.path / "noheader.txt"), FormatError);
  CHECK_THROWS_AS(load_labeled_dataset(dir.path / "absent.txt"), FormatError);
}

}  // TEST_SUITE
