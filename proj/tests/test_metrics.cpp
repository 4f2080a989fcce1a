#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "rankiqa/errors.hpp"
#include "rankiqa/metrics.hpp"
#include "test_support.hpp"

using namespace rankiqa;
using namespace rankiqa::testing;

namespace {

constexpr double kExact = 1e-12;

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Brute-force average ranks: rank = (#less) + (#equal + 1) / 2.
std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double x : v) {
      less += x < v[i];
      equal += x == v[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("lcc closed forms") {
  const std::vector<double> y{1.0, 2.0, 4.0, 7.0, 11.0};
  std::vector<double> affine, neg;
  for (double v : y) {
    affine.push_back(2.0 * v + 3.0);
    neg.push_back(-v);
  }
  CHECK(std::abs(lcc(y, affine) - 1.0) <= kExact);
  CHECK(std::abs(lcc(y, neg) + 1.0) <= kExact);
  CHECK(std::abs(lcc(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}) - 0.5) <= kExact);
  CHECK_THROWS_AS(lcc(y, std::vector<double>(5, 2.0)), UndefinedCorrelation);
  CHECK_THROWS_AS(lcc(std::vector<double>{1.0}, std::vector<double>{1.0}), ShapeError);
  CHECK_THROWS_AS(lcc(y, std::vector<double>{1.0, 2.0}), ShapeError);
}

TEST_CASE("srocc closed forms") {
  const std::vector<double> y{1, 2, 3, 4};
  CHECK(std::abs(srocc(y, y) - 1.0) <= kExact);
  CHECK(std::abs(srocc(y, std::vector<double>{4, 3, 2, 1}) + 1.0) <= kExact);
  CHECK(std::abs(srocc(y, std::vector<double>{1, 2, 4, 3}) - 0.8) <= kExact);
  CHECK(std::abs(srocc(y, std::vector<double>{0.1, 5.0, 900.0, 30.0}) - 0.8) <= kExact);
  CHECK_THROWS_AS(srocc(std::vector<double>{1}, std::vector<double>{1}), ShapeError);
  CHECK(srocc(y, std::vector<double>(4, 1.0)) == 0.0);
}

TEST_CASE("average ranks") {
  CHECK(average_ranks(std::vector<double>{10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});
  CHECK(average_ranks(std::vector<double>{3, 3, 3}) == std::vector<double>{2, 2, 2});
}

TEST_CASE("invariances") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> y(20), yh(20), aff(20), mono(20);
    for (std::size_t i = 0; i < 20; ++i) {
      y[i] = nd(rng);
      yh[i] = y[i] + nd(rng);
      aff[i] = 3.5 * yh[i] + 11.0;
      mono[i] = std::exp(yh[i]);
    }
    CHECK(lcc(y, aff) == doctest::Approx(lcc(y, yh)).epsilon(1e-12));
    CHECK(srocc(y, aff) == srocc(y, yh));
    CHECK(srocc(y, mono) == srocc(y, yh));
    CHECK(std::abs(srocc(yh, yh) - 1.0) <= kExact);
  }
}

TEST_CASE("spearman with ties equals pearson of average ranks") {
  std::mt19937_64 rng(1000);
  int checked = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng() % 30;
    const std::size_t levels = 2 + rng() % 5;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(rng() % levels);
      b[i] = static_cast<double>(rng() % (levels + 2));
    }
    const auto ra = brute_ranks(a), rb = brute_ranks(b);
    CHECK(average_ranks(a) == ra);
    const bool a_flat = std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; });
    const bool b_flat = std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; });
    if (a_flat || b_flat) {
      CHECK(srocc(a, b) == 0.0);
      continue;
    }
    CHECK(std::abs(srocc(a, b) - pearson(ra, rb)) <= kExact);
    ++checked;
  }
  CHECK(checked > 900);
}

TEST_CASE("model evaluation") {
  Model m = Model::create(NetworkSpec::desk_default(), 4);
  std::vector<LabeledSample> samples;
  for (int i = 0; i < 4; ++i) {
    LabeledSample s;
    s.path = "r" + std::to_string(i) + "/a.pgm";
    s.reference_id = "r" + std::to_string(i);
    s.image = synthetic_reference(32, 32, i);
    s.mos = static_cast<float>(i * 10);
    samples.push_back(s);
  }
  std::vector<const LabeledSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  const EvalConfig whole{1, 32, 9};
  const EvalResult a = evaluate_model(m.spec, m.params, ptrs, whole);
  const EvalResult b = evaluate_model(m.spec, m.params, ptrs, EvalConfig{1, 32, 123});
  CHECK(a.count() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a.per_image[i].y_hat == b.per_image[i].y_hat);
  CHECK(a.per_image[2].y_hat == doctest::Approx(predict_image(m.spec, m.params, samples[2].image, 1, 32, 0)));
  CHECK(a.lcc.has_value());
  CHECK(evaluate_model(m.spec, m.params, ptrs, EvalConfig{30, 16, 5}).per_image[0].y_hat ==
        evaluate_model(m.spec, m.params, ptrs, EvalConfig{30, 16, 5}).per_image[0].y_hat);
  CHECK(EvalConfig{}.crops_per_image == 30);

  // A network whose output ignores the image.
  Model constant = m;
  for (auto& p : constant.params) p.value.fill(0.0f);
  constant.params.at("fc1.bias").value[0] = 2.0f;
  const EvalResult c = evaluate_model(constant.spec, constant.params, ptrs, whole);
  CHECK_FALSE(c.lcc.has_value());
  CHECK(c.srocc == 0.0);
  CHECK(eval_summary(c).find("undefined") != std::string::npos);
  CHECK_THROWS_AS(evaluate_model(m.spec, m.params, {}, whole), ConfigError);

  TempDir dir("eval");
  write_eval_csv(dir.path / "e.csv", a);
  std::ifstream f(dir.path / "e.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header == "id,y,y_hat");
}

TEST_CASE("level histograms") {
  std::vector<LevelScores> levels{{DistortionKind::GaussianBlur, 0, {5.0, 6.0, 7.0}},
                                  {DistortionKind::GaussianBlur, 1, {3.0, 4.0, 4.5}},
                                  {DistortionKind::GaussianBlur, 2, {1.0, 2.0, 2.5}}};
  const auto sep = level_separation(levels);
  REQUIRE(sep.size() == 1);
  CHECK(sep[0].strictly_monotone());
  CHECK(sep[0].adjacent_pairs == 2);
  // Perfectly separated levels of 3 tied ranks each: sqrt(18 / 20).
  CHECK(std::abs(level_srocc(levels) - std::sqrt(0.9)) <= kExact);
  const auto hist = score_histograms(levels, 30);
  REQUIRE(hist.size() == 3);
  std::size_t total = 0;
  for (const auto& h : hist) {
    CHECK(h.bins.size() == 30);
    CHECK(h.bins.front().lo == 1.0);
    CHECK(h.bins.back().hi == 7.0);
    for (const auto& b : h.bins) total += b.count;
  }
  CHECK(total == 9);

  const std::vector<LevelScores> single{{DistortionKind::JpegProxy, 0, {1.0, 2.0}}};
  const auto one = level_separation(single);
  CHECK(one[0].adjacent_pairs == 0);
  CHECK(score_histograms(single).size() == 1);

  // Untrained network: shapes only, no separation is expected.
  Model m = Model::create(NetworkSpec::desk_default(), 2);
  std::vector<RankedGroup> groups;
  for (int r = 0; r < 3; ++r)
    groups.push_back(synthesize_ranked_group("u" + std::to_string(r), synthetic_reference(48, 48, r),
                                             DistortionSpec::defaults(DistortionKind::GaussianBlur)));
  std::vector<const RankedGroup*> ptrs;
  for (const auto& g : groups) ptrs.push_back(&g);
  const auto scored = score_levels(m.spec, m.params, ptrs, EvalConfig{2, 32, 1});
  CHECK(scored.size() == 5);
  for (const auto& l : scored) CHECK(l.scores.size() == 3);
}

}  // TEST_SUITE
