#include <cmath>
#include <fstream>

#include "doctest.h"
#include "rankiqa/errors.hpp"
#include "rankiqa/gradcheck.hpp"
#include "rankiqa/trainer.hpp"
#include "test_support.hpp"

using namespace rankiqa;
using namespace rankiqa::testing;

namespace {

struct SmallCorpus {
  std::vector<RankedGroup> groups;
  std::vector<const RankedGroup*> ptrs;

  explicit SmallCorpus(std::size_t count, std::size_t side = 40) {
    for (std::size_t r = 0; r < count; ++r)
      groups.push_back(synthesize_ranked_group("s" + std::to_string(r), synthetic_reference(side, side, r),
                                               DistortionSpec::defaults(DistortionKind::GaussianBlur, 1)));
    for (const auto& g : groups) ptrs.push_back(&g);
  }
};

TrainConfig quick_config(std::size_t iterations) {
  TrainConfig c = TrainConfig::ranking_defaults();
  c.iterations = iterations;
  c.batch.patch_size = 24;
  c.lr_step = 3;
  return c;
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("sgd step") {
  ParameterStore p;
  auto& w = p.add("w", {1});
  w.value[0] = 1.0f;
  sgd_step(p, 0.1, 0.0);
  CHECK(w.value[0] == 1.0f);
  w.grad[0] = 2.0f;
  sgd_step(p, 0.1, 0.0);
  CHECK(w.value[0] == doctest::Approx(0.8).epsilon(1e-7));
  CHECK(w.grad[0] == 0.0f);
  w.value[0] = 1.0f;
  sgd_step(p, 0.1, 5e-4);
  CHECK(w.value[0] == doctest::Approx(1.0 - 0.1 * 5e-4).epsilon(1e-7));
}

TEST_CASE("learning rate schedule") {
  TrainConfig c;
  c.learning_rate = 1e-4;
  c.lr_step = 10000;
  c.lr_decay = 0.1;
  CHECK(lr_schedule(0, c) == 1e-4);
  CHECK(lr_schedule(9999, c) == 1e-4);
  CHECK(lr_schedule(10000, c) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lr_schedule(25000, c) == doctest::Approx(1e-6).epsilon(1e-12));
}

TEST_CASE("config defaults, json round trip and validation") {
  const TrainConfig r = TrainConfig::ranking_defaults();
  CHECK(r.iterations == 2000);
  CHECK(r.learning_rate == 1e-3);
  CHECK(r.lr_step == 800);
  CHECK(r.weight_decay == 5e-4);
  CHECK(r.batch.margin == 1.0f);
  CHECK(r.batch.patch_size == 48);
  CHECK(TrainConfig::finetune_defaults().learning_rate == 1e-4);
  CHECK(TrainConfig::finetune_defaults().phase == Phase::Finetune);

  TrainConfig c = r;
  c.strategy = Strategy::RandomPair;
  c.seed = 99;
  c.batch.groups_per_batch = 3;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"learning_rat", 0.1}}), ConfigError);
  CHECK(TrainConfig::from_json(nlohmann::json{{"iterations", 5}}, r).learning_rate == 1e-3);
  TrainConfig bad = r;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = r;
  bad.iterations = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(parse_strategy("randompair") == Strategy::RandomPair);
  CHECK_THROWS_AS(parse_strategy("hardmining"), ConfigError);
}

TEST_CASE("regression loss") {
  std::vector<float> g;
  CHECK(regression_loss(std::vector<float>{1, 1}, std::vector<float>{0, 2}, &g) == 1.0);
  CHECK(g == std::vector<float>{1.0f, -1.0f});
  CHECK(regression_loss(std::vector<float>{3, 4}, std::vector<float>{3, 4}, &g) == 0.0);
  CHECK(g == std::vector<float>{0.0f, 0.0f});
  CHECK_THROWS_AS(regression_loss(std::vector<float>{1}, std::vector<float>{1, 2}), ShapeError);
}

TEST_CASE("fine-tuning loss through the desk network matches finite differences") {
  Model m = Model::create(NetworkSpec::desk_default(), 12);
  const Tensor batch = random_tensor({6, 1, 32, 32}, 2);
  const std::vector<double> y{80, 10, 55, 20, 0, 100};
  const ScoreLoss loss = [&](std::span<const double> s, std::vector<double>* g) {
    double total = 0.0;
    if (g) g->assign(s.size(), 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
      total += (y[i] - s[i]) * (y[i] - s[i]) / double(s.size());
      if (g) (*g)[i] = 2.0 * (s[i] - y[i]) / double(s.size());
    }
    return total;
  };
  // The analytic path uses the library loss.
  ActivationCache cache;
  const Tensor scores = forward(m.spec, m.params, batch, &cache);
  std::vector<float> yf(y.begin(), y.end()), g;
  regression_loss(scores.data(), yf, &g);
  backward(m.spec, m.params, cache, g);
  GradCheckOptions opts;
  opts.samples = 120;
  opts.seed = 6;
  const auto report = compare_gradients(m.spec, m.params, batch, loss, opts);
  INFO("max rel " << report.max_rel_error);
  CHECK(report.passed());
}

TEST_CASE("checkpoint round trip and corruption") {
  TempDir dir("ckpt");
  ModelCheckpoint c;
  c.model = Model::create(NetworkSpec::desk_default(), 5);
  c.phase = Phase::Rank;
  c.iteration = 17;
  c.forward_count = 170;
  c.learning_rate = 1e-3;
  c.config = TrainConfig::ranking_defaults();
  c.rng_seed = 44;
  const auto path = dir.path / "m.riqa";
  save_checkpoint(path, c);
  const ModelCheckpoint back = load_checkpoint(path);
  CHECK(back.model.spec == c.model.spec);
  for (std::size_t i = 0; i < c.model.params.size(); ++i) {
    CHECK(back.model.params[i].name == c.model.params[i].name);
    CHECK(back.model.params[i].value == c.model.params[i].value);
  }
  CHECK(back.iteration == 17);
  CHECK(back.forward_count == 170);
  CHECK(back.learning_rate == 1e-3);
  CHECK(back.rng_seed == 44);
  CHECK(back.config.to_json() == c.config.to_json());

  const auto bytes = file_bytes(path);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "RIQA");
  {
    std::ofstream t(dir.path / "trunc.riqa", std::ios::binary);
    t.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
  }
  CHECK_THROWS_AS(load_checkpoint(dir.path / "trunc.riqa"), FormatError);
  {
    auto v = bytes;
    v[4] = 2;
    std::ofstream t(dir.path / "v2.riqa", std::ios::binary);
    t.write(v.data(), static_cast<std::streamsize>(v.size()));
  }
  try {
    load_checkpoint(dir.path / "v2.riqa");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
  {
    auto v = bytes;
    v[0] = 'X';
    std::ofstream t(dir.path / "magic.riqa", std::ios::binary);
    t.write(v.data(), static_cast<std::streamsize>(v.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(dir.path / "magic.riqa"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "none.riqa"), FormatError);
}

TEST_CASE("forward pass accounting") {
  SmallCorpus corpus(4);
  TrainConfig c = quick_config(3);
  const auto eff = train_ranking(c, corpus.ptrs);
  CHECK(eff.report.forward_count == 3 * 10);
  for (std::size_t k = 0; k < 3; ++k) CHECK(eff.report.curve[k].forward_count == (k + 1) * 10);

  c.pairs_per_iteration = 4;
  const auto rp = train_ranking_randompair_baseline(c, corpus.ptrs);
  CHECK(rp.report.forward_count == 3 * 8);
  c.pairs_per_iteration = 0;
  const auto rp_default = train_ranking_randompair_baseline(c, corpus.ptrs);
  CHECK(rp_default.report.forward_count == eff.report.forward_count);
}

TEST_CASE("ranking input errors") {
  const TrainConfig c = quick_config(2);
  CHECK_THROWS_AS(train_ranking(c, {}), ConfigError);
  const auto g = synthesize_ranked_group("one", synthetic_reference(30, 30, 1),
                                         DistortionSpec{DistortionKind::GaussianBlur, {1, 2}, 0});
  RankedGroup single = g;
  single.distorted.resize(1);
  CHECK_THROWS_AS(train_ranking(c, {&single}), ConfigError);
  CHECK_THROWS_AS(train_ranking_randompair_baseline(c, {&single}), ConfigError);
}

TEST_CASE("training is deterministic and resumable") {
  SmallCorpus corpus(3);
  const TrainConfig c = quick_config(6);
  TempDir dir("resume");
  for (auto strategy : {Strategy::Efficient, Strategy::RandomPair}) {
    const auto run = [&](const std::optional<ModelCheckpoint>& resume, const TrainHooks& hooks) {
      return strategy == Strategy::Efficient ? train_ranking(c, corpus.ptrs, resume, hooks)
                                             : train_ranking_randompair_baseline(c, corpus.ptrs, resume, hooks);
    };
    TrainHooks h1;
    h1.checkpoint_path = dir.path / "a.riqa";
    const auto a = run(std::nullopt, h1);
    TrainHooks h2;
    h2.checkpoint_path = dir.path / "b.riqa";
    const auto b = run(std::nullopt, h2);
    REQUIRE(a.report.curve.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(a.report.curve[i].loss == b.report.curve[i].loss);
    CHECK(file_bytes(dir.path / "a.riqa") == file_bytes(dir.path / "b.riqa"));

    TrainHooks partial;
    partial.checkpoint_path = dir.path / "p.riqa";
    partial.stop_after = 4;
    run(std::nullopt, partial);
    TrainHooks rest;
    rest.checkpoint_path = dir.path / "r.riqa";
    const auto resumed = run(load_checkpoint(dir.path / "p.riqa"), rest);
    REQUIRE(resumed.report.curve.size() == 2);
    CHECK(resumed.report.curve[0].iteration == 4);
    CHECK(resumed.report.curve[1].loss == a.report.curve[5].loss);
    CHECK(resumed.report.forward_count == a.report.forward_count);
    CHECK(file_bytes(dir.path / "r.riqa") == file_bytes(dir.path / "a.riqa"));
  }
}

TEST_CASE("ranking loss decreases on a short run") {
  SmallCorpus corpus(6, 48);
  TrainConfig c = TrainConfig::ranking_defaults();
  c.iterations = 120;
  c.batch.patch_size = 32;
  const auto out = train_ranking(c, corpus.ptrs);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    first += out.report.curve[i].loss;
    last += out.report.curve[out.report.curve.size() - 1 - i].loss;
  }
  CHECK(last < first);
}

TEST_CASE("fine-tuning starts from ranking weights") {
  SmallCorpus corpus(3);
  const auto rank = train_ranking(quick_config(2), corpus.ptrs);
  std::vector<LabeledSample> samples;
  for (const auto& g : corpus.groups)
    for (std::size_t k = 0; k < g.size(); ++k)
      samples.push_back({g.reference_id + "/level_" + std::to_string(k) + ".pgm", g.reference_id, g.distorted[k],
                         synthetic_mos(k, g.size())});
  std::vector<const LabeledSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  TrainConfig f = TrainConfig::finetune_defaults();
  f.iterations = 3;
  f.batch.patch_size = 24;
  f.finetune_batch = 4;
  const auto a = finetune_regression(rank.checkpoint, ptrs, f);
  const auto b = finetune_regression(rank.checkpoint, ptrs, f);
  CHECK(a.checkpoint.phase == Phase::Finetune);
  CHECK(a.checkpoint.iteration == 3);
  CHECK(a.report.forward_count == 12);
  CHECK(a.checkpoint.model.params[0].value == b.checkpoint.model.params[0].value);
  CHECK_FALSE(a.checkpoint.model.params[0].value == rank.checkpoint.model.params[0].value);
  CHECK_THROWS_AS(finetune_regression(rank.checkpoint, {}, f), ConfigError);
}

}  // TEST_SUITE
