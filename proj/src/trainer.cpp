#include "rankiqa/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "rankiqa/errors.hpp"
#include "rankiqa/ranking_loss.hpp"
#include "rankiqa/seeding.hpp"

namespace rankiqa {

namespace {

// Independent random streams per iteration.
constexpr std::uint64_t kCropStream = 0xc409;
constexpr std::uint64_t kPairStream = 0x9a17;
constexpr std::uint64_t kOrderStream = 0x02de;

std::mt19937_64 iteration_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t iteration) {
  return std::mt19937_64(derive_seed(derive_seed(seed, stream), iteration));
}

std::size_t common_level_count(const std::vector<const RankedGroup*>& groups) {
  if (groups.empty()) throw ConfigError("ranking training needs at least one ranked group");
  const std::size_t n = groups.front()->size();
  for (const RankedGroup* g : groups)
    if (g->size() != n) throw ConfigError("all ranked groups must have the same number of levels");
  if (n < 2) throw ConfigError("ranked groups need at least 2 levels to form a comparable pair");
  return n;
}

// One optimisation step; returns (loss per evaluated pair, branch passes).
using RankStep = std::function<std::pair<double, std::size_t>(Model&, std::size_t iteration)>;

TrainOutcome run_ranking_loop(const TrainConfig& config, const std::optional<ModelCheckpoint>& resume,
                              const TrainHooks& hooks, const RankStep& step) {
  config.validate();
  ModelCheckpoint state;
  if (resume) {
    if (resume->phase != Phase::Rank) throw ConfigError("cannot resume ranking from a fine-tuning checkpoint");
    state = *resume;
    state.config = config;
  } else {
    state.model = Model::create(NetworkSpec::desk_default(), config.init_seed);
    state.config = config;
  }
  state.phase = Phase::Rank;
  state.rng_seed = config.seed;

  TrainOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t end = hooks.stop_after ? std::min(hooks.stop_after, config.iterations) : config.iterations;
  if (hooks.probe && state.iteration == 0) out.report.probe.push_back({0, 0, probe_loss(state.model, *hooks.probe)});
  for (std::size_t t = state.iteration; t < end; ++t) {
    const double lr = lr_schedule(t, config);
    const auto [loss, passes] = step(state.model, t);
    sgd_step(state.model.params, lr, config.weight_decay);
    state.forward_count += passes;
    state.iteration = t + 1;
    state.learning_rate = lr;
    const TrainRecord rec{t, loss, lr, state.forward_count};
    out.report.curve.push_back(rec);
    if (hooks.on_iteration) hooks.on_iteration(rec);
    if (hooks.probe && config.probe_interval && state.iteration % config.probe_interval == 0)
      out.report.probe.push_back({state.iteration, state.forward_count, probe_loss(state.model, *hooks.probe)});
    if (!hooks.checkpoint_path.empty() && hooks.checkpoint_interval &&
        state.iteration % hooks.checkpoint_interval == 0)
      save_checkpoint(hooks.checkpoint_path, state);
  }
  out.report.forward_count = state.forward_count;
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!hooks.checkpoint_path.empty()) {
    save_checkpoint(hooks.checkpoint_path, state);
    out.report.checkpoint_path = hooks.checkpoint_path.string();
  }
  out.checkpoint = std::move(state);
  return out;
}

}  // namespace

std::string_view phase_name(Phase phase) { return phase == Phase::Rank ? "rank" : "finetune"; }

Phase parse_phase(std::string_view name) {
  if (name == "rank") return Phase::Rank;
  if (name == "finetune") return Phase::Finetune;
  throw ConfigError("unknown phase '" + std::string(name) + "'");
}

std::string_view strategy_name(Strategy strategy) {
  return strategy == Strategy::Efficient ? "efficient" : "randompair";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "efficient") return Strategy::Efficient;
  if (name == "randompair") return Strategy::RandomPair;
  throw ConfigError("unknown strategy '" + std::string(name) + "' (expected efficient or randompair)");
}

TrainConfig TrainConfig::ranking_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::finetune_defaults() {
  TrainConfig c;
  c.phase = Phase::Finetune;
  c.learning_rate = 1e-4;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(lr_decay > 0.0)) throw ConfigError("learning-rate decay factor must be positive");
  if (lr_step == 0) throw ConfigError("learning-rate step interval must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (iterations == 0) throw ConfigError("iterations must be at least 1");
  if (!(batch.margin > 0.0f)) throw ConfigError("ranking margin must be positive");
  if (batch.patch_size == 0) throw ConfigError("patch size must be positive");
  if (batch.groups_per_batch == 0) throw ConfigError("groups per batch must be positive");
  if (finetune_batch == 0) throw ConfigError("fine-tuning batch size must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"phase", std::string(phase_name(phase))},
          {"strategy", std::string(strategy_name(strategy))},
          {"learning_rate", learning_rate},
          {"lr_decay", lr_decay},
          {"lr_step", lr_step},
          {"weight_decay", weight_decay},
          {"iterations", iterations},
          {"patch_size", batch.patch_size},
          {"groups_per_batch", batch.groups_per_batch},
          {"margin", batch.margin},
          {"pairs_per_iteration", pairs_per_iteration},
          {"finetune_batch", finetune_batch},
          {"seed", seed},
          {"init_seed", init_seed},
          {"probe_interval", probe_interval}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  static const std::vector<std::string> known = {
      "phase",          "strategy",         "learning_rate",       "lr_decay",       "lr_step",
      "weight_decay",   "iterations",       "patch_size",          "groups_per_batch", "margin",
      "pairs_per_iteration", "finetune_batch", "seed",             "init_seed",      "probe_interval"};
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown training config key '" + key + "'");
  try {
    if (j.contains("phase")) c.phase = parse_phase(j["phase"].get<std::string>());
    if (j.contains("strategy")) c.strategy = parse_strategy(j["strategy"].get<std::string>());
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.lr_step = j.value("lr_step", c.lr_step);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.iterations = j.value("iterations", c.iterations);
    c.batch.patch_size = j.value("patch_size", c.batch.patch_size);
    c.batch.groups_per_batch = j.value("groups_per_batch", c.batch.groups_per_batch);
    c.batch.margin = j.value("margin", c.batch.margin);
    c.pairs_per_iteration = j.value("pairs_per_iteration", c.pairs_per_iteration);
    c.finetune_batch = j.value("finetune_batch", c.finetune_batch);
    c.seed = j.value("seed", c.seed);
    c.init_seed = j.value("init_seed", c.init_seed);
    c.probe_interval = j.value("probe_interval", c.probe_interval);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  return c;
}

void sgd_step(ParameterStore& params, double lr, double weight_decay) {
  const auto lr_f = static_cast<float>(lr);
  const auto wd_f = static_cast<float>(weight_decay);
  for (auto& p : params) {
    auto value = p.value.data();
    auto grad = p.grad.data();
    for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr_f * (grad[i] + wd_f * value[i]);
    p.grad.fill(0.0f);
  }
}

double lr_schedule(std::size_t iteration, const TrainConfig& config) {
  return config.learning_rate * std::pow(config.lr_decay, static_cast<double>(iteration / config.lr_step));
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out.precision(17);
  out << "iteration,loss,lr,forward_count\n";
  for (const auto& r : curve) out << r.iteration << ',' << r.loss << ',' << r.lr << ',' << r.forward_count << '\n';
}

void TrainReport::write_probe_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out.precision(17);
  out << "iteration,forward_count,probe_loss\n";
  for (const auto& p : probe) out << p.iteration << ',' << p.forward_count << ',' << p.loss << '\n';
}

ProbeSet ProbeSet::build(const std::vector<const RankedGroup*>& groups, const BatchConfig& config,
                         std::size_t batches, std::uint64_t seed) {
  if (groups.empty()) throw ConfigError("probe set needs at least one group");
  ProbeSet probe;
  for (std::size_t b = 0; b < batches; ++b) {
    std::vector<const RankedGroup*> chosen;
    for (std::size_t i : batch_group_indices(groups.size(), config.groups_per_batch, seed, b))
      chosen.push_back(groups[i]);
    auto rng = iteration_rng(seed, kCropStream, b);
    probe.batches.push_back(assemble_minibatch(chosen, config, rng));
  }
  return probe;
}

double probe_loss(const Model& model, const ProbeSet& probe) {
  double total = 0.0;
  std::size_t pairs = 0;
  for (const auto& b : probe.batches) {
    const Tensor scores = forward(model.spec, model.params, b.images);
    total += batch_loss(scores.data(), b.labels);
    pairs += b.labels.comparable_pairs();
  }
  return pairs ? total / static_cast<double>(pairs) : 0.0;
}

TrainOutcome train_ranking(const TrainConfig& config, const std::vector<const RankedGroup*>& groups,
                           const std::optional<ModelCheckpoint>& resume, const TrainHooks& hooks) {
  common_level_count(groups);
  return run_ranking_loop(config, resume, hooks, [&](Model& model, std::size_t t) {
    std::vector<const RankedGroup*> chosen;
    for (std::size_t i : batch_group_indices(groups.size(), config.batch.groups_per_batch, config.seed, t))
      chosen.push_back(groups[i]);
    auto rng = iteration_rng(config.seed, kCropStream, t);
    const MiniBatch batch = assemble_minibatch(chosen, config.batch, rng);
    const PairGradientStats stats = efficient_pairwise_gradient(model.spec, model.params, batch.images, batch.labels);
    const double per_pair = stats.comparable_pairs ? stats.loss / static_cast<double>(stats.comparable_pairs) : 0.0;
    return std::pair{per_pair, stats.forward_passes};
  });
}

TrainOutcome train_ranking_randompair_baseline(const TrainConfig& config,
                                               const std::vector<const RankedGroup*>& groups,
                                               const std::optional<ModelCheckpoint>& resume,
                                               const TrainHooks& hooks) {
  const std::size_t levels = common_level_count(groups);
  const std::size_t pairs =
      config.pairs_per_iteration ? config.pairs_per_iteration : std::max<std::size_t>(1, config.images_per_batch(levels) / 2);
  return run_ranking_loop(config, resume, hooks, [&, pairs](Model& model, std::size_t t) {
    auto rng = iteration_rng(config.seed, kPairStream, t);
    // Each sampled pair becomes its own two-image block: l = +1 inside the
    // block and 0 everywhere else, so only the sampled pairs contribute.
    std::vector<Tensor> images;
    std::vector<std::size_t> block, level;
    for (std::size_t p = 0; p < pairs; ++p) {
      const RankedGroup& g = *groups[uniform_index(rng, groups.size())];
      const std::size_t a = uniform_index(rng, levels);
      std::size_t b = uniform_index(rng, levels - 1);
      if (b >= a) ++b;
      const Shape& shape = g.distorted[a].shape();
      const Crop crop = sample_crop(shape[0], shape[1], config.batch.patch_size, rng);
      for (std::size_t k : {a, b}) {
        Tensor patch = network_patch(g.distorted[k], crop);
        patch.reshape({1, crop.size, crop.size});
        images.push_back(std::move(patch));
        block.push_back(p);
        level.push_back(k);
      }
    }
    const auto labels = ComparabilityMatrix::from_levels(block, level, config.batch.margin);
    const PairGradientStats stats = efficient_pairwise_gradient(model.spec, model.params, stack(images), labels);
    return std::pair{stats.loss / static_cast<double>(pairs), stats.forward_passes};
  });
}

double regression_loss(std::span<const float> predictions, std::span<const float> targets,
                       std::vector<float>* grad) {
  if (predictions.size() != targets.size())
    throw ShapeError("regression loss: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(targets.size()) + " targets");
  if (predictions.empty()) throw ConfigError("regression loss needs at least one sample");
  const double M = static_cast<double>(predictions.size());
  double loss = 0.0;
  if (grad) grad->assign(predictions.size(), 0.0f);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = static_cast<double>(predictions[i]) - targets[i];
    loss += d * d;
    if (grad) (*grad)[i] = static_cast<float>(2.0 * d / M);
  }
  return loss / M;
}

TrainOutcome finetune_regression(const ModelCheckpoint& start, const std::vector<const LabeledSample*>& samples,
                                 const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (samples.empty()) throw ConfigError("fine-tuning needs at least one labeled sample");
  ModelCheckpoint state = start;
  if (start.phase == Phase::Rank) {
    // Fresh phase: keep the branch weights, restart the counters.
    state.iteration = 0;
    state.forward_count = 0;
  }
  state.phase = Phase::Finetune;
  state.config = config;
  state.rng_seed = config.seed;

  TrainOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t end = hooks.stop_after ? std::min(hooks.stop_after, config.iterations) : config.iterations;
  const std::size_t batch_size = std::min(config.finetune_batch, samples.size());
  for (std::size_t t = state.iteration; t < end; ++t) {
    const double lr = lr_schedule(t, config);
    auto rng = iteration_rng(config.seed, kCropStream, t);
    std::vector<Tensor> patches;
    std::vector<float> targets;
    for (std::size_t i : batch_group_indices(samples.size(), batch_size, derive_seed(config.seed, kOrderStream), t)) {
      const LabeledSample& s = *samples[i];
      if (s.image.rank() != 2) throw ShapeError("fine-tuning images must be [H, W]");
      Tensor p = network_patch(s.image, sample_crop(s.image.dim(0), s.image.dim(1), config.batch.patch_size, rng));
      p.reshape({1, config.batch.patch_size, config.batch.patch_size});
      patches.push_back(std::move(p));
      targets.push_back(s.mos);
    }
    ActivationCache cache;
    const Tensor scores = forward(state.model.spec, state.model.params, stack(patches), &cache);
    std::vector<float> grad;
    const double loss = regression_loss(scores.data(), targets, &grad);
    backward(state.model.spec, state.model.params, cache, grad);
    sgd_step(state.model.params, lr, config.weight_decay);
    state.forward_count += patches.size();
    state.iteration = t + 1;
    state.learning_rate = lr;
    const TrainRecord rec{t, loss, lr, state.forward_count};
    out.report.curve.push_back(rec);
    if (hooks.on_iteration) hooks.on_iteration(rec);
    if (!hooks.checkpoint_path.empty() && hooks.checkpoint_interval &&
        state.iteration % hooks.checkpoint_interval == 0)
      save_checkpoint(hooks.checkpoint_path, state);
  }
  out.report.forward_count = state.forward_count;
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!hooks.checkpoint_path.empty()) {
    save_checkpoint(hooks.checkpoint_path, state);
    out.report.checkpoint_path = hooks.checkpoint_path.string();
  }
  out.checkpoint = std::move(state);
  return out;
}

}  // namespace rankiqa
