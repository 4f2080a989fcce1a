#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "rankiqa/dataset.hpp"
#include "rankiqa/network.hpp"

namespace rankiqa {

enum class Phase { Rank, Finetune };
enum class Strategy { Efficient, RandomPair };

std::string_view phase_name(Phase phase);
Phase parse_phase(std::string_view name);
std::string_view strategy_name(Strategy strategy);
Strategy parse_strategy(std::string_view name);

struct TrainConfig {
  Phase phase = Phase::Rank;
  Strategy strategy = Strategy::Efficient;
  double learning_rate = 1e-3;
  double lr_decay = 0.1;
  std::size_t lr_step = 800;
  double weight_decay = 5e-4;
  std::size_t iterations = 2000;
  BatchConfig batch;
  // Random-pair baseline: pairs drawn per iteration. 0 matches the efficient
  // strategy's forward budget (M / 2 pairs).
  std::size_t pairs_per_iteration = 0;
  // Fine-tuning mini-batch size (one sub-image per training image).
  std::size_t finetune_batch = 10;
  std::uint64_t seed = 1;
  std::uint64_t init_seed = 1;
  // Probe-loss evaluation period in iterations; 0 disables.
  std::size_t probe_interval = 0;

  static TrainConfig ranking_defaults();
  static TrainConfig finetune_defaults();

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  // Fields absent from `j` keep the values of `base`.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

  // Images per efficient mini-batch for groups of `levels` images.
  std::size_t images_per_batch(std::size_t levels) const { return batch.groups_per_batch * levels; }
};

// theta <- theta - lr * (grad + weight_decay * theta), then zero the gradients.
void sgd_step(ParameterStore& params, double lr, double weight_decay);

// base * decay^floor(iteration / step).
double lr_schedule(std::size_t iteration, const TrainConfig& config);

struct ModelCheckpoint {
  static constexpr std::uint8_t kFormatVersion = 1;

  Model model;
  Phase phase = Phase::Rank;
  std::size_t iteration = 0;       // iterations completed
  std::size_t forward_count = 0;   // cumulative branch passes
  double learning_rate = 0.0;      // lr used by the last completed iteration
  TrainConfig config;
  // Batch streams are derived from (rng_seed, iteration), so this pair is the
  // complete random state of a run.
  std::uint64_t rng_seed = 0;
};

// File layout: "RIQA", 1-byte version, u32 LE header length, JSON header
// (architecture, config, counts, parameter shapes), then raw little-endian
// float32 parameter blocks in ParameterStore order. Written to a temporary
// file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& checkpoint);
// Throws FormatError for corrupt or truncated files and version mismatches.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

struct TrainRecord {
  std::size_t iteration = 0;
  double loss = 0.0;  // mean loss per evaluated pair (rank) or per image (finetune)
  double lr = 0.0;
  std::size_t forward_count = 0;
};

struct ProbePoint {
  std::size_t iteration = 0;  // iterations completed
  std::size_t forward_count = 0;
  double loss = 0.0;
};

struct TrainReport {
  std::vector<TrainRecord> curve;
  std::vector<ProbePoint> probe;
  std::size_t forward_count = 0;
  double wall_seconds = 0.0;
  std::string checkpoint_path;

  void write_csv(const std::filesystem::path& path) const;        // iteration,loss,lr,forward_count
  void write_probe_csv(const std::filesystem::path& path) const;  // iteration,forward_count,probe_loss
};

// Fixed mini-batches for measuring ranking loss independently of the
// training strategy.
struct ProbeSet {
  std::vector<MiniBatch> batches;

  static ProbeSet build(const std::vector<const RankedGroup*>& groups, const BatchConfig& config,
                        std::size_t batches, std::uint64_t seed);
};

// Mean hinge loss per comparable pair over the probe batches.
double probe_loss(const Model& model, const ProbeSet& probe);

struct TrainHooks {
  const ProbeSet* probe = nullptr;
  std::function<void(const TrainRecord&)> on_iteration;
  // Periodic checkpoints; empty path disables.
  std::filesystem::path checkpoint_path;
  std::size_t checkpoint_interval = 0;
  // Stop after this many total iterations (for interrupted-run tests); 0 = config.iterations.
  std::size_t stop_after = 0;
};

struct TrainOutcome {
  ModelCheckpoint checkpoint;
  TrainReport report;
};

// Phase 1 with all-pairs Siamese back-propagation: exactly M branch passes
// per iteration. Never reads absolute quality scores.
TrainOutcome train_ranking(const TrainConfig& config, const std::vector<const RankedGroup*>& groups,
                           const std::optional<ModelCheckpoint>& resume = std::nullopt,
                           const TrainHooks& hooks = {});

// Random-pair Siamese baseline: P random comparable pairs per iteration, each
// image its own branch pass (2P per iteration).
TrainOutcome train_ranking_randompair_baseline(const TrainConfig& config,
                                               const std::vector<const RankedGroup*>& groups,
                                               const std::optional<ModelCheckpoint>& resume = std::nullopt,
                                               const TrainHooks& hooks = {});

// Squared error (1/M) sum (y_i - yhat_i)^2 and its score gradient 2 (yhat_i - y_i) / M.
double regression_loss(std::span<const float> predictions, std::span<const float> targets,
                       std::vector<float>* grad = nullptr);

// Phase 2: fine-tunes a single branch taken from `start` (a ranking
// checkpoint, or a fine-tuning checkpoint to resume).
TrainOutcome finetune_regression(const ModelCheckpoint& start,
                                 const std::vector<const LabeledSample*>& samples,
                                 const TrainConfig& config, const TrainHooks& hooks = {});

}  // namespace rankiqa
