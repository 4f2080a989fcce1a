#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rankiqa/dataset.hpp"
#include "rankiqa/network.hpp"

namespace rankiqa {

// Pearson linear correlation. Throws ShapeError on length mismatch or N < 2
// and UndefinedCorrelation when either vector is constant.
double lcc(std::span<const double> y, std::span<const double> y_hat);

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

// Spearman rank-order correlation: Pearson correlation of average ranks, which
// reduces to 1 - 6 sum d^2 / (N (N^2 - 1)) without ties. A fully tied vector
// has no ordering and yields 0. Throws ShapeError for N < 2.
double srocc(std::span<const double> y, std::span<const double> y_hat);

struct ImageScore {
  std::string id;
  double y = 0.0;
  double y_hat = 0.0;
};

struct EvalResult {
  std::optional<double> lcc;  // empty when undefined (constant predictions)
  double srocc = 0.0;
  std::vector<ImageScore> per_image;

  std::size_t count() const { return per_image.size(); }
};

struct EvalConfig {
  std::size_t crops_per_image = 30;
  std::size_t patch_size = 48;
  std::uint64_t seed = 0;
};

// Mean network output over `crops` random square sub-images. A patch at
// least as large as the image uses the whole (square-cropped) image.
double predict_image(const NetworkSpec& spec, const ParameterStore& params, const Tensor& image,
                     std::size_t crops, std::size_t patch_size, std::uint64_t seed);

// Per-image predictions with independent crop streams derived from
// config.seed and the image position, then LCC and SROCC against the MOS.
EvalResult evaluate_model(const NetworkSpec& spec, const ParameterStore& params,
                          const std::vector<const LabeledSample*>& samples,
                          const EvalConfig& config);

void write_eval_csv(const std::filesystem::path& path, const EvalResult& result);
std::string eval_summary(const EvalResult& result);

struct LevelScores {
  DistortionKind kind = DistortionKind::GaussianBlur;
  std::size_t level = 0;
  std::vector<double> scores;

  double mean() const;
};

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

struct LevelHistogram {
  DistortionKind kind = DistortionKind::GaussianBlur;
  std::size_t level = 0;
  std::vector<HistogramBin> bins;
};

// Scores of every distorted image in `groups`, bucketed by (kind, level).
std::vector<LevelScores> score_levels(const NetworkSpec& spec, const ParameterStore& params,
                                      const std::vector<const RankedGroup*>& groups,
                                      const EvalConfig& config);

// Uniform bins over the observed score range of each kind.
std::vector<LevelHistogram> score_histograms(const std::vector<LevelScores>& levels,
                                             std::size_t bins = 30);

struct LevelSeparation {
  DistortionKind kind = DistortionKind::GaussianBlur;
  std::vector<double> means;
  // Adjacent level pairs (k, k+1) whose mean score strictly decreases.
  std::size_t ordered_adjacent = 0;
  std::size_t adjacent_pairs = 0;

  bool strictly_monotone() const { return ordered_adjacent == adjacent_pairs; }
};

std::vector<LevelSeparation> level_separation(const std::vector<LevelScores>& levels);

// SROCC between scores and the true quality order (-level) over all images.
double level_srocc(const std::vector<LevelScores>& levels);

void write_histogram_csv(const std::filesystem::path& path,
                         const std::vector<LevelHistogram>& histograms);

}  // namespace rankiqa
