#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rankiqa/distortion.hpp"
#include "rankiqa/ranking_loss.hpp"
#include "rankiqa/tensor.hpp"

namespace rankiqa {

// ---------------------------------------------------------------------------
// Generated corpus: <root>/<kind>/<reference_id>/level_<k>.pgm + manifest.json

struct CorpusReference {
  std::string id;
  std::string source;
};

struct CorpusManifest {
  static constexpr int kVersion = 1;

  std::vector<DistortionSpec> kinds;
  std::vector<CorpusReference> references;

  std::size_t distorted_files() const;
  void save(const std::filesystem::path& path) const;
  static CorpusManifest load(const std::filesystem::path& path);
};

std::filesystem::path corpus_image_path(const std::filesystem::path& root, DistortionKind kind,
                                        const std::string& reference_id, std::size_t level);

struct Corpus {
  std::filesystem::path root;
  CorpusManifest manifest;
  std::vector<RankedGroup> groups;
};

// Synthesises every (reference, kind) group, writes the PGM tree and manifest
// under `root`. Groups for distinct references are built in parallel.
CorpusManifest generate_corpus(const std::vector<std::pair<std::string, Tensor>>& references,
                               const std::vector<DistortionSpec>& kinds,
                               const std::filesystem::path& root,
                               const std::vector<std::string>& sources = {});

// Loads all groups listed in <root>/manifest.json. References are loaded when
// their source file still exists. Throws FormatError listing missing files.
Corpus load_corpus(const std::filesystem::path& root);

// ---------------------------------------------------------------------------
// Sub-image sampling and mini-batches.

struct Crop {
  std::size_t y = 0;
  std::size_t x = 0;
  std::size_t size = 0;
};

// Uniform axis-aligned crop offset; throws ConfigError if size exceeds the image.
Crop sample_crop(std::size_t height, std::size_t width, std::size_t size, std::mt19937_64& rng);
Tensor extract_patch(const Tensor& image, const Crop& crop);
Tensor sample_subimage(const Tensor& image, std::size_t size, std::mt19937_64& rng);

// Local contrast normalisation (x - mu) / (sd + c), where mu and sd are
// Gaussian-weighted local mean and standard deviation.
Tensor local_contrast_normalize(const Tensor& image, double window_sigma = 2.0, double c = 0.01);

// A crop as the network sees it: extract_patch followed by
// local_contrast_normalize. Every training and evaluation path uses this.
Tensor network_patch(const Tensor& image, const Crop& crop);

// Set when the patch side is below a third of the image side.
std::optional<std::string> patch_size_warning(std::size_t height, std::size_t width,
                                              std::size_t size);

struct BatchConfig {
  std::size_t patch_size = 48;
  std::size_t groups_per_batch = 2;
  float margin = 1.0f;
};

struct MiniBatch {
  Tensor images;  // [M, 1, P, P]
  std::vector<std::size_t> group_ids;
  std::vector<std::size_t> level_indices;
  std::vector<DistortionKind> kinds;
  ComparabilityMatrix labels;
  // M^d for each distortion kind present; D = kind_counts.size().
  std::map<DistortionKind, std::size_t> kind_counts;

  std::size_t size() const { return group_ids.size(); }
  std::size_t distortion_types() const { return kind_counts.size(); }
};

// One crop window per group shared by all its levels. Samples are comparable
// only within a group (same reference and kind).
MiniBatch assemble_minibatch(const std::vector<const RankedGroup*>& groups,
                             const BatchConfig& config, std::mt19937_64& rng);

// Deterministic group order for iteration `iteration`: each epoch is a fresh
// permutation of [0, group_count) seeded from (seed, epoch).
std::vector<std::size_t> batch_group_indices(std::size_t group_count, std::size_t per_batch,
                                             std::uint64_t seed, std::uint64_t iteration);

// ---------------------------------------------------------------------------
// Labeled IQA data for fine-tuning and evaluation.

struct LabeledSample {
  std::string path;          // relative to the manifest directory
  std::string reference_id;  // parent directory name of `path`
  Tensor image;
  float mos = 0.0f;
};

struct LabeledDataset {
  std::vector<LabeledSample> samples;
  float score_lo = 0.0f;
  float score_hi = 100.0f;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.8;
  std::vector<std::string> train_references;
  std::vector<std::string> test_references;

  std::vector<std::size_t> train_indices() const;
  std::vector<std::size_t> test_indices() const;
};

// Splits sorted unique ids into (train, test) after a seeded shuffle;
// round(fraction * count) ids go to train.
std::pair<std::vector<std::string>, std::vector<std::string>> split_by_reference(
    std::vector<std::string> ids, double train_fraction, std::uint64_t seed);

// Manifest format (one header key per line, then samples):
//   range <lo> <hi>
//   split_seed <int>
//   train_fraction <float>     (optional, default 0.8)
//   <relative_path> <mos>
// Lines starting with '#' are comments.
LabeledDataset load_labeled_dataset(const std::filesystem::path& manifest_path);

// Writes a labeled manifest for a corpus using the synthetic score
// 100 * (1 - level / (levels - 1)), i.e. -level rescaled to [0, 100].
void write_synthetic_labels(const CorpusManifest& manifest,
                            const std::filesystem::path& corpus_root,
                            const std::filesystem::path& manifest_path, std::uint64_t split_seed,
                            double train_fraction = 0.8);

float synthetic_mos(std::size_t level, std::size_t level_count);

}  // namespace rankiqa
