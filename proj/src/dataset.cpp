#include "rankiqa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "rankiqa/errors.hpp"
#include "rankiqa/pgm.hpp"
#include "rankiqa/seeding.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rankiqa {

std::size_t CorpusManifest::distorted_files() const {
  std::size_t n = 0;
  for (const auto& k : kinds) n += k.levels.size() * references.size();
  return n;
}

void CorpusManifest::save(const fs::path& path) const {
  json j;
  j["format"] = "rankiqa-corpus";
  j["version"] = kVersion;
  j["kinds"] = json::array();
  for (const auto& k : kinds) {
    j["kinds"].push_back({{"kind", std::string(kind_name(k.kind))}, {"levels", k.levels}, {"seed", k.seed}});
  }
  j["references"] = json::array();
  for (const auto& r : references) j["references"].push_back({{"id", r.id}, {"source", r.source}});
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write corpus manifest " + path.string());
  out << j.dump(2) << '\n';
}

CorpusManifest CorpusManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("corpus manifest not found: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "rankiqa-corpus")
    throw FormatError(path.string() + " is not a corpus manifest");
  if (j.value("version", 0) != kVersion)
    throw FormatError(path.string() + ": unsupported corpus manifest version " +
                      std::to_string(j.value("version", 0)));
  CorpusManifest m;
  try {
    for (const auto& k : j.at("kinds")) {
      DistortionSpec spec{parse_kind(k.at("kind").get<std::string>()),
                          k.at("levels").get<std::vector<double>>(), k.at("seed").get<std::uint64_t>()};
      spec.validate();
      m.kinds.push_back(std::move(spec));
    }
    for (const auto& r : j.at("references"))
      m.references.push_back({r.at("id").get<std::string>(), r.value("source", "")});
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

fs::path corpus_image_path(const fs::path& root, DistortionKind kind,
                           const std::string& reference_id, std::size_t level) {
  return root / std::string(kind_name(kind)) / reference_id / ("level_" + std::to_string(level) + ".pgm");
}

CorpusManifest generate_corpus(const std::vector<std::pair<std::string, Tensor>>& references,
                               const std::vector<DistortionSpec>& kinds, const fs::path& root,
                               const std::vector<std::string>& sources) {
  if (references.empty()) throw ConfigError("no reference images to distort");
  if (kinds.empty()) throw ConfigError("no distortion kinds requested");
  for (const auto& k : kinds) k.validate();
  std::set<std::string> seen;
  for (const auto& [id, img] : references)
    if (!seen.insert(id).second) throw ConfigError("duplicate reference id " + id);

  CorpusManifest manifest;
  manifest.kinds = kinds;
  for (std::size_t i = 0; i < references.size(); ++i)
    manifest.references.push_back({references[i].first, i < sources.size() ? sources[i] : ""});

  for (const auto& k : kinds)
    for (const auto& [id, img] : references) fs::create_directories(root / std::string(kind_name(k.kind)) / id);

  const auto count = static_cast<std::ptrdiff_t>(references.size());
  std::vector<std::string> errors(references.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t r = 0; r < count; ++r) {
    const auto& [id, img] = references[static_cast<std::size_t>(r)];
    try {
      for (const auto& spec : kinds) {
        const RankedGroup g = synthesize_ranked_group(id, img, spec);
        for (std::size_t k = 0; k < g.size(); ++k) write_pgm(corpus_image_path(root, spec.kind, id, k), g.distorted[k]);
      }
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(r)] = id + ": " + e.what();
    }
  }
  std::string joined;
  for (const auto& e : errors)
    if (!e.empty()) joined += "\n  " + e;
  if (!joined.empty()) throw FormatError("corpus generation failed:" + joined);

  manifest.save(root / "manifest.json");
  return manifest;
}

Corpus load_corpus(const fs::path& root) {
  Corpus corpus{root, CorpusManifest::load(root / "manifest.json"), {}};
  std::vector<std::string> missing;
  for (const auto& spec : corpus.manifest.kinds) {
    for (const auto& ref : corpus.manifest.references) {
      RankedGroup g{ref.id, spec.kind, {}, {}};
      for (std::size_t k = 0; k < spec.levels.size(); ++k) {
        const fs::path p = corpus_image_path(root, spec.kind, ref.id, k);
        if (!fs::exists(p)) {
          missing.push_back(p.string());
          continue;
        }
        g.distorted.push_back(read_pgm(p));
      }
      if (!ref.source.empty() && fs::exists(ref.source)) g.reference = read_pgm(ref.source);
      corpus.groups.push_back(std::move(g));
    }
  }
  if (!missing.empty()) {
    std::string msg = "corpus " + root.string() + " is missing " + std::to_string(missing.size()) + " file(s):";
    for (const auto& m : missing) msg += "\n  " + m;
    throw FormatError(msg);
  }
  return corpus;
}

Crop sample_crop(std::size_t height, std::size_t width, std::size_t size, std::mt19937_64& rng) {
  if (size == 0 || size > height || size > width) {
    throw ConfigError("patch size " + std::to_string(size) + " does not fit a " +
                      std::to_string(height) + "x" + std::to_string(width) + " image");
  }
  const std::size_t y = uniform_index(rng, height - size + 1);
  const std::size_t x = uniform_index(rng, width - size + 1);
  return {y, x, size};
}

Tensor extract_patch(const Tensor& image, const Crop& crop) {
  if (image.rank() != 2 || crop.y + crop.size > image.dim(0) || crop.x + crop.size > image.dim(1))
    throw ShapeError("crop window exceeds image " + shape_string(image.shape()));
  Tensor patch({crop.size, crop.size});
  const std::size_t W = image.dim(1);
  for (std::size_t y = 0; y < crop.size; ++y)
    std::copy_n(image.data().begin() + static_cast<std::ptrdiff_t>((crop.y + y) * W + crop.x), crop.size,
                patch.data().begin() + static_cast<std::ptrdiff_t>(y * crop.size));
  return patch;
}

Tensor sample_subimage(const Tensor& image, std::size_t size, std::mt19937_64& rng) {
  if (image.rank() != 2) throw ShapeError("sample_subimage expects an [H, W] image");
  return extract_patch(image, sample_crop(image.dim(0), image.dim(1), size, rng));
}

std::optional<std::string> patch_size_warning(std::size_t height, std::size_t width, std::size_t size) {
  if (3 * size < height || 3 * size < width) {
    return "patch size " + std::to_string(size) + " is below a third of the " + std::to_string(height) + "x" +
           std::to_string(width) + " image; crops may miss global context";
  }
  return std::nullopt;
}

Tensor local_contrast_normalize(const Tensor& image, double window_sigma, double c) {
  if (!(c > 0.0)) throw ConfigError("contrast normalisation constant must be positive");
  Tensor squared = image;
  for (float& v : squared.data()) v *= v;
  const Tensor mu = gaussian_blur(image, window_sigma);
  const Tensor mu2 = gaussian_blur(squared, window_sigma);
  Tensor out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double m = mu[i];
    const double sd = std::sqrt(std::max(0.0, static_cast<double>(mu2[i]) - m * m));
    out[i] = static_cast<float>((image[i] - m) / (sd + c));
  }
  return out;
}

Tensor network_patch(const Tensor& image, const Crop& crop) {
  return local_contrast_normalize(extract_patch(image, crop));
}

MiniBatch assemble_minibatch(const std::vector<const RankedGroup*>& groups, const BatchConfig& config,
                             std::mt19937_64& rng) {
  if (groups.empty()) throw ConfigError("cannot assemble a mini-batch from zero groups");
  MiniBatch batch;
  std::vector<Tensor> patches;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const RankedGroup& g = *groups[gi];
    if (g.distorted.empty()) throw ConfigError("group " + g.reference_id + " has no distorted images");
    const Shape& shape = g.distorted.front().shape();
    const Crop crop = sample_crop(shape.at(0), shape.at(1), config.patch_size, rng);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (g.distorted[k].shape() != shape) throw ShapeError("group " + g.reference_id + " mixes image sizes");
      Tensor p = network_patch(g.distorted[k], crop);
      p.reshape({1, config.patch_size, config.patch_size});
      patches.push_back(std::move(p));
      batch.group_ids.push_back(gi);
      batch.level_indices.push_back(k);
      batch.kinds.push_back(g.kind);
      ++batch.kind_counts[g.kind];
    }
  }
  batch.images = stack(patches);
  batch.labels = ComparabilityMatrix::from_levels(batch.group_ids, batch.level_indices, config.margin);
  return batch;
}

std::vector<std::size_t> batch_group_indices(std::size_t group_count, std::size_t per_batch,
                                             std::uint64_t seed, std::uint64_t iteration) {
  if (group_count == 0) throw ConfigError("no groups to sample from");
  per_batch = std::min(per_batch, group_count);
  std::vector<std::size_t> out;
  out.reserve(per_batch);
  // Position in the infinite concatenation of per-epoch permutations.
  std::uint64_t pos = iteration * per_batch;
  std::uint64_t cached_epoch = UINT64_MAX;
  std::vector<std::size_t> perm(group_count);
  while (out.size() < per_batch) {
    const std::uint64_t epoch = pos / group_count;
    if (epoch != cached_epoch) {
      for (std::size_t i = 0; i < group_count; ++i) perm[i] = i;
      std::mt19937_64 rng(derive_seed(seed, epoch));
      portable_shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    const std::size_t candidate = perm[pos % group_count];
    // A batch never repeats a group when it straddles an epoch boundary.
    if (std::find(out.begin(), out.end(), candidate) == out.end()) out.push_back(candidate);
    ++pos;
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::train_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (std::binary_search(train_references.begin(), train_references.end(), samples[i].reference_id))
      out.push_back(i);
  return out;
}

std::vector<std::size_t> LabeledDataset::test_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (std::binary_search(test_references.begin(), test_references.end(), samples[i].reference_id))
      out.push_back(i);
  return out;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_by_reference(
    std::vector<std::string> ids, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
    throw ConfigError("train fraction must be in [0, 1]");
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::mt19937_64 rng(derive_seed(seed, 0x5b117));
  portable_shuffle(ids.begin(), ids.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
  std::vector<std::string> train(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::string> test(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

LabeledDataset load_labeled_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("labeled manifest not found: " + manifest_path.string());
  LabeledDataset ds;
  bool have_range = false, have_seed = false;
  std::vector<std::string> missing, malformed;
  std::string line;
  std::size_t line_no = 0;
  const fs::path base = manifest_path.parent_path();
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "range") {
      if (!(ls >> ds.score_lo >> ds.score_hi) || !(ds.score_lo < ds.score_hi))
        malformed.push_back("line " + std::to_string(line_no) + ": bad range");
      have_range = true;
    } else if (key == "split_seed") {
      if (!(ls >> ds.split_seed)) malformed.push_back("line " + std::to_string(line_no) + ": bad split_seed");
      have_seed = true;
    } else if (key == "train_fraction") {
      if (!(ls >> ds.train_fraction)) malformed.push_back("line " + std::to_string(line_no) + ": bad train_fraction");
    } else {
      float mos = 0.0f;
      std::string extra;
      if (!(ls >> mos) || (ls >> extra) || !std::isfinite(mos)) {
        malformed.push_back("line " + std::to_string(line_no) + ": expected '<path> <mos>'");
        continue;
      }
      LabeledSample s;
      s.path = key;
      s.reference_id = fs::path(key).parent_path().filename().string();
      if (s.reference_id.empty()) s.reference_id = fs::path(key).stem().string();
      s.mos = mos;
      ds.samples.push_back(std::move(s));
    }
  }
  if (!have_range) malformed.push_back("missing 'range <lo> <hi>' header");
  if (!have_seed) malformed.push_back("missing 'split_seed <int>' header");
  for (const auto& s : ds.samples)
    if (have_range && (s.mos < ds.score_lo || s.mos > ds.score_hi))
      malformed.push_back(s.path + ": score " + std::to_string(s.mos) + " outside declared range");
  if (!malformed.empty()) {
    std::string msg = manifest_path.string() + " is malformed:";
    for (const auto& m : malformed) msg += "\n  " + m;
    throw FormatError(msg);
  }
  for (auto& s : ds.samples) {
    const fs::path p = base / s.path;
    if (!fs::exists(p)) {
      missing.push_back(p.string());
      continue;
    }
    s.image = read_pgm(p);
  }
  if (!missing.empty()) {
    std::string msg = manifest_path.string() + " references missing file(s):";
    for (const auto& m : missing) msg += "\n  " + m;
    throw FormatError(msg);
  }
  std::vector<std::string> ids;
  for (const auto& s : ds.samples) ids.push_back(s.reference_id);
  std::tie(ds.train_references, ds.test_references) = split_by_reference(ids, ds.train_fraction, ds.split_seed);
  return ds;
}

float synthetic_mos(std::size_t level, std::size_t level_count) {
  if (level_count < 2) return 100.0f;
  return 100.0f * (1.0f - static_cast<float>(level) / static_cast<float>(level_count - 1));
}

void write_synthetic_labels(const CorpusManifest& manifest, const fs::path& corpus_root,
                            const fs::path& manifest_path, std::uint64_t split_seed,
                            double train_fraction) {
  std::ofstream out(manifest_path);
  if (!out) throw FormatError("cannot write labeled manifest " + manifest_path.string());
  out << "# synthetic quality scores: level 0 = 100, worst level = 0\n";
  out << "range 0 100\n";
  out << "split_seed " << split_seed << '\n';
  out << "train_fraction " << train_fraction << '\n';
  const fs::path base = fs::absolute(manifest_path).parent_path();
  for (const auto& spec : manifest.kinds)
    for (const auto& ref : manifest.references)
      for (std::size_t k = 0; k < spec.levels.size(); ++k) {
        const fs::path img = fs::absolute(corpus_image_path(corpus_root, spec.kind, ref.id, k));
        out << fs::relative(img, base).generic_string() << ' ' << synthetic_mos(k, spec.levels.size()) << '\n';
      }
}

}  // namespace rankiqa
