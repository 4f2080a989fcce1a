#include "rankiqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "rankiqa/errors.hpp"
#include "rankiqa/seeding.hpp"

namespace rankiqa {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, std::string_view what) {
  if (a.size() != b.size())
    throw ShapeError(std::string(what) + ": vectors differ in length (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  if (a.size() < 2) throw ShapeError(std::string(what) + " needs at least 2 samples");
}

// nullopt when either vector has zero variance.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace

double lcc(std::span<const double> y, std::span<const double> y_hat) {
  check_pair(y, y_hat, "lcc");
  const auto r = pearson(y, y_hat);
  if (!r) throw UndefinedCorrelation("lcc is undefined for a constant score vector");
  return *r;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double srocc(std::span<const double> y, std::span<const double> y_hat) {
  check_pair(y, y_hat, "srocc");
  const auto ry = average_ranks(y);
  const auto rp = average_ranks(y_hat);
  return pearson(ry, rp).value_or(0.0);
}

double predict_image(const NetworkSpec& spec, const ParameterStore& params, const Tensor& image,
                     std::size_t crops, std::size_t patch_size, std::uint64_t seed) {
  if (image.rank() != 2) throw ShapeError("predict_image expects an [H, W] image");
  if (crops == 0) throw ConfigError("crops_per_image must be at least 1");
  const std::size_t side = std::min({patch_size, image.dim(0), image.dim(1)});
  std::mt19937_64 rng(seed);
  std::vector<Tensor> patches;
  patches.reserve(crops);
  for (std::size_t c = 0; c < crops; ++c) {
    Tensor p = network_patch(image, sample_crop(image.dim(0), image.dim(1), side, rng));
    p.reshape({1, side, side});
    patches.push_back(std::move(p));
  }
  const Tensor scores = forward(spec, params, stack(patches));
  double total = 0.0;
  for (float s : scores.data()) total += s;
  return total / static_cast<double>(crops);
}

EvalResult evaluate_model(const NetworkSpec& spec, const ParameterStore& params,
                          const std::vector<const LabeledSample*>& samples, const EvalConfig& config) {
  if (samples.empty()) throw ConfigError("evaluation needs at least one labeled sample");
  EvalResult result;
  result.per_image.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const LabeledSample& s = *samples[i];
    result.per_image[i] = {s.path, s.mos,
                           predict_image(spec, params, s.image, config.crops_per_image, config.patch_size,
                                         derive_seed(config.seed, i))};
  }
  if (samples.size() < 2) return result;
  std::vector<double> y, y_hat;
  for (const auto& p : result.per_image) {
    y.push_back(p.y);
    y_hat.push_back(p.y_hat);
  }
  try {
    result.lcc = lcc(y, y_hat);
  } catch (const UndefinedCorrelation&) {
    result.lcc.reset();
  }
  result.srocc = srocc(y, y_hat);
  return result;
}

void write_eval_csv(const std::filesystem::path& path, const EvalResult& result) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out.precision(9);
  out << "id,y,y_hat\n";
  for (const auto& p : result.per_image) out << p.id << ',' << p.y << ',' << p.y_hat << '\n';
  out << "# " << eval_summary(result) << '\n';
}

std::string eval_summary(const EvalResult& result) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << "N=" << result.count() << " LCC=";
  if (result.lcc)
    os << *result.lcc;
  else
    os << "undefined(constant predictions)";
  os << " SROCC=" << result.srocc;
  return os.str();
}

double LevelScores::mean() const {
  if (scores.empty()) return 0.0;
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

std::vector<LevelScores> score_levels(const NetworkSpec& spec, const ParameterStore& params,
                                      const std::vector<const RankedGroup*>& groups,
                                      const EvalConfig& config) {
  std::map<std::pair<DistortionKind, std::size_t>, std::vector<double>> buckets;
  std::size_t image_index = 0;
  for (const RankedGroup* g : groups)
    for (std::size_t k = 0; k < g->size(); ++k)
      buckets[{g->kind, k}].push_back(predict_image(spec, params, g->distorted[k], config.crops_per_image,
                                                    config.patch_size, derive_seed(config.seed, image_index++)));
  std::vector<LevelScores> out;
  for (auto& [key, scores] : buckets) out.push_back({key.first, key.second, std::move(scores)});
  return out;
}

std::vector<LevelHistogram> score_histograms(const std::vector<LevelScores>& levels, std::size_t bins) {
  if (bins == 0) throw ConfigError("histograms need at least one bin");
  std::map<DistortionKind, std::pair<double, double>> range;
  for (const auto& l : levels)
    for (double s : l.scores) {
      auto [it, inserted] = range.try_emplace(l.kind, s, s);
      it->second.first = std::min(it->second.first, s);
      it->second.second = std::max(it->second.second, s);
    }
  std::vector<LevelHistogram> out;
  for (const auto& l : levels) {
    LevelHistogram h{l.kind, l.level, {}};
    auto it = range.find(l.kind);
    double lo = 0.0, hi = 1.0;
    if (it != range.end()) std::tie(lo, hi) = it->second;
    if (hi <= lo) hi = lo + 1.0;
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b)
      h.bins.push_back({lo + width * static_cast<double>(b), lo + width * static_cast<double>(b + 1), 0});
    for (double s : l.scores) {
      auto b = static_cast<std::size_t>((s - lo) / width);
      ++h.bins[std::min(b, bins - 1)].count;
    }
    out.push_back(std::move(h));
  }
  return out;
}

std::vector<LevelSeparation> level_separation(const std::vector<LevelScores>& levels) {
  std::map<DistortionKind, std::map<std::size_t, double>> means;
  for (const auto& l : levels) means[l.kind][l.level] = l.mean();
  std::vector<LevelSeparation> out;
  for (const auto& [kind, per_level] : means) {
    LevelSeparation sep{kind, {}, 0, 0};
    for (const auto& [level, m] : per_level) sep.means.push_back(m);
    for (std::size_t k = 0; k + 1 < sep.means.size(); ++k) {
      ++sep.adjacent_pairs;
      if (sep.means[k] > sep.means[k + 1]) ++sep.ordered_adjacent;
    }
    out.push_back(std::move(sep));
  }
  return out;
}

double level_srocc(const std::vector<LevelScores>& levels) {
  std::vector<double> truth, predicted;
  for (const auto& l : levels)
    for (double s : l.scores) {
      truth.push_back(-static_cast<double>(l.level));
      predicted.push_back(s);
    }
  return srocc(truth, predicted);
}

void write_histogram_csv(const std::filesystem::path& path, const std::vector<LevelHistogram>& histograms) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out.precision(9);
  out << "kind,level,bin_lo,bin_hi,count\n";
  for (const auto& h : histograms)
    for (const auto& b : h.bins)
      out << kind_name(h.kind) << ',' << h.level << ',' << b.lo << ',' << b.hi << ',' << b.count << '\n';
}

}  // namespace rankiqa
