#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rankiqa/dataset.hpp"
#include "rankiqa/errors.hpp"
#include "rankiqa/gradcheck.hpp"
#include "rankiqa/kernels.hpp"
#include "rankiqa/metrics.hpp"
#include "rankiqa/pgm.hpp"
#include "rankiqa/ranking_loss.hpp"
#include "rankiqa/seeding.hpp"
#include "rankiqa/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rankiqa;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
    for (const auto& [key, value] : j.items())
      if (key != "generate" && key != "rank" && key != "finetune" && key != "eval")
        throw ConfigError(path + ": unknown section '" + key + "' (expected generate, rank, finetune, eval)");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json section(const json& config, const char* name) {
  return config.contains(name) ? config.at(name) : json::object();
}

void write_manifest(const fs::path& out, const std::string& command, const Common& common,
                    const json& resolved, const json& seeds, int argc, char** argv) {
  fs::create_directories(out);
  json m;
  m["command"] = command;
  m["argv"] = std::vector<std::string>(argv, argv + argc);
  m["config_path"] = common.config_path;
  m["config"] = resolved;
  m["seeds"] = seeds;
  m["output_dir"] = fs::absolute(out).string();
  m["tool_version"] = kToolVersion;
  m["threads"] = kernels::max_threads();
  std::ofstream f(out / "run_manifest.json");
  if (!f) throw FormatError("cannot write " + (out / "run_manifest.json").string());
  f << m.dump(2) << '\n';
}

fs::path require_out(const Common& common) {
  if (common.out.empty()) throw ConfigError("--out is required");
  return common.out;
}

std::vector<DistortionKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<DistortionKind> kinds;
  for (const auto& n : names) kinds.push_back(parse_kind(n));
  return kinds;
}

std::vector<fs::path> image_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("reference directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no .pgm/.ppm reference images in " + dir.string());
  return files;
}

// Train/test reference split recorded in <corpus>/labels.txt, if present.
std::optional<LabeledDataset> corpus_labels(const fs::path& corpus) {
  const fs::path p = corpus / "labels.txt";
  if (!fs::exists(p)) return std::nullopt;
  return load_labeled_dataset(p);
}

std::vector<const RankedGroup*> select_groups(const Corpus& corpus, const std::vector<DistortionKind>& kinds,
                                              const std::vector<std::string>* references) {
  std::vector<const RankedGroup*> out;
  for (const auto& g : corpus.groups) {
    if (!kinds.empty() && std::find(kinds.begin(), kinds.end(), g.kind) == kinds.end()) continue;
    if (references && std::find(references->begin(), references->end(), g.reference_id) == references->end())
      continue;
    out.push_back(&g);
  }
  return out;
}

void print_progress(const TrainRecord& r, std::size_t total) {
  if ((r.iteration + 1) % 100 == 0 || r.iteration + 1 == total)
    std::printf("iter %6zu  loss %.6f  lr %.2e  forward %zu\n", r.iteration + 1, r.loss, r.lr, r.forward_count);
}

// ---------------------------------------------------------------------------

int cmd_make_refs(const Common& common, std::size_t count, std::size_t size, int argc, char** argv) {
  const fs::path out = require_out(common);
  const std::uint64_t seed = common.seed.value_or(1);
  write_manifest(out, "make-refs", common, {{"count", count}, {"size", size}}, {{"seed", seed}}, argc, argv);
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "ref_%03zu.pgm", i);
    write_pgm(out / name, synthetic_reference(size, size, derive_seed(seed, i)));
  }
  std::printf("wrote %zu references to %s\n", count, out.string().c_str());
  return 0;
}

int cmd_generate(const Common& common, const std::string& refs_dir, std::vector<std::string> kind_names,
                 double train_fraction, int argc, char** argv) {
  const fs::path out = require_out(common);
  const json cfg = section(load_config(common.config_path), "generate");
  const std::uint64_t seed = common.seed.value_or(cfg.value("seed", std::uint64_t{1}));
  if (kind_names.empty()) kind_names = cfg.value("kinds", std::vector<std::string>{"blur", "noise", "jpeg"});

  std::vector<DistortionSpec> specs;
  for (DistortionKind k : parse_kinds(kind_names)) {
    DistortionSpec s = DistortionSpec::defaults(k, seed);
    if (cfg.contains("levels") && cfg["levels"].contains(std::string(kind_name(k))))
      s.levels = cfg["levels"][std::string(kind_name(k))].get<std::vector<double>>();
    s.validate();
    specs.push_back(s);
  }
  json resolved{{"refs", refs_dir}, {"train_fraction", train_fraction}, {"kinds", json::array()}};
  for (const auto& s : specs)
    resolved["kinds"].push_back({{"kind", kind_name(s.kind)}, {"levels", s.levels}});
  const auto files = image_files(refs_dir);
  write_manifest(out, "generate", common, resolved, {{"seed", seed}, {"split_seed", seed}}, argc, argv);

  std::vector<std::pair<std::string, Tensor>> refs;
  std::vector<std::string> sources, errors;
  for (const auto& f : files) {
    try {
      refs.emplace_back(f.stem().string(), read_pgm(f));
      sources.push_back(fs::absolute(f).string());
    } catch (const FormatError& e) {
      errors.push_back(e.what());
    }
  }
  if (!errors.empty()) {
    for (const auto& e : errors) std::fprintf(stderr, "error: %s\n", e.c_str());
    throw FormatError(std::to_string(errors.size()) + " reference image(s) could not be read");
  }
  const CorpusManifest manifest = generate_corpus(refs, specs, out, sources);
  write_synthetic_labels(manifest, out, out / "labels.txt", seed, train_fraction);
  std::printf("generated %zu distorted images from %zu references into %s\n", manifest.distorted_files(),
              refs.size(), out.string().c_str());
  return 0;
}

int cmd_train_rank(const Common& common, const std::string& corpus_dir, const std::string& strategy,
                   const std::string& resume, std::optional<std::size_t> iterations,
                   const std::vector<std::string>& kind_names, int argc, char** argv) {
  const fs::path out = require_out(common);
  TrainConfig cfg = TrainConfig::from_json(section(load_config(common.config_path), "rank"),
                                           TrainConfig::ranking_defaults());
  cfg.phase = Phase::Rank;
  if (common.seed) cfg.seed = *common.seed;
  if (!strategy.empty()) cfg.strategy = parse_strategy(strategy);
  if (iterations) cfg.iterations = *iterations;
  cfg.validate();
  if (!fs::exists(fs::path(corpus_dir) / "manifest.json"))
    throw ConfigError("corpus " + corpus_dir + " not found (no manifest.json)");

  json resolved = cfg.to_json();
  resolved["corpus"] = corpus_dir;
  resolved["kinds"] = kind_names;
  resolved["resume"] = resume;
  write_manifest(out, "train-rank", common, resolved, {{"seed", cfg.seed}, {"init_seed", cfg.init_seed}}, argc, argv);

  const Corpus corpus = load_corpus(corpus_dir);
  const auto labels = corpus_labels(corpus_dir);
  const auto kinds = parse_kinds(kind_names);
  const auto train = select_groups(corpus, kinds, labels ? &labels->train_references : nullptr);
  if (train.empty()) throw ConfigError("no ranked groups match the requested kinds");

  std::optional<ProbeSet> probe;
  if (labels && !labels->test_references.empty() && cfg.probe_interval) {
    const auto held = select_groups(corpus, kinds, &labels->test_references);
    if (!held.empty()) probe = ProbeSet::build(held, cfg.batch, 8, derive_seed(cfg.seed, 0x9e0b));
  }

  std::optional<ModelCheckpoint> start;
  if (!resume.empty()) start = load_checkpoint(resume);
  TrainHooks hooks;
  hooks.probe = probe ? &*probe : nullptr;
  hooks.checkpoint_path = out / "checkpoint.riqa";
  hooks.checkpoint_interval = 500;
  hooks.on_iteration = [&](const TrainRecord& r) { print_progress(r, cfg.iterations); };

  const TrainOutcome result = cfg.strategy == Strategy::Efficient
                                  ? train_ranking(cfg, train, start, hooks)
                                  : train_ranking_randompair_baseline(cfg, train, start, hooks);
  result.report.write_csv(out / "loss.csv");
  if (probe) result.report.write_probe_csv(out / "probe.csv");
  const double final_loss = result.report.curve.empty() ? 0.0 : result.report.curve.back().loss;
  std::printf("strategy %s  groups %zu  final loss %.6f  forward passes %zu  wall %.1fs\n",
              std::string(strategy_name(cfg.strategy)).c_str(), train.size(), final_loss,
              result.report.forward_count, result.report.wall_seconds);
  if (!result.report.probe.empty())
    std::printf("held-out probe loss %.6f\n", result.report.probe.back().loss);
  return 0;
}

int cmd_finetune(const Common& common, const std::string& checkpoint, const std::string& labels_path,
                 std::optional<std::size_t> iterations, int argc, char** argv) {
  const fs::path out = require_out(common);
  TrainConfig cfg = TrainConfig::from_json(section(load_config(common.config_path), "finetune"),
                                           TrainConfig::finetune_defaults());
  cfg.phase = Phase::Finetune;
  if (common.seed) cfg.seed = *common.seed;
  if (iterations) cfg.iterations = *iterations;
  cfg.validate();
  json resolved = cfg.to_json();
  resolved["checkpoint"] = checkpoint;
  resolved["labels"] = labels_path;
  write_manifest(out, "finetune", common, resolved, {{"seed", cfg.seed}}, argc, argv);

  const ModelCheckpoint start = load_checkpoint(checkpoint);
  const LabeledDataset ds = load_labeled_dataset(labels_path);
  std::vector<const LabeledSample*> train;
  for (std::size_t i : ds.train_indices()) train.push_back(&ds.samples[i]);

  TrainHooks hooks;
  hooks.checkpoint_path = out / "checkpoint.riqa";
  hooks.on_iteration = [&](const TrainRecord& r) { print_progress(r, cfg.iterations); };
  const TrainOutcome result = finetune_regression(start, train, cfg, hooks);
  result.report.write_csv(out / "loss.csv");
  std::printf("fine-tuned on %zu images (%zu references)  final loss %.6f  forward passes %zu\n", train.size(),
              ds.train_references.size(), result.report.curve.back().loss, result.report.forward_count);
  return 0;
}

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& labels_path,
             const std::string& corpus_dir, const std::string& split, int argc, char** argv) {
  const fs::path out = require_out(common);
  const json cfg = section(load_config(common.config_path), "eval");
  EvalConfig ec;
  ec.crops_per_image = cfg.value("crops_per_image", ec.crops_per_image);
  ec.patch_size = cfg.value("patch_size", ec.patch_size);
  ec.seed = common.seed.value_or(cfg.value("seed", std::uint64_t{0}));
  if (split != "test" && split != "train" && split != "all") throw ConfigError("--split must be test, train or all");
  if (labels_path.empty() && corpus_dir.empty()) throw ConfigError("eval needs --labels and/or --corpus");
  write_manifest(out, "eval", common,
                 {{"checkpoint", checkpoint}, {"labels", labels_path}, {"corpus", corpus_dir}, {"split", split},
                  {"crops_per_image", ec.crops_per_image}, {"patch_size", ec.patch_size}},
                 {{"seed", ec.seed}}, argc, argv);

  const ModelCheckpoint ckpt = load_checkpoint(checkpoint);
  const Model& model = ckpt.model;
  std::optional<LabeledDataset> ds;
  if (!labels_path.empty()) {
    ds = load_labeled_dataset(labels_path);
    std::vector<std::size_t> idx;
    if (split == "test") idx = ds->test_indices();
    else if (split == "train") idx = ds->train_indices();
    else {
      idx.resize(ds->samples.size());
      std::iota(idx.begin(), idx.end(), 0);
    }
    std::vector<const LabeledSample*> samples;
    for (std::size_t i : idx) samples.push_back(&ds->samples[i]);
    const EvalResult r = evaluate_model(model.spec, model.params, samples, ec);
    write_eval_csv(out / "eval.csv", r);
    std::printf("%s\n", eval_summary(r).c_str());
  }
  if (!corpus_dir.empty()) {
    const Corpus corpus = load_corpus(corpus_dir);
    const std::vector<std::string>* refs = nullptr;
    if (ds && split == "test") refs = &ds->test_references;
    if (ds && split == "train") refs = &ds->train_references;
    const auto groups = select_groups(corpus, {}, refs);
    const auto levels = score_levels(model.spec, model.params, groups, ec);
    write_histogram_csv(out / "histograms.csv", score_histograms(levels));
    std::ofstream lf(out / "levels.csv");
    lf << "kind,level,count,mean\n";
    lf.precision(9);
    for (const auto& l : levels) lf << kind_name(l.kind) << ',' << l.level << ',' << l.scores.size() << ',' << l.mean() << '\n';
    for (const auto& sep : level_separation(levels)) {
      std::printf("%s level means:", std::string(kind_name(sep.kind)).c_str());
      for (double m : sep.means) std::printf(" %.4f", m);
      std::printf("  (%zu/%zu adjacent pairs ordered)\n", sep.ordered_adjacent, sep.adjacent_pairs);
    }
    std::printf("level SROCC %.6f over %zu groups\n", level_srocc(levels), groups.size());
  }
  return 0;
}

int cmd_bench(const Common& common, const std::vector<std::size_t>& ns, std::size_t patch, std::size_t repeats,
              int argc, char** argv) {
  const fs::path out = require_out(common);
  const std::uint64_t seed = common.seed.value_or(1);
  write_manifest(out, "bench", common, {{"n", ns}, {"patch", patch}, {"repeats", repeats}}, {{"seed", seed}}, argc, argv);

  const Model model = Model::create(NetworkSpec::desk_default(), seed);
  const Tensor ref = synthetic_reference(2 * patch, 2 * patch, seed);
  std::ofstream csv(out / "bench.csv");
  csv << "n,efficient_forward,naive_forward,ratio,efficient_ms,naive_ms,time_ratio,grad_rel_error\n";
  std::printf("%3s %10s %10s %6s %12s %12s %10s %12s\n", "n", "eff_fwd", "naive_fwd", "ratio", "eff_ms",
              "naive_ms", "time_x", "grad_rel");
  bool ok = true;
  for (std::size_t n : ns) {
    if (n < 2) throw ConfigError("bench needs n >= 2");
    DistortionSpec spec{DistortionKind::GaussianBlur, {}, seed};
    for (std::size_t k = 0; k < n; ++k) spec.levels.push_back(0.5 * static_cast<double>(k + 1));
    const RankedGroup group = synthesize_ranked_group("bench", ref, spec);
    std::mt19937_64 rng(seed);
    const MiniBatch batch = assemble_minibatch({&group}, {patch, 1, 1.0f}, rng);

    using clock = std::chrono::steady_clock;
    PairGradientStats eff, naive;
    double eff_ms = 0.0, naive_ms = 0.0;
    for (std::size_t r = 0; r < repeats; ++r) {
      Model a = model, b = model;
      auto t0 = clock::now();
      eff = efficient_pairwise_gradient(a.spec, a.params, batch.images, batch.labels);
      auto t1 = clock::now();
      naive = naive_pairwise_gradient(b.spec, b.params, batch.images, batch.labels);
      auto t2 = clock::now();
      eff_ms += std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(repeats);
      naive_ms += std::chrono::duration<double, std::milli>(t2 - t1).count() / static_cast<double>(repeats);
    }
    const auto values = to_double(model.params);
    auto ge = zeros_like(values), gn = zeros_like(values);
    efficient_pairwise_gradient(model.spec, values, batch.images, batch.labels, ge);
    naive_pairwise_gradient(model.spec, values, batch.images, batch.labels, gn);
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < ge.size(); ++p)
      for (std::size_t i = 0; i < ge[p].size(); ++i) {
        num += (ge[p][i] - gn[p][i]) * (ge[p][i] - gn[p][i]);
        den += gn[p][i] * gn[p][i];
      }
    const double rel = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    const bool counts_ok = eff.forward_passes == n && naive.forward_passes == n * n - n &&
                           naive.forward_passes == (n - 1) * eff.forward_passes;
    ok = ok && counts_ok && rel <= 1e-6;
    const double ratio = static_cast<double>(naive.forward_passes) / static_cast<double>(eff.forward_passes);
    std::printf("%3zu %10zu %10zu %6.1f %12.3f %12.3f %10.2f %12.3e%s\n", n, eff.forward_passes,
                naive.forward_passes, ratio, eff_ms, naive_ms, naive_ms / eff_ms, rel,
                counts_ok && rel <= 1e-6 ? "" : "  FAIL");
    csv << n << ',' << eff.forward_passes << ',' << naive.forward_passes << ',' << ratio << ',' << eff_ms << ','
        << naive_ms << ',' << naive_ms / eff_ms << ',' << rel << '\n';
  }
  return ok ? 0 : 1;
}

int cmd_gradcheck(const Common& common, const std::string& loss_kind, std::size_t samples, std::size_t batch_size,
                  std::size_t patch, bool float_analytic, int argc, char** argv) {
  const fs::path out = require_out(common);
  const std::uint64_t seed = common.seed.value_or(1);
  if (loss_kind != "rank" && loss_kind != "regression") throw ConfigError("--loss must be rank or regression");
  write_manifest(out, "gradcheck", common,
                 {{"loss", loss_kind}, {"samples", samples}, {"batch", batch_size}, {"patch", patch},
                  {"float_analytic", float_analytic}},
                 {{"seed", seed}}, argc, argv);

  const Model model = Model::create(NetworkSpec::desk_default(), seed);
  Tensor batch({batch_size, 1, patch, patch});
  std::vector<std::size_t> block(batch_size), level(batch_size);
  std::vector<double> targets(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const Tensor img = synthetic_reference(patch, patch, derive_seed(seed, i / 5));
    const Tensor d = local_contrast_normalize(gaussian_blur(img, static_cast<double>(i % 5)));
    std::copy(d.data().begin(), d.data().end(), batch.data().begin() + static_cast<std::ptrdiff_t>(i * patch * patch));
    block[i] = i / 5;
    level[i] = i % 5;
    targets[i] = synthetic_mos(i % 5, 5);
  }
  const auto labels = ComparabilityMatrix::from_levels(block, level, 1.0f);
  const ScoreLoss loss = [&](std::span<const double> s, std::vector<double>* g) {
    double total = 0.0;
    if (g) g->assign(s.size(), 0.0);
    if (loss_kind == "regression") {
      const double M = static_cast<double>(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        total += (s[i] - targets[i]) * (s[i] - targets[i]) / M;
        if (g) (*g)[i] = 2.0 * (s[i] - targets[i]) / M;
      }
      return total;
    }
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        const int l = labels(i, j);
        const double v = l * (s[j] - s[i]) + labels.margin();
        if (l == 0 || v <= 0.0) continue;
        total += v;
        if (g) {
          (*g)[i] -= l;
          (*g)[j] += l;
        }
      }
    return total;
  };
  GradCheckOptions opts;
  opts.samples = samples;
  opts.seed = seed;
  opts.float_analytic = float_analytic;
  const GradCheckReport report = gradient_check(model.spec, model.params, batch, loss, opts);
  for (const auto& p : report.per_param)
    std::printf("%-14s checked %5zu  max rel error %.3e\n", p.param.c_str(), p.checked, p.max_rel_error);
  for (const auto& f : report.flagged)
    std::printf("FLAGGED %s[%zu] analytic %.9g numeric %.9g rel %.3e\n", f.param.c_str(), f.index, f.analytic,
                f.numeric, f.rel_error);
  std::printf("checked %zu entries, max rel error %.3e, %zu kink-adjusted, %zu nondifferentiable, %s\n",
              report.checked, report.max_rel_error, report.kink_adjusted, report.nondifferentiable,
              report.passed() ? "PASS" : "FAIL");
  return report.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RankIQA desk-scale lab: ranked distortions, Siamese ranking, fine-tuning and IQA metrics"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file (sections generate, rank, finetune, eval)");
    sub->add_option("--seed", common.seed, "master seed (overrides the config file)");
    sub->add_option("--out", common.out, "output directory");
  };

  std::size_t ref_count = 20, ref_size = 96;
  auto* make_refs = app.add_subcommand("make-refs", "write procedural reference images");
  add_common(make_refs);
  make_refs->add_option("--count", ref_count, "number of references");
  make_refs->add_option("--size", ref_size, "image side in pixels");

  std::string refs_dir;
  std::vector<std::string> kinds;
  double train_fraction = 0.8;
  auto* generate = app.add_subcommand("generate", "synthesise a ranked distortion corpus");
  add_common(generate);
  generate->add_option("--refs", refs_dir, "directory of reference .pgm/.ppm images")->required();
  generate->add_option("--kinds", kinds, "distortion kinds (blur, noise, jpeg)")->delimiter(',');
  generate->add_option("--train-fraction", train_fraction, "fraction of references used for training");

  std::string corpus_dir, strategy, resume;
  std::optional<std::size_t> iterations;
  auto* train_rank = app.add_subcommand("train-rank", "phase 1: Siamese ranking on a generated corpus");
  add_common(train_rank);
  train_rank->add_option("--corpus", corpus_dir, "corpus directory")->required();
  train_rank->add_option("--strategy", strategy, "efficient or randompair")
      ->check(CLI::IsMember({"efficient", "randompair"}));
  train_rank->add_option("--resume", resume, "checkpoint to resume from");
  train_rank->add_option("--iterations", iterations, "override iteration count");
  train_rank->add_option("--kinds", kinds, "train only on these distortion kinds")->delimiter(',');

  std::string checkpoint, labels_path;
  auto* finetune = app.add_subcommand("finetune", "phase 2: regression fine-tuning of one branch");
  add_common(finetune);
  finetune->add_option("--checkpoint", checkpoint, "ranking checkpoint")->required();
  finetune->add_option("--labels", labels_path, "labeled manifest")->required();
  finetune->add_option("--iterations", iterations, "override iteration count");

  std::string split = "test";
  auto* eval = app.add_subcommand("eval", "LCC/SROCC evaluation and per-level score histograms");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--labels", labels_path, "labeled manifest");
  eval->add_option("--corpus", corpus_dir, "corpus for per-level histograms");
  eval->add_option("--split", split, "test, train or all");

  std::vector<std::size_t> ns{2, 4, 6, 8};
  std::size_t patch = 48, repeats = 3;
  auto* bench = app.add_subcommand("bench", "forward-pass accounting: efficient vs naive pairwise gradient");
  add_common(bench);
  bench->add_option("--n", ns, "group sizes")->delimiter(',');
  bench->add_option("--patch", patch, "patch side");
  bench->add_option("--repeats", repeats, "timing repeats")->check(CLI::PositiveNumber);

  std::string loss_kind = "rank";
  bool float_analytic = false;
  std::size_t samples = 100, batch_size = 10;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the desk network");
  add_common(gradcheck);
  gradcheck->add_option("--loss", loss_kind, "rank or regression");
  gradcheck->add_option("--samples", samples, "parameters to probe (0 = all)");
  gradcheck->add_option("--batch", batch_size, "batch size")->check(CLI::PositiveNumber);
  gradcheck->add_option("--patch", patch, "patch side");
  gradcheck->add_flag("--float", float_analytic, "analytic gradients from the float32 pass");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*make_refs) return cmd_make_refs(common, ref_count, ref_size, argc, argv);
    if (*generate) return cmd_generate(common, refs_dir, kinds, train_fraction, argc, argv);
    if (*train_rank) return cmd_train_rank(common, corpus_dir, strategy, resume, iterations, kinds, argc, argv);
    if (*finetune) return cmd_finetune(common, checkpoint, labels_path, iterations, argc, argv);
    if (*eval) return cmd_eval(common, checkpoint, labels_path, corpus_dir, split, argc, argv);
    if (*bench) return cmd_bench(common, ns, patch, repeats, argc, argv);
    if (*gradcheck) return cmd_gradcheck(common, loss_kind, samples, batch_size, patch, float_analytic, argc, argv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 1;
}
