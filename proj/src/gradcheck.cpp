#include "rankiqa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rankiqa/errors.hpp"
#include "rankiqa/seeding.hpp"

namespace rankiqa {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  if (scale == 0.0) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

namespace {

GradCheckReport compare(const NetworkSpec& spec, const ParameterStore& params,
                        const ParamValues& analytic_grads, const Tensor& batch,
                        const ScoreLoss& loss, const GradCheckOptions& options) {
  GradCheckReport report;
  if (params.empty()) return report;

  // (parameter, entry) pairs to probe.
  std::vector<std::pair<std::size_t, std::size_t>> probes;
  const std::size_t total = params.total_values();
  if (options.samples == 0 || options.samples >= total) {
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::size_t i = 0; i < params[p].value.size(); ++i) probes.emplace_back(p, i);
  } else {
    std::mt19937_64 rng(options.seed);
    std::vector<std::size_t> flat(total);
    for (std::size_t i = 0; i < total; ++i) flat[i] = i;
    portable_shuffle(flat.begin(), flat.end(), rng);
    flat.resize(options.samples);
    std::sort(flat.begin(), flat.end());
    std::size_t p = 0, offset = 0;
    for (std::size_t f : flat) {
      while (f >= offset + params[p].value.size()) offset += params[p++].value.size();
      probes.emplace_back(p, f - offset);
    }
  }

  std::vector<double> floors;
  for (std::size_t p = 0; p < params.size(); ++p) {
    report.per_param.push_back({params[p].name, 0, 0.0});
    double ss = 0.0;
    for (double g : analytic_grads[p]) ss += g * g;
    const auto n = static_cast<double>(std::max<std::size_t>(1, analytic_grads[p].size()));
    floors.push_back(options.scale_floor * std::sqrt(ss / n));
  }

  auto values = to_double(params);
  std::vector<std::uint32_t> base_pattern, pattern;
  const double base_loss = loss(reference_forward(spec, values, batch, &base_pattern), nullptr);
  for (const auto& [p, i] : probes) {
    const double saved = values[p][i];
    double h = options.step;
    double plus = 0.0, minus = 0.0;
    bool same = false;
    for (;;) {
      values[p][i] = saved + h;
      plus = loss(reference_forward(spec, values, batch, &pattern), nullptr);
      same = pattern == base_pattern;
      values[p][i] = saved - h;
      minus = loss(reference_forward(spec, values, batch, &pattern), nullptr);
      same = same && pattern == base_pattern;
      if (same || h * 0.5 < options.min_step) break;
      h *= 0.5;
    }
    values[p][i] = saved;
    if (h != options.step) ++report.kink_adjusted;

    const double analytic = analytic_grads[p][i];
    double numeric = (plus - minus) / (2.0 * h);
    double err = relative_error(analytic, numeric, floors[p]);
    if (!same) {
      // theta sits on a kink: any value between the one-sided derivatives is
      // a valid subgradient.
      ++report.nondifferentiable;
      const double right = (plus - base_loss) / h;
      const double left = (base_loss - minus) / h;
      const double lo = std::min(left, right), hi = std::max(left, right);
      numeric = std::clamp(analytic, lo, hi);
      const double scale = std::max({std::abs(lo), std::abs(hi), floors[p]});
      err = scale == 0.0 ? 0.0 : std::abs(analytic - numeric) / scale;
    }
    auto& summary = report.per_param[p];
    ++summary.checked;
    summary.max_rel_error = std::max(summary.max_rel_error, err);
    report.max_rel_error = std::max(report.max_rel_error, err);
    ++report.checked;
    if (!(err <= options.tolerance)) {
      report.flagged.push_back({params[p].name, i, analytic, numeric, err, h});
    }
  }
  return report;
}

ParamValues stored_grads(const ParameterStore& params) {
  ParamValues out;
  for (const auto& p : params) out.emplace_back(p.grad.data().begin(), p.grad.data().end());
  return out;
}

}  // namespace

GradCheckReport compare_gradients(const NetworkSpec& spec, const ParameterStore& params,
                                  const Tensor& batch, const ScoreLoss& loss,
                                  const GradCheckOptions& options) {
  return compare(spec, params, stored_grads(params), batch, loss, options);
}

GradCheckReport gradient_check(const NetworkSpec& spec, ParameterStore params,
                               const Tensor& batch, const ScoreLoss& loss,
                               const GradCheckOptions& options) {
  if (params.empty()) return {};
  if (!options.float_analytic) {
    const ParamValues values = to_double(params);
    ParamValues grads = zeros_like(values);
    const std::vector<double> s = reference_forward(spec, values, batch);
    std::vector<double> g(s.size(), 0.0);
    loss(s, &g);
    reference_backward(spec, values, batch, g, grads);
    return compare(spec, params, grads, batch, loss, options);
  }
  params.zero_grad();
  {
    ActivationCache cache;
    const Tensor scores = forward(spec, params, batch, &cache);
    std::vector<double> s(scores.data().begin(), scores.data().end());
    std::vector<double> g(s.size(), 0.0);
    loss(s, &g);
    std::vector<float> gf(g.begin(), g.end());
    backward(spec, params, cache, gf);
  }
  return compare_gradients(spec, params, batch, loss, options);
}

}  // namespace rankiqa
