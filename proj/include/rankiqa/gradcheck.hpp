#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rankiqa/network.hpp"
#include "rankiqa/reference_network.hpp"

namespace rankiqa {

// Scalar loss of the network scores. When `grad` is non-null it receives
// dLoss/dscore_i (same length as scores).
using ScoreLoss = std::function<double(std::span<const double> scores, std::vector<double>* grad)>;

struct GradCheckOptions {
  double tolerance = 1e-4;
  // Nominal central-difference step. If theta +/- step lands in a different
  // ReLU/max-pool region than theta, the step is halved until both sides
  // match (down to min_step), so kinks do not masquerade as gradient errors.
  double step = 1e-3;
  double min_step = 1e-8;
  // Number of parameter entries drawn at random; 0 checks every entry.
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  // Relative errors are taken against max(|analytic|, |numeric|, floor) with
  // floor = scale_floor * RMS of the parameter tensor's analytic gradient,
  // which bounds float32 cancellation noise on near-zero entries.
  double scale_floor = 1e-3;
  // Analytic side from the float32 forward/backward instead of the 64-bit
  // reference pass. Float32 accumulation noise then enters the comparison.
  bool float_analytic = false;
};

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  double step = 0.0;
};

struct ParamErrorSummary {
  std::string param;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<ParamErrorSummary> per_param;
  std::vector<GradCheckEntry> flagged;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  // Probes whose step had to shrink to stay inside one linear region.
  std::size_t kink_adjusted = 0;
  // Probes where theta itself is a kink even at min_step. The analytic value
  // must then lie between the left and right one-sided derivatives.
  std::size_t nondifferentiable = 0;

  bool passed() const { return flagged.empty(); }
};

double relative_error(double analytic, double numeric, double floor);

// Compares the gradients already stored in `params` against central finite
// differences (f(theta+h) - f(theta-h)) / 2h computed in 64-bit.
GradCheckReport compare_gradients(const NetworkSpec& spec, const ParameterStore& params,
                                  const Tensor& batch, const ScoreLoss& loss,
                                  const GradCheckOptions& options);

// Computes analytic gradients with the backward pass (64-bit reference kernels
// unless options.float_analytic) and compares them.
GradCheckReport gradient_check(const NetworkSpec& spec, ParameterStore params,
                               const Tensor& batch, const ScoreLoss& loss,
                               const GradCheckOptions& options);

}  // namespace rankiqa
