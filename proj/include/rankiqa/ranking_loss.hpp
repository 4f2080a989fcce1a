#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rankiqa/network.hpp"
#include "rankiqa/reference_network.hpp"

namespace rankiqa {

// Pairwise labels l_ij for an M-sample mini-batch: +1 when sample i is known
// to be of higher quality than j, -1 when lower, 0 when the two cannot be
// compared. Antisymmetric with a zero diagonal.
class ComparabilityMatrix {
 public:
  ComparabilityMatrix() = default;
  explicit ComparabilityMatrix(std::size_t size, float margin = 1.0f);

  std::size_t size() const { return size_; }
  float margin() const { return margin_; }
  void set_margin(float margin);

  int operator()(std::size_t i, std::size_t j) const { return labels_[i * size_ + j]; }
  // Sets l_ij = label and l_ji = -label.
  void set(std::size_t i, std::size_t j, int label);

  // Number of unordered pairs with l_ij != 0.
  std::size_t comparable_pairs() const;
  bool is_antisymmetric() const;

  // Labels from per-sample block ids and levels: samples sharing a block and
  // differing in level are comparable, lower level ranks higher.
  static ComparabilityMatrix from_levels(std::span<const std::size_t> block,
                                         std::span<const std::size_t> level, float margin);

 private:
  std::size_t size_ = 0;
  float margin_ = 1.0f;
  std::vector<std::int8_t> labels_;
};

// max(0, y_lo - y_hi + eps). Throws ConfigError for eps <= 0.
float hinge_pair_loss(float y_hi, float y_lo, float eps);

// True when l_ij != 0 and l_ij (y_j - y_i) + eps > 0. The boundary is inactive.
bool pair_active(float y_i, float y_j, int l_ij, float eps);

// Sum of hinge losses over all comparable pairs j > i.
double batch_loss(std::span<const float> scores, const ComparabilityMatrix& labels);

struct PairCoefficients {
  // c = P 1_M: dLoss/dscore_i summed over the active pairs of sample i.
  std::vector<float> c;
  std::size_t active_pairs = 0;
};

// Builds c in O(M^2) scalar work without materialising P. Each active pair
// (hi, lo) contributes -1 to c_hi and +1 to c_lo.
PairCoefficients output_gradient_coefficients(std::span<const float> scores,
                                              const ComparabilityMatrix& labels);

// Dense M x M matrix P with P_ij = dg(y_i, y_j, l_ij)/dy_i, row-major. For
// inspection and tests; row sums equal output_gradient_coefficients().c.
std::vector<float> pair_derivative_matrix(std::span<const float> scores,
                                          const ComparabilityMatrix& labels);

struct PairGradientStats {
  double loss = 0.0;
  std::size_t forward_passes = 0;
  std::size_t comparable_pairs = 0;
  std::size_t active_pairs = 0;
};

// All-pairs Siamese gradient: one forward per image, coefficients c at the
// loss layer, one backward. Accumulates into params' gradients.
PairGradientStats efficient_pairwise_gradient(const NetworkSpec& spec, ParameterStore& params,
                                              const Tensor& batch,
                                              const ComparabilityMatrix& labels);

// Baseline Siamese gradient: every comparable pair is pushed through two
// independent branch passes and back-propagated separately.
PairGradientStats naive_pairwise_gradient(const NetworkSpec& spec, ParameterStore& params,
                                          const Tensor& batch,
                                          const ComparabilityMatrix& labels);

// The same two strategies evaluated in 64-bit through the serial reference
// kernels, accumulating into `grads`. Used to compare them without float32
// cancellation noise.
PairGradientStats efficient_pairwise_gradient(const NetworkSpec& spec, const ParamValues& values,
                                              const Tensor& batch, const ComparabilityMatrix& labels,
                                              ParamValues& grads);
PairGradientStats naive_pairwise_gradient(const NetworkSpec& spec, const ParamValues& values,
                                          const Tensor& batch, const ComparabilityMatrix& labels,
                                          ParamValues& grads);

}  // namespace rankiqa
