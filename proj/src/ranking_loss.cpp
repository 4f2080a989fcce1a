#include "rankiqa/ranking_loss.hpp"

#include <string>

#include "rankiqa/errors.hpp"

namespace rankiqa {

namespace {

void check_margin(float eps) {
  if (!(eps > 0.0f)) throw ConfigError("ranking margin must be positive, got " + std::to_string(eps));
}

void check_dims(std::size_t scores, const ComparabilityMatrix& labels) {
  if (scores != labels.size()) {
    throw ShapeError("got " + std::to_string(scores) + " scores for a " +
                     std::to_string(labels.size()) + "x" + std::to_string(labels.size()) +
                     " comparability matrix");
  }
}

}  // namespace

ComparabilityMatrix::ComparabilityMatrix(std::size_t size, float margin)
    : size_(size), margin_(margin), labels_(size * size, 0) {
  check_margin(margin);
}

void ComparabilityMatrix::set_margin(float margin) {
  check_margin(margin);
  margin_ = margin;
}

void ComparabilityMatrix::set(std::size_t i, std::size_t j, int label) {
  if (i >= size_ || j >= size_) throw ShapeError("label index out of range");
  if (label < -1 || label > 1) throw ConfigError("labels must be -1, 0 or +1");
  if (i == j && label != 0) throw ConfigError("a sample cannot be ranked against itself");
  labels_[i * size_ + j] = static_cast<std::int8_t>(label);
  labels_[j * size_ + i] = static_cast<std::int8_t>(-label);
}

std::size_t ComparabilityMatrix::comparable_pairs() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < size_; ++i)
    for (std::size_t j = i + 1; j < size_; ++j) n += labels_[i * size_ + j] != 0;
  return n;
}

bool ComparabilityMatrix::is_antisymmetric() const {
  for (std::size_t i = 0; i < size_; ++i) {
    if (labels_[i * size_ + i] != 0) return false;
    for (std::size_t j = i + 1; j < size_; ++j)
      if (labels_[i * size_ + j] != -labels_[j * size_ + i]) return false;
  }
  return true;
}

ComparabilityMatrix ComparabilityMatrix::from_levels(std::span<const std::size_t> block,
                                                     std::span<const std::size_t> level,
                                                     float margin) {
  if (block.size() != level.size()) throw ShapeError("block and level lists differ in length");
  ComparabilityMatrix m(block.size(), margin);
  for (std::size_t i = 0; i < block.size(); ++i)
    for (std::size_t j = i + 1; j < block.size(); ++j)
      if (block[i] == block[j] && level[i] != level[j]) m.set(i, j, level[i] < level[j] ? 1 : -1);
  return m;
}

float hinge_pair_loss(float y_hi, float y_lo, float eps) {
  check_margin(eps);
  const float v = y_lo - y_hi + eps;
  return v > 0.0f ? v : 0.0f;
}

bool pair_active(float y_i, float y_j, int l_ij, float eps) {
  if (l_ij == 0) return false;
  return static_cast<float>(l_ij) * (y_j - y_i) + eps > 0.0f;
}

double batch_loss(std::span<const float> scores, const ComparabilityMatrix& labels) {
  check_dims(scores.size(), labels);
  const float eps = labels.margin();
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = i + 1; j < scores.size(); ++j) {
      const int l = labels(i, j);
      if (l == 0) continue;
      total += l > 0 ? hinge_pair_loss(scores[i], scores[j], eps)
                     : hinge_pair_loss(scores[j], scores[i], eps);
    }
  return total;
}

PairCoefficients output_gradient_coefficients(std::span<const float> scores,
                                              const ComparabilityMatrix& labels) {
  check_dims(scores.size(), labels);
  const float eps = labels.margin();
  PairCoefficients out;
  out.c.assign(scores.size(), 0.0f);
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = i + 1; j < scores.size(); ++j) {
      const int l = labels(i, j);
      if (!pair_active(scores[i], scores[j], l, eps)) continue;
      out.c[i] -= static_cast<float>(l);
      out.c[j] += static_cast<float>(l);
      ++out.active_pairs;
    }
  return out;
}

std::vector<float> pair_derivative_matrix(std::span<const float> scores,
                                          const ComparabilityMatrix& labels) {
  check_dims(scores.size(), labels);
  const std::size_t M = scores.size();
  std::vector<float> P(M * M, 0.0f);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = i + 1; j < M; ++j) {
      const int l = labels(i, j);
      if (!pair_active(scores[i], scores[j], l, labels.margin())) continue;
      P[i * M + j] = -static_cast<float>(l);
      P[j * M + i] = static_cast<float>(l);
    }
  return P;
}

PairGradientStats efficient_pairwise_gradient(const NetworkSpec& spec, ParameterStore& params,
                                              const Tensor& batch,
                                              const ComparabilityMatrix& labels) {
  check_dims(batch.dim(0), labels);
  ActivationCache cache;
  const Tensor scores = forward(spec, params, batch, &cache);
  PairGradientStats stats;
  stats.forward_passes = batch.dim(0);
  stats.comparable_pairs = labels.comparable_pairs();
  stats.loss = batch_loss(scores.data(), labels);
  const PairCoefficients coeffs = output_gradient_coefficients(scores.data(), labels);
  stats.active_pairs = coeffs.active_pairs;
  backward(spec, params, cache, coeffs.c);
  return stats;
}

PairGradientStats naive_pairwise_gradient(const NetworkSpec& spec, ParameterStore& params,
                                          const Tensor& batch,
                                          const ComparabilityMatrix& labels) {
  check_dims(batch.dim(0), labels);
  const float eps = labels.margin();
  PairGradientStats stats;
  const std::size_t M = batch.dim(0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = i + 1; j < M; ++j) {
      const int l = labels(i, j);
      if (l == 0) continue;
      ++stats.comparable_pairs;
      ActivationCache branch_i, branch_j;
      const float y_i = forward(spec, params, batch_item(batch, i), &branch_i)[0];
      const float y_j = forward(spec, params, batch_item(batch, j), &branch_j)[0];
      stats.forward_passes += 2;
      stats.loss += l > 0 ? hinge_pair_loss(y_i, y_j, eps) : hinge_pair_loss(y_j, y_i, eps);
      if (!pair_active(y_i, y_j, l, eps)) continue;
      ++stats.active_pairs;
      const float g_i = -static_cast<float>(l);
      const float g_j = static_cast<float>(l);
      backward(spec, params, branch_i, std::span<const float>(&g_i, 1));
      backward(spec, params, branch_j, std::span<const float>(&g_j, 1));
    }
  return stats;
}

PairGradientStats efficient_pairwise_gradient(const NetworkSpec& spec, const ParamValues& values,
                                              const Tensor& batch, const ComparabilityMatrix& labels,
                                              ParamValues& grads) {
  check_dims(batch.dim(0), labels);
  const std::size_t M = batch.dim(0);
  const double eps = labels.margin();
  const std::vector<double> y = reference_forward(spec, values, batch);
  PairGradientStats stats;
  stats.forward_passes = M;
  stats.comparable_pairs = labels.comparable_pairs();
  std::vector<double> c(M, 0.0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = i + 1; j < M; ++j) {
      const int l = labels(i, j);
      if (l == 0) continue;
      const double v = l * (y[j] - y[i]) + eps;
      if (v <= 0.0) continue;
      stats.loss += v;
      ++stats.active_pairs;
      c[i] -= l;
      c[j] += l;
    }
  reference_backward(spec, values, batch, c, grads);
  return stats;
}

PairGradientStats naive_pairwise_gradient(const NetworkSpec& spec, const ParamValues& values,
                                          const Tensor& batch, const ComparabilityMatrix& labels,
                                          ParamValues& grads) {
  check_dims(batch.dim(0), labels);
  const double eps = labels.margin();
  PairGradientStats stats;
  const std::size_t M = batch.dim(0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = i + 1; j < M; ++j) {
      const int l = labels(i, j);
      if (l == 0) continue;
      ++stats.comparable_pairs;
      const Tensor x_i = batch_item(batch, i), x_j = batch_item(batch, j);
      const double y_i = reference_forward(spec, values, x_i)[0];
      const double y_j = reference_forward(spec, values, x_j)[0];
      stats.forward_passes += 2;
      const double v = l * (y_j - y_i) + eps;
      if (v <= 0.0) continue;
      stats.loss += v;
      ++stats.active_pairs;
      const double g_i = -l, g_j = l;
      reference_backward(spec, values, x_i, std::span<const double>(&g_i, 1), grads);
      reference_backward(spec, values, x_j, std::span<const double>(&g_j, 1), grads);
    }
  return stats;
}

}  // namespace rankiqa
