#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rankiqa/network.hpp"

namespace rankiqa {

// One flat array per parameter, in ParameterStore order.
using ParamValues = std::vector<std::vector<double>>;

ParamValues to_double(const ParameterStore& params);
ParamValues zeros_like(const ParamValues& values);

// Forward pass in 64-bit arithmetic through the serial reference kernels.
// When `pattern` is given it receives the piecewise-linear region of the pass
// (every ReLU sign and max-pool winner).
std::vector<double> reference_forward(const NetworkSpec& spec, const ParamValues& values,
                                      const Tensor& batch,
                                      std::vector<std::uint32_t>* pattern = nullptr);

// Adds d(sum_i upstream_i * score_i)/d(theta) to `grads`, in 64-bit.
void reference_backward(const NetworkSpec& spec, const ParamValues& values, const Tensor& batch,
                        std::span<const double> upstream, ParamValues& grads);

}  // namespace rankiqa
