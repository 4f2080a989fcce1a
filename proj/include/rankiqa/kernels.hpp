#pragma once

// OpenMP layer kernels used by the network engine. Each output element is
// owned by exactly one thread and accumulated in the same order as the serial
// kernels in reference_kernels.hpp, so results are bit-identical to the
// reference and independent of the thread count.

#include <cstddef>
#include <cstdint>

#include "rankiqa/geometry.hpp"

namespace rankiqa::kernels {

void conv2d_forward(const ConvGeometry& g, const float* in, const float* weight,
                    const float* bias, float* out);
void conv2d_backward_input(const ConvGeometry& g, const float* grad_out, const float* weight,
                           float* grad_in);
void conv2d_backward_params(const ConvGeometry& g, const float* in, const float* grad_out,
                            float* grad_weight, float* grad_bias);

void relu_forward(std::size_t count, const float* in, float* out);
void relu_backward(std::size_t count, const float* in, const float* grad_out, float* grad_in);

void maxpool_forward(const PoolGeometry& g, const float* in, float* out, std::uint32_t* argmax);
void maxpool_backward(const PoolGeometry& g, const float* grad_out, const std::uint32_t* argmax,
                      float* grad_in);

void global_avg_pool_forward(std::size_t planes, std::size_t plane_size, const float* in,
                             float* out);
void global_avg_pool_backward(std::size_t planes, std::size_t plane_size, const float* grad_out,
                              float* grad_in);

void fc_forward(std::size_t batch, std::size_t in_f, std::size_t out_f, const float* in,
                const float* weight, const float* bias, float* out);
void fc_backward(std::size_t batch, std::size_t in_f, std::size_t out_f, const float* in,
                 const float* weight, const float* grad_out, float* grad_in,
                 float* grad_weight, float* grad_bias);

// Number of threads OpenMP will use for the kernels (1 without OpenMP).
int max_threads();

}  // namespace rankiqa::kernels
