#pragma once

// Serial reference layer kernels. Direct nested loops, templated on the
// scalar type so the same code doubles as the 64-bit finite-difference path.
// The OpenMP kernels in kernels.hpp accumulate in the same order per output
// element and are bit-identical to these for T = float.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rankiqa/geometry.hpp"

namespace rankiqa::reference {

template <class T>
void conv2d_forward(const ConvGeometry& g, const T* in, const T* weight, const T* bias,
                    T* out) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.out_ch; ++co)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          T acc = bias[co];
          for (std::size_t ci = 0; ci < g.in_ch; ++ci)
            for (std::size_t kh = 0; kh < k; ++kh)
              for (std::size_t kw = 0; kw < k; ++kw) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) -
                                static_cast<std::ptrdiff_t>(g.pad);
                const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) -
                                static_cast<std::ptrdiff_t>(g.pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h) ||
                    iw >= static_cast<std::ptrdiff_t>(g.in_w))
                  continue;
                acc += weight[((co * g.in_ch + ci) * k + kh) * k + kw] *
                       in[((n * g.in_ch + ci) * g.in_h + ih) * g.in_w + iw];
              }
          out[((n * g.out_ch + co) * oh_n + oh) * ow_n + ow] = acc;
        }
}

// Overwrites grad_in.
template <class T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight,
                           T* grad_in) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t ci = 0; ci < g.in_ch; ++ci)
      for (std::size_t ih = 0; ih < g.in_h; ++ih)
        for (std::size_t iw = 0; iw < g.in_w; ++iw) {
          T acc = 0;
          for (std::size_t co = 0; co < g.out_ch; ++co)
            for (std::size_t kh = 0; kh < k; ++kh)
              for (std::size_t kw = 0; kw < k; ++kw) {
                const auto ph = static_cast<std::ptrdiff_t>(ih + g.pad) -
                                static_cast<std::ptrdiff_t>(kh);
                const auto pw = static_cast<std::ptrdiff_t>(iw + g.pad) -
                                static_cast<std::ptrdiff_t>(kw);
                if (ph < 0 || pw < 0) continue;
                if (ph % static_cast<std::ptrdiff_t>(g.stride) ||
                    pw % static_cast<std::ptrdiff_t>(g.stride))
                  continue;
                const auto oh = static_cast<std::size_t>(ph) / g.stride;
                const auto ow = static_cast<std::size_t>(pw) / g.stride;
                if (oh >= oh_n || ow >= ow_n) continue;
                acc += weight[((co * g.in_ch + ci) * k + kh) * k + kw] *
                       grad_out[((n * g.out_ch + co) * oh_n + oh) * ow_n + ow];
              }
          grad_in[((n * g.in_ch + ci) * g.in_h + ih) * g.in_w + iw] = acc;
        }
}

// Accumulates into grad_weight and grad_bias.
template <class T>
void conv2d_backward_params(const ConvGeometry& g, const T* in, const T* grad_out,
                            T* grad_weight, T* grad_bias) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  const std::size_t k = g.kernel;
  for (std::size_t co = 0; co < g.out_ch; ++co) {
    for (std::size_t ci = 0; ci < g.in_ch; ++ci)
      for (std::size_t kh = 0; kh < k; ++kh)
        for (std::size_t kw = 0; kw < k; ++kw) {
          T acc = 0;
          for (std::size_t n = 0; n < g.batch; ++n)
            for (std::size_t oh = 0; oh < oh_n; ++oh)
              for (std::size_t ow = 0; ow < ow_n; ++ow) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) -
                                static_cast<std::ptrdiff_t>(g.pad);
                const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) -
                                static_cast<std::ptrdiff_t>(g.pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h) ||
                    iw >= static_cast<std::ptrdiff_t>(g.in_w))
                  continue;
                acc += grad_out[((n * g.out_ch + co) * oh_n + oh) * ow_n + ow] *
                       in[((n * g.in_ch + ci) * g.in_h + ih) * g.in_w + iw];
              }
          grad_weight[((co * g.in_ch + ci) * k + kh) * k + kw] += acc;
        }
    T acc = 0;
    for (std::size_t n = 0; n < g.batch; ++n)
      for (std::size_t i = 0; i < oh_n * ow_n; ++i)
        acc += grad_out[(n * g.out_ch + co) * oh_n * ow_n + i];
    grad_bias[co] += acc;
  }
}

template <class T>
void relu_forward(std::size_t count, const T* in, T* out) {
  for (std::size_t i = 0; i < count; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

// Subgradient 0 at the kink.
template <class T>
void relu_backward(std::size_t count, const T* in, const T* grad_out, T* grad_in) {
  for (std::size_t i = 0; i < count; ++i) grad_in[i] = in[i] > T(0) ? grad_out[i] : T(0);
}

// Non-overlapping k x k max pooling; argmax holds the winning offset inside
// each input plane (first maximum wins).
template <class T>
void maxpool_forward(const PoolGeometry& g, const T* in, T* out, std::uint32_t* argmax) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  for (std::size_t p = 0; p < g.batch * g.channels; ++p) {
    const T* plane = in + p * g.in_h * g.in_w;
    for (std::size_t oh = 0; oh < oh_n; ++oh)
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        std::size_t best = (oh * g.kernel) * g.in_w + ow * g.kernel;
        for (std::size_t dh = 0; dh < g.kernel; ++dh)
          for (std::size_t dw = 0; dw < g.kernel; ++dw) {
            const std::size_t idx = (oh * g.kernel + dh) * g.in_w + ow * g.kernel + dw;
            if (plane[idx] > plane[best]) best = idx;
          }
        out[(p * oh_n + oh) * ow_n + ow] = plane[best];
        if (argmax) argmax[(p * oh_n + oh) * ow_n + ow] = static_cast<std::uint32_t>(best);
      }
  }
}

template <class T>
void maxpool_backward(const PoolGeometry& g, const T* grad_out, const std::uint32_t* argmax,
                      T* grad_in) {
  const std::size_t plane_in = g.in_h * g.in_w, plane_out = g.out_h() * g.out_w();
  for (std::size_t i = 0; i < g.batch * g.channels * plane_in; ++i) grad_in[i] = T(0);
  for (std::size_t p = 0; p < g.batch * g.channels; ++p)
    for (std::size_t o = 0; o < plane_out; ++o)
      grad_in[p * plane_in + argmax[p * plane_out + o]] += grad_out[p * plane_out + o];
}

template <class T>
void global_avg_pool_forward(std::size_t planes, std::size_t plane_size, const T* in, T* out) {
  for (std::size_t p = 0; p < planes; ++p) {
    T acc = 0;
    for (std::size_t i = 0; i < plane_size; ++i) acc += in[p * plane_size + i];
    out[p] = acc / static_cast<T>(plane_size);
  }
}

template <class T>
void global_avg_pool_backward(std::size_t planes, std::size_t plane_size, const T* grad_out,
                              T* grad_in) {
  for (std::size_t p = 0; p < planes; ++p) {
    const T g = grad_out[p] / static_cast<T>(plane_size);
    for (std::size_t i = 0; i < plane_size; ++i) grad_in[p * plane_size + i] = g;
  }
}

// weight is [out, in] row-major.
template <class T>
void fc_forward(std::size_t batch, std::size_t in_f, std::size_t out_f, const T* in,
                const T* weight, const T* bias, T* out) {
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out_f; ++o) {
      T acc = bias[o];
      for (std::size_t i = 0; i < in_f; ++i) acc += weight[o * in_f + i] * in[n * in_f + i];
      out[n * out_f + o] = acc;
    }
}

// Overwrites grad_in; accumulates grad_weight and grad_bias.
template <class T>
void fc_backward(std::size_t batch, std::size_t in_f, std::size_t out_f, const T* in,
                 const T* weight, const T* grad_out, T* grad_in, T* grad_weight,
                 T* grad_bias) {
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t i = 0; i < in_f; ++i) {
      T acc = 0;
      for (std::size_t o = 0; o < out_f; ++o)
        acc += weight[o * in_f + i] * grad_out[n * out_f + o];
      grad_in[n * in_f + i] = acc;
    }
  for (std::size_t o = 0; o < out_f; ++o) {
    for (std::size_t i = 0; i < in_f; ++i) {
      T acc = 0;
      for (std::size_t n = 0; n < batch; ++n) acc += grad_out[n * out_f + o] * in[n * in_f + i];
      grad_weight[o * in_f + i] += acc;
    }
    T acc = 0;
    for (std::size_t n = 0; n < batch; ++n) acc += grad_out[n * out_f + o];
    grad_bias[o] += acc;
  }
}

}  // namespace rankiqa::reference
