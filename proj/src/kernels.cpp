#include "rankiqa/kernels.hpp"

#include <algorithm>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rankiqa::kernels {

namespace {

using Index = std::ptrdiff_t;

// Output positions o in [lo, hi) whose input coordinate o*stride + k - pad
// falls inside [0, extent).
struct Span1D {
  Index lo;
  Index hi;
};

Span1D valid_outputs(Index extent, Index out_extent, Index stride, Index k, Index pad) {
  Index lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  Index hi = 0;
  if (extent - 1 + pad - k >= 0) hi = (extent - 1 + pad - k) / stride + 1;
  hi = std::min(hi, out_extent);
  return {lo, std::max(lo, hi)};
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void conv2d_forward(const ConvGeometry& g, const float* in, const float* weight,
                    const float* bias, float* out) {
  const Index oh_n = static_cast<Index>(g.out_h()), ow_n = static_cast<Index>(g.out_w());
  const Index H = static_cast<Index>(g.in_h), W = static_cast<Index>(g.in_w);
  const Index k = static_cast<Index>(g.kernel), s = static_cast<Index>(g.stride),
              p = static_cast<Index>(g.pad);
  const Index batch = static_cast<Index>(g.batch), out_ch = static_cast<Index>(g.out_ch),
              in_ch = static_cast<Index>(g.in_ch);

#pragma omp parallel for collapse(2) schedule(static)
  for (Index n = 0; n < batch; ++n) {
    for (Index co = 0; co < out_ch; ++co) {
      float* o = out + (n * out_ch + co) * oh_n * ow_n;
      std::fill(o, o + oh_n * ow_n, bias[co]);
      for (Index ci = 0; ci < in_ch; ++ci) {
        const float* plane = in + (n * in_ch + ci) * H * W;
        for (Index kh = 0; kh < k; ++kh) {
          const Span1D rows = valid_outputs(H, oh_n, s, kh, p);
          for (Index kw = 0; kw < k; ++kw) {
            const Span1D cols = valid_outputs(W, ow_n, s, kw, p);
            const float w = weight[((co * in_ch + ci) * k + kh) * k + kw];
            for (Index oh = rows.lo; oh < rows.hi; ++oh) {
              const float* irow = plane + (oh * s + kh - p) * W + kw - p;
              float* orow = o + oh * ow_n;
              for (Index ow = cols.lo; ow < cols.hi; ++ow) orow[ow] += w * irow[ow * s];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, const float* grad_out, const float* weight,
                           float* grad_in) {
  const Index oh_n = static_cast<Index>(g.out_h()), ow_n = static_cast<Index>(g.out_w());
  const Index H = static_cast<Index>(g.in_h), W = static_cast<Index>(g.in_w);
  const Index k = static_cast<Index>(g.kernel), s = static_cast<Index>(g.stride),
              p = static_cast<Index>(g.pad);
  const Index batch = static_cast<Index>(g.batch), out_ch = static_cast<Index>(g.out_ch),
              in_ch = static_cast<Index>(g.in_ch);

#pragma omp parallel for collapse(2) schedule(static)
  for (Index n = 0; n < batch; ++n) {
    for (Index ci = 0; ci < in_ch; ++ci) {
      float* gin = grad_in + (n * in_ch + ci) * H * W;
      std::fill(gin, gin + H * W, 0.0f);
      for (Index co = 0; co < out_ch; ++co) {
        const float* gout = grad_out + (n * out_ch + co) * oh_n * ow_n;
        for (Index kh = 0; kh < k; ++kh) {
          const Span1D rows = valid_outputs(H, oh_n, s, kh, p);
          for (Index kw = 0; kw < k; ++kw) {
            const Span1D cols = valid_outputs(W, ow_n, s, kw, p);
            const float w = weight[((co * in_ch + ci) * k + kh) * k + kw];
            for (Index oh = rows.lo; oh < rows.hi; ++oh) {
              float* irow = gin + (oh * s + kh - p) * W + kw - p;
              const float* grow = gout + oh * ow_n;
              for (Index ow = cols.lo; ow < cols.hi; ++ow) irow[ow * s] += w * grow[ow];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_params(const ConvGeometry& g, const float* in, const float* grad_out,
                            float* grad_weight, float* grad_bias) {
  const Index oh_n = static_cast<Index>(g.out_h()), ow_n = static_cast<Index>(g.out_w());
  const Index H = static_cast<Index>(g.in_h), W = static_cast<Index>(g.in_w);
  const Index k = static_cast<Index>(g.kernel), s = static_cast<Index>(g.stride),
              p = static_cast<Index>(g.pad);
  const Index batch = static_cast<Index>(g.batch), out_ch = static_cast<Index>(g.out_ch),
              in_ch = static_cast<Index>(g.in_ch);

#pragma omp parallel for schedule(static)
  for (Index co = 0; co < out_ch; ++co) {
    for (Index ci = 0; ci < in_ch; ++ci) {
      for (Index kh = 0; kh < k; ++kh) {
        const Span1D rows = valid_outputs(H, oh_n, s, kh, p);
        for (Index kw = 0; kw < k; ++kw) {
          const Span1D cols = valid_outputs(W, ow_n, s, kw, p);
          float acc = 0.0f;
          for (Index n = 0; n < batch; ++n) {
            const float* plane = in + (n * in_ch + ci) * H * W;
            const float* gout = grad_out + (n * out_ch + co) * oh_n * ow_n;
            for (Index oh = rows.lo; oh < rows.hi; ++oh) {
              const float* irow = plane + (oh * s + kh - p) * W + kw - p;
              const float* grow = gout + oh * ow_n;
              for (Index ow = cols.lo; ow < cols.hi; ++ow) acc += grow[ow] * irow[ow * s];
            }
          }
          grad_weight[((co * in_ch + ci) * k + kh) * k + kw] += acc;
        }
      }
    }
    float acc = 0.0f;
    for (Index n = 0; n < batch; ++n) {
      const float* gout = grad_out + (n * out_ch + co) * oh_n * ow_n;
      for (Index i = 0; i < oh_n * ow_n; ++i) acc += gout[i];
    }
    grad_bias[co] += acc;
  }
}

void relu_forward(std::size_t count, const float* in, float* out) {
  const Index n = static_cast<Index>(count);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
}

void relu_backward(std::size_t count, const float* in, const float* grad_out, float* grad_in) {
  const Index n = static_cast<Index>(count);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) grad_in[i] = in[i] > 0.0f ? grad_out[i] : 0.0f;
}

void maxpool_forward(const PoolGeometry& g, const float* in, float* out, std::uint32_t* argmax) {
  const Index oh_n = static_cast<Index>(g.out_h()), ow_n = static_cast<Index>(g.out_w());
  const Index planes = static_cast<Index>(g.batch * g.channels);
  const Index W = static_cast<Index>(g.in_w), k = static_cast<Index>(g.kernel);
  const Index plane_in = static_cast<Index>(g.in_h) * W;

#pragma omp parallel for schedule(static)
  for (Index p = 0; p < planes; ++p) {
    const float* plane = in + p * plane_in;
    for (Index oh = 0; oh < oh_n; ++oh)
      for (Index ow = 0; ow < ow_n; ++ow) {
        Index best = oh * k * W + ow * k;
        for (Index dh = 0; dh < k; ++dh)
          for (Index dw = 0; dw < k; ++dw) {
            const Index idx = (oh * k + dh) * W + ow * k + dw;
            if (plane[idx] > plane[best]) best = idx;
          }
        out[(p * oh_n + oh) * ow_n + ow] = plane[best];
        if (argmax) argmax[(p * oh_n + oh) * ow_n + ow] = static_cast<std::uint32_t>(best);
      }
  }
}

void maxpool_backward(const PoolGeometry& g, const float* grad_out, const std::uint32_t* argmax,
                      float* grad_in) {
  const Index planes = static_cast<Index>(g.batch * g.channels);
  const Index plane_in = static_cast<Index>(g.in_h * g.in_w);
  const Index plane_out = static_cast<Index>(g.out_h() * g.out_w());

#pragma omp parallel for schedule(static)
  for (Index p = 0; p < planes; ++p) {
    float* gin = grad_in + p * plane_in;
    std::fill(gin, gin + plane_in, 0.0f);
    for (Index o = 0; o < plane_out; ++o) gin[argmax[p * plane_out + o]] += grad_out[p * plane_out + o];
  }
}

void global_avg_pool_forward(std::size_t planes, std::size_t plane_size, const float* in,
                             float* out) {
  const Index n = static_cast<Index>(planes), sz = static_cast<Index>(plane_size);
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < n; ++p) {
    float acc = 0.0f;
    for (Index i = 0; i < sz; ++i) acc += in[p * sz + i];
    out[p] = acc / static_cast<float>(sz);
  }
}

void global_avg_pool_backward(std::size_t planes, std::size_t plane_size, const float* grad_out,
                              float* grad_in) {
  const Index n = static_cast<Index>(planes), sz = static_cast<Index>(plane_size);
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < n; ++p) {
    const float g = grad_out[p] / static_cast<float>(sz);
    std::fill(grad_in + p * sz, grad_in + (p + 1) * sz, g);
  }
}

void fc_forward(std::size_t batch, std::size_t in_f, std::size_t out_f, const float* in,
                const float* weight, const float* bias, float* out) {
  const Index nb = static_cast<Index>(batch), ni = static_cast<Index>(in_f),
              no = static_cast<Index>(out_f);
#pragma omp parallel for collapse(2) schedule(static)
  for (Index n = 0; n < nb; ++n)
    for (Index o = 0; o < no; ++o) {
      float acc = bias[o];
      for (Index i = 0; i < ni; ++i) acc += weight[o * ni + i] * in[n * ni + i];
      out[n * no + o] = acc;
    }
}

void fc_backward(std::size_t batch, std::size_t in_f, std::size_t out_f, const float* in,
                 const float* weight, const float* grad_out, float* grad_in,
                 float* grad_weight, float* grad_bias) {
  const Index nb = static_cast<Index>(batch), ni = static_cast<Index>(in_f),
              no = static_cast<Index>(out_f);
#pragma omp parallel for collapse(2) schedule(static)
  for (Index n = 0; n < nb; ++n)
    for (Index i = 0; i < ni; ++i) {
      float acc = 0.0f;
      for (Index o = 0; o < no; ++o) acc += weight[o * ni + i] * grad_out[n * no + o];
      grad_in[n * ni + i] = acc;
    }
#pragma omp parallel for schedule(static)
  for (Index o = 0; o < no; ++o) {
    for (Index i = 0; i < ni; ++i) {
      float acc = 0.0f;
      for (Index n = 0; n < nb; ++n) acc += grad_out[n * no + o] * in[n * ni + i];
      grad_weight[o * ni + i] += acc;
    }
    float acc = 0.0f;
    for (Index n = 0; n < nb; ++n) acc += grad_out[n * no + o];
    grad_bias[o] += acc;
  }
}

}  // namespace rankiqa::kernels
