#include "rankiqa/reference_network.hpp"

#include "rankiqa/errors.hpp"
#include "rankiqa/reference_kernels.hpp"

namespace rankiqa {

ParamValues to_double(const ParameterStore& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.value.data().begin(), p.value.data().end());
  return out;
}

ParamValues zeros_like(const ParamValues& values) {
  ParamValues out;
  out.reserve(values.size());
  for (const auto& v : values) out.emplace_back(v.size(), 0.0);
  return out;
}

std::vector<double> reference_forward(const NetworkSpec& spec,
                                      const ParamValues& values,
                                      const Tensor& batch,
                                      std::vector<std::uint32_t>* pattern) {
  if (pattern) pattern->clear();
  const std::vector<Shape> shapes = spec.layer_shapes(batch.shape());
  const std::size_t M = batch.dim(0);
  std::vector<double> cur(batch.data().begin(), batch.data().end());
  std::size_t pidx = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& l = spec.layers[i];
    const Shape& s = shapes[i];
    std::vector<double> out(shape_numel(shapes[i + 1]));
    switch (l.kind) {
      case LayerKind::Conv2d: {
        const ConvGeometry g{M, s[1], s[2], s[3], l.out_ch, l.kernel, l.stride, l.pad};
        reference::conv2d_forward(g, cur.data(), values.at(pidx).data(),
                                  values.at(pidx + 1).data(), out.data());
        pidx += 2;
        break;
      }
      case LayerKind::Relu:
        reference::relu_forward(cur.size(), cur.data(), out.data());
        if (pattern)
          for (double v : cur) pattern->push_back(v > 0.0);
        break;
      case LayerKind::MaxPool: {
        const PoolGeometry g{M, s[1], s[2], s[3], l.kernel};
        std::vector<std::uint32_t> argmax(out.size());
        reference::maxpool_forward<double>(g, cur.data(), out.data(), argmax.data());
        if (pattern) pattern->insert(pattern->end(), argmax.begin(), argmax.end());
        break;
      }
      case LayerKind::GlobalAvgPool:
        reference::global_avg_pool_forward(M * s[1], s[2] * s[3], cur.data(), out.data());
        break;
      case LayerKind::FullyConnected:
        reference::fc_forward(M, l.in_ch, l.out_ch, cur.data(), values.at(pidx).data(),
                              values.at(pidx + 1).data(), out.data());
        pidx += 2;
        break;
    }
    cur = std::move(out);
  }
  return cur;
}

void reference_backward(const NetworkSpec& spec, const ParamValues& values, const Tensor& batch,
                        std::span<const double> upstream, ParamValues& grads) {
  const std::vector<Shape> shapes = spec.layer_shapes(batch.shape());
  const std::size_t M = batch.dim(0);
  if (upstream.size() != M) throw ShapeError("reference_backward: upstream length differs from batch");
  std::vector<std::vector<double>> acts;
  std::vector<std::vector<std::uint32_t>> argmax(spec.layers.size());
  acts.emplace_back(batch.data().begin(), batch.data().end());
  std::size_t pidx = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& l = spec.layers[i];
    const Shape& s = shapes[i];
    const std::vector<double>& cur = acts.back();
    std::vector<double> out(shape_numel(shapes[i + 1]));
    switch (l.kind) {
      case LayerKind::Conv2d: {
        const ConvGeometry g{M, s[1], s[2], s[3], l.out_ch, l.kernel, l.stride, l.pad};
        reference::conv2d_forward(g, cur.data(), values.at(pidx).data(), values.at(pidx + 1).data(), out.data());
        pidx += 2;
        break;
      }
      case LayerKind::Relu:
        reference::relu_forward(cur.size(), cur.data(), out.data());
        break;
      case LayerKind::MaxPool: {
        const PoolGeometry g{M, s[1], s[2], s[3], l.kernel};
        argmax[i].resize(out.size());
        reference::maxpool_forward<double>(g, cur.data(), out.data(), argmax[i].data());
        break;
      }
      case LayerKind::GlobalAvgPool:
        reference::global_avg_pool_forward(M * s[1], s[2] * s[3], cur.data(), out.data());
        break;
      case LayerKind::FullyConnected:
        reference::fc_forward(M, l.in_ch, l.out_ch, cur.data(), values.at(pidx).data(),
                              values.at(pidx + 1).data(), out.data());
        pidx += 2;
        break;
    }
    acts.push_back(std::move(out));
  }

  std::vector<double> grad(upstream.begin(), upstream.end());
  for (std::size_t i = spec.layers.size(); i-- > 0;) {
    const LayerDesc& l = spec.layers[i];
    const Shape& s = shapes[i];
    const std::vector<double>& in = acts[i];
    std::vector<double> grad_in(in.size(), 0.0);
    switch (l.kind) {
      case LayerKind::Conv2d: {
        pidx -= 2;
        const ConvGeometry g{M, s[1], s[2], s[3], l.out_ch, l.kernel, l.stride, l.pad};
        reference::conv2d_backward_params(g, in.data(), grad.data(), grads.at(pidx).data(),
                                          grads.at(pidx + 1).data());
        reference::conv2d_backward_input(g, grad.data(), values[pidx].data(), grad_in.data());
        break;
      }
      case LayerKind::Relu:
        reference::relu_backward(in.size(), in.data(), grad.data(), grad_in.data());
        break;
      case LayerKind::MaxPool: {
        const PoolGeometry g{M, s[1], s[2], s[3], l.kernel};
        reference::maxpool_backward(g, grad.data(), argmax[i].data(), grad_in.data());
        break;
      }
      case LayerKind::GlobalAvgPool:
        reference::global_avg_pool_backward(M * s[1], s[2] * s[3], grad.data(), grad_in.data());
        break;
      case LayerKind::FullyConnected:
        pidx -= 2;
        reference::fc_backward(M, l.in_ch, l.out_ch, in.data(), values[pidx].data(), grad.data(),
                               grad_in.data(), grads.at(pidx).data(), grads.at(pidx + 1).data());
        break;
    }
    grad = std::move(grad_in);
  }
}

}  // namespace rankiqa
