#include "rankiqa/network.hpp"

#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "rankiqa/errors.hpp"
#include "rankiqa/kernels.hpp"

namespace rankiqa {

namespace {

std::vector<std::size_t> parse_args(std::string_view text, std::string_view name,
                                    std::size_t expected) {
  std::vector<std::size_t> out;
  const auto open = text.find('(');
  const auto close = text.rfind(')');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    throw ConfigError("malformed layer descriptor '" + std::string(text) + "'");
  }
  std::string_view body = text.substr(open + 1, close - open - 1);
  while (!body.empty()) {
    const auto comma = body.find(',');
    std::string_view tok = body.substr(0, comma);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
      throw ConfigError("bad integer '" + std::string(tok) + "' in " + std::string(text));
    }
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    body.remove_prefix(comma + 1);
  }
  if (out.size() != expected) {
    throw ConfigError(std::string(name) + " expects " + std::to_string(expected) +
                      " arguments: " + std::string(text));
  }
  return out;
}

std::string layer_label(std::size_t index, const LayerDesc& layer) {
  return "layer " + std::to_string(index) + " (" + layer.to_string() + ")";
}

}  // namespace

LayerDesc LayerDesc::conv2d(std::size_t kernel, std::size_t in_ch, std::size_t out_ch,
                            std::size_t stride, std::size_t pad) {
  return {LayerKind::Conv2d, kernel, in_ch, out_ch, stride, pad};
}
LayerDesc LayerDesc::relu() { return {LayerKind::Relu}; }
LayerDesc LayerDesc::maxpool(std::size_t kernel) {
  return {LayerKind::MaxPool, kernel, 0, 0, kernel, 0};
}
LayerDesc LayerDesc::global_avg_pool() { return {LayerKind::GlobalAvgPool}; }
LayerDesc LayerDesc::fully_connected(std::size_t in_features, std::size_t out_features) {
  return {LayerKind::FullyConnected, 0, in_features, out_features, 1, 0};
}

std::string LayerDesc::to_string() const {
  std::ostringstream os;
  switch (kind) {
    case LayerKind::Conv2d:
      os << "conv2d(" << kernel << ',' << in_ch << ',' << out_ch << ',' << stride << ','
         << pad << ')';
      break;
    case LayerKind::Relu: os << "relu"; break;
    case LayerKind::MaxPool: os << "maxpool(" << kernel << ')'; break;
    case LayerKind::GlobalAvgPool: os << "global_avg_pool"; break;
    case LayerKind::FullyConnected:
      os << "fully_connected(" << in_ch << ',' << out_ch << ')';
      break;
  }
  return os.str();
}

LayerDesc LayerDesc::parse(std::string_view text) {
  const std::string_view head = text.substr(0, text.find('('));
  if (head == "relu") return relu();
  if (head == "global_avg_pool") return global_avg_pool();
  if (head == "conv2d") {
    const auto a = parse_args(text, head, 5);
    return conv2d(a[0], a[1], a[2], a[3], a[4]);
  }
  if (head == "maxpool") return maxpool(parse_args(text, head, 1)[0]);
  if (head == "fully_connected") {
    const auto a = parse_args(text, head, 2);
    return fully_connected(a[0], a[1]);
  }
  throw ConfigError("unknown layer type '" + std::string(text) + "'");
}

void NetworkSpec::validate() const {
  if (in_channels == 0) throw ShapeError("network input must have at least one channel");
  std::size_t channels = in_channels;
  bool flat = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDesc& l = layers[i];
    switch (l.kind) {
      case LayerKind::Conv2d:
        if (flat) throw ShapeError(layer_label(i, l) + " follows a flattening layer");
        if (l.kernel == 0 || l.stride == 0 || l.out_ch == 0)
          throw ShapeError(layer_label(i, l) + " has a zero kernel, stride or width");
        if (l.in_ch != channels)
          throw ShapeError(layer_label(i, l) + " expects " + std::to_string(l.in_ch) +
                           " input channels but receives " + std::to_string(channels));
        channels = l.out_ch;
        break;
      case LayerKind::MaxPool:
        if (flat) throw ShapeError(layer_label(i, l) + " follows a flattening layer");
        if (l.kernel == 0) throw ShapeError(layer_label(i, l) + " has a zero kernel");
        break;
      case LayerKind::Relu: break;
      case LayerKind::GlobalAvgPool:
        if (flat) throw ShapeError(layer_label(i, l) + " follows a flattening layer");
        flat = true;
        break;
      case LayerKind::FullyConnected:
        if (l.in_ch == 0 || l.out_ch == 0)
          throw ShapeError(layer_label(i, l) + " has zero features");
        if (flat && l.in_ch != channels)
          throw ShapeError(layer_label(i, l) + " expects " + std::to_string(l.in_ch) +
                           " features but receives " + std::to_string(channels));
        flat = true;
        channels = l.out_ch;
        break;
    }
  }
  if (!flat || channels != 1) {
    throw ShapeError("network must end in a single scalar output (got " +
                     std::to_string(channels) + (flat ? " features)" : " spatial channels)"));
  }
}

std::vector<Shape> NetworkSpec::layer_shapes(const Shape& input) const {
  if (input.size() != 4) {
    throw ShapeError("network input must be [M, C, H, W], got " + shape_string(input));
  }
  if (input[1] != in_channels) {
    throw ShapeError("network expects " + std::to_string(in_channels) +
                     " input channels, batch has shape " + shape_string(input));
  }
  if (input[0] == 0) throw ShapeError("empty batch " + shape_string(input));
  std::vector<Shape> shapes{input};
  Shape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDesc& l = layers[i];
    switch (l.kind) {
      case LayerKind::Conv2d: {
        ConvGeometry g{cur[0], cur[1], cur[2], cur[3], l.out_ch, l.kernel, l.stride, l.pad};
        if (cur.size() != 4 || cur[1] != l.in_ch || !g.valid())
          throw ShapeError(layer_label(i, l) + " cannot consume " + shape_string(cur));
        cur = {cur[0], l.out_ch, g.out_h(), g.out_w()};
        break;
      }
      case LayerKind::MaxPool:
        if (cur.size() != 4 || cur[2] < l.kernel || cur[3] < l.kernel)
          throw ShapeError(layer_label(i, l) + " cannot consume " + shape_string(cur));
        cur = {cur[0], cur[1], cur[2] / l.kernel, cur[3] / l.kernel};
        break;
      case LayerKind::Relu: break;
      case LayerKind::GlobalAvgPool:
        if (cur.size() != 4)
          throw ShapeError(layer_label(i, l) + " cannot consume " + shape_string(cur));
        cur = {cur[0], cur[1]};
        break;
      case LayerKind::FullyConnected: {
        const std::size_t features = shape_numel(cur) / cur[0];
        if (features != l.in_ch)
          throw ShapeError(layer_label(i, l) + " expects " + std::to_string(l.in_ch) +
                           " features but receives " + shape_string(cur));
        cur = {cur[0], l.out_ch};
        break;
      }
    }
    shapes.push_back(cur);
  }
  if (shape_numel(cur) != cur[0]) {
    throw ShapeError("network output " + shape_string(cur) + " is not one scalar per sample");
  }
  return shapes;
}

NetworkSpec NetworkSpec::desk_default() {
  NetworkSpec s;
  s.in_channels = 1;
  s.layers = {LayerDesc::conv2d(3, 1, 8, 1, 1),   LayerDesc::relu(), LayerDesc::maxpool(2),
              LayerDesc::conv2d(3, 8, 16, 1, 1),  LayerDesc::relu(), LayerDesc::maxpool(2),
              LayerDesc::conv2d(3, 16, 32, 1, 1), LayerDesc::relu(),
              LayerDesc::conv2d(3, 32, 32, 1, 1), LayerDesc::relu(),
              LayerDesc::global_avg_pool(),       LayerDesc::fully_connected(32, 1)};
  return s;
}

std::string NetworkSpec::to_string() const {
  std::string out = "in=" + std::to_string(in_channels);
  for (const auto& l : layers) out += ";" + l.to_string();
  return out;
}

NetworkSpec NetworkSpec::parse(std::string_view text) {
  NetworkSpec spec;
  bool first = true;
  while (!text.empty()) {
    const auto semi = text.find(';');
    const std::string_view tok = text.substr(0, semi);
    if (first) {
      if (tok.substr(0, 3) != "in=") throw ConfigError("network descriptor must start with in=<channels>");
      std::size_t c = 0;
      auto [ptr, ec] = std::from_chars(tok.data() + 3, tok.data() + tok.size(), c);
      if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw ConfigError("bad channel count in '" + std::string(tok) + "'");
      spec.in_channels = c;
      first = false;
    } else if (!tok.empty()) {
      spec.layers.push_back(LayerDesc::parse(tok));
    }
    if (semi == std::string_view::npos) break;
    text.remove_prefix(semi + 1);
  }
  if (first) throw ConfigError("empty network descriptor");
  return spec;
}

Parameter& ParameterStore::add(std::string name, Shape shape) {
  for (const auto& p : params_) {
    if (p.name == name) throw ConfigError("duplicate parameter name " + name);
  }
  Tensor value(shape);
  Tensor grad(std::move(shape));
  params_.push_back({std::move(name), std::move(value), std::move(grad)});
  return params_.back();
}

Parameter& ParameterStore::at(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ConfigError("no parameter named " + std::string(name));
}

const Parameter& ParameterStore::at(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ConfigError("no parameter named " + std::string(name));
}

std::size_t ParameterStore::total_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0f);
}

ParameterStore make_parameters(const NetworkSpec& spec) {
  spec.validate();
  ParameterStore store;
  std::size_t conv = 0, fc = 0;
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::Conv2d) {
      const std::string base = "conv" + std::to_string(++conv);
      store.add(base + ".weight", {l.out_ch, l.in_ch, l.kernel, l.kernel});
      store.add(base + ".bias", {l.out_ch});
    } else if (l.kind == LayerKind::FullyConnected) {
      const std::string base = "fc" + std::to_string(++fc);
      store.add(base + ".weight", {l.out_ch, l.in_ch});
      store.add(base + ".bias", {l.out_ch});
    }
  }
  return store;
}

void init_he_uniform(const NetworkSpec& spec, ParameterStore& params, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::size_t idx = 0;
  for (const auto& l : spec.layers) {
    if (!l.has_params()) continue;
    if (idx + 1 >= params.size()) throw ShapeError("parameter store does not match network spec");
    const std::size_t fan_in =
        l.kind == LayerKind::Conv2d ? l.in_ch * l.kernel * l.kernel : l.in_ch;
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    Tensor& w = params[idx].value;
    for (auto& v : w.data()) {
      // 24 random mantissa bits give an exactly representable u in [0, 1).
      const float u = static_cast<float>(engine() >> 40) * 0x1.0p-24f;
      v = (2.0f * u - 1.0f) * bound;
    }
    params[idx + 1].value.fill(0.0f);
    idx += 2;
  }
}

Model Model::create(NetworkSpec spec, std::uint64_t seed) {
  Model m{std::move(spec), {}};
  m.params = make_parameters(m.spec);
  init_he_uniform(m.spec, m.params, seed);
  return m;
}

Tensor forward(const NetworkSpec& spec, const ParameterStore& params, const Tensor& batch,
               ActivationCache* cache) {
  const std::vector<Shape> shapes = spec.layer_shapes(batch.shape());
  const std::size_t M = batch.dim(0);
  if (cache) {
    cache->clear();
    cache->shapes = shapes;
    cache->argmax.resize(spec.layers.size());
  }

  Tensor cur = batch;
  std::size_t pidx = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& l = spec.layers[i];
    const Shape& in_shape = shapes[i];
    Tensor out(shapes[i + 1]);
    switch (l.kind) {
      case LayerKind::Conv2d: {
        const ConvGeometry g{M, in_shape[1], in_shape[2], in_shape[3], l.out_ch, l.kernel,
                             l.stride, l.pad};
        kernels::conv2d_forward(g, cur.data().data(), params[pidx].value.data().data(),
                                params[pidx + 1].value.data().data(), out.data().data());
        pidx += 2;
        break;
      }
      case LayerKind::Relu:
        kernels::relu_forward(cur.size(), cur.data().data(), out.data().data());
        break;
      case LayerKind::MaxPool: {
        const PoolGeometry g{M, in_shape[1], in_shape[2], in_shape[3], l.kernel};
        std::vector<std::uint32_t> argmax(out.size());
        kernels::maxpool_forward(g, cur.data().data(), out.data().data(), argmax.data());
        if (cache) cache->argmax[i] = std::move(argmax);
        break;
      }
      case LayerKind::GlobalAvgPool:
        kernels::global_avg_pool_forward(M * in_shape[1], in_shape[2] * in_shape[3],
                                         cur.data().data(), out.data().data());
        break;
      case LayerKind::FullyConnected:
        kernels::fc_forward(M, l.in_ch, l.out_ch, cur.data().data(),
                            params[pidx].value.data().data(),
                            params[pidx + 1].value.data().data(), out.data().data());
        pidx += 2;
        break;
    }
    if (cache) cache->inputs.push_back(std::move(cur));
    cur = std::move(out);
  }
  if (cache) cache->batch = M;
  cur.reshape({M});
  return cur;
}

void backward(const NetworkSpec& spec, ParameterStore& params, const ActivationCache& cache,
              std::span<const float> output_grads) {
  if (!cache.valid() || cache.inputs.size() != spec.layers.size()) {
    throw StateError("backward called without a matching forward pass");
  }
  const std::size_t M = cache.batch;
  if (output_grads.size() != M) {
    throw ShapeError("backward received " + std::to_string(output_grads.size()) +
                     " output gradients for a batch of " + std::to_string(M));
  }
  std::size_t pidx = 0;
  for (const auto& l : spec.layers)
    if (l.has_params()) pidx += 2;

  Tensor grad(cache.shapes.back(), std::vector<float>(output_grads.begin(), output_grads.end()));
  for (std::size_t i = spec.layers.size(); i-- > 0;) {
    const LayerDesc& l = spec.layers[i];
    const Tensor& in = cache.inputs[i];
    const Shape& in_shape = cache.shapes[i];
    Tensor grad_in(in_shape);
    switch (l.kind) {
      case LayerKind::Conv2d: {
        pidx -= 2;
        const ConvGeometry g{M, in_shape[1], in_shape[2], in_shape[3], l.out_ch, l.kernel,
                             l.stride, l.pad};
        kernels::conv2d_backward_params(g, in.data().data(), grad.data().data(),
                                        params[pidx].grad.data().data(),
                                        params[pidx + 1].grad.data().data());
        if (i > 0)
          kernels::conv2d_backward_input(g, grad.data().data(), params[pidx].value.data().data(),
                                         grad_in.data().data());
        break;
      }
      case LayerKind::Relu:
        kernels::relu_backward(in.size(), in.data().data(), grad.data().data(),
                               grad_in.data().data());
        break;
      case LayerKind::MaxPool: {
        const PoolGeometry g{M, in_shape[1], in_shape[2], in_shape[3], l.kernel};
        kernels::maxpool_backward(g, grad.data().data(), cache.argmax[i].data(),
                                  grad_in.data().data());
        break;
      }
      case LayerKind::GlobalAvgPool:
        kernels::global_avg_pool_backward(M * in_shape[1], in_shape[2] * in_shape[3],
                                          grad.data().data(), grad_in.data().data());
        break;
      case LayerKind::FullyConnected:
        pidx -= 2;
        kernels::fc_backward(M, l.in_ch, l.out_ch, in.data().data(),
                             params[pidx].value.data().data(), grad.data().data(),
                             grad_in.data().data(), params[pidx].grad.data().data(),
                             params[pidx + 1].grad.data().data());
        break;
    }
    grad = std::move(grad_in);
  }
}

}  // namespace rankiqa
