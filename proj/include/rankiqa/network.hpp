#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rankiqa/tensor.hpp"

namespace rankiqa {

enum class LayerKind { Conv2d, Relu, MaxPool, GlobalAvgPool, FullyConnected };

// One layer of a single Siamese branch. Conv2d uses every field, MaxPool
// only `kernel`, FullyConnected reads in_ch/out_ch as feature counts.
struct LayerDesc {
  LayerKind kind = LayerKind::Relu;
  std::size_t kernel = 0;
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;

  static LayerDesc conv2d(std::size_t kernel, std::size_t in_ch, std::size_t out_ch,
                          std::size_t stride = 1, std::size_t pad = 0);
  static LayerDesc relu();
  static LayerDesc maxpool(std::size_t kernel);
  static LayerDesc global_avg_pool();
  static LayerDesc fully_connected(std::size_t in_features, std::size_t out_features);

  bool has_params() const {
    return kind == LayerKind::Conv2d || kind == LayerKind::FullyConnected;
  }

  // Round-trips through parse(): "conv2d(3,1,8,1,1)", "relu", "maxpool(2)",
  // "global_avg_pool", "fully_connected(32,1)".
  std::string to_string() const;
  static LayerDesc parse(std::string_view text);

  bool operator==(const LayerDesc&) const = default;
};

struct NetworkSpec {
  std::size_t in_channels = 1;
  std::vector<LayerDesc> layers;

  // Checks channel consistency between adjacent layers and that the network
  // ends in a single scalar. Throws ShapeError.
  void validate() const;

  // Shapes of every layer input for a [M, C, H, W] batch, followed by the
  // output shape. Throws ShapeError when the batch does not fit the NetworkSpec.
  std::vector<Shape> layer_shapes(const Shape& input) const;

  // Four 3x3 conv layers and one fully connected layer at toy width.
  static NetworkSpec desk_default();

  std::string to_string() const;  // "in=1;conv2d(3,1,8,1,1);relu;..."
  static NetworkSpec parse(std::string_view text);

  bool operator==(const NetworkSpec&) const = default;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Named parameters with paired gradients, iterated in layer order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Shape shape);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

  std::size_t size() const { return params_.size(); }
  bool empty() const { return params_.empty(); }
  std::size_t total_values() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

 private:
  std::vector<Parameter> params_;
};

// Zero-valued parameters named conv1.weight, conv1.bias, ..., fc1.weight, fc1.bias.
ParameterStore make_parameters(const NetworkSpec& spec);

// He-scaled uniform weights U(-a, a) with a = sqrt(6 / fan_in); zero biases.
void init_he_uniform(const NetworkSpec& spec, ParameterStore& params, std::uint64_t seed);

// Activations kept by forward() for the following backward().
struct ActivationCache {
  std::vector<Tensor> inputs;
  std::vector<std::vector<std::uint32_t>> argmax;
  std::vector<Shape> shapes;
  std::size_t batch = 0;

  bool valid() const { return batch > 0; }
  void clear() { *this = ActivationCache{}; }
};

// Scores f(x_i; theta) for a [M, C, H, W] batch. Pure: identical inputs give
// bit-identical outputs.
Tensor forward(const NetworkSpec& spec, const ParameterStore& params, const Tensor& batch,
               ActivationCache* cache = nullptr);

// Accumulates d(sum_i output_grads[i] * score_i)/d(param) into the parameter
// gradients. Throws StateError without a matching forward.
void backward(const NetworkSpec& spec, ParameterStore& params, const ActivationCache& cache,
              std::span<const float> output_grads);

struct Model {
  NetworkSpec spec;
  ParameterStore params;

  static Model create(NetworkSpec spec, std::uint64_t seed);
};

}  // namespace rankiqa
