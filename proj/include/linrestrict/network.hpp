#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "linrestrict/tensor.hpp"

namespace linrestrict {

// Layer variants. Weights are row-major; images are channels-first [c, h, w].

/// Fully connected layer. Accepts any input whose element count equals `in`
/// (read in row-major order) and produces shape [out].
struct Dense {
  std::size_t out = 0;
  std::size_t in = 0;
  std::vector<double> weights;  // out x in
  std::vector<double> bias;     // out

  double weight(std::size_t row, std::size_t col) const { return weights[row * in + col]; }
  bool operator==(const Dense&) const = default;
};

/// 2-D convolution over [in_channels, h, w] with zero padding.
struct Conv2D {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::vector<double> kernel;  // [out_channels, in_channels, kernel_h, kernel_w]
  std::vector<double> bias;    // out_channels
  std::array<std::size_t, 2> stride{1, 1};
  std::array<std::size_t, 2> padding{0, 0};

  bool operator==(const Conv2D&) const = default;
};

/// Per-channel (v - mean) / std. The channel axis is the leading axis, so a
/// rank-1 input has one channel per element.
struct Normalize {
  std::vector<double> mean;
  std::vector<double> std;

  bool operator==(const Normalize&) const = default;
};

struct Flatten {
  bool operator==(const Flatten&) const = default;
};

struct ReLU {
  bool operator==(const ReLU&) const = default;
};

/// Per-channel max over windows of a [c, h, w] input, no padding.
struct MaxPool {
  std::array<std::size_t, 2> window{2, 2};
  std::array<std::size_t, 2> stride{2, 2};

  bool operator==(const MaxPool&) const = default;
};

using Layer = std::variant<Dense, Conv2D, Normalize, Flatten, ReLU, MaxPool>;

bool is_affine(const Layer& layer);
std::string_view layer_name(const Layer& layer);

/// Output shape of `layer` applied to `input`; throws shape-error when the
/// layer cannot consume that shape or its own parameters are inconsistent.
Shape layer_output_shape(const Layer& layer, const Shape& input);

/// Checks every layer invariant and inter-layer shape compatibility. Returns
/// the shape entering each layer followed by the network output shape.
/// Throws shape-error naming the first offending layer.
std::vector<Shape> validate_network(const Shape& input_shape,
                                    const std::vector<Layer>& layers);

/// A validated, immutable sequence of piecewise-linear layers.
class Network {
 public:
  Network(Shape input_shape, std::vector<Layer> layers);

  const Shape& input_shape() const noexcept { return shapes_.front(); }
  const Shape& output_shape() const noexcept { return shapes_.back(); }
  /// Shape entering layer `k` (k == layers().size() gives the output shape).
  const Shape& shape_before(std::size_t k) const { return shapes_.at(k); }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  std::size_t input_size() const { return element_count(input_shape()); }
  std::size_t output_size() const { return element_count(output_shape()); }
  /// True when every nonlinearity is a ReLU (no MaxPool).
  bool relu_only() const;

  bool operator==(const Network&) const = default;

 private:
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
};

/// Applies one layer to a flat input of shape `in_shape`. `out` must hold
/// element_count(layer_output_shape(layer, in_shape)) values.
void apply_layer(const Layer& layer, const Shape& in_shape,
                 std::span<const double> in, std::span<double> out);

/// Applies only the linear part of an affine layer (biases and means dropped).
void apply_linear_part(const Layer& layer, const Shape& in_shape,
                       std::span<const double> in, std::span<double> out);

/// Vector-Jacobian product through one layer, with the activation pattern
/// fixed by `layer_input`. ReLU passes gradient only where the input is
/// strictly positive; MaxPool routes to the lowest-index argmax.
void backprop_layer(const Layer& layer, const Shape& in_shape,
                    std::span<const double> layer_input,
                    std::span<const double> upstream, std::span<double> downstream);

/// Flat input indices of every MaxPool window, window-major, row-major inside
/// each window. Window k occupies [k * s, (k + 1) * s) with s = wh * ww.
std::vector<std::size_t> maxpool_window_indices(const MaxPool& pool, const Shape& in_shape);

Tensor forward(const Network& net, const Tensor& x);
std::vector<double> forward(const Network& net, std::span<const double> x);

/// Gradient of output component `output_index` with respect to the input.
Tensor gradient(const Network& net, const Tensor& x, std::size_t output_index);
std::vector<double> gradient(const Network& net, std::span<const double> x,
                             std::size_t output_index);

/// Composes maximal runs of affine layers into single Dense layers when the
/// run ends in a rank-1 shape and the composed matrix stays within a size
/// budget; other layers are kept as they are.
Network fold_affine_layers(const Network& net);

}  // namespace linrestrict
