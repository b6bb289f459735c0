#include "linrestrict/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "linrestrict/error.hpp"

namespace linrestrict {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct ConvGeometry {
  std::size_t in_h, in_w, out_h, out_w;
};

ConvGeometry conv_geometry(const Conv2D& c, const Shape& in) {
  const std::size_t h = in[1] + 2 * c.padding[0];
  const std::size_t w = in[2] + 2 * c.padding[1];
  return {in[1], in[2], (h - c.kernel_h) / c.stride[0] + 1, (w - c.kernel_w) / c.stride[1] + 1};
}

// Output shape without the layer-index context; the message is completed by
// validate_network.
Shape output_shape_impl(const Layer& layer, const Shape& in) {
  const std::size_t n = element_count(in);
  return std::visit(
      overloaded{
          [&](const Dense& d) -> Shape {
            if (d.out == 0 || d.in == 0) fail(ErrorCode::shape, "dense dimensions must be positive");
            if (d.weights.size() != d.out * d.in)
              fail(ErrorCode::shape, "dense weights hold " + std::to_string(d.weights.size()) +
                                         " values, expected " + std::to_string(d.out) + "x" +
                                         std::to_string(d.in));
            if (d.bias.size() != d.out)
              fail(ErrorCode::shape, "dense weight row count " + std::to_string(d.out) +
                                         " differs from bias length " +
                                         std::to_string(d.bias.size()));
            if (!all_finite(d.weights) || !all_finite(d.bias))
              fail(ErrorCode::shape, "dense parameters must be finite");
            if (n != d.in)
              fail(ErrorCode::shape, "expected input of " + std::to_string(d.in) +
                                         " elements, got shape " + shape_to_string(in));
            return Shape{d.out};
          },
          [&](const Conv2D& c) -> Shape {
            if (c.out_channels == 0 || c.in_channels == 0 || c.kernel_h == 0 || c.kernel_w == 0)
              fail(ErrorCode::shape, "conv2d dimensions must be positive");
            if (c.kernel.size() != c.out_channels * c.in_channels * c.kernel_h * c.kernel_w)
              fail(ErrorCode::shape, "conv2d kernel size does not match its declared dimensions");
            if (c.bias.size() != c.out_channels)
              fail(ErrorCode::shape, "conv2d bias length " + std::to_string(c.bias.size()) +
                                         " differs from output channels " +
                                         std::to_string(c.out_channels));
            if (c.stride[0] == 0 || c.stride[1] == 0)
              fail(ErrorCode::shape, "conv2d stride must be positive");
            if (!all_finite(c.kernel) || !all_finite(c.bias))
              fail(ErrorCode::shape, "conv2d parameters must be finite");
            if (in.size() != 3 || in[0] != c.in_channels)
              fail(ErrorCode::shape, "expected input [" + std::to_string(c.in_channels) +
                                         ",h,w], got shape " + shape_to_string(in));
            if (in[1] + 2 * c.padding[0] < c.kernel_h || in[2] + 2 * c.padding[1] < c.kernel_w)
              fail(ErrorCode::shape, "conv2d kernel larger than padded input " +
                                         shape_to_string(in));
            const auto g = conv_geometry(c, in);
            return Shape{c.out_channels, g.out_h, g.out_w};
          },
          [&](const Normalize& z) -> Shape {
            if (z.mean.size() != z.std.size())
              fail(ErrorCode::shape, "normalize mean and std lengths differ");
            if (z.mean.size() != in[0])
              fail(ErrorCode::shape, "normalize has " + std::to_string(z.mean.size()) +
                                         " channels, input shape " + shape_to_string(in) +
                                         " has " + std::to_string(in[0]));
            if (!all_finite(z.mean) || !all_finite(z.std))
              fail(ErrorCode::shape, "normalize parameters must be finite");
            for (double s : z.std)
              if (!(s > 0.0)) fail(ErrorCode::shape, "normalize std must be strictly positive");
            return in;
          },
          [&](const Flatten&) -> Shape { return Shape{n}; },
          [&](const ReLU&) -> Shape { return in; },
          [&](const MaxPool& p) -> Shape {
            if (p.window[0] == 0 || p.window[1] == 0 || p.stride[0] == 0 || p.stride[1] == 0)
              fail(ErrorCode::shape, "maxpool window and stride must be positive");
            if (in.size() != 3)
              fail(ErrorCode::shape, "expected input [c,h,w], got shape " + shape_to_string(in));
            if (in[1] < p.window[0] || in[2] < p.window[1])
              fail(ErrorCode::shape, "maxpool window larger than input " + shape_to_string(in));
            return Shape{in[0], (in[1] - p.window[0]) / p.stride[0] + 1,
                         (in[2] - p.window[1]) / p.stride[1] + 1};
          },
      },
      layer);
}

void conv_forward(const Conv2D& c, const Shape& in_shape, std::span<const double> in,
                  std::span<double> out, bool with_bias) {
  const auto g = conv_geometry(c, in_shape);
  const std::size_t in_plane = g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(c.padding[0]);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(c.padding[1]);
  const std::ptrdiff_t sh = static_cast<std::ptrdiff_t>(c.stride[0]);
  const std::ptrdiff_t sw = static_cast<std::ptrdiff_t>(c.stride[1]);
  const std::ptrdiff_t ih_max = static_cast<std::ptrdiff_t>(g.in_h);
  const std::ptrdiff_t iw_max = static_cast<std::ptrdiff_t>(g.in_w);
  for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
    double* o = out.data() + oc * out_plane;
    std::fill(o, o + out_plane, with_bias ? c.bias[oc] : 0.0);
    for (std::size_t ic = 0; ic < c.in_channels; ++ic) {
      const double* src = in.data() + ic * in_plane;
      for (std::size_t ki = 0; ki < c.kernel_h; ++ki) {
        for (std::size_t kj = 0; kj < c.kernel_w; ++kj) {
          const double w =
              c.kernel[((oc * c.in_channels + ic) * c.kernel_h + ki) * c.kernel_w + kj];
          // Output columns whose input column lands inside the image.
          std::ptrdiff_t ow_lo = 0;
          while (ow_lo * sw + static_cast<std::ptrdiff_t>(kj) - pw < 0) ++ow_lo;
          std::ptrdiff_t ow_hi = static_cast<std::ptrdiff_t>(g.out_w);
          while (ow_hi > ow_lo && (ow_hi - 1) * sw + static_cast<std::ptrdiff_t>(kj) - pw >= iw_max)
            --ow_hi;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const std::ptrdiff_t ih =
                static_cast<std::ptrdiff_t>(oh) * sh + static_cast<std::ptrdiff_t>(ki) - ph;
            if (ih < 0 || ih >= ih_max) continue;
            const double* row = src + ih * iw_max;
            double* orow = o + oh * g.out_w;
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kj) - pw;
            if (sw == 1) {
              for (std::ptrdiff_t ow = ow_lo; ow < ow_hi; ++ow) orow[ow] += w * row[ow + off];
            } else {
              for (std::ptrdiff_t ow = ow_lo; ow < ow_hi; ++ow) orow[ow] += w * row[ow * sw + off];
            }
          }
        }
      }
    }
  }
}

void conv_backward(const Conv2D& c, const Shape& in_shape, std::span<const double> up,
                   std::span<double> down) {
  const auto g = conv_geometry(c, in_shape);
  const std::size_t in_plane = g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
  std::fill(down.begin(), down.end(), 0.0);
  for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
    for (std::size_t ic = 0; ic < c.in_channels; ++ic) {
      for (std::size_t ki = 0; ki < c.kernel_h; ++ki) {
        for (std::size_t kj = 0; kj < c.kernel_w; ++kj) {
          const double w =
              c.kernel[((oc * c.in_channels + ic) * c.kernel_h + ki) * c.kernel_w + kj];
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * c.stride[0] + ki) -
                                      static_cast<std::ptrdiff_t>(c.padding[0]);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
            for (std::size_t ow = 0; ow < g.out_w; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * c.stride[1] + kj) -
                                        static_cast<std::ptrdiff_t>(c.padding[1]);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
              down[ic * in_plane + static_cast<std::size_t>(ih) * g.in_w +
                   static_cast<std::size_t>(iw)] += w * up[oc * out_plane + oh * g.out_w + ow];
            }
          }
        }
      }
    }
  }
}

void normalize_apply(const Normalize& z, std::span<const double> in, std::span<double> out,
                     bool with_mean) {
  const std::size_t channels = z.mean.size();
  const std::size_t per = in.size() / channels;
  for (std::size_t c = 0; c < channels; ++c) {
    const double mu = with_mean ? z.mean[c] : 0.0;
    for (std::size_t k = c * per; k < (c + 1) * per; ++k) out[k] = (in[k] - mu) / z.std[c];
  }
}

void dense_apply(const Dense& d, std::span<const double> in, std::span<double> out,
                 bool with_bias) {
  for (std::size_t i = 0; i < d.out; ++i) {
    const double* w = d.weights.data() + i * d.in;
    double acc = with_bias ? d.bias[i] : 0.0;
    for (std::size_t j = 0; j < d.in; ++j) acc += w[j] * in[j];
    out[i] = acc;
  }
}

void affine_apply(const Layer& layer, const Shape& in_shape, std::span<const double> in,
                  std::span<double> out, bool with_offset) {
  std::visit(overloaded{
                 [&](const Dense& d) { dense_apply(d, in, out, with_offset); },
                 [&](const Conv2D& c) { conv_forward(c, in_shape, in, out, with_offset); },
                 [&](const Normalize& z) { normalize_apply(z, in, out, with_offset); },
                 [&](const Flatten&) { std::copy(in.begin(), in.end(), out.begin()); },
                 [&](const auto&) {
                   fail(ErrorCode::unsupported_layer, "layer is not affine");
                 },
             },
             layer);
}

}  // namespace

bool is_affine(const Layer& layer) {
  return !std::holds_alternative<ReLU>(layer) && !std::holds_alternative<MaxPool>(layer);
}

std::string_view layer_name(const Layer& layer) {
  return std::visit(overloaded{
                        [](const Dense&) { return std::string_view("dense"); },
                        [](const Conv2D&) { return std::string_view("conv2d"); },
                        [](const Normalize&) { return std::string_view("normalize"); },
                        [](const Flatten&) { return std::string_view("flatten"); },
                        [](const ReLU&) { return std::string_view("relu"); },
                        [](const MaxPool&) { return std::string_view("maxpool"); },
                    },
                    layer);
}

Shape layer_output_shape(const Layer& layer, const Shape& input) {
  return output_shape_impl(layer, input);
}

std::vector<Shape> validate_network(const Shape& input_shape, const std::vector<Layer>& layers) {
  if (input_shape.empty() ||
      std::find(input_shape.begin(), input_shape.end(), 0) != input_shape.end())
    fail(ErrorCode::shape, "input shape " + shape_to_string(input_shape) +
                               " must have positive dimensions");
  if (layers.empty()) fail(ErrorCode::shape, "network has no layers");
  std::vector<Shape> shapes{input_shape};
  shapes.reserve(layers.size() + 1);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    try {
      shapes.push_back(output_shape_impl(layers[k], shapes.back()));
    } catch (const Error& e) {
      fail(ErrorCode::shape, "layer " + std::to_string(k) + " (" +
                                 std::string(layer_name(layers[k])) + "): " + e.what());
    }
  }
  return shapes;
}

Network::Network(Shape input_shape, std::vector<Layer> layers)
    : layers_(std::move(layers)), shapes_(validate_network(input_shape, layers_)) {}

bool Network::relu_only() const {
  return std::none_of(layers_.begin(), layers_.end(),
                      [](const Layer& l) { return std::holds_alternative<MaxPool>(l); });
}

std::vector<std::size_t> maxpool_window_indices(const MaxPool& pool, const Shape& in) {
  const Shape out = output_shape_impl(pool, in);
  std::vector<std::size_t> idx;
  idx.reserve(element_count(out) * pool.window[0] * pool.window[1]);
  for (std::size_t c = 0; c < out[0]; ++c)
    for (std::size_t oh = 0; oh < out[1]; ++oh)
      for (std::size_t ow = 0; ow < out[2]; ++ow)
        for (std::size_t i = 0; i < pool.window[0]; ++i)
          for (std::size_t j = 0; j < pool.window[1]; ++j)
            idx.push_back((c * in[1] + oh * pool.stride[0] + i) * in[2] + ow * pool.stride[1] + j);
  return idx;
}

void apply_layer(const Layer& layer, const Shape& in_shape, std::span<const double> in,
                 std::span<double> out) {
  if (const auto* pool = std::get_if<MaxPool>(&layer)) {
    const std::size_t s = pool->window[0] * pool->window[1];
    const auto idx = maxpool_window_indices(*pool, in_shape);
    for (std::size_t w = 0; w < out.size(); ++w) {
      double m = in[idx[w * s]];
      for (std::size_t k = 1; k < s; ++k) m = std::max(m, in[idx[w * s + k]]);
      out[w] = m;
    }
  } else if (std::holds_alternative<ReLU>(layer)) {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  } else {
    affine_apply(layer, in_shape, in, out, true);
  }
}

void apply_linear_part(const Layer& layer, const Shape& in_shape, std::span<const double> in,
                       std::span<double> out) {
  affine_apply(layer, in_shape, in, out, false);
}

void backprop_layer(const Layer& layer, const Shape& in_shape,
                    std::span<const double> layer_input, std::span<const double> up,
                    std::span<double> down) {
  std::visit(
      overloaded{
          [&](const Dense& d) {
            std::fill(down.begin(), down.end(), 0.0);
            for (std::size_t i = 0; i < d.out; ++i) {
              const double u = up[i];
              if (u == 0.0) continue;
              const double* w = d.weights.data() + i * d.in;
              for (std::size_t j = 0; j < d.in; ++j) down[j] += w[j] * u;
            }
          },
          [&](const Conv2D& c) { conv_backward(c, in_shape, up, down); },
          [&](const Normalize& z) { normalize_apply(z, up, down, false); },
          [&](const Flatten&) { std::copy(up.begin(), up.end(), down.begin()); },
          [&](const ReLU&) {
            for (std::size_t i = 0; i < down.size(); ++i)
              down[i] = layer_input[i] > 0.0 ? up[i] : 0.0;
          },
          [&](const MaxPool& p) {
            std::fill(down.begin(), down.end(), 0.0);
            const std::size_t s = p.window[0] * p.window[1];
            const auto idx = maxpool_window_indices(p, in_shape);
            for (std::size_t w = 0; w < up.size(); ++w) {
              std::size_t best = idx[w * s];
              for (std::size_t k = 1; k < s; ++k)
                if (layer_input[idx[w * s + k]] > layer_input[best]) best = idx[w * s + k];
              down[best] += up[w];
            }
          },
      },
      layer);
}

std::vector<double> forward(const Network& net, std::span<const double> x) {
  if (x.size() != net.input_size())
    fail(ErrorCode::shape, "input has " + std::to_string(x.size()) + " values, network expects " +
                               shape_to_string(net.input_shape()));
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    next.assign(element_count(net.shape_before(k + 1)), 0.0);
    apply_layer(net.layers()[k], net.shape_before(k), cur, next);
    cur.swap(next);
  }
  return cur;
}

Tensor forward(const Network& net, const Tensor& x) {
  if (x.shape != net.input_shape())
    fail(ErrorCode::shape, "input shape " + shape_to_string(x.shape) +
                               " does not match network input " +
                               shape_to_string(net.input_shape()));
  return Tensor(net.output_shape(), forward(net, x.values()));
}

std::vector<double> gradient(const Network& net, std::span<const double> x,
                             std::size_t output_index) {
  if (x.size() != net.input_size())
    fail(ErrorCode::shape, "input has " + std::to_string(x.size()) + " values, network expects " +
                               shape_to_string(net.input_shape()));
  if (output_index >= net.output_size())
    fail(ErrorCode::index, "output index " + std::to_string(output_index) +
                               " out of range for " + std::to_string(net.output_size()) +
                               " outputs");
  const auto& layers = net.layers();
  std::vector<std::vector<double>> acts(layers.size() + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t k = 0; k < layers.size(); ++k) {
    acts[k + 1].assign(element_count(net.shape_before(k + 1)), 0.0);
    apply_layer(layers[k], net.shape_before(k), acts[k], acts[k + 1]);
  }
  std::vector<double> up(net.output_size(), 0.0);
  up[output_index] = 1.0;
  std::vector<double> down;
  for (std::size_t k = layers.size(); k-- > 0;) {
    down.assign(acts[k].size(), 0.0);
    backprop_layer(layers[k], net.shape_before(k), acts[k], up, down);
    up.swap(down);
  }
  return up;
}

Tensor gradient(const Network& net, const Tensor& x, std::size_t output_index) {
  if (x.shape != net.input_shape())
    fail(ErrorCode::shape, "input shape " + shape_to_string(x.shape) +
                               " does not match network input " +
                               shape_to_string(net.input_shape()));
  return Tensor(net.input_shape(), gradient(net, x.values(), output_index));
}

}  // namespace linrestrict
