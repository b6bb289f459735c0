#include "linrestrict/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "linrestrict/error.hpp"

namespace linrestrict {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape.empty() || std::find(shape.begin(), shape.end(), 0) != shape.end()) {
    fail(ErrorCode::shape, "tensor shape " + shape_to_string(shape) +
                               " must have positive dimensions");
  }
  if (element_count(shape) != data.size()) {
    fail(ErrorCode::shape, "tensor shape " + shape_to_string(shape) + " holds " +
                               std::to_string(element_count(shape)) +
                               " values, got " + std::to_string(data.size()));
  }
  for (double v : data) {
    if (!std::isfinite(v)) fail(ErrorCode::range, "tensor contains a non-finite value");
  }
}

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::vector(std::vector<double> values) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values));
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double norm_l1(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

double norm_l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void lerp_into(std::span<const double> a, std::span<const double> b, double t,
               std::span<double> out) {
  const double s = 1.0 - t;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i] + t * b[i];
}

std::vector<double> lerp(std::span<const double> a, std::span<const double> b,
                         double t) {
  std::vector<double> out(a.size());
  lerp_into(a, b, t, out);
  return out;
}

}  // namespace linrestrict
