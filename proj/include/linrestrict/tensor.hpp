#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace linrestrict {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of doubles.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  /// Throws shape-error if the shape has a zero dimension or the data length
  /// disagrees with it, and range-error on non-finite values.
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor vector(std::vector<double> values);

  std::size_t size() const noexcept { return data.size(); }
  std::span<const double> values() const noexcept { return data; }
  double operator[](std::size_t i) const noexcept { return data[i]; }
  double& operator[](std::size_t i) noexcept { return data[i]; }

  bool operator==(const Tensor&) const = default;
};

// Small vector helpers shared by the engine and the analyses.
double max_abs(std::span<const double> v);
double norm_l1(std::span<const double> v);
double norm_l2(std::span<const double> v);
/// (1 - t) * a + t * b, componentwise.
void lerp_into(std::span<const double> a, std::span<const double> b, double t,
               std::span<double> out);
std::vector<double> lerp(std::span<const double> a, std::span<const double> b,
                         double t);

}  // namespace linrestrict
