#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "linrestrict/network.hpp"
#include "linrestrict/tensor.hpp"

namespace linrestrict {

enum class IgMethod { exact, left, right, trapezoid };

std::string_view to_string(IgMethod method);
/// Parses "exact", "left", "right" or "trapezoid"; throws usage-error.
IgMethod parse_ig_method(std::string_view name);

struct CompletenessGap {
  double absolute = 0.0;
  /// absolute / |F(x) - F(x')|; empty when the outputs are equal.
  std::optional<double> relative;
};

/// Integrated-gradient attribution of one output along baseline -> input.
struct AttributionReport {
  IgMethod method = IgMethod::exact;
  std::optional<std::size_t> samples;          // Riemann schemes only
  std::vector<double> values;                  // one per input element
  CompletenessGap completeness_gap;
  std::optional<std::size_t> partitions_used;  // exact only
  double output_difference = 0.0;              // F(x) - F(x')
};

/// Exact IG: gradient at the midpoint of every linear partition of
/// baseline -> input times the partition's extent, summed. ReLU/affine
/// networks only.
AttributionReport exact_ig(const Network& net, const Tensor& baseline, const Tensor& input,
                           std::size_t output_index);

/// Riemann-sum IG with `samples` uniform intervals.
AttributionReport riemann_ig(const Network& net, const Tensor& baseline, const Tensor& input,
                             std::size_t output_index, std::size_t samples, IgMethod scheme);

/// ||approx - exact||_1 / ||exact||_1; undefined-error when exact is all zero.
double relative_error(const AttributionReport& approx, const AttributionReport& exact);

struct SampleSearchResult {
  std::optional<std::size_t> samples;  // empty when not reached within cap
  double tolerance = 0.05;
  std::size_t stability_window = 0;
  std::size_t cap = 1000;
};

/// Smallest m whose left-sum completeness gap is within `tolerance` of
/// |F(x) - F(x')|.
SampleSearchResult find_m_tilde(const Network& net, const Tensor& baseline, const Tensor& input,
                                std::size_t output_index, double tolerance = 0.05,
                                std::size_t cap = 1000);

/// Smallest m such that every m' in [m, m + stability] reaches relative error
/// within `tolerance` of the exact IG.
SampleSearchResult samples_to_tolerance(const Network& net, const Tensor& baseline,
                                        const Tensor& input, std::size_t output_index,
                                        IgMethod scheme, double tolerance = 0.05,
                                        std::size_t stability = 5, std::size_t cap = 1000);

/// Tolerance comparisons are inclusive up to this relative slack, so a value
/// that equals the threshold in exact arithmetic is not rejected by rounding.
inline constexpr double kToleranceSlack = 1e-12;

}  // namespace linrestrict
