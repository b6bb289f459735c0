#include "linrestrict/analysis.hpp"

#include <cmath>
#include <random>
#include <string>

#include "linrestrict/error.hpp"

namespace linrestrict {

std::vector<ClassSegment> decision_segments(const Network& net, const LineQuery& query) {
  if (net.output_size() < 2)
    fail(ErrorCode::dimension, "decision segments need at least two outputs, network has " +
                                   std::to_string(net.output_size()));
  const PartitionedLine line = exactline_network(net, query);

  std::vector<ClassSegment> segments;
  auto start_class = [&](double alpha, std::size_t cls) {
    if (!segments.empty() && alpha - segments.back().alpha_lo <= kRatioTolerance) {
      // A switch right at the start of a segment replaces its class.
      segments.back().class_index = cls;
      if (segments.size() > 1 && segments[segments.size() - 2].class_index == cls)
        segments.pop_back();
      return;
    }
    if (!segments.empty() && segments.back().class_index == cls) return;
    if (!segments.empty()) segments.back().alpha_hi = alpha;
    segments.push_back({alpha, 1.0, cls});
  };

  for (std::size_t i = 0; i + 1 < line.endpoints.size(); ++i) {
    const auto& a = line.endpoints[i];
    const auto& b = line.endpoints[i + 1];
    const ArgmaxPath path = follow_argmax(a.postimage.values(), b.postimage.values());
    start_class(a.alpha, path.start);
    for (const auto& s : path.switches)
      start_class(a.alpha + s.ratio * (b.alpha - a.alpha), s.index);
  }
  segments.back().alpha_hi = 1.0;
  return segments;
}

DensityReport partition_density(const Network& net, const LineQuery& query) {
  const PartitionedLine line = canonicalize(exactline_network(net, query));
  std::vector<double> diff(query.start.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = query.end[i] - query.start[i];
  DensityReport report;
  report.partition_count = line.partition_count();
  report.length = norm_l2(diff);
  report.density = static_cast<double>(report.partition_count) / report.length;
  return report;
}

double gradient_deviation(const Network& net, const LineQuery& query, std::size_t output_index) {
  if (!net.relu_only())
    fail(ErrorCode::unsupported_layer,
         "gradient deviation is limited to ReLU/affine networks; this network contains maxpool");
  validate_query(net, query);
  const auto g0 = gradient(net, query.start.values(), output_index);
  const double base = norm_l1(g0);
  if (base == 0.0)
    fail(ErrorCode::undefined, "gradient deviation undefined: gradient at Q is zero");

  const PartitionedLine line = exactline_network(net, query);
  double total = 0.0;
  for (std::size_t r = 0; r + 1 < line.endpoints.size(); ++r) {
    const double lo = line.endpoints[r].alpha;
    const double hi = line.endpoints[r + 1].alpha;
    const auto g = gradient(net, line.point_at(0.5 * (lo + hi)), output_index);
    double dev = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dev += std::abs(g[i] - g0[i]);
    total += (hi - lo) * dev / base;
  }
  return total;
}

Tensor fgsm_direction(const Network& net, const Tensor& x, double epsilon, std::size_t label) {
  if (!(epsilon >= 0.0)) fail(ErrorCode::range, "epsilon must be non-negative");
  const Tensor g = gradient(net, x, label);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
    out[i] = x[i] - epsilon * s;
  }
  return out;
}

Tensor random_direction(const Tensor& x, double epsilon, std::uint64_t seed) {
  if (!(epsilon >= 0.0)) fail(ErrorCode::range, "epsilon must be non-negative");
  std::mt19937_64 gen(seed);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double s = (gen() >> 63) != 0 ? 1.0 : -1.0;
    out[i] = x[i] + epsilon * s;
  }
  return out;
}

DirectionComparison compare_directions(const Network& net, const Tensor& x, double epsilon,
                                       std::size_t label, std::uint64_t seed) {
  DirectionComparison c{fgsm_direction(net, x, epsilon, label), random_direction(x, epsilon, seed),
                        {}, {}, 0.0};
  c.fgsm = partition_density(net, {x, c.fgsm_point});
  c.random = partition_density(net, {x, c.random_point});
  c.density_ratio = c.fgsm.density / c.random.density;
  return c;
}

}  // namespace linrestrict
