#include "linrestrict/attributions.hpp"

#include <cmath>
#include <string>

#include "linrestrict/error.hpp"
#include "linrestrict/exactline.hpp"

namespace linrestrict {

std::string_view to_string(IgMethod method) {
  switch (method) {
    case IgMethod::exact: return "exact";
    case IgMethod::left: return "left";
    case IgMethod::right: return "right";
    case IgMethod::trapezoid: return "trapezoid";
  }
  return "exact";
}

IgMethod parse_ig_method(std::string_view name) {
  if (name == "exact") return IgMethod::exact;
  if (name == "left") return IgMethod::left;
  if (name == "right") return IgMethod::right;
  if (name == "trapezoid") return IgMethod::trapezoid;
  fail(ErrorCode::usage, "unknown IG method '" + std::string(name) +
                             "' (expected exact, left, right or trapezoid)");
}

namespace {

bool within(double value, double tolerance) {
  return value <= tolerance * (1.0 + kToleranceSlack);
}

void check_pair(const Network& net, const Tensor& baseline, const Tensor& input,
                std::size_t output_index) {
  for (const Tensor* t : {&baseline, &input})
    if (t->shape != net.input_shape())
      fail(ErrorCode::shape, "point shape " + shape_to_string(t->shape) +
                                 " does not match network input " +
                                 shape_to_string(net.input_shape()));
  if (output_index >= net.output_size())
    fail(ErrorCode::index, "output index " + std::to_string(output_index) +
                               " out of range for " + std::to_string(net.output_size()) +
                               " outputs");
}

double output_difference(const Network& net, const Tensor& baseline, const Tensor& input,
                         std::size_t output_index) {
  return forward(net, input.values())[output_index] -
         forward(net, baseline.values())[output_index];
}

void finish(AttributionReport& report, double delta) {
  double sum = 0.0;
  for (double v : report.values) sum += v;
  report.output_difference = delta;
  report.completeness_gap.absolute = std::abs(sum - delta);
  if (delta != 0.0)
    report.completeness_gap.relative = report.completeness_gap.absolute / std::abs(delta);
}

}  // namespace

AttributionReport exact_ig(const Network& net, const Tensor& baseline, const Tensor& input,
                           std::size_t output_index) {
  check_pair(net, baseline, input, output_index);
  if (!net.relu_only())
    fail(ErrorCode::unsupported_layer,
         "exact IG is limited to ReLU/affine networks; this network contains maxpool");
  const PartitionedLine line = exactline_network(net, {baseline, input});

  const std::size_t n = net.input_size();
  AttributionReport report;
  report.method = IgMethod::exact;
  report.values.assign(n, 0.0);
  report.partitions_used = line.partition_count();
  for (std::size_t r = 0; r + 1 < line.endpoints.size(); ++r) {
    const double lo = line.endpoints[r].alpha;
    const double hi = line.endpoints[r + 1].alpha;
    const auto g = gradient(net, line.point_at(0.5 * (lo + hi)), output_index);
    for (std::size_t i = 0; i < n; ++i)
      report.values[i] += (hi - lo) * (input[i] - baseline[i]) * g[i];
  }
  finish(report, output_difference(net, baseline, input, output_index));
  return report;
}

AttributionReport riemann_ig(const Network& net, const Tensor& baseline, const Tensor& input,
                             std::size_t output_index, std::size_t samples, IgMethod scheme) {
  check_pair(net, baseline, input, output_index);
  if (samples == 0) fail(ErrorCode::count, "sample count must be at least 1");
  if (scheme == IgMethod::exact)
    fail(ErrorCode::usage, "riemann_ig needs a left, right or trapezoid scheme");

  const std::size_t n = net.input_size();
  const double m = static_cast<double>(samples);
  std::size_t first = 0;
  std::size_t last = samples;  // inclusive
  if (scheme == IgMethod::left) last = samples - 1;
  if (scheme == IgMethod::right) first = 1;

  std::vector<double> point(n);
  std::vector<double> acc(n, 0.0);
  for (std::size_t k = first; k <= last; ++k) {
    const double alpha = static_cast<double>(k) / m;
    for (std::size_t i = 0; i < n; ++i) point[i] = baseline[i] + alpha * (input[i] - baseline[i]);
    double w = 1.0 / m;
    if (scheme == IgMethod::trapezoid && (k == 0 || k == samples)) w = 0.5 / m;
    const auto g = gradient(net, point, output_index);
    for (std::size_t i = 0; i < n; ++i) acc[i] += w * g[i];
  }

  AttributionReport report;
  report.method = scheme;
  report.samples = samples;
  report.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) report.values[i] = (input[i] - baseline[i]) * acc[i];
  finish(report, output_difference(net, baseline, input, output_index));
  return report;
}

double relative_error(const AttributionReport& approx, const AttributionReport& exact) {
  if (approx.values.size() != exact.values.size())
    fail(ErrorCode::shape, "attribution reports have different input dimensions");
  const double denom = norm_l1(exact.values);
  if (denom == 0.0) fail(ErrorCode::undefined, "relative error undefined: exact IG is all zero");
  double num = 0.0;
  for (std::size_t i = 0; i < exact.values.size(); ++i)
    num += std::abs(approx.values[i] - exact.values[i]);
  return num / denom;
}

SampleSearchResult find_m_tilde(const Network& net, const Tensor& baseline, const Tensor& input,
                                std::size_t output_index, double tolerance, std::size_t cap) {
  check_pair(net, baseline, input, output_index);
  const double delta = output_difference(net, baseline, input, output_index);
  if (delta == 0.0)
    fail(ErrorCode::degenerate, "F(x) equals F(x'); the sample count is not defined");
  SampleSearchResult result{std::nullopt, tolerance, 0, cap};
  for (std::size_t m = 1; m <= cap; ++m) {
    const auto report = riemann_ig(net, baseline, input, output_index, m, IgMethod::left);
    if (within(report.completeness_gap.absolute, tolerance * std::abs(delta))) {
      result.samples = m;
      break;
    }
  }
  return result;
}

SampleSearchResult samples_to_tolerance(const Network& net, const Tensor& baseline,
                                        const Tensor& input, std::size_t output_index,
                                        IgMethod scheme, double tolerance,
                                        std::size_t stability, std::size_t cap) {
  if (scheme == IgMethod::exact)
    fail(ErrorCode::usage, "sample search needs a left, right or trapezoid scheme");
  const AttributionReport exact = exact_ig(net, baseline, input, output_index);
  if (norm_l1(exact.values) == 0.0)
    fail(ErrorCode::undefined, "relative error undefined: exact IG is all zero");

  SampleSearchResult result{std::nullopt, tolerance, stability, cap};
  std::optional<std::size_t> run_start;
  for (std::size_t m = 1; m <= cap + stability; ++m) {
    if (!run_start && m > cap) break;
    const auto approx = riemann_ig(net, baseline, input, output_index, m, scheme);
    if (!within(relative_error(approx, exact), tolerance)) {
      run_start.reset();
      continue;
    }
    if (!run_start) run_start = m;
    if (m - *run_start == stability) {
      result.samples = run_start;
      break;
    }
  }
  return result;
}

}  // namespace linrestrict
