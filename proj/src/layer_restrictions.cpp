#include <algorithm>
#include <cmath>

#include "linrestrict/error.hpp"
#include "linrestrict/exactline.hpp"

namespace linrestrict {

void sort_and_merge_ratios(std::vector<double>& ratios) {
  std::sort(ratios.begin(), ratios.end());
  std::vector<double> kept;
  kept.reserve(ratios.size());
  for (double b : ratios) {
    if (b <= kRatioTolerance || b >= 1.0 - kRatioTolerance) continue;
    if (!kept.empty() && b - kept.back() <= kRatioTolerance) continue;
    kept.push_back(b);
  }
  ratios.swap(kept);
}

std::vector<double> relu_crossings(std::span<const double> q, std::span<const double> r) {
  std::vector<double> out;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double d = r[i] - q[i];
    if (std::abs(d) <= kRatioTolerance) continue;
    const double b = -q[i] / d;
    if (b > 0.0 && b < 1.0) out.push_back(b);
  }
  sort_and_merge_ratios(out);
  return out;
}

std::vector<Breakpoint> exactline_relu(std::span<const double> q, std::span<const double> r) {
  auto relu_at = [&](double t) {
    auto v = lerp(q, r, t);
    for (double& x : v) x = x > 0.0 ? x : 0.0;
    return v;
  };
  std::vector<Breakpoint> out;
  out.push_back({0.0, relu_at(0.0)});
  for (double b : relu_crossings(q, r)) out.push_back({b, relu_at(b)});
  out.push_back({1.0, relu_at(1.0)});
  return out;
}

ArgmaxPath follow_argmax(std::span<const double> q, std::span<const double> r) {
  const std::size_t n = q.size();
  ArgmaxPath path;
  if (n == 0) return path;

  auto slope = [&](std::size_t i) { return r[i] - q[i]; };

  const double qmax = *std::max_element(q.begin(), q.end());
  const double value_tol = kRatioTolerance * (1.0 + std::abs(qmax));
  std::size_t m = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (q[i] < qmax - value_tol) continue;
    if (m == n || slope(i) > slope(m)) m = i;
  }
  path.start = m;

  const double rmax = *std::max_element(r.begin(), r.end());
  double current = 0.0;
  while (r[m] < rmax) {
    // Only components with a larger slope can overtake m.
    auto overtake = [&](std::size_t i) {
      if (i == m || slope(i) - slope(m) <= kRatioTolerance) return -1.0;
      const double b = (q[i] - q[m]) / ((r[m] - q[m]) + q[i] - r[i]);
      return b > current && b < 1.0 ? b : -1.0;
    };
    double best = 2.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double b = overtake(i);
      if (b >= 0.0) best = std::min(best, b);
    }
    if (best > 1.0) break;
    std::size_t next = n;
    for (std::size_t i = 0; i < n; ++i) {
      const double b = overtake(i);
      if (b < 0.0 || b > best + kRatioTolerance) continue;
      if (next == n || slope(i) > slope(next)) next = i;
    }
    path.switches.push_back({best, next});
    current = best;
    m = next;
  }
  return path;
}

std::vector<double> window_max_crossings(std::span<const double> q, std::span<const double> r) {
  std::vector<double> out;
  for (const auto& s : follow_argmax(q, r).switches) out.push_back(s.ratio);
  sort_and_merge_ratios(out);
  return out;
}

std::vector<double> window_relu_max_crossings(std::span<const double> q,
                                              std::span<const double> r) {
  const ArgmaxPath path = follow_argmax(q, r);
  std::vector<double> out;
  auto value = [&](std::size_t i, double t) { return q[i] + t * (r[i] - q[i]); };

  std::size_t m = path.start;
  double lo = 0.0;
  for (std::size_t k = 0; k <= path.switches.size(); ++k) {
    const double hi = k < path.switches.size() ? path.switches[k].ratio : 1.0;
    const double s = r[m] - q[m];
    if (std::abs(s) > kRatioTolerance) {
      const double zero = -q[m] / s;
      if (zero >= lo - kRatioTolerance && zero <= hi + kRatioTolerance) out.push_back(zero);
    }
    if (k < path.switches.size()) {
      if (value(m, hi) >= 0.0) out.push_back(hi);
      m = path.switches[k].index;
      lo = hi;
    }
  }
  sort_and_merge_ratios(out);
  return out;
}

std::vector<double> maxpool_crossings(std::span<const std::size_t> window_indices,
                                      std::size_t window_size, std::span<const double> q,
                                      std::span<const double> r, bool with_relu) {
  std::vector<double> out;
  std::vector<double> wq(window_size), wr(window_size);
  for (std::size_t w = 0; w * window_size < window_indices.size(); ++w) {
    for (std::size_t k = 0; k < window_size; ++k) {
      wq[k] = q[window_indices[w * window_size + k]];
      wr[k] = r[window_indices[w * window_size + k]];
    }
    const auto c = with_relu ? window_relu_max_crossings(wq, wr) : window_max_crossings(wq, wr);
    out.insert(out.end(), c.begin(), c.end());
  }
  sort_and_merge_ratios(out);
  return out;
}

std::vector<double> maxpool_crossings(const MaxPool& pool, const Shape& in_shape,
                                      std::span<const double> q, std::span<const double> r,
                                      bool with_relu) {
  const auto idx = maxpool_window_indices(pool, in_shape);
  return maxpool_crossings(idx, pool.window[0] * pool.window[1], q, r, with_relu);
}

std::vector<double> hyperplane_crossings(std::span<const Hyperplane> planes,
                                         std::span<const double> q, std::span<const double> r) {
  std::vector<double> out;
  for (const auto& h : planes) {
    double sq = -h.offset;
    double sr = -h.offset;
    for (const auto& [i, c] : h.normal) {
      sq += c * q[i];
      sr += c * r[i];
    }
    const bool crosses = (sq > kRatioTolerance && sr < -kRatioTolerance) ||
                         (sq < -kRatioTolerance && sr > kRatioTolerance);
    if (!crosses) continue;
    const double b = sq / (sq - sr);
    if (b > 0.0 && b < 1.0) out.push_back(b);
  }
  sort_and_merge_ratios(out);
  return out;
}

std::vector<Hyperplane> orthant_faces(std::size_t dim) {
  std::vector<Hyperplane> planes(dim);
  for (std::size_t i = 0; i < dim; ++i) planes[i].normal = {{i, 1.0}};
  return planes;
}

std::vector<Hyperplane> maxpool_faces(const MaxPool& pool, const Shape& in_shape,
                                      bool with_relu) {
  const auto idx = maxpool_window_indices(pool, in_shape);
  const std::size_t s = pool.window[0] * pool.window[1];
  std::vector<Hyperplane> planes;
  for (std::size_t w = 0; w * s < idx.size(); ++w) {
    for (std::size_t a = 0; a < s; ++a) {
      const std::size_t ia = idx[w * s + a];
      for (std::size_t b = a + 1; b < s; ++b) planes.push_back({{{ia, 1.0}, {idx[w * s + b], -1.0}}, 0.0});
      if (with_relu) planes.push_back({{{ia, 1.0}}, 0.0});
    }
  }
  return planes;
}

PartitionedLine exactline_affine(const Layer& layer, const Shape& in_shape,
                                 const LineQuery& query) {
  if (!is_affine(layer))
    fail(ErrorCode::unsupported_layer,
         "exactline_affine requires an affine layer, got " + std::string(layer_name(layer)));
  const Shape out_shape = layer_output_shape(layer, in_shape);
  if (query.start.shape != in_shape || query.end.shape != in_shape)
    fail(ErrorCode::shape, "query endpoints do not match layer input " + shape_to_string(in_shape));
  if (query.start == query.end) fail(ErrorCode::query, "query endpoints coincide");
  PartitionedLine line{query, {}};
  for (const Tensor* p : {&query.start, &query.end}) {
    std::vector<double> out(element_count(out_shape));
    apply_layer(layer, in_shape, p->values(), out);
    line.endpoints.push_back({p == &query.start ? 0.0 : 1.0, Tensor(out_shape, std::move(out)),
                              kQueryOrigin});
  }
  return line;
}

}  // namespace linrestrict
