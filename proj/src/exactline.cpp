#include <algorithm>
#include <cmath>
#include <optional>
#include <variant>

#include "linrestrict/error.hpp"
#include "linrestrict/exactline.hpp"

namespace linrestrict {

std::vector<double> PartitionedLine::alphas() const {
  std::vector<double> a;
  a.reserve(endpoints.size());
  for (const auto& e : endpoints) a.push_back(e.alpha);
  return a;
}

std::vector<double> PartitionedLine::point_at(double alpha) const {
  return lerp(query.start.values(), query.end.values(), alpha);
}

void validate_query(const Network& net, const LineQuery& query) {
  for (const Tensor* t : {&query.start, &query.end}) {
    if (t->shape != net.input_shape())
      fail(ErrorCode::shape, "query endpoint shape " + shape_to_string(t->shape) +
                                 " does not match network input " +
                                 shape_to_string(net.input_shape()));
  }
  if (query.start.data == query.end.data)
    fail(ErrorCode::query, "query endpoints coincide (Q = R)");
}

namespace {

// Endpoints under propagation: alphas, origins and a row-major block of
// postimages, one row of `width` values per endpoint.
struct Frontier {
  std::vector<double> alpha;
  std::vector<int> origin;
  std::vector<double> values;
  std::size_t width = 0;

  std::size_t size() const { return alpha.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * width, width}; }
};

// A new endpoint: `beta` of the way from endpoint `partition` to the next.
struct Split {
  std::size_t partition;
  double beta;
  double alpha;
  int origin;
};

// How one nonlinear step computes crossings on a partition's image q -> r.
struct NonlinearStep {
  std::size_t first_layer;
  std::size_t layer_count;  // 1, or 2 for a fused ReLU + MaxPool pair
  enum class Kind { relu, maxpool, relu_maxpool } kind;
  std::vector<std::size_t> window_indices;
  std::size_t window_size = 0;
  std::vector<Hyperplane> planes;  // set when a hyperplane method is selected
  bool use_planes = false;

  std::vector<double> crossings(std::span<const double> q, std::span<const double> r) const {
    if (use_planes) return hyperplane_crossings(planes, q, r);
    switch (kind) {
      case Kind::relu:
        return relu_crossings(q, r);
      case Kind::maxpool:
        return maxpool_crossings(window_indices, window_size, q, r, false);
      case Kind::relu_maxpool:
        return maxpool_crossings(window_indices, window_size, q, r, true);
    }
    return {};
  }
};

class Engine {
 public:
  Engine(const Network& net, const EngineOptions& options) : net_(net), options_(options) {}

  Frontier run(Frontier f) {
    Frontier out;
    out.width = net_.output_size();
    propagate(std::move(f), 0, out);
    return out;
  }

 private:
  const Network& net_;
  const EngineOptions& options_;

  NonlinearStep make_step(std::size_t k) const {
    const auto& layers = net_.layers();
    NonlinearStep step{k, 1, NonlinearStep::Kind::relu, {}, 0, {}, false};
    const MaxPool* pool = nullptr;
    Shape pool_shape;
    if (std::holds_alternative<ReLU>(layers[k])) {
      if (options_.fuse_relu_maxpool && k + 1 < layers.size() &&
          std::holds_alternative<MaxPool>(layers[k + 1])) {
        pool = &std::get<MaxPool>(layers[k + 1]);
        pool_shape = net_.shape_before(k + 1);
        step.layer_count = 2;
        step.kind = NonlinearStep::Kind::relu_maxpool;
      }
    } else {
      pool = &std::get<MaxPool>(layers[k]);
      pool_shape = net_.shape_before(k);
      step.kind = NonlinearStep::Kind::maxpool;
      if (options_.fuse_relu_maxpool && k + 1 < layers.size() &&
          std::holds_alternative<ReLU>(layers[k + 1])) {
        step.layer_count = 2;
        step.kind = NonlinearStep::Kind::relu_maxpool;
      }
    }
    if (pool) {
      step.window_indices = maxpool_window_indices(*pool, pool_shape);
      step.window_size = pool->window[0] * pool->window[1];
      if (options_.maxpool == MaxPoolMethod::hyperplanes) {
        step.use_planes = true;
        step.planes = maxpool_faces(*pool, pool_shape,
                                    step.kind == NonlinearStep::Kind::relu_maxpool);
      }
    } else if (options_.relu == ReluMethod::hyperplanes) {
      step.use_planes = true;
      step.planes = orthant_faces(element_count(net_.shape_before(k)));
    }
    return step;
  }

  // Layers [k, k + count) applied to every row.
  Frontier apply_layers(const Frontier& f, std::size_t k, std::size_t count) const {
    Frontier cur;
    cur.alpha = f.alpha;
    cur.origin = f.origin;
    const Frontier* src = &f;
    for (std::size_t j = k; j < k + count; ++j) {
      Frontier next;
      next.width = element_count(net_.shape_before(j + 1));
      next.values.resize(next.width * f.size());
      for (std::size_t i = 0; i < f.size(); ++i)
        apply_layer(net_.layers()[j], net_.shape_before(j), src->row(i),
                    {next.values.data() + i * next.width, next.width});
      cur.values = std::move(next.values);
      cur.width = next.width;
      src = &cur;
    }
    return cur;
  }

  std::vector<Split> find_splits(const Frontier& f, const NonlinearStep& step) const {
    std::vector<Split> splits;
    for (std::size_t i = 0; i + 1 < f.size(); ++i) {
      splits.push_back({i, 0.0, f.alpha[i], f.origin[i]});
      const double lo = f.alpha[i];
      const double hi = f.alpha[i + 1];
      double last = lo;
      for (double b : step.crossings(f.row(i), f.row(i + 1))) {
        const double a = lo + b * (hi - lo);
        if (a - last <= kRatioTolerance || hi - a <= kRatioTolerance) continue;
        splits.push_back({i, b, a, static_cast<int>(step.first_layer)});
        last = a;
      }
    }
    const std::size_t n = f.size() - 1;
    splits.push_back({n, 0.0, f.alpha[n], f.origin[n]});
    return splits;
  }

  Frontier materialize(const Frontier& f, std::span<const Split> splits) const {
    Frontier out;
    out.width = f.width;
    out.alpha.reserve(splits.size());
    out.origin.reserve(splits.size());
    out.values.resize(splits.size() * f.width);
    for (std::size_t j = 0; j < splits.size(); ++j) {
      const Split& s = splits[j];
      out.alpha.push_back(s.alpha);
      out.origin.push_back(s.origin);
      std::span<double> dst{out.values.data() + j * f.width, f.width};
      if (s.beta == 0.0) {
        const auto src = f.row(s.partition);
        std::copy(src.begin(), src.end(), dst.begin());
      } else {
        lerp_into(f.row(s.partition), f.row(s.partition + 1), s.beta, dst);
      }
    }
    return out;
  }

  static void append(Frontier& out, const Frontier& part) {
    const std::size_t skip = out.size() == 0 ? 0 : 1;  // shared boundary endpoint
    out.alpha.insert(out.alpha.end(), part.alpha.begin() + skip, part.alpha.end());
    out.origin.insert(out.origin.end(), part.origin.begin() + skip, part.origin.end());
    out.values.insert(out.values.end(), part.values.begin() + skip * part.width,
                      part.values.end());
  }

  void propagate(Frontier f, std::size_t k, Frontier& out) const {
    const auto& layers = net_.layers();
    while (k < layers.size()) {
      if (is_affine(layers[k])) {
        f = apply_layers(f, k, 1);
        ++k;
        continue;
      }
      const NonlinearStep step = make_step(k);
      const std::vector<Split> splits = find_splits(f, step);
      const std::size_t budget = std::max<std::size_t>(options_.max_buffered_values, 1);
      const std::size_t widest =
          std::max(f.width, element_count(net_.shape_before(k + step.layer_count)));
      if (splits.size() > 2 && splits.size() * widest > budget) {
        // Consecutive sub-segments overlapping in one endpoint.
        const std::size_t group = std::max<std::size_t>(2, budget / widest);
        for (std::size_t begin = 0; begin + 1 < splits.size(); begin += group - 1) {
          const std::size_t end = std::min(splits.size(), begin + group);
          Frontier sub = apply_layers(
              materialize(f, std::span<const Split>(splits).subspan(begin, end - begin)), k,
              step.layer_count);
          propagate(std::move(sub), k + step.layer_count, out);
        }
        return;
      }
      f = apply_layers(materialize(f, splits), k, step.layer_count);
      k += step.layer_count;
    }
    append(out, f);
  }
};

}  // namespace

PartitionedLine exactline_network(const Network& net, const LineQuery& query,
                                  const EngineOptions& options) {
  validate_query(net, query);
  Frontier f;
  f.width = net.input_size();
  f.alpha = {0.0, 1.0};
  f.origin = {kQueryOrigin, kQueryOrigin};
  f.values = query.start.data;
  f.values.insert(f.values.end(), query.end.data.begin(), query.end.data.end());

  const Frontier out = Engine(net, options).run(std::move(f));

  PartitionedLine line{query, {}};
  line.endpoints.reserve(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = out.row(i);
    line.endpoints.push_back({out.alpha[i],
                              Tensor(net.output_shape(), std::vector<double>(row.begin(), row.end())),
                              out.origin[i]});
  }
  return line;
}

namespace {

bool collinear(const Tensor& prev, const Tensor& cur, const Tensor& next, double t) {
  double scale = 0.0;
  double dev = 0.0;
  for (std::size_t i = 0; i < cur.size(); ++i) {
    scale = std::max({scale, std::abs(prev[i]), std::abs(cur[i]), std::abs(next[i])});
    dev = std::max(dev, std::abs(cur[i] - ((1.0 - t) * prev[i] + t * next[i])));
  }
  return dev <= 1e-9 * (1.0 + scale);
}

}  // namespace

PartitionedLine canonicalize(const PartitionedLine& line) {
  std::vector<Endpoint> cur = line.endpoints;
  bool changed = true;
  while (changed && cur.size() > 2) {
    changed = false;
    std::vector<Endpoint> kept;
    kept.reserve(cur.size());
    kept.push_back(cur.front());
    for (std::size_t i = 1; i + 1 < cur.size(); ++i) {
      const Endpoint& prev = kept.back();
      const Endpoint& next = cur[i + 1];
      const double t = (cur[i].alpha - prev.alpha) / (next.alpha - prev.alpha);
      if (collinear(prev.postimage, cur[i].postimage, next.postimage, t)) {
        changed = true;
      } else {
        kept.push_back(cur[i]);
      }
    }
    kept.push_back(cur.back());
    cur.swap(kept);
  }
  return PartitionedLine{line.query, std::move(cur)};
}

Tensor interpolate_output(const PartitionedLine& line, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    fail(ErrorCode::range, "alpha " + std::to_string(alpha) + " outside [0, 1]");
  const auto& e = line.endpoints;
  auto it = std::upper_bound(e.begin(), e.end(), alpha,
                             [](double a, const Endpoint& p) { return a < p.alpha; });
  const std::size_t j = static_cast<std::size_t>(it - e.begin());
  if (j == 0) return e.front().postimage;
  const std::size_t i = j - 1;
  if (e[i].alpha == alpha || i + 1 == e.size()) return e[i].postimage;
  const double t = (alpha - e[i].alpha) / (e[i + 1].alpha - e[i].alpha);
  return Tensor(e[i].postimage.shape, lerp(e[i].postimage.values(), e[i + 1].postimage.values(), t));
}

}  // namespace linrestrict
