#include <algorithm>
#include <variant>

#include "linrestrict/network.hpp"

namespace linrestrict {
namespace {

// Composed matrices above this many entries are only built when the run
// already carries a Dense layer at least that large.
constexpr std::size_t kFoldEntryBudget = std::size_t{1} << 22;

struct Run {
  std::size_t begin;
  std::size_t end;
};

Dense compose_run(const Network& net, const Run& run) {
  const Shape& in_shape = net.shape_before(run.begin);
  const std::size_t in = element_count(in_shape);
  const std::size_t out = element_count(net.shape_before(run.end));

  auto push = [&](std::vector<double> v, bool linear_only) {
    std::vector<double> next;
    for (std::size_t k = run.begin; k < run.end; ++k) {
      next.assign(element_count(net.shape_before(k + 1)), 0.0);
      if (linear_only)
        apply_linear_part(net.layers()[k], net.shape_before(k), v, next);
      else
        apply_layer(net.layers()[k], net.shape_before(k), v, next);
      v.swap(next);
    }
    return v;
  };

  Dense d;
  d.out = out;
  d.in = in;
  d.weights.assign(out * in, 0.0);
  d.bias = push(std::vector<double>(in, 0.0), false);
  std::vector<double> basis(in, 0.0);
  for (std::size_t j = 0; j < in; ++j) {
    basis[j] = 1.0;
    const auto col = push(basis, true);
    basis[j] = 0.0;
    for (std::size_t i = 0; i < out; ++i) d.weights[i * in + j] = col[i];
  }
  return d;
}

bool foldable(const Network& net, const Run& run) {
  const auto& layers = net.layers();
  const std::size_t len = run.end - run.begin;
  const bool only_flatten = std::all_of(layers.begin() + run.begin, layers.begin() + run.end,
                                        [](const Layer& l) { return std::holds_alternative<Flatten>(l); });
  if (only_flatten) return false;
  if (len == 1 && std::holds_alternative<Dense>(layers[run.begin])) return false;
  // A folded run always yields a flat vector.
  if (net.shape_before(run.end).size() != 1) return false;
  std::size_t budget = kFoldEntryBudget;
  for (std::size_t k = run.begin; k < run.end; ++k)
    if (const auto* d = std::get_if<Dense>(&layers[k])) budget = std::max(budget, d->weights.size());
  return element_count(net.shape_before(run.begin)) * element_count(net.shape_before(run.end)) <=
         budget;
}

}  // namespace

Network fold_affine_layers(const Network& net) {
  const auto& layers = net.layers();
  std::vector<Layer> folded;
  std::size_t k = 0;
  while (k < layers.size()) {
    if (!is_affine(layers[k])) {
      folded.push_back(layers[k]);
      ++k;
      continue;
    }
    Run run{k, k};
    while (run.end < layers.size() && is_affine(layers[run.end])) ++run.end;
    if (foldable(net, run)) {
      folded.emplace_back(compose_run(net, run));
    } else {
      for (std::size_t i = run.begin; i < run.end; ++i) folded.push_back(layers[i]);
    }
    k = run.end;
  }
  return Network(net.input_shape(), std::move(folded));
}

}  // namespace linrestrict
