#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "linrestrict/error.hpp"
#include "oracles.hpp"
#include "test_nets.hpp"

using namespace linrestrict;
using namespace lrtest;

using V = std::vector<double>;

namespace {

LineQuery loan_query() { return {Tensor::vector({20, 30}), Tensor::vector({30, 50})}; }

void check_well_formed(const PartitionedLine& p) {
  REQUIRE(p.endpoints.size() >= 2);
  CHECK(p.endpoints.front().alpha == 0.0);
  CHECK(p.endpoints.back().alpha == 1.0);
  CHECK(p.endpoints.front().origin_layer == kQueryOrigin);
  CHECK(p.endpoints.back().origin_layer == kQueryOrigin);
  for (std::size_t i = 1; i < p.endpoints.size(); ++i)
    CHECK(p.endpoints[i].alpha - p.endpoints[i - 1].alpha >= 1e-12);
}

double max_interpolation_error(const Network& net, const PartitionedLine& p, std::mt19937_64& rng,
                               int per_partition) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (std::size_t r = 0; r + 1 < p.endpoints.size(); ++r) {
    const auto& a = p.endpoints[r];
    const auto& b = p.endpoints[r + 1];
    for (int s = 0; s < per_partition; ++s) {
      const double t = u(rng);
      const double alpha = a.alpha + t * (b.alpha - a.alpha);
      const auto out = reference_forward(net, p.point_at(alpha));
      double mag = 0.0, err = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double interp = a.postimage[i] + t * (b.postimage[i] - a.postimage[i]);
        err = std::max(err, std::abs(out[i] - interp));
        mag = std::max(mag, std::abs(out[i]));
      }
      worst = std::max(worst, err / (1.0 + mag));
    }
  }
  return worst;
}

Network random_pool_network(std::mt19937_64& rng) {
  const std::size_t side = uniform_index(rng, 4, 7);
  std::vector<Layer> layers;
  layers.push_back(random_conv(rng, 1, 2, 3, 1, 1));
  if (uniform_index(rng, 0, 1)) layers.push_back(ReLU{});
  const std::size_t s = uniform_index(rng, 1, 2);
  layers.push_back(MaxPool{{2, 2}, {s, s}});
  if (uniform_index(rng, 0, 1)) layers.push_back(ReLU{});
  layers.push_back(Flatten{});
  const std::size_t pooled = 2 * ((side - 2) / s + 1) * ((side - 2) / s + 1);
  layers.push_back(random_dense(rng, pooled, 5));
  layers.push_back(ReLU{});
  layers.push_back(random_dense(rng, 5, 3));
  return Network({1, side, side}, std::move(layers));
}

}  // namespace

TEST_CASE("loan network worked example") {
  const Network net = loan_network();
  const PartitionedLine p = exactline_network(net, loan_query());
  check_well_formed(p);
  REQUIRE(p.endpoints.size() == 4);
  CHECK(p.endpoints[1].alpha == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(p.endpoints[2].alpha == doctest::Approx(2.0 / 3).epsilon(1e-15));
  const V expected[] = {{0, 4}, {0, 2}, {1, 0}, {2, 0}};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(std::abs(p.endpoints[i].postimage[j] - expected[i][j]) <= 1e-12);
  CHECK(p.endpoints[1].origin_layer == 1);
  const auto p2 = p.preimage(1);
  CHECK(p2[0] == doctest::Approx(70.0 / 3));
  CHECK(p2[1] == doctest::Approx(110.0 / 3));
}

TEST_CASE("affine-only networks keep just the query endpoints") {
  std::mt19937_64 rng(31);
  const Network net({4}, {random_dense(rng, 4, 6), random_dense(rng, 6, 2)});
  const auto p = exactline_network(net, random_query(rng, net));
  CHECK(p.alphas() == V{0, 1});
}

TEST_CASE("query validation") {
  const Network net = loan_network();
  try {
    exactline_network(net, {Tensor::vector({20, 30}), Tensor::vector({20, 30})});
    FAIL("expected query-error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::query);
  }
  try {
    exactline_network(net, {Tensor::vector({20, 30}), Tensor::vector({1, 2, 3})});
    FAIL("expected shape-error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::shape);
  }
}

TEST_CASE("random ReLU network matches a dense activation scan") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 3; ++trial) {
    const Network net = random_relu_network(rng, 16, {24, 24, 24}, 4);
    const LineQuery q = random_query(rng, net);
    const auto p = exactline_network(net, q);
    check_well_formed(p);
    const auto scan = scan_dense_network(net, q, 1000000);
    const auto raw = interior_alphas(p);
    CHECK(!raw.empty());
    CHECK(one_sided_distance(scan.changes, raw) <= 1e-6);
    CHECK(one_sided_distance(raw, scan.changes) <= 1e-6);
    CHECK(max_interpolation_error(net, p, rng, 32) <= 1e-6);
  }
}

TEST_CASE("networks with maxpool match a scan of the effective pattern") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 6; ++trial) {
    const Network net = random_pool_network(rng);
    const LineQuery q = random_query(rng, net);
    const auto p = exactline_network(net, q);
    check_well_formed(p);
    const auto scan = scan_pattern_changes(net, q, 200000);
    const auto raw = interior_alphas(p);
    CHECK(one_sided_distance(scan, raw) <= 5e-6);
    CHECK(one_sided_distance(raw, scan) <= 5e-6);
    CHECK(max_interpolation_error(net, p, rng, 32) <= 1e-6);
  }
}

TEST_CASE("gradient is constant inside each partition of a ReLU network") {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Network net = random_relu_network(rng, 6, 2, 3, 8, 16, 3);
    const auto p = exactline_network(net, random_query(rng, net, 2.0));
    for (std::size_t r = 0; r + 1 < p.endpoints.size(); ++r) {
      const double lo = p.endpoints[r].alpha, hi = p.endpoints[r + 1].alpha;
      const auto g1 = gradient(net, p.point_at(lo + u(rng) * (hi - lo)), 1);
      const auto g2 = gradient(net, p.point_at(lo + u(rng) * (hi - lo)), 1);
      for (std::size_t i = 0; i < g1.size(); ++i) CHECK(std::abs(g1[i] - g2[i]) <= 1e-9);
    }
  }
}

TEST_CASE("hyperplane method agrees with crossing ratios after canonicalization") {
  std::mt19937_64 rng(35);
  EngineOptions planes;
  planes.relu = ReluMethod::hyperplanes;
  planes.maxpool = MaxPoolMethod::hyperplanes;
  for (int trial = 0; trial < 20; ++trial) {
    const Network net = trial % 2 ? random_pool_network(rng)
                                  : random_relu_network(rng, 5, 1, 3, 4, 16, 3);
    const LineQuery q = random_query(rng, net);
    const auto a = canonicalize(exactline_network(net, q));
    const auto b = canonicalize(exactline_network(net, q, planes));
    REQUIRE(a.endpoints.size() == b.endpoints.size());
    for (std::size_t i = 0; i < a.endpoints.size(); ++i)
      CHECK(std::abs(a.endpoints[i].alpha - b.endpoints[i].alpha) <= 1e-9);
  }
}

TEST_CASE("fused and separate relu/maxpool handling agree after canonicalization") {
  std::mt19937_64 rng(36);
  EngineOptions separate;
  separate.fuse_relu_maxpool = false;
  for (int trial = 0; trial < 20; ++trial) {
    const Network net = random_pool_network(rng);
    const LineQuery q = random_query(rng, net);
    const auto fused = exactline_network(net, q);
    const auto split = exactline_network(net, q, separate);
    CHECK(fused.endpoints.size() <= split.endpoints.size());
    const auto a = canonicalize(fused);
    const auto b = canonicalize(split);
    REQUIRE(a.endpoints.size() == b.endpoints.size());
    for (std::size_t i = 0; i < a.endpoints.size(); ++i)
      CHECK(std::abs(a.endpoints[i].alpha - b.endpoints[i].alpha) <= 1e-9);
  }
}

TEST_CASE("sub-segment processing gives the same partitioning") {
  std::mt19937_64 rng(37);
  EngineOptions tight;
  tight.max_buffered_values = 64;
  for (int trial = 0; trial < 10; ++trial) {
    const Network net = trial % 2 ? random_pool_network(rng)
                                  : random_relu_network(rng, 8, 2, 3, 16, 32, 3);
    const LineQuery q = random_query(rng, net, 2.0);
    const auto a = exactline_network(net, q);
    const auto b = exactline_network(net, q, tight);
    check_well_formed(b);
    REQUIRE(a.endpoints.size() == b.endpoints.size());
    for (std::size_t i = 0; i < a.endpoints.size(); ++i) {
      CHECK(a.endpoints[i].alpha == b.endpoints[i].alpha);
      CHECK(a.endpoints[i].postimage == b.endpoints[i].postimage);
    }
  }
}

TEST_CASE("canonicalize") {
  SUBCASE("collinear middle endpoint is removed") {
    PartitionedLine p;
    p.query = {Tensor::vector({0, 0}), Tensor::vector({2, 2})};
    p.endpoints = {{0.0, Tensor::vector({0, 0}), kQueryOrigin},
                   {0.5, Tensor::vector({1, 1}), 0},
                   {1.0, Tensor::vector({2, 2}), kQueryOrigin}};
    const auto c = canonicalize(p);
    CHECK(c.alphas() == V{0, 1});
  }
  SUBCASE("loan result is already minimal") {
    const auto p = exactline_network(loan_network(), loan_query());
    CHECK(canonicalize(p).alphas() == p.alphas());
  }
  SUBCASE("idempotent on random networks") {
    std::mt19937_64 rng(38);
    for (int trial = 0; trial < 20; ++trial) {
      const Network net = trial % 2 ? random_pool_network(rng)
                                    : random_relu_network(rng, 4, 1, 3, 4, 16, 2);
      const auto once = canonicalize(exactline_network(net, random_query(rng, net)));
      const auto twice = canonicalize(once);
      CHECK(once.alphas() == twice.alphas());
      check_well_formed(once);
    }
  }
}

TEST_CASE("interpolate_output") {
  const Network net = loan_network();
  const auto p = exactline_network(net, loan_query());
  CHECK(interpolate_output(p, 0.0) == p.endpoints[0].postimage);
  CHECK(interpolate_output(p, 0.0).data == forward(net, loan_query().start).data);
  const auto mid = interpolate_output(p, 0.5);
  CHECK(mid[0] == doctest::Approx(0.5));
  CHECK(mid[1] == doctest::Approx(1.0));
  const auto direct = reference_forward(net, p.point_at(0.5));
  CHECK(mid[0] == doctest::Approx(direct[0]));
  CHECK(mid[1] == doctest::Approx(direct[1]));
  CHECK(interpolate_output(p, p.endpoints[2].alpha) == p.endpoints[2].postimage);
  try {
    interpolate_output(p, 1.5);
    FAIL("expected range-error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::range);
  }
}

TEST_CASE("folding does not change the partitioning") {
  std::mt19937_64 rng(39);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Layer> layers{Normalize{{0.1, -0.2, 0.3}, {1.1, 0.9, 1.3}},
                              random_dense(rng, 3, 8), ReLU{}, random_dense(rng, 8, 8),
                              random_dense(rng, 8, 6), ReLU{}, random_dense(rng, 6, 2)};
    const Network net({3}, std::move(layers));
    const Network folded = fold_affine_layers(net);
    const LineQuery q = random_query(rng, net, 2.0);
    const auto a = canonicalize(exactline_network(net, q));
    const auto b = canonicalize(exactline_network(folded, q));
    REQUIRE(a.endpoints.size() == b.endpoints.size());
    for (std::size_t i = 0; i < a.endpoints.size(); ++i)
      CHECK(std::abs(a.endpoints[i].alpha - b.endpoints[i].alpha) <= 1e-9);
  }
}
