#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "linrestrict/exactline.hpp"
#include "linrestrict/network.hpp"

namespace linrestrict {

/// Interval of the query on which the argmax output stays `class_index`.
struct ClassSegment {
  double alpha_lo = 0.0;
  double alpha_hi = 1.0;
  std::size_t class_index = 0;

  bool operator==(const ClassSegment&) const = default;
};

/// Maximal constant-class intervals tiling [0, 1]. A boundary point belongs
/// to the segment on its right. Needs at least two outputs.
std::vector<ClassSegment> decision_segments(const Network& net, const LineQuery& query);

struct DensityReport {
  std::size_t partition_count = 0;  // of the canonical partitioning
  double length = 0.0;              // ||R - Q||_2
  double density = 0.0;             // partition_count / length
  std::optional<double> gradient_deviation;
};

DensityReport partition_density(const Network& net, const LineQuery& query);

/// Partition-length-weighted mean of ||g_r - g_0||_1 / ||g_0||_1, where g_0
/// is the gradient at Q and g_r the gradient at the midpoint of partition r.
double gradient_deviation(const Network& net, const LineQuery& query, std::size_t output_index);

/// x - epsilon * sign(grad of output `label` at x), sign(0) = 0.
Tensor fgsm_direction(const Network& net, const Tensor& x, double epsilon, std::size_t label);

/// x + epsilon * s for a uniformly random sign vector s drawn from a
/// generator seeded with `seed`.
Tensor random_direction(const Tensor& x, double epsilon, std::uint64_t seed);

struct DirectionComparison {
  Tensor fgsm_point;
  Tensor random_point;
  DensityReport fgsm;
  DensityReport random;
  double density_ratio = 0.0;  // fgsm.density / random.density
};

/// Densities of x -> FGSM point and x -> random point at the same L-inf
/// radius. Throws query-error when the FGSM step is zero.
DirectionComparison compare_directions(const Network& net, const Tensor& x, double epsilon,
                                       std::size_t label, std::uint64_t seed);

}  // namespace linrestrict
