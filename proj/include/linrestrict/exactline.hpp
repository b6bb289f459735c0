#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "linrestrict/network.hpp"
#include "linrestrict/tensor.hpp"

namespace linrestrict {

/// Ratios closer than this are merged, denominators at or below it are treated
/// as zero, and crossings this close to a partition end are dropped.
inline constexpr double kRatioTolerance = 1e-12;

/// Origin marker for the two endpoints of the query itself.
inline constexpr int kQueryOrigin = -1;

/// The segment QR in input space.
struct LineQuery {
  Tensor start;  // Q
  Tensor end;    // R
};

/// Throws shape-error when Q or R does not match the network input and
/// query-error when Q == R.
void validate_query(const Network& net, const LineQuery& query);

struct Endpoint {
  double alpha = 0.0;  // ratio along Q -> R
  Tensor postimage;    // image under the layers applied so far
  int origin_layer = kQueryOrigin;
};

/// Sorted endpoints P_1 = Q, ..., P_n = R such that the function is affine
/// between each adjacent pair.
struct PartitionedLine {
  LineQuery query;
  std::vector<Endpoint> endpoints;

  std::size_t partition_count() const { return endpoints.size() - 1; }
  std::vector<double> alphas() const;
  /// Input-space point at `alpha`, as (1 - alpha) Q + alpha R.
  std::vector<double> point_at(double alpha) const;
  std::vector<double> preimage(std::size_t i) const { return point_at(endpoints.at(i).alpha); }
};

// ---------------------------------------------------------------------------
// Single-layer restrictions. Each takes the images q = L(P_i), r = L(P_{i+1})
// entering the layer and reports crossing ratios in the open interval (0, 1),
// sorted and merged at kRatioTolerance.

/// Sorted, merged ratios with those near 0 or 1 removed.
void sort_and_merge_ratios(std::vector<double>& ratios);

/// Orthant crossings -q_i / (r_i - q_i) of a ReLU layer.
std::vector<double> relu_crossings(std::span<const double> q, std::span<const double> r);

struct Breakpoint {
  double ratio = 0.0;
  std::vector<double> image;
};

/// ReLU restriction with images: both ends plus every crossing.
std::vector<Breakpoint> exactline_relu(std::span<const double> q, std::span<const double> r);

struct ArgmaxSwitch {
  double ratio = 0.0;
  std::size_t index = 0;
};

/// Which component is maximal along q -> r, as it changes.
struct ArgmaxPath {
  std::size_t start = 0;
  std::vector<ArgmaxSwitch> switches;
};

/// Follows the maximal component from ratio 0. At each step the next switch
/// is the smallest ratio (q_i - q_m) / ((r_m - q_m) + q_i - r_i) beyond the
/// current one; ties (in value at the start, or in ratio) go to the component
/// that stays maximal immediately afterwards, then to the lowest index.
ArgmaxPath follow_argmax(std::span<const double> q, std::span<const double> r);

/// Max over one window.
std::vector<double> window_max_crossings(std::span<const double> q, std::span<const double> r);

/// ReLU of the max over one window: argmax switches where the maximum is
/// negative are suppressed, and the ratio where the maximum crosses zero is
/// added.
std::vector<double> window_relu_max_crossings(std::span<const double> q,
                                              std::span<const double> r);

/// Union over windows; `window_indices` as from maxpool_window_indices.
std::vector<double> maxpool_crossings(std::span<const std::size_t> window_indices,
                                      std::size_t window_size, std::span<const double> q,
                                      std::span<const double> r, bool with_relu);
std::vector<double> maxpool_crossings(const MaxPool& pool, const Shape& in_shape,
                                      std::span<const double> q, std::span<const double> r,
                                      bool with_relu = false);

/// Hyperplane normal . x = offset with a sparse normal.
struct Hyperplane {
  std::vector<std::pair<std::size_t, double>> normal;
  double offset = 0.0;
};

/// Ratios where q -> r strictly crosses a hyperplane (signed distances of
/// opposite sign, each larger than kRatioTolerance in magnitude).
std::vector<double> hyperplane_crossings(std::span<const Hyperplane> planes,
                                         std::span<const double> q, std::span<const double> r);

/// Faces x_i = 0 of every orthant.
std::vector<Hyperplane> orthant_faces(std::size_t dim);

/// Faces x_a = x_b for every pair in every window, plus x_a = 0 when the max
/// is followed by a ReLU.
std::vector<Hyperplane> maxpool_faces(const MaxPool& pool, const Shape& in_shape,
                                      bool with_relu);

/// Restriction of one affine layer: exactly the two query endpoints.
PartitionedLine exactline_affine(const Layer& layer, const Shape& in_shape,
                                 const LineQuery& query);

// ---------------------------------------------------------------------------
// Whole networks.

enum class ReluMethod { orthant_ratios, hyperplanes };
enum class MaxPoolMethod { follow_argmax, hyperplanes };

struct EngineOptions {
  ReluMethod relu = ReluMethod::orthant_ratios;
  MaxPoolMethod maxpool = MaxPoolMethod::follow_argmax;
  /// Treat ReLU next to MaxPool as one layer.
  bool fuse_relu_maxpool = true;
  /// Upper bound on buffered postimage values; beyond it the line is
  /// processed as consecutive sub-segments sharing their boundary endpoints.
  std::size_t max_buffered_values = std::size_t{1} << 24;
};

PartitionedLine exactline_network(const Network& net, const LineQuery& query,
                                  const EngineOptions& options = {});

/// Removes interior endpoints whose postimage lies on the segment between
/// its neighbours (to 1e-9 relative), repeating until nothing changes.
PartitionedLine canonicalize(const PartitionedLine& line);

/// Output at `alpha` by interpolating the bracketing partition. Throws
/// range-error outside [0, 1].
Tensor interpolate_output(const PartitionedLine& line, double alpha);

}  // namespace linrestrict
