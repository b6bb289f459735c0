#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "linrestrict/exactline.hpp"
#include "linrestrict/network.hpp"

namespace lrtest {

using namespace linrestrict;

/// Dense 2->2 (W = [[-1.7, 1], [2, -1.3]], b = [3, 3]) followed by ReLU.
Network loan_network();

/// F(x) = ReLU(x) on a single input.
Network relu_1d_network();

Tensor random_tensor(std::mt19937_64& rng, const Shape& shape, double scale = 1.0);

Dense random_dense(std::mt19937_64& rng, std::size_t in, std::size_t out);

/// Dense/ReLU stack: input_dim -> hidden... (each followed by ReLU) -> outputs.
Network random_relu_network(std::mt19937_64& rng, std::size_t input_dim,
                            const std::vector<std::size_t>& hidden, std::size_t outputs);

/// Picks the number of hidden layers in [min_layers, max_layers] and widths in
/// [min_width, max_width].
Network random_relu_network(std::mt19937_64& rng, std::size_t input_dim, std::size_t min_layers,
                            std::size_t max_layers, std::size_t min_width,
                            std::size_t max_width, std::size_t outputs);

Conv2D random_conv(std::mt19937_64& rng, std::size_t in_channels, std::size_t out_channels,
                   std::size_t kernel, std::size_t stride, std::size_t padding);

/// A query between two random points of the network's input shape.
LineQuery random_query(std::mt19937_64& rng, const Network& net, double scale = 1.0);

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi);

}  // namespace lrtest
