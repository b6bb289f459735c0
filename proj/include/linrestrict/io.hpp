#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "linrestrict/analysis.hpp"
#include "linrestrict/attributions.hpp"
#include "linrestrict/exactline.hpp"
#include "linrestrict/network.hpp"

namespace linrestrict {

inline constexpr int kNetworkSchemaVersion = 1;

/// Parses a network document:
///
///   {"schema_version": 1, "input_shape": [...], "layers": [...]}
///
/// with layer records {"type": "dense", "weights": [[...]], "bias": [...]},
/// {"type": "relu"}, {"type": "flatten"}, {"type": "normalize", "mean": [...],
/// "std": [...]}, {"type": "maxpool", "window": [wh, ww], "stride": [sh, sw]}
/// and {"type": "conv2d", "kernel": [[[[...]]]], "bias": [...],
/// "stride": [sh, sw], "padding": [ph, pw]}. Dense weights are row-major
/// (one inner array per output). Conv stride defaults to [1, 1], padding to
/// [0, 0], and maxpool stride to the window.
///
/// Throws parse-error (with line and column), schema-error (naming the
/// field) or shape-error (from validation).
Network parse_network(std::string_view text, bool fold_affine = false);
Network load_network(const std::filesystem::path& path, bool fold_affine = false);

std::string network_to_json(const Network& net);
void save_network(const Network& net, const std::filesystem::path& path);

enum class ExportFormat { structured, tabular };
/// "structured" or "tabular" (also "json" and "csv"); throws usage-error.
ExportFormat parse_export_format(std::string_view name);

/// Shortest-safe round-trip form: 17 significant digits.
std::string format_number(double v);

std::string format_partitions(const PartitionedLine& line, ExportFormat format);
std::string format_segments(const std::vector<ClassSegment>& segments, ExportFormat format);
std::string format_attribution(const AttributionReport& report, ExportFormat format);
std::string format_density(const DensityReport& report, ExportFormat format);
std::string format_sample_search(const SampleSearchResult& result, std::string_view method,
                                 ExportFormat format);
std::string format_comparison(const DirectionComparison& comparison, ExportFormat format);

/// Reads back a structured partition document.
PartitionedLine parse_partitions(std::string_view text);

/// Writes `contents` to `path`; throws io-error.
void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

void export_partitions(const PartitionedLine& line, const std::filesystem::path& path,
                       ExportFormat format);
void export_partitions(const std::vector<ClassSegment>& segments,
                       const std::filesystem::path& path, ExportFormat format);
void export_partitions(const AttributionReport& report, const std::filesystem::path& path,
                       ExportFormat format);
void export_partitions(const DensityReport& report, const std::filesystem::path& path,
                       ExportFormat format);

}  // namespace linrestrict
