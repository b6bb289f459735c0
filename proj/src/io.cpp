#include "linrestrict/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "linrestrict/error.hpp"

namespace linrestrict {

using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Reading

[[noreturn]] void schema_fail(const std::string& field, const std::string& what) {
  fail(ErrorCode::schema, field + ": " + what);
}

const json& member(const json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_fail(path + key, "missing required field");
  return *it;
}

double read_number(const json& v, const std::string& field) {
  if (!v.is_number()) schema_fail(field, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) schema_fail(field, "value is not finite");
  return d;
}

std::size_t read_count(const json& v, const std::string& field) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    schema_fail(field, "expected a non-negative integer");
  return v.get<std::size_t>();
}

const json& read_array(const json& v, const std::string& field) {
  if (!v.is_array()) schema_fail(field, "expected an array");
  return v;
}

std::vector<double> read_vector(const json& v, const std::string& field) {
  read_array(v, field);
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(read_number(v[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

Shape read_shape(const json& v, const std::string& field) {
  read_array(v, field);
  Shape out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(read_count(v[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

std::array<std::size_t, 2> read_pair(const json& v, const std::string& field) {
  read_array(v, field);
  if (v.size() != 2) schema_fail(field, "expected two entries");
  return {read_count(v[0], field + "[0]"), read_count(v[1], field + "[1]")};
}

// Flattens a regularly nested array of numbers of the given depth, recording
// the extent of each level.
void flatten_nested(const json& v, std::size_t depth, const std::string& field,
                    std::vector<std::size_t>& extents, std::size_t level,
                    std::vector<double>& out) {
  if (level == depth) {
    out.push_back(read_number(v, field));
    return;
  }
  read_array(v, field);
  if (extents.size() == level) {
    if (v.empty()) schema_fail(field, "array must not be empty");
    extents.push_back(v.size());
  } else if (extents[level] != v.size()) {
    schema_fail(field, "ragged array: expected " + std::to_string(extents[level]) +
                           " entries, found " + std::to_string(v.size()));
  }
  for (std::size_t i = 0; i < v.size(); ++i)
    flatten_nested(v[i], depth, field + "[" + std::to_string(i) + "]", extents, level + 1, out);
}

Layer read_layer(const json& rec, const std::string& path) {
  if (!rec.is_object()) schema_fail(path, "expected an object");
  const json& type = member(rec, "type", path + ".");
  if (!type.is_string()) schema_fail(path + ".type", "expected a string");
  const std::string tag = type.get<std::string>();
  const std::string p = path + ".";

  if (tag == "dense") {
    Dense d;
    std::vector<std::size_t> extents;
    flatten_nested(member(rec, "weights", p), 2, p + "weights", extents, 0, d.weights);
    d.out = extents[0];
    d.in = extents[1];
    d.bias = read_vector(member(rec, "bias", p), p + "bias");
    return d;
  }
  if (tag == "conv2d") {
    Conv2D c;
    std::vector<std::size_t> extents;
    flatten_nested(member(rec, "kernel", p), 4, p + "kernel", extents, 0, c.kernel);
    c.out_channels = extents[0];
    c.in_channels = extents[1];
    c.kernel_h = extents[2];
    c.kernel_w = extents[3];
    c.bias = read_vector(member(rec, "bias", p), p + "bias");
    if (rec.contains("stride")) c.stride = read_pair(rec["stride"], p + "stride");
    if (rec.contains("padding")) c.padding = read_pair(rec["padding"], p + "padding");
    return c;
  }
  if (tag == "maxpool") {
    MaxPool m;
    m.window = read_pair(member(rec, "window", p), p + "window");
    m.stride = rec.contains("stride") ? read_pair(rec["stride"], p + "stride") : m.window;
    return m;
  }
  if (tag == "normalize") {
    Normalize n;
    n.mean = read_vector(member(rec, "mean", p), p + "mean");
    n.std = read_vector(member(rec, "std", p), p + "std");
    return n;
  }
  if (tag == "relu") return ReLU{};
  if (tag == "flatten") return Flatten{};
  schema_fail(path + ".type", "unknown layer type \"" + tag + "\"");
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // e.byte is the 1-based offset of the offending character.
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::string what = e.what();
    if (auto pos = what.find("parse error"); pos != std::string::npos) what = what.substr(pos);
    fail(ErrorCode::parse,
         "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what);
  } catch (const json::exception& e) {
    // Number literals outside the double range.
    fail(ErrorCode::parse, e.what());
  }
}

// ---------------------------------------------------------------------------
// Writing

json nested(const std::vector<double>& flat, std::span<const std::size_t> extents,
            std::size_t& pos) {
  if (extents.empty()) return flat[pos++];
  json arr = json::array();
  for (std::size_t i = 0; i < extents[0]; ++i) arr.push_back(nested(flat, extents.subspan(1), pos));
  return arr;
}

json nested(const std::vector<double>& flat, std::vector<std::size_t> extents) {
  std::size_t pos = 0;
  return nested(flat, std::span<const std::size_t>(extents), pos);
}

json layer_to_json(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> json {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Dense>) {
          return {{"type", "dense"}, {"weights", nested(l.weights, {l.out, l.in})},
                  {"bias", l.bias}};
        } else if constexpr (std::is_same_v<T, Conv2D>) {
          return {{"type", "conv2d"},
                  {"kernel", nested(l.kernel, {l.out_channels, l.in_channels, l.kernel_h,
                                               l.kernel_w})},
                  {"bias", l.bias},
                  {"stride", l.stride},
                  {"padding", l.padding}};
        } else if constexpr (std::is_same_v<T, Normalize>) {
          return {{"type", "normalize"}, {"mean", l.mean}, {"std", l.std}};
        } else if constexpr (std::is_same_v<T, MaxPool>) {
          return {{"type", "maxpool"}, {"window", l.window}, {"stride", l.stride}};
        } else if constexpr (std::is_same_v<T, ReLU>) {
          return {{"type", "relu"}};
        } else {
          return {{"type", "flatten"}};
        }
      },
      layer);
}

json tensor_to_json(const Tensor& t) { return {{"shape", t.shape}, {"data", t.data}}; }

Tensor tensor_from_json(const json& v, const std::string& field) {
  if (!v.is_object()) schema_fail(field, "expected an object");
  return Tensor(read_shape(member(v, "shape", field + "."), field + ".shape"),
                read_vector(member(v, "data", field + "."), field + ".data"));
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

void append_row(std::string& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_number(values[i]);
  }
  out += '\n';
}

std::string field_table(const std::vector<std::pair<std::string, std::string>>& rows) {
  std::string out = "field,value\n";
  for (const auto& [k, v] : rows) out += k + "," + v + "\n";
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

std::string optional_text(const std::optional<double>& v) { return v ? format_number(*v) : ""; }
std::string optional_text(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v) : "";
}

}  // namespace

Network parse_network(std::string_view text, bool fold_affine) {
  const json doc = parse_json(text);
  if (!doc.is_object()) schema_fail("(document)", "expected an object");

  const json& version = member(doc, "schema_version", "");
  if (!version.is_number_integer() || version.get<long long>() != kNetworkSchemaVersion)
    schema_fail("schema_version", "expected " + std::to_string(kNetworkSchemaVersion));

  Shape input_shape = read_shape(member(doc, "input_shape", ""), "input_shape");
  const json& layers_doc = read_array(member(doc, "layers", ""), "layers");
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < layers_doc.size(); ++i)
    layers.push_back(read_layer(layers_doc[i], "layers[" + std::to_string(i) + "]"));

  Network net(std::move(input_shape), std::move(layers));
  return fold_affine ? fold_affine_layers(net) : net;
}

Network load_network(const std::filesystem::path& path, bool fold_affine) {
  return parse_network(read_text_file(path), fold_affine);
}

std::string network_to_json(const Network& net) {
  json layers = json::array();
  for (const auto& l : net.layers()) layers.push_back(layer_to_json(l));
  json doc = {{"schema_version", kNetworkSchemaVersion},
              {"input_shape", net.input_shape()},
              {"layers", layers}};
  return dump(doc);
}

void save_network(const Network& net, const std::filesystem::path& path) {
  write_text_file(path, network_to_json(net));
}

ExportFormat parse_export_format(std::string_view name) {
  if (name == "structured" || name == "json") return ExportFormat::structured;
  if (name == "tabular" || name == "csv") return ExportFormat::tabular;
  fail(ErrorCode::usage,
       "unknown format '" + std::string(name) + "' (expected structured or tabular)");
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string format_partitions(const PartitionedLine& line, ExportFormat format) {
  const std::size_t n_in = line.query.start.size();
  if (format == ExportFormat::tabular) {
    const std::size_t n_out = line.endpoints.front().postimage.size();
    std::string out = "alpha";
    for (std::size_t i = 0; i < n_in; ++i) out += ",pre_" + std::to_string(i);
    for (std::size_t i = 0; i < n_out; ++i) out += ",post_" + std::to_string(i);
    out += '\n';
    std::vector<double> row;
    for (const auto& e : line.endpoints) {
      row.assign(1, e.alpha);
      const auto pre = line.point_at(e.alpha);
      row.insert(row.end(), pre.begin(), pre.end());
      row.insert(row.end(), e.postimage.data.begin(), e.postimage.data.end());
      append_row(out, row);
    }
    return out;
  }
  json endpoints = json::array();
  for (const auto& e : line.endpoints)
    endpoints.push_back({{"alpha", e.alpha},
                         {"origin_layer", e.origin_layer},
                         {"preimage", line.point_at(e.alpha)},
                         {"postimage", e.postimage.data}});
  json doc = {{"kind", "partitioned_line"},
              {"query", {{"start", tensor_to_json(line.query.start)},
                         {"end", tensor_to_json(line.query.end)}}},
              {"output_shape", line.endpoints.front().postimage.shape},
              {"partition_count", line.partition_count()},
              {"alphas", line.alphas()},
              {"endpoints", endpoints}};
  return dump(doc);
}

PartitionedLine parse_partitions(std::string_view text) {
  const json doc = parse_json(text);
  if (!doc.is_object()) schema_fail("(document)", "expected an object");
  const json& kind = member(doc, "kind", "");
  if (kind != "partitioned_line") schema_fail("kind", "expected \"partitioned_line\"");
  const json& q = member(doc, "query", "");
  PartitionedLine line;
  line.query.start = tensor_from_json(member(q, "start", "query."), "query.start");
  line.query.end = tensor_from_json(member(q, "end", "query."), "query.end");
  const Shape out_shape = read_shape(member(doc, "output_shape", ""), "output_shape");
  const json& eps = read_array(member(doc, "endpoints", ""), "endpoints");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const std::string p = "endpoints[" + std::to_string(i) + "]";
    const json& e = eps[i];
    if (!e.is_object()) schema_fail(p, "expected an object");
    Endpoint ep;
    ep.alpha = read_number(member(e, "alpha", p + "."), p + ".alpha");
    const json& origin = member(e, "origin_layer", p + ".");
    if (!origin.is_number_integer()) schema_fail(p + ".origin_layer", "expected an integer");
    ep.origin_layer = origin.get<int>();
    ep.postimage = Tensor(out_shape, read_vector(member(e, "postimage", p + "."), p + ".postimage"));
    line.endpoints.push_back(std::move(ep));
  }
  if (line.endpoints.size() < 2) schema_fail("endpoints", "expected at least two endpoints");
  return line;
}

std::string format_segments(const std::vector<ClassSegment>& segments, ExportFormat format) {
  if (format == ExportFormat::tabular) {
    std::string out = "alpha_lo,alpha_hi,class\n";
    for (const auto& s : segments)
      out += format_number(s.alpha_lo) + "," + format_number(s.alpha_hi) + "," +
             std::to_string(s.class_index) + "\n";
    return out;
  }
  json arr = json::array();
  for (const auto& s : segments)
    arr.push_back({{"alpha_lo", s.alpha_lo}, {"alpha_hi", s.alpha_hi}, {"class", s.class_index}});
  return dump({{"kind", "class_segments"}, {"segments", arr}});
}

std::string format_attribution(const AttributionReport& r, ExportFormat format) {
  if (format == ExportFormat::tabular) {
    std::vector<std::pair<std::string, std::string>> rows = {
        {"method", std::string(to_string(r.method))},
        {"samples", optional_text(r.samples)},
        {"partitions_used", optional_text(r.partitions_used)},
        {"output_difference", format_number(r.output_difference)},
        {"completeness_gap_absolute", format_number(r.completeness_gap.absolute)},
        {"completeness_gap_relative", optional_text(r.completeness_gap.relative)},
    };
    for (std::size_t i = 0; i < r.values.size(); ++i)
      rows.emplace_back("attribution[" + std::to_string(i) + "]", format_number(r.values[i]));
    return field_table(rows);
  }
  json doc = {{"kind", "attribution"},
              {"method", to_string(r.method)},
              {"samples", optional_json(r.samples)},
              {"partitions_used", optional_json(r.partitions_used)},
              {"output_difference", r.output_difference},
              {"completeness_gap",
               {{"absolute", r.completeness_gap.absolute},
                {"relative", optional_json(r.completeness_gap.relative)}}},
              {"values", r.values}};
  return dump(doc);
}

std::string format_density(const DensityReport& r, ExportFormat format) {
  if (format == ExportFormat::tabular)
    return field_table({{"partition_count", std::to_string(r.partition_count)},
                        {"length", format_number(r.length)},
                        {"density", format_number(r.density)},
                        {"gradient_deviation", optional_text(r.gradient_deviation)}});
  return dump({{"kind", "density"},
               {"partition_count", r.partition_count},
               {"length", r.length},
               {"density", r.density},
               {"gradient_deviation", optional_json(r.gradient_deviation)}});
}

std::string format_sample_search(const SampleSearchResult& r, std::string_view method,
                                 ExportFormat format) {
  if (format == ExportFormat::tabular)
    return field_table({{"method", std::string(method)},
                        {"samples", optional_text(r.samples)},
                        {"tolerance", format_number(r.tolerance)},
                        {"stability_window", std::to_string(r.stability_window)},
                        {"cap", std::to_string(r.cap)}});
  return dump({{"kind", "sample_search"},
               {"method", method},
               {"samples", optional_json(r.samples)},
               {"tolerance", r.tolerance},
               {"stability_window", r.stability_window},
               {"cap", r.cap}});
}

std::string format_comparison(const DirectionComparison& c, ExportFormat format) {
  if (format == ExportFormat::tabular) {
    std::string out = "direction,partition_count,length,density\n";
    out += "fgsm," + std::to_string(c.fgsm.partition_count) + "," +
           format_number(c.fgsm.length) + "," + format_number(c.fgsm.density) + "\n";
    out += "random," + std::to_string(c.random.partition_count) + "," +
           format_number(c.random.length) + "," + format_number(c.random.density) + "\n";
    return out;
  }
  auto density = [](const DensityReport& d) {
    return json{{"partition_count", d.partition_count}, {"length", d.length},
                {"density", d.density}};
  };
  return dump({{"kind", "direction_comparison"},
               {"fgsm_point", tensor_to_json(c.fgsm_point)},
               {"random_point", tensor_to_json(c.random_point)},
               {"fgsm", density(c.fgsm)},
               {"random", density(c.random)},
               {"density_ratio", c.density_ratio}});
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  out.close();
  if (!out) fail(ErrorCode::io, "failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorCode::io, "failed reading '" + path.string() + "'");
  return ss.str();
}

void export_partitions(const PartitionedLine& line, const std::filesystem::path& path,
                       ExportFormat format) {
  write_text_file(path, format_partitions(line, format));
}

void export_partitions(const std::vector<ClassSegment>& segments,
                       const std::filesystem::path& path, ExportFormat format) {
  write_text_file(path, format_segments(segments, format));
}

void export_partitions(const AttributionReport& report, const std::filesystem::path& path,
                       ExportFormat format) {
  write_text_file(path, format_attribution(report, format));
}

void export_partitions(const DensityReport& report, const std::filesystem::path& path,
                       ExportFormat format) {
  write_text_file(path, format_density(report, format));
}

}  // namespace linrestrict
