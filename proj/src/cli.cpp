#include "linrestrict/cli.hpp"

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "linrestrict/analysis.hpp"
#include "linrestrict/attributions.hpp"
#include "linrestrict/exactline.hpp"
#include "linrestrict/io.hpp"

namespace linrestrict::cli {

int exit_code_for(ErrorCode code) {
  return code == ErrorCode::usage || code == ErrorCode::query ? kExitUsage : kExitComputation;
}

std::string diagnostic(ErrorCode code, std::string_view message) {
  std::string line = "error[" + std::string(to_string(code)) + "]: ";
  for (char c : message) line += (c == '\n' || c == '\r') ? ' ' : c;
  return line;
}

std::vector<double> parse_values(std::string_view text, ErrorCode on_error,
                                 std::string_view what) {
  std::vector<double> values;
  std::size_t i = 0;
  auto is_sep = [](char c) { return c == ',' || c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (i < text.size()) {
    while (i < text.size() && is_sep(text[i])) ++i;
    if (i == text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !is_sep(text[j])) ++j;
    const char* first = text.data() + i;
    const char* last = text.data() + j;
    if (*first == '+') ++first;
    double v = 0.0;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
      fail(on_error, std::string(what) + ": '" + std::string(text.substr(i, j - i)) +
                         "' is not a finite number");
    values.push_back(v);
    i = j;
  }
  if (values.empty()) fail(on_error, std::string(what) + ": no values given");
  return values;
}

unsigned thread_count_from_env() {
  const char* raw = std::getenv("LINRESTRICT_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  unsigned n = 0;
  const std::string_view s(raw);
  auto res = std::from_chars(s.data(), s.data() + s.size(), n);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || n == 0)
    fail(ErrorCode::usage, "LINRESTRICT_THREADS must be a positive integer, got '" +
                               std::string(s) + "'");
  return n;
}

namespace {

struct PointArg {
  std::string inline_values;
  std::string file;
};

struct Common {
  std::string network;
  bool fold = false;
  std::string out;
  std::string format;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--network", c.network, "Network document (JSON)")->required();
  sub->add_flag("--fold", c.fold, "Fold runs of affine layers at load");
  sub->add_option("--out", c.out, "Output file (default: standard output)");
  sub->add_option("--format", c.format,
                  "structured or tabular (default: structured for .json outputs, "
                  "tabular otherwise)");
}

void add_point(CLI::App* sub, PointArg& p, const std::string& name, const std::string& desc) {
  auto* a = sub->add_option("--" + name, p.inline_values, desc + " as comma-separated floats");
  auto* b = sub->add_option("--" + name + "-file", p.file, desc + " read from a file");
  a->excludes(b);
}

Tensor resolve_point(const PointArg& p, const std::string& name, const Network& net) {
  std::vector<double> values;
  if (!p.file.empty()) {
    values = parse_values(read_text_file(p.file), ErrorCode::parse, p.file);
  } else if (!p.inline_values.empty()) {
    values = parse_values(p.inline_values, ErrorCode::usage, "--" + name);
  } else {
    fail(ErrorCode::usage, "--" + name + " or --" + name + "-file is required");
  }
  if (values.size() != net.input_size())
    fail(ErrorCode::shape, "--" + name + " has " + std::to_string(values.size()) +
                               " values, network input " +
                               shape_to_string(net.input_shape()) + " needs " +
                               std::to_string(net.input_size()));
  return Tensor(net.input_shape(), std::move(values));
}

ExportFormat resolve_format(const Common& c) {
  if (!c.format.empty()) return parse_export_format(c.format);
  if (c.out.size() >= 5 && c.out.compare(c.out.size() - 5, 5, ".json") == 0)
    return ExportFormat::structured;
  return ExportFormat::tabular;
}

void emit(const Common& c, const std::string& text, std::ostream& out) {
  if (c.out.empty())
    out << text;
  else
    write_text_file(c.out, text);
}

// Sweep lines file: one query per non-blank line, "q values ; r values".
// Lines starting with '#' are comments.
std::vector<LineQuery> read_lines_file(const std::string& path, const Network& net) {
  const std::string text = read_text_file(path);
  std::vector<LineQuery> queries;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line(text.data() + pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string_view::npos || line[first] == '#') continue;
    const auto semi = line.find(';');
    const std::string where = path + ":" + std::to_string(line_no);
    if (semi == std::string_view::npos)
      fail(ErrorCode::parse, where + ": expected 'start values ; end values'");
    auto q = parse_values(line.substr(0, semi), ErrorCode::parse, where);
    auto r = parse_values(line.substr(semi + 1), ErrorCode::parse, where);
    if (q.size() != net.input_size() || r.size() != net.input_size())
      fail(ErrorCode::shape, where + ": expected " + std::to_string(net.input_size()) +
                                 " values per point");
    queries.push_back({Tensor(net.input_shape(), std::move(q)),
                       Tensor(net.input_shape(), std::move(r))});
  }
  return queries;
}

std::string format_sweep(const std::vector<std::vector<ClassSegment>>& tables,
                         ExportFormat format) {
  if (format == ExportFormat::tabular) {
    std::string out = "line,alpha_lo,alpha_hi,class\n";
    for (std::size_t k = 0; k < tables.size(); ++k)
      for (const auto& s : tables[k])
        out += std::to_string(k) + "," + format_number(s.alpha_lo) + "," +
               format_number(s.alpha_hi) + "," + std::to_string(s.class_index) + "\n";
    return out;
  }
  std::string out = "{\n  \"kind\": \"sweep\",\n  \"lines\": [\n";
  for (std::size_t k = 0; k < tables.size(); ++k) {
    out += "    {\"line\": " + std::to_string(k) + ", \"segments\": [";
    for (std::size_t i = 0; i < tables[k].size(); ++i) {
      const auto& s = tables[k][i];
      out += std::string(i ? ", " : "") + "{\"alpha_lo\": " + format_number(s.alpha_lo) +
             ", \"alpha_hi\": " + format_number(s.alpha_hi) +
             ", \"class\": " + std::to_string(s.class_index) + "}";
    }
    out += std::string("]}") + (k + 1 < tables.size() ? ",\n" : "\n");
  }
  out += "  ]\n}\n";
  return out;
}

std::vector<std::vector<ClassSegment>> run_sweep(const Network& net,
                                                 const std::vector<LineQuery>& queries,
                                                 unsigned threads) {
  std::vector<std::vector<ClassSegment>> tables(queries.size());
  std::vector<std::exception_ptr> errors(queries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < queries.size(); k = next++) {
      try {
        tables[k] = decision_segments(net, queries[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const unsigned n = std::min<std::size_t>(threads, std::max<std::size_t>(queries.size(), 1));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  // Report the first failing line in input order.
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (!errors[k]) continue;
    try {
      std::rethrow_exception(errors[k]);
    } catch (const Error& e) {
      fail(e.code(), "line " + std::to_string(k) + ": " + e.what());
    }
  }
  return tables;
}

std::string format_fgsm(const Tensor& point, const DensityReport& d, ExportFormat format) {
  if (format == ExportFormat::tabular) {
    std::string out = "field,value\n";
    out += "partition_count," + std::to_string(d.partition_count) + "\n";
    out += "length," + format_number(d.length) + "\n";
    out += "density," + format_number(d.density) + "\n";
    for (std::size_t i = 0; i < point.size(); ++i)
      out += "point[" + std::to_string(i) + "]," + format_number(point[i]) + "\n";
    return out;
  }
  std::string out = "{\n  \"kind\": \"fgsm\",\n";
  out += "  \"partition_count\": " + std::to_string(d.partition_count) + ",\n";
  out += "  \"length\": " + format_number(d.length) + ",\n";
  out += "  \"density\": " + format_number(d.density) + ",\n";
  out += "  \"point\": [";
  for (std::size_t i = 0; i < point.size(); ++i)
    out += (i ? ", " : "") + format_number(point[i]);
  out += "]\n}\n";
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exact linear restrictions of piecewise-linear networks", "linrestrict"};
  app.require_subcommand(1);

  Common c;
  PointArg from, to, baseline, input, point;
  bool canonical = false;
  std::string method = "exact";
  std::optional<std::size_t> samples;
  std::optional<std::size_t> output_index;
  double tolerance = 0.05;
  std::size_t stability = 5;
  std::size_t cap = 1000;
  std::string criterion = "relative-error";
  std::string lines;
  double epsilon = 0.0;
  std::optional<std::size_t> label;
  std::optional<std::uint64_t> seed;
  bool compare_random = false;

  auto* exact = app.add_subcommand("exactline", "Linear partitioning of a line segment");
  add_common(exact, c);
  add_point(exact, from, "from", "Segment start");
  add_point(exact, to, "to", "Segment end");
  exact->add_flag("--canonical", canonical, "Drop endpoints that do not change the slope");

  auto* ig = app.add_subcommand("ig", "Integrated gradients attribution");
  add_common(ig, c);
  add_point(ig, baseline, "baseline", "Baseline x'");
  add_point(ig, input, "input", "Input x");
  ig->add_option("--method", method, "exact, left, right or trapezoid");
  ig->add_option("--samples", samples, "Riemann sample count");
  ig->add_option("--output-index", output_index, "Output component")->required();

  auto* igs = app.add_subcommand("ig-samples", "Samples needed by a Riemann IG scheme");
  add_common(igs, c);
  add_point(igs, baseline, "baseline", "Baseline x'");
  add_point(igs, input, "input", "Input x");
  igs->add_option("--method", method, "left, right or trapezoid")->default_str("left");
  igs->add_option("--output-index", output_index, "Output component")->required();
  igs->add_option("--tolerance", tolerance, "Tolerance")->capture_default_str();
  igs->add_option("--stability", stability, "Stability window")->capture_default_str();
  igs->add_option("--cap", cap, "Largest sample count tried")->capture_default_str();
  igs->add_option("--criterion", criterion,
                  "relative-error (against exact IG) or completeness (left sums)")
      ->capture_default_str();

  auto* dens = app.add_subcommand("density", "Linear partition density along a segment");
  add_common(dens, c);
  add_point(dens, from, "from", "Segment start");
  add_point(dens, to, "to", "Segment end");
  dens->add_option("--output-index", output_index, "Also report gradient deviation");

  auto* sweep = app.add_subcommand("sweep", "Decision segments for many line queries");
  add_common(sweep, c);
  sweep->add_option("--lines", lines, "File with one 'start ; end' query per line")->required();

  auto* fgsm = app.add_subcommand("fgsm", "Density towards an FGSM step");
  add_common(fgsm, c);
  add_point(fgsm, point, "point", "Input x");
  fgsm->add_option("--epsilon", epsilon, "Step size")->required();
  fgsm->add_option("--label", label, "Output whose gradient is followed")->required();
  fgsm->add_option("--seed", seed, "Seed of the random direction");
  fgsm->add_flag("--compare-random", compare_random,
                 "Compare with a random sign direction of the same size");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      fail(ErrorCode::usage, e.what());
    }

    const ExportFormat format = resolve_format(c);
    const Network net = load_network(c.network, c.fold);

    if (exact->parsed()) {
      LineQuery q{resolve_point(from, "from", net), resolve_point(to, "to", net)};
      PartitionedLine line = exactline_network(net, q);
      if (canonical) line = canonicalize(line);
      emit(c, format_partitions(line, format), out);
    } else if (ig->parsed()) {
      const IgMethod m = parse_ig_method(method);
      const Tensor xb = resolve_point(baseline, "baseline", net);
      const Tensor xi = resolve_point(input, "input", net);
      AttributionReport report;
      if (m == IgMethod::exact) {
        if (samples) fail(ErrorCode::usage, "--samples applies only to Riemann methods");
        report = exact_ig(net, xb, xi, *output_index);
      } else {
        if (!samples) fail(ErrorCode::usage, "--samples is required for method " + method);
        report = riemann_ig(net, xb, xi, *output_index, *samples, m);
      }
      emit(c, format_attribution(report, format), out);
    } else if (igs->parsed()) {
      const IgMethod m = parse_ig_method(method);
      if (m == IgMethod::exact) fail(ErrorCode::usage, "ig-samples needs a Riemann method");
      const Tensor xb = resolve_point(baseline, "baseline", net);
      const Tensor xi = resolve_point(input, "input", net);
      SampleSearchResult result;
      if (criterion == "relative-error") {
        result = samples_to_tolerance(net, xb, xi, *output_index, m, tolerance, stability, cap);
      } else if (criterion == "completeness") {
        if (m != IgMethod::left)
          fail(ErrorCode::usage, "the completeness criterion uses left sums (--method left)");
        result = find_m_tilde(net, xb, xi, *output_index, tolerance, cap);
      } else {
        fail(ErrorCode::usage, "unknown criterion '" + criterion +
                                   "' (expected relative-error or completeness)");
      }
      emit(c, format_sample_search(result, method, format), out);
    } else if (dens->parsed()) {
      LineQuery q{resolve_point(from, "from", net), resolve_point(to, "to", net)};
      DensityReport report = partition_density(net, q);
      if (output_index) report.gradient_deviation = gradient_deviation(net, q, *output_index);
      emit(c, format_density(report, format), out);
    } else if (sweep->parsed()) {
      const unsigned threads = thread_count_from_env();
      const auto queries = read_lines_file(lines, net);
      emit(c, format_sweep(run_sweep(net, queries, threads), format), out);
    } else if (fgsm->parsed()) {
      const Tensor x = resolve_point(point, "point", net);
      if (compare_random) {
        if (!seed) fail(ErrorCode::usage, "--seed is required with --compare-random");
        emit(c, format_comparison(compare_directions(net, x, epsilon, *label, *seed), format),
             out);
      } else {
        const Tensor adv = fgsm_direction(net, x, epsilon, *label);
        emit(c, format_fgsm(adv, partition_density(net, {x, adv}), format), out);
      }
    }
    return kExitOk;
  } catch (const Error& e) {
    err << diagnostic(e.code(), e.what()) << '\n';
    return exit_code_for(e.code());
  } catch (const std::bad_alloc&) {
    err << "error[out-of-memory]: allocation failed\n";
    return kExitComputation;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << '\n';
    return kExitComputation;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace linrestrict::cli
