#pragma once

// Command-line front end. run() never exits the process, so the test suite
// can drive it in-process.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "enec/analysis.hpp"
#include "enec/error.hpp"
#include "enec/fpsplit.hpp"
#include "enec/ingest.hpp"
#include "enec/stream.hpp"
#include "enec/tuner.hpp"

namespace enec::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitData = 4;

inline constexpr const char* kTuneCsvHeader = "tensor_name,dtype,b,n,m,L,B_exp,predicted_CR";
inline constexpr const char* kBenchCsvHeader =
    "model_name,dtype,compression_ratio_CR,compress_throughput_GBps,decompress_throughput_GBps";

struct InputOptions {
  std::string path;
  std::string dtype;
  bool safetensors = false;
};

inline bool is_safetensors(const InputOptions& in) {
  return in.safetensors || std::filesystem::path(in.path).extension() == ".safetensors";
}

inline ingest::LoadedFile load_input(const InputOptions& in) {
  if (is_safetensors(in)) return ingest::load_safetensors(in.path);
  if (in.dtype.empty()) throw UsageError("--dtype is required for raw input '" + in.path + "'");
  return ingest::load_raw(in.path, format_from_name(in.dtype));
}

inline std::string display_name(const ingest::TensorSource& t) {
  return t.name.empty() ? "<raw>" : t.name;
}

inline std::optional<tuner::TunedParams> parse_params(const std::string& text) {
  if (text.empty()) return std::nullopt;
  std::vector<std::uint32_t> fields;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      fields.push_back(static_cast<std::uint32_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--params expects b,n,m,L; got '" + text + "'");
    }
  }
  if (fields.size() != 4) throw UsageError("--params expects b,n,m,L; got '" + text + "'");
  return tuner::TunedParams{fields[0], fields[1], fields[2], fields[3]};
}

inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline void print_skipped(const ingest::LoadedFile& file, std::ostream& err) {
  for (const auto& s : file.skipped) {
    err << "skipped tensor '" << s.name << "' (dtype " << s.dtype << ")\n";
  }
}

// ---------------------------------------------------------------------------

inline void cmd_analyze(const InputOptions& in, std::ostream& out, std::ostream& err) {
  const auto file = load_input(in);
  print_skipped(file, err);
  for (const auto& t : file.tensors) {
    out << "tensor " << display_name(t) << " (" << t.format.name << ", "
        << t.length / t.format.bytes() << " elements)\n";
    if (t.length == 0) {
      out << "  empty\n";
      continue;
    }
    const auto hist =
        analysis::build_histogram(extract_exponents(file.data(t), t.format), t.format.exponent_bits);
    out << "  exponent range l=" << hist.low << " h=" << hist.high << "\n";
    out << "  entropy " << fixed(analysis::entropy(hist), 4) << " bits\n";
    try {
      const auto fit = analysis::rank_fit(hist);
      out << "  rank fit rank = " << fixed(fit.slope, 4) << " * x + " << fixed(fit.intercept, 4)
          << " (r^2 " << fixed(fit.r_squared, 4) << ")\n";
    } catch (const DegenerateInput&) {
      out << "  rank fit undefined (single exponent value)\n";
    }
    out << "  exponent,count,probability\n";
    for (std::uint32_t x = hist.low; x <= hist.high; ++x) {
      if (hist.counts[x] == 0) continue;
      out << "  " << x << "," << hist.counts[x] << "," << fixed(hist.probability(x), 8) << "\n";
    }
  }
}

inline void cmd_tune(const InputOptions& in, const std::string& csv_path, std::ostream& out,
                     std::ostream& err) {
  const auto file = load_input(in);
  print_skipped(file, err);
  std::ostringstream csv;
  csv << kTuneCsvHeader << "\n";
  for (const auto& t : file.tensors) {
    if (t.length == 0) continue;
    const auto hist =
        analysis::build_histogram(extract_exponents(file.data(t), t.format), t.format.exponent_bits);
    const auto result = tuner::tune_with_cost(hist);
    const auto& p = result.params;
    const double cr = tuner::predicted_ratio(hist, p, t.format.total_bits, t.format.residue_bits());
    csv << display_name(t) << "," << t.format.name << "," << p.b << "," << p.n << "," << p.m
        << "," << p.group_length << "," << fixed(result.expected_bits, 6) << "," << fixed(cr, 6)
        << "\n";
  }
  out << csv.str();
  if (!csv_path.empty()) {
    const auto text = csv.str();
    ingest::write_file(csv_path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  }
}

inline std::vector<std::uint8_t> compress_loaded(const ingest::LoadedFile& file,
                                                 const std::optional<tuner::TunedParams>& params,
                                                 const stream::CodecOptions& options) {
  std::vector<stream::TensorInput> inputs;
  for (const auto& t : file.tensors) inputs.push_back({t.name, t.format, file.data(t), params});
  return stream::compress(inputs, options);
}

/// Concatenated tensor bytes in archive order; what decompress reproduces.
inline std::vector<std::uint8_t> tensor_bytes(const ingest::LoadedFile& file) {
  std::vector<std::uint8_t> out;
  for (const auto& t : file.tensors) {
    const auto d = file.data(t);
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

inline void cmd_compress(const InputOptions& in, const std::string& output,
                         const std::string& params_text, const stream::CodecOptions& options,
                         std::ostream& out, std::ostream& err) {
  const auto file = load_input(in);
  print_skipped(file, err);
  const auto params = parse_params(params_text);
  const auto packed = compress_loaded(file, params, options);
  ingest::write_file(output, packed);

  std::uint64_t original = 0;
  for (const auto& t : file.tensors) original += t.length;
  out << "compressed " << file.tensors.size() << " tensor(s), " << original << " -> "
      << packed.size() << " bytes, CR "
      << fixed(packed.empty() ? 0.0 : static_cast<double>(original) / packed.size(), 4) << "\n";
}

inline void cmd_decompress(const std::string& input, const std::string& output, unsigned workers,
                           std::ostream& out) {
  const auto packed = ingest::read_file(input);
  const auto data = stream::decompress(packed, workers);
  ingest::write_file(output, data);
  out << "decompressed " << packed.size() << " -> " << data.size() << " bytes\n";
}

inline void cmd_verify(const InputOptions& original, const std::string& enec_path,
                       unsigned workers, std::ostream& out) {
  const auto packed = ingest::read_file(enec_path);
  // Raw originals are compared whole, so no dtype is needed.
  const auto reference = is_safetensors(original) ? tensor_bytes(ingest::load_safetensors(original.path))
                                                  : ingest::read_file(original.path);
  const auto report = stream::verify(reference, packed, workers);
  out << "OK bit-identical\n";
  out << "original_bytes " << report.original_bytes << "\n";
  out << "compressed_bytes " << report.compressed_bytes << "\n";
  out << "compression_ratio " << fixed(report.compression_ratio, 4) << "\n";
  out << "exponent_bits_per_element " << fixed(report.exponent_bits_per_element, 4) << "\n";
  out << "formula_ratio "
      << (report.formula_ratio ? fixed(*report.formula_ratio, 4) : std::string("n/a")) << "\n";
  out << "raw_blocks " << report.raw_blocks << "/" << report.total_blocks << "\n";
}

struct BenchRow {
  std::string name;
  std::string dtype;
  double ratio = 0.0;
  double compress_gbps = 0.0;
  double decompress_gbps = 0.0;
  double wall_seconds = 0.0;
};

/// Best-of-`repeat` round-trip timing. Throws MismatchError if the round trip is not exact.
inline BenchRow bench_loaded(const ingest::LoadedFile& file, const std::string& name,
                             const stream::CodecOptions& options, unsigned repeat) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const auto original = tensor_bytes(file);
  double best_c = 0, best_d = 0;
  std::vector<std::uint8_t> packed;
  for (unsigned r = 0; r < std::max(1u, repeat); ++r) {
    auto t0 = clock::now();
    packed = compress_loaded(file, std::nullopt, options);
    auto t1 = clock::now();
    const auto restored = stream::decompress(packed, options.workers);
    auto t2 = clock::now();
    if (restored != original) {
      const auto diff = std::mismatch(restored.begin(), restored.end(), original.begin(), original.end());
      throw MismatchError(static_cast<std::uint64_t>(diff.first - restored.begin()));
    }
    const double c = std::chrono::duration<double>(t1 - t0).count();
    const double d = std::chrono::duration<double>(t2 - t1).count();
    if (r == 0 || c < best_c) best_c = c;
    if (r == 0 || d < best_d) best_d = d;
  }

  BenchRow row;
  row.name = name;
  std::vector<std::string> dtypes;
  for (const auto& t : file.tensors) {
    const std::string d(t.format.name);
    if (std::find(dtypes.begin(), dtypes.end(), d) == dtypes.end()) dtypes.push_back(d);
  }
  for (std::size_t i = 0; i < dtypes.size(); ++i) row.dtype += (i ? "+" : "") + dtypes[i];
  const double bytes = static_cast<double>(original.size());
  row.ratio = packed.empty() ? 0.0 : bytes / static_cast<double>(packed.size());
  row.compress_gbps = best_c > 0 ? bytes / best_c / 1e9 : 0.0;
  row.decompress_gbps = best_d > 0 ? bytes / best_d / 1e9 : 0.0;
  row.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
  return row;
}

inline void cmd_bench(const InputOptions& in, const std::string& csv_path,
                      const stream::CodecOptions& options, unsigned repeat, std::ostream& out,
                      std::ostream& err) {
  const auto file = load_input(in);
  print_skipped(file, err);
  const auto row = bench_loaded(file, std::filesystem::path(in.path).stem().string(), options, repeat);
  std::ostringstream csv;
  csv << kBenchCsvHeader << "\n"
      << row.name << "," << row.dtype << "," << fixed(row.ratio, 4) << ","
      << fixed(row.compress_gbps, 4) << "," << fixed(row.decompress_gbps, 4) << "\n";
  out << csv.str();
  out << "wall_time_s " << fixed(row.wall_seconds, 3) << " (threads " << options.workers
      << ", repeat " << repeat << ")\n";
  if (!csv_path.empty()) {
    const auto text = csv.str();
    ingest::write_file(csv_path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  }
}

// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lossless exponent compression for model weights", "enec"};
  app.require_subcommand(1);

  InputOptions in;
  std::string output, csv_path, params_text, enec_path;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::uint32_t block_size = stream::kDefaultBlockSize;
  unsigned repeat = 3;

  const auto add_input = [&](CLI::App* sub) {
    sub->add_option("input", in.path, "Input file")->required();
    sub->add_option("--dtype", in.dtype, "Element format of raw input: BF16, FP16 or FP32");
    sub->add_flag("--safetensors", in.safetensors, "Treat input as a safetensors archive");
  };
  const auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", workers, "Worker threads")->check(CLI::PositiveNumber);
  };

  auto* analyze = app.add_subcommand("analyze", "Exponent histogram, entropy and rank fit");
  add_input(analyze);

  auto* tune = app.add_subcommand("tune", "Per-tensor parameter search");
  add_input(tune);
  tune->add_option("--csv", csv_path, "Also write the CSV to this file");

  auto* compress = app.add_subcommand("compress", "Write a .enec container");
  add_input(compress);
  compress->add_option("-o,--output", output, "Output .enec file")->required();
  compress->add_option("--params", params_text, "Fixed parameters b,n,m,L for every tensor");
  compress->add_option("--block-size", block_size, "Elements per block (power of two)");
  add_threads(compress);

  auto* decompress = app.add_subcommand("decompress", "Restore tensor bytes from a .enec file");
  decompress->add_option("input", enec_path, "Input .enec file")->required();
  decompress->add_option("-o,--output", output, "Output file")->required();
  add_threads(decompress);

  auto* verify = app.add_subcommand("verify", "Check a .enec file against the original");
  verify->add_option("original", in.path, "Original file")->required();
  verify->add_option("container", enec_path, "Compressed .enec file")->required();
  verify->add_flag("--safetensors", in.safetensors, "Original is a safetensors archive");
  add_threads(verify);

  auto* bench = app.add_subcommand("bench", "Round-trip timing");
  add_input(bench);
  bench->add_option("--csv", csv_path, "Also write the CSV to this file");
  bench->add_option("--repeat", repeat, "Timed repetitions (best is reported)")
      ->check(CLI::PositiveNumber);
  bench->add_option("--block-size", block_size, "Elements per block (power of two)");
  add_threads(bench);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "enec: " << e.what() << "\n";
    return kExitUsage;
  }

  stream::CodecOptions options;
  options.workers = workers;
  options.block_size = block_size;

  try {
    if (analyze->parsed()) cmd_analyze(in, out, err);
    else if (tune->parsed()) cmd_tune(in, csv_path, out, err);
    else if (compress->parsed()) cmd_compress(in, output, params_text, options, out, err);
    else if (decompress->parsed()) cmd_decompress(enec_path, output, workers, out);
    else if (verify->parsed()) cmd_verify(in, enec_path, workers, out);
    else if (bench->parsed()) cmd_bench(in, csv_path, options, repeat, out, err);
  } catch (const UsageError& e) {
    err << "enec: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "enec: " << e.what() << "\n";
    return kExitIo;
  } catch (const MismatchError& e) {
    err << "enec: verification failed: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    err << "enec: " << e.what() << "\n";
    return kExitData;
  } catch (const std::bad_alloc&) {
    err << "enec: out of memory\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace enec::cli
