#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "disco/cost_model.hpp"
#include "disco/dense.hpp"
#include "disco/full_loss.hpp"
#include "disco/shard.hpp"
#include "disco/towers.hpp"
#include "report.hpp"

namespace disco::cli {

namespace {

constexpr std::size_t kVerifySeeds = 5;
constexpr double kFiniteDiffStep = 1e-6;

struct Tolerances {
  double gradient;
  double loss;
};

Tolerances verify_tolerances(Precision p) {
  return p == Precision::F64 ? Tolerances{1e-12, 1e-12} : Tolerances{1e-4, 1e-5};
}

const char* to_string(Precision p) { return p == Precision::F64 ? "f64" : "f32"; }

std::uint64_t bytes_of(Precision p) { return p == Precision::F64 ? 8 : 4; }

DenseMatrix random_unit_features(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  DenseMatrix raw(rows, cols);
  for (auto& v : raw.values()) v = dist(rng);
  return l2_normalize_rows(raw);
}

std::mt19937_64 instance_rng(std::initializer_list<std::uint64_t> key) {
  std::seed_seq seq(key.begin(), key.end());
  return std::mt19937_64(seq);
}

template <typename T>
struct DiscoRun {
  BasicMatrix<T> d_image;
  BasicMatrix<T> d_text;
  T loss = 0;
};

template <typename T>
DiscoRun<T> run_disco(const BasicMatrix<T>& image, const BasicMatrix<T>& text,
                      std::size_t world_size, T temperature, SchedulerMode scheduler,
                      FaultInjection faults) {
  const std::size_t local = image.rows() / world_size;
  RunOptions options;
  options.group.mode = scheduler;
  auto results = run_ranks(
      static_cast<int>(world_size),
      [&](RankEndpoint& endpoint) {
        const auto r = static_cast<std::size_t>(endpoint.rank());
        DiscoStepOptions step;
        step.faults = faults;
        return disco_step<T>(endpoint, slice_rows(image, r * local, local),
                             slice_rows(text, r * local, local), temperature, step);
      },
      options);
  std::vector<BasicMatrix<T>> images;
  std::vector<BasicMatrix<T>> texts;
  for (auto& r : results) {
    images.push_back(std::move(r.d_image_local));
    texts.push_back(std::move(r.d_text_local));
  }
  return {concat_rows<T>(images), concat_rows<T>(texts), results.front().global_loss};
}

std::string instance_name(std::size_t b, std::size_t d, std::size_t n, double t,
                          std::uint64_t seed) {
  std::ostringstream os;
  os << "B=" << b << " D=" << d << " N=" << n << " t=" << t << " seed=" << seed;
  return os.str();
}

template <typename T>
void check_equivalence(VerifyReport& report, const RunSpec& spec, Precision precision,
                       std::size_t b, std::size_t d, std::size_t n, double t, std::uint64_t seed) {
  auto rng = instance_rng({seed, b, d, static_cast<std::uint64_t>(t)});
  const auto image = convert<T>(random_unit_features(b, d, rng));
  const auto text = convert<T>(random_unit_features(b, d, rng));
  const auto tol = verify_tolerances(precision);

  const auto oracle = clip_grad_full(image, text, static_cast<T>(t));
  FaultInjection faults;
  faults.flip_inter_rank_sign = spec.inject_inter_rank_fault;
  const auto disco = run_disco(image, text, n, static_cast<T>(t), spec.scheduler, faults);

  const auto name = instance_name(b, d, n, t, seed);
  const double grad_err = std::max(relative_error(disco.d_image, oracle.d_image),
                                   relative_error(disco.d_text, oracle.d_text));
  report.checks.push_back({"gradient", name, grad_err, tol.gradient, grad_err <= tol.gradient});
  const double loss_err = relative_error(static_cast<double>(disco.loss),
                                         static_cast<double>(oracle.loss.total));
  report.checks.push_back({"loss", name, loss_err, tol.loss, loss_err <= tol.loss});
}

void check_finite_differences(VerifyReport& report, std::size_t b, std::size_t d, double t,
                              std::uint64_t seed) {
  auto rng = instance_rng({seed, b, d, static_cast<std::uint64_t>(t), 7});
  const auto image = random_unit_features(b, d, rng);
  const auto text = random_unit_features(b, d, rng);
  const auto analytic = clip_grad_full(image, text, t);
  const auto fd_image = finite_diff_grad(
      [&](const DenseMatrix& x) { return clip_loss_full(x, text, t).total; }, image,
      kFiniteDiffStep);
  const auto fd_text = finite_diff_grad(
      [&](const DenseMatrix& x) { return clip_loss_full(image, x, t).total; }, text,
      kFiniteDiffStep);
  const double err = std::max(relative_error(analytic.d_image, fd_image),
                              relative_error(analytic.d_text, fd_text));
  constexpr double kTol = 1e-6;
  report.checks.push_back(
      {"finite_difference", instance_name(b, d, 1, t, seed), err, kTol, err <= kTol});
}

template <typename T>
BasicMatrix<T> permute_rows(const BasicMatrix<T>& m, const std::vector<std::size_t>& perm) {
  BasicMatrix<T> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto src = m.row(perm[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

template <typename T>
void check_permutation(VerifyReport& report, const RunSpec& spec, Precision precision,
                       std::size_t b, std::size_t d, std::size_t n, double t,
                       std::uint64_t seed) {
  auto rng = instance_rng({seed, b, d, static_cast<std::uint64_t>(t), 11});
  const auto image = convert<T>(random_unit_features(b, d, rng));
  const auto text = convert<T>(random_unit_features(b, d, rng));
  std::vector<std::size_t> perm(b);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);

  // Relabelling the pairs must permute the gradients and leave the loss alone.
  const auto oracle = clip_grad_full(image, text, static_cast<T>(t));
  FaultInjection faults;
  faults.flip_inter_rank_sign = spec.inject_inter_rank_fault;
  const auto disco = run_disco(permute_rows(image, perm), permute_rows(text, perm), n,
                               static_cast<T>(t), spec.scheduler, faults);
  const auto tol = verify_tolerances(precision);
  const double err =
      std::max({relative_error(disco.d_image, permute_rows(oracle.d_image, perm)),
                relative_error(disco.d_text, permute_rows(oracle.d_text, perm)),
                relative_error(static_cast<double>(disco.loss),
                               static_cast<double>(oracle.loss.total))});
  report.checks.push_back(
      {"permutation", instance_name(b, d, n, t, seed), err, tol.gradient, err <= tol.gradient});
}

std::vector<std::size_t> pick(const std::optional<std::size_t>& chosen,
                              std::vector<std::size_t> grid) {
  if (chosen) return {*chosen};
  return grid;
}

void write_verify(std::ostream& out, const VerifyReport& report, Format format) {
  if (format == Format::Csv) {
    out << "check,instance,max_error,tolerance,status\n";
    for (const auto& c : report.checks) {
      out << c.name << ',' << c.instance << ',' << format_error(c.max_error) << ','
          << format_error(c.tolerance) << ',' << (c.passed ? "PASS" : "FAIL") << '\n';
    }
    return;
  }
  if (format == Format::Json) {
    nlohmann::ordered_json j;
    j["status"] = report.passed() ? "PASS" : "FAIL";
    j["checks"] = nlohmann::ordered_json::array();
    for (const auto& c : report.checks) {
      j["checks"].push_back({{"check", c.name},
                             {"instance", c.instance},
                             {"max_error", c.max_error},
                             {"tolerance", c.tolerance},
                             {"status", c.passed ? "PASS" : "FAIL"}});
    }
    out << j.dump(2) << '\n';
    return;
  }

  // Table: one row per check name, worst instance shown.
  std::vector<std::string> names;
  for (const auto& c : report.checks)
    if (std::find(names.begin(), names.end(), c.name) == names.end()) names.push_back(c.name);
  TextTable table({"check", "instances", "failed", "max_error", "tolerance", "status"});
  for (const auto& name : names) {
    std::size_t count = 0;
    std::size_t failed = 0;
    double worst = 0;
    double tol = 0;
    for (const auto& c : report.checks) {
      if (c.name != name) continue;
      ++count;
      failed += c.passed ? 0 : 1;
      worst = std::max(worst, c.max_error);
      tol = std::max(tol, c.tolerance);
    }
    table.add_row({name, std::to_string(count), std::to_string(failed), format_error(worst),
                   format_error(tol), failed == 0 ? "PASS" : "FAIL"});
  }
  table.print(out);
  for (const auto& c : report.checks) {
    if (!c.passed) {
      out << "FAIL " << c.name << ' ' << c.instance << " error=" << format_error(c.max_error)
          << " tolerance=" << format_error(c.tolerance) << '\n';
    }
  }
  const auto failed = std::count_if(report.checks.begin(), report.checks.end(),
                                    [](const CheckResult& c) { return !c.passed; });
  out << "verify: " << (failed == 0 ? "PASS" : "FAIL") << " (" << report.checks.size()
      << " checks, " << failed << " failed)\n";
}

template <typename T>
void verify_grid(VerifyReport& report, const RunSpec& spec, Precision precision) {
  const auto batches = pick(spec.batch_size, {8, 16, 32, 64});
  const auto dims = pick(spec.dim, {4, 8, 16});
  const auto worlds = pick(spec.world_size, {1, 2, 4, 8});
  const double temperatures[] = {1, 10, 100};

  for (auto b : batches) {
    for (auto n : worlds) {
      if (n == 0 || b % n != 0) {
        if (spec.batch_size && spec.world_size) (void)ShardLayout::make(b, n, 0);
        continue;
      }
      for (auto d : dims) {
        for (double t : temperatures) {
          for (std::uint64_t s = 0; s < kVerifySeeds; ++s)
            check_equivalence<T>(report, spec, precision, b, d, n, t, spec.seed + s);
        }
        check_permutation<T>(report, spec, precision, b, d, n, 10, spec.seed);
      }
    }
  }
}

std::vector<Precision> bench_precisions(const RunSpec& spec) {
  if (spec.precision) return {*spec.precision};
  return {Precision::F64, Precision::F32};
}

std::string ratio_string(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return "undefined";
  const auto g = std::gcd(num, den);
  const Fraction f{num / g, den / g};
  return f.numerator == 0 ? "0" : f.str();
}

std::ostream& open_output(const RunSpec& spec, std::ostream& fallback, std::ofstream& file) {
  if (spec.out.empty()) return fallback;
  file.open(spec.out, std::ios::binary | std::ios::trunc);
  if (!file) throw DomainError("cannot open output file '" + spec.out + "'");
  return file;
}

}  // namespace

bool VerifyReport::passed() const noexcept {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

VerifyReport run_verify(const RunSpec& spec) {
  const auto precision = spec.precision.value_or(Precision::F64);
  VerifyReport report;
  if (precision == Precision::F64) {
    verify_grid<double>(report, spec, precision);
  } else {
    verify_grid<float>(report, spec, precision);
  }
  // The reference itself is always checked in double precision.
  for (std::size_t b : {4, 8})
    for (std::size_t d : {4, 8})
      for (double t : {1.0, 10.0})
        for (std::uint64_t s = 0; s < kVerifySeeds; ++s)
          check_finite_differences(report, b, d, t, spec.seed + s);
  return report;
}

int cmd_verify(const RunSpec& spec, std::ostream& out, std::ostream& /*err*/) {
  const auto report = run_verify(spec);
  write_verify(out, report, spec.format);
  return report.passed() ? kSuccess : kCheckFailure;
}

int cmd_bench(const RunSpec& spec, std::ostream& out, std::ostream& err) {
  MeasureSizes sizes;
  sizes.global_batch = spec.batch_size.value_or(1024);
  sizes.world_size = spec.world_size.value_or(8);
  sizes.dim = spec.dim.value_or(16);
  sizes.seed = spec.seed;
  sizes.scheduler = spec.scheduler;
  if (sizes.global_batch > kMaxMeasuredBatch) {
    err << "error: bench refuses B=" << sizes.global_batch << " (limit " << kMaxMeasuredBatch
        << " at desk scale); use 'model' for analytic figures\n";
    return kInvalidArguments;
  }
  (void)ShardLayout::make(sizes.global_batch, sizes.world_size, 0);

  struct Row {
    Precision precision;
    MeasuredFootprint naive;
    MeasuredFootprint disco;
  };
  std::vector<Row> rows;
  std::vector<CostReport> reports;
  const bool run_naive = spec.mode != ModeSelect::Disco;
  const bool run_disco = spec.mode != ModeSelect::Naive;
  for (auto p : bench_precisions(spec)) {
    sizes.bytes_per_scalar = bytes_of(p);
    Row row{p, {}, {}};
    if (run_naive) {
      row.naive = measured_footprint(RunMode::Naive, sizes);
      reports.push_back(row.naive.report);
    }
    if (run_disco) {
      row.disco = measured_footprint(RunMode::Disco, sizes);
      reports.push_back(row.disco.report);
    }
    rows.push_back(std::move(row));
  }

  if (spec.format == Format::Csv) {
    write_csv(out, reports);
  } else if (spec.format == Format::Json) {
    write_json(out, reports);
  }

  CostInputs inputs{sizes.global_batch, sizes.world_size, 1, sizes.dim, 8};
  const auto analytic_clip = analytic_footprint(inputs, Method::Clip);
  const auto analytic_disco = analytic_footprint(inputs, Method::Disco);
  bool consistent = true;
  std::ostringstream summary;
  for (const auto& row : rows) {
    if (run_naive && row.naive.report.loss_elements != analytic_clip.loss_elements)
      consistent = false;
    if (run_disco && row.disco.report.loss_elements != analytic_disco.loss_elements)
      consistent = false;
    if (run_naive && run_disco) {
      summary << to_string(row.precision) << ": loss-scope peak naive/disco = "
              << ratio_string(row.naive.report.loss_elements, row.disco.report.loss_elements)
              << ", similarity FLOPs disco/naive = "
              << ratio_string(row.disco.report.loss_flops, row.naive.report.loss_flops)
              << " (N/2 = " << ratio_string(sizes.world_size, 2) << ")\n";
    }
  }
  const std::uint64_t b = sizes.global_batch / sizes.world_size;
  summary << "analytic loss elements: CLIP " << analytic_clip.loss_elements << ", DisCo "
          << analytic_disco.loss_elements << " -> measured "
          << (consistent ? "match" : "MISMATCH") << '\n';
  summary << "per-rank traffic (elements): all_gather of b x D = "
          << bytes_moved(CollectiveKind::AllGather, b * sizes.dim, sizes.world_size)
          << ", all_reduce of B x D = "
          << bytes_moved(CollectiveKind::AllReduce, sizes.global_batch * sizes.dim,
                         sizes.world_size)
          << '\n';

  if (spec.format == Format::Table) {
    TextTable table({"precision", "method", "B", "N", "D", "loss_peak_elements",
                     "similarity_flops", "loss_scope_flops", "exchange_elements", "bytes"});
    for (const auto& row : rows) {
      for (const auto* m : {&row.naive, &row.disco}) {
        if (m->ranks.empty()) continue;
        std::uint64_t scope_flops = 0;
        std::uint64_t exchange = 0;
        for (const auto& r : m->ranks) {
          scope_flops = std::max(scope_flops, r.loss_flops);
          exchange = std::max(exchange, r.exchange_elements);
        }
        const auto& rep = m->report;
        table.add_row({to_string(row.precision), to_string(rep.method),
                       std::to_string(rep.global_batch), std::to_string(rep.world_size),
                       std::to_string(rep.dim), group_thousands(rep.loss_elements),
                       group_thousands(rep.loss_flops), group_thousands(scope_flops),
                       group_thousands(exchange), group_thousands(rep.bytes)});
      }
    }
    table.print(out);
    out << summary.str();
  } else {
    err << summary.str();
  }
  return consistent ? kSuccess : kCheckFailure;
}

int cmd_train(const RunSpec& spec, std::ostream& out, std::ostream& err) {
  if (spec.precision == Precision::F32) {
    err << "error: the trainer runs in f64 only\n";
    return kInvalidArguments;
  }
  TrainConfig config;
  config.global_batch = spec.batch_size.value_or(16);
  config.world_size = spec.world_size.value_or(2);
  config.steps = spec.steps.value_or(50);
  config.learning_rate = spec.learning_rate;
  config.seed = spec.seed;
  config.scheduler = spec.scheduler;
  const std::size_t input_dim = spec.input_dim.value_or(8);
  const std::size_t dim = spec.dim.value_or(4);

  const auto dataset =
      generate_dataset(std::max(spec.dataset_size, config.global_batch), input_dim, input_dim,
                       0.1, spec.seed);
  const auto initial = init_params(input_dim, dim, spec.seed + 1, spec.temperature);

  std::optional<TrainResult> naive;
  std::optional<TrainResult> disco;
  if (spec.mode != ModeSelect::Disco) {
    config.mode = TrainMode::Naive;
    naive = train_run(config, dataset, initial);
  }
  if (spec.mode != ModeSelect::Naive) {
    config.mode = TrainMode::Disco;
    disco = train_run(config, dataset, initial);
  }

  std::vector<std::string> header{"step"};
  if (naive && disco) {
    header.insert(header.end(), {"loss_naive", "loss_disco", "abs_diff"});
  } else {
    header.emplace_back("loss");
  }
  std::vector<std::vector<std::string>> rows;
  double max_diff = 0;
  for (std::size_t s = 0; s < config.steps; ++s) {
    std::vector<std::string> row{std::to_string(s)};
    if (naive && disco) {
      const double a = naive->trajectory[s].loss;
      const double b = disco->trajectory[s].loss;
      max_diff = std::max(max_diff, std::abs(a - b));
      row.insert(row.end(), {format_double(a), format_double(b), format_double(std::abs(a - b))});
    } else {
      row.push_back(format_double((naive ? naive : disco)->trajectory[s].loss));
    }
    rows.push_back(std::move(row));
  }

  if (spec.format == Format::Csv) {
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
      out << '\n';
    }
  } else if (spec.format == Format::Json) {
    auto array = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < config.steps; ++s) {
      nlohmann::ordered_json j;
      j["step"] = s;
      if (naive && disco) {
        j["loss_naive"] = naive->trajectory[s].loss;
        j["loss_disco"] = disco->trajectory[s].loss;
        j["abs_diff"] = std::abs(naive->trajectory[s].loss - disco->trajectory[s].loss);
      } else {
        j["loss"] = (naive ? naive : disco)->trajectory[s].loss;
      }
      array.push_back(std::move(j));
    }
    out << array.dump(2) << '\n';
  } else {
    TextTable table(header);
    for (auto& row : rows) table.add_row(std::move(row));
    table.print(out);
  }

  if (!(naive && disco)) {
    std::ostream& where = spec.format == Format::Table ? out : err;
    where << "train: " << to_string(naive ? TrainMode::Naive : TrainMode::Disco) << ", "
          << config.steps << " steps\n";
    return kSuccess;
  }
  const double param_diff =
      std::max(relative_error(disco->final_params.w_image, naive->final_params.w_image),
               relative_error(disco->final_params.w_text, naive->final_params.w_text));
  constexpr double kLossTol = 1e-10;
  constexpr double kParamTol = 1e-9;
  const bool ok = max_diff <= kLossTol && param_diff <= kParamTol;
  std::ostream& where = spec.format == Format::Table ? out : err;
  where << "train: max |loss_naive - loss_disco| = " << format_error(max_diff) << " over "
        << config.steps << " steps (tolerance " << format_error(kLossTol)
        << "), final parameter rel. diff = " << format_error(param_diff) << " (tolerance "
        << format_error(kParamTol) << "): " << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? kSuccess : kCheckFailure;
}

int cmd_model(const RunSpec& spec, std::ostream& out, std::ostream& /*err*/) {
  CostInputs inputs;
  inputs.global_batch = spec.batch_size.value_or(32768);
  inputs.world_size = spec.world_size.value_or(128);
  inputs.layers = spec.layers.value_or(12);
  inputs.dim = spec.dim.value_or(1024);
  inputs.bytes_per_scalar = bytes_of(spec.precision.value_or(Precision::F32));

  std::vector<CostReport> reports;
  for (auto m : kAllMethods) reports.push_back(analytic_footprint(inputs, m));
  const auto savings = savings_fraction(inputs.world_size);

  if (spec.format == Format::Csv) {
    write_csv(out, reports);
    return kSuccess;
  }
  if (spec.format == Format::Json) {
    write_json(out, reports);
    return kSuccess;
  }
  out << "B=" << inputs.global_batch << " N=" << inputs.world_size << " L=" << inputs.layers
      << " D=" << inputs.dim << " bytes/scalar=" << inputs.bytes_per_scalar << '\n';
  TextTable table({"method", "backbone_elements", "loss_elements", "total_elements",
                   "loss_flops", "bytes", "size"});
  for (const auto& r : reports) {
    table.add_row({to_string(r.method), group_thousands(r.backbone_elements),
                   group_thousands(r.loss_elements), group_thousands(r.total_elements),
                   group_thousands(r.loss_flops), group_thousands(r.bytes),
                   human_bytes(r.bytes)});
  }
  table.print(out);
  for (const auto& r : reports) {
    const auto loss_bytes = r.loss_elements * inputs.bytes_per_scalar;
    out << to_string(r.method) << " loss bytes: " << group_thousands(loss_bytes) << " ("
        << human_bytes(loss_bytes) << ")\n";
  }
  out << "loss memory saved by sharding at N=" << inputs.world_size << ": " << savings.str()
      << '\n';
  return kSuccess;
}

int run_command(const RunSpec& spec, std::ostream& out, std::ostream& err) {
  try {
    std::ofstream file;
    std::ostream& sink = open_output(spec, out, file);
    switch (spec.subcommand) {
      case Subcommand::Verify: return cmd_verify(spec, sink, err);
      case Subcommand::Bench: return cmd_bench(spec, sink, err);
      case Subcommand::Train: return cmd_train(spec, sink, err);
      case Subcommand::Model: return cmd_model(spec, sink, err);
    }
    return kInvalidArguments;
  } catch (const TrainingDivergenceError& e) {
    err << "error: training diverged at step " << e.step() << ": " << e.what() << '\n';
    return kCheckFailure;
  } catch (const LayoutError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidArguments;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidArguments;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidArguments;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kCheckFailure;
  }
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sharded contrastive loss: verification, benchmarks, toy training, cost model"};
  app.require_subcommand(1);

  RunSpec spec;
  std::size_t batch_size = 0;
  std::size_t world_size = 0;
  std::size_t dim = 0;
  std::size_t input_dim = 0;
  std::size_t layers = 0;
  std::size_t steps = 0;
  Precision precision = Precision::F64;

  const std::map<std::string, Precision> precisions{{"f32", Precision::F32},
                                                    {"f64", Precision::F64}};
  const std::map<std::string, ModeSelect> modes{
      {"naive", ModeSelect::Naive}, {"disco", ModeSelect::Disco}, {"both", ModeSelect::Both}};
  const std::map<std::string, Format> formats{
      {"table", Format::Table}, {"csv", Format::Csv}, {"json", Format::Json}};

  struct Sub {
    CLI::App* app;
    Subcommand which;
  };
  std::vector<Sub> subs{
      {app.add_subcommand("verify", "Check the sharded gradients against the reference"),
       Subcommand::Verify},
      {app.add_subcommand("bench", "Measure loss-scope memory and FLOP counters"),
       Subcommand::Bench},
      {app.add_subcommand("train", "Train the toy towers and compare trajectories"),
       Subcommand::Train},
      {app.add_subcommand("model", "Print the analytic memory model"), Subcommand::Model},
  };
  for (auto& sub : subs) {
    auto* s = sub.app;
    s->add_option("--batch-size,-B", batch_size, "Global batch B");
    s->add_option("--world-size,-N", world_size, "Number of simulated ranks N");
    s->add_option("--dim,-D", dim, "Feature dimension D");
    s->add_option("--input-dim", input_dim, "Tower input dimension (train)");
    s->add_option("--layers,-L", layers, "Backbone layer count (model)");
    s->add_option("--steps", steps, "Training steps (train)");
    s->add_option("--seed", spec.seed, "Random seed");
    s->add_option("--precision", precision, "f32 or f64")
        ->transform(CLI::CheckedTransformer(precisions, CLI::ignore_case));
    s->add_option("--mode", spec.mode, "naive, disco or both")
        ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
    s->add_option("--format", spec.format, "table, csv or json")
        ->transform(CLI::CheckedTransformer(formats, CLI::ignore_case));
    s->add_option("--out,-o", spec.out, "Write the report to this file");
    if (sub.which == Subcommand::Train) {
      s->add_option("--learning-rate", spec.learning_rate, "Gradient-descent step size");
      s->add_option("--dataset-size", spec.dataset_size, "Synthetic dataset size M");
      s->add_option("--temperature", spec.temperature, "Fixed logit scale t");
    }
    if (sub.which == Subcommand::Verify) {
      s->add_flag("--inject-fault-flip-inter-rank", spec.inject_inter_rank_fault)->group("");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kInvalidArguments;
  }

  CLI::App* chosen = nullptr;
  for (auto& sub : subs) {
    if (sub.app->parsed()) {
      chosen = sub.app;
      spec.subcommand = sub.which;
    }
  }
  auto given = [&](const char* name) { return chosen->count(name) > 0; };
  if (given("--batch-size")) spec.batch_size = batch_size;
  if (given("--world-size")) spec.world_size = world_size;
  if (given("--dim")) spec.dim = dim;
  if (given("--input-dim")) spec.input_dim = input_dim;
  if (given("--layers")) spec.layers = layers;
  if (given("--steps")) spec.steps = steps;
  if (given("--precision")) spec.precision = precision;

  try {
    spec.scheduler = scheduler_from_env();
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidArguments;
  }
  return run_command(spec, out, err);
}

}  // namespace disco::cli
