#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "disco/collective.hpp"

namespace disco::cli {

enum ExitCode : int { kSuccess = 0, kCheckFailure = 1, kInvalidArguments = 2 };

enum class Subcommand { Verify, Bench, Train, Model };
enum class Precision { F32, F64 };
enum class ModeSelect { Naive, Disco, Both };
enum class Format { Table, Csv, Json };

struct RunSpec {
  Subcommand subcommand = Subcommand::Verify;
  // Unset sizes fall back to per-subcommand defaults (the full grid for verify).
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> world_size;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> input_dim;
  std::optional<std::size_t> layers;
  std::optional<std::size_t> steps;
  std::optional<Precision> precision;
  std::uint64_t seed = 0;
  ModeSelect mode = ModeSelect::Both;
  Format format = Format::Table;
  std::string out;  // empty: stdout

  double learning_rate = 0.5;
  std::size_t dataset_size = 256;
  double temperature = 20.0;
  SchedulerMode scheduler = SchedulerMode::Lockstep;
  bool inject_inter_rank_fault = false;  // test hook
};

struct CheckResult {
  std::string name;
  std::string instance;
  double max_error = 0;
  double tolerance = 0;
  bool passed = false;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool passed() const noexcept;
};

VerifyReport run_verify(const RunSpec& spec);

/// Each command writes its report to `out` and diagnostics to `err`, and
/// returns a process exit code. Library errors propagate to run_command.
int cmd_verify(const RunSpec& spec, std::ostream& out, std::ostream& err);
int cmd_bench(const RunSpec& spec, std::ostream& out, std::ostream& err);
int cmd_train(const RunSpec& spec, std::ostream& out, std::ostream& err);
int cmd_model(const RunSpec& spec, std::ostream& out, std::ostream& err);

/// Dispatches on spec.subcommand, opens spec.out if set, and maps layout,
/// shape and domain errors to kInvalidArguments and divergence to
/// kCheckFailure.
int run_command(const RunSpec& spec, std::ostream& out, std::ostream& err);

/// Parses argv into a RunSpec and runs it. Reads DISCO_SCHEDULER.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace disco::cli
