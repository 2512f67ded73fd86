#pragma once

// In-process rank group with all_gather, all_reduce and barrier.
//
// Rank programs are coroutines (`Task<R>(RankEndpoint&)`); every collective is
// `co_await`ed. The same program runs under two schedulers:
//
//   * Lockstep: one thread resumes ranks one at a time, choosing among the
//     runnable ranks with a pick policy (round-robin by default). Used for
//     deterministic and exhaustive-interleaving tests.
//   * Concurrent: one thread per rank; a collective blocks until the group
//     completes it or the timeout expires.
//
// Reductions always accumulate contributions in ascending rank order, once,
// on behalf of the whole group, so results are bitwise identical on every
// rank and under either scheduler.

#include <chrono>
#include <coroutine>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <condition_variable>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <type_traits>
#include <variant>
#include <vector>

#include "disco/errors.hpp"
#include "disco/matrix.hpp"
#include "disco/task.hpp"

namespace disco {

enum class SchedulerMode { Lockstep, Concurrent };
enum class ReduceOp { Sum, Avg };
enum class CollectiveKind { AllGather, AllReduce, Barrier };

const char* to_string(SchedulerMode mode) noexcept;
const char* to_string(CollectiveKind kind) noexcept;

/// Reads DISCO_SCHEDULER ({lockstep, concurrent}); lockstep when unset.
SchedulerMode scheduler_from_env();

struct GroupOptions {
  SchedulerMode mode = SchedulerMode::Lockstep;
  std::chrono::milliseconds timeout{30'000};
};

struct TraceEvent {
  enum class Type { Arrive, Complete, Return, Finish };
  Type type;
  int rank;
  std::uint64_t seq;
  CollectiveKind kind;
};

/// Per-endpoint traffic, in elements. all_gather receives N blocks; all_reduce
/// is modeled as receiving N buffers (same cost as a gather of equal size).
struct CollectiveStats {
  std::uint64_t gathers = 0;
  std::uint64_t reduces = 0;
  std::uint64_t barriers = 0;
  std::uint64_t elements_received = 0;
};

class RankGroup;

namespace detail {

using Payload = std::variant<std::monostate, BasicMatrix<float>, BasicMatrix<double>>;

struct Arrival {
  CollectiveKind kind;
  ReduceOp op;
  Payload payload;
};

template <typename R>
struct ScalarOf {
  using type = R;
};
template <typename T>
struct ScalarOf<BasicMatrix<T>> {
  using type = T;
};

template <typename T>
BasicMatrix<T> take_matrix(Payload&& p) {
  return std::get<BasicMatrix<T>>(std::move(p));
}

}  // namespace detail

class RankEndpoint;

/// Awaitable returned by every collective. Arrival is registered when the
/// co_await begins; the result (or the group's error) is delivered on resume.
template <typename R>
class CollectiveAwaiter {
 public:
  CollectiveAwaiter(RankEndpoint& endpoint, detail::Arrival arrival)
      : endpoint_(&endpoint), kind_(arrival.kind), arrival_(std::move(arrival)) {}

  bool await_ready();
  void await_suspend(std::coroutine_handle<> h);
  R await_resume();

 private:
  RankEndpoint* endpoint_;
  CollectiveKind kind_;
  detail::Arrival arrival_;
  std::uint64_t seq_ = 0;
};

/// One rank's handle on the group. Move-only: owned by exactly one worker.
class RankEndpoint {
 public:
  RankEndpoint(RankEndpoint&&) noexcept = default;
  RankEndpoint& operator=(RankEndpoint&&) noexcept = default;
  RankEndpoint(const RankEndpoint&) = delete;
  RankEndpoint& operator=(const RankEndpoint&) = delete;

  int rank() const noexcept { return rank_; }
  int world_size() const noexcept;
  const CollectiveStats& stats() const noexcept { return stats_; }

  /// Rank-order row concatenation of every rank's `local` (all b×D alike).
  template <typename T>
  CollectiveAwaiter<BasicMatrix<T>> all_gather(const BasicMatrix<T>& local) {
    return {*this, {CollectiveKind::AllGather, ReduceOp::Sum, detail::Payload(local)}};
  }

  /// Elementwise SUM, or SUM followed by one division by N for AVG.
  template <typename T>
  CollectiveAwaiter<BasicMatrix<T>> all_reduce(const BasicMatrix<T>& buffer, ReduceOp op) {
    return {*this, {CollectiveKind::AllReduce, op, detail::Payload(buffer)}};
  }

  template <typename T>
    requires std::is_floating_point_v<T>
  CollectiveAwaiter<T> all_reduce_scalar(T value, ReduceOp op) {
    BasicMatrix<T> one(1, 1);
    one(0, 0) = value;
    return {*this, {CollectiveKind::AllReduce, op, detail::Payload(std::move(one))}};
  }

  CollectiveAwaiter<void> barrier() {
    return {*this, {CollectiveKind::Barrier, ReduceOp::Sum, detail::Payload()}};
  }

 private:
  friend class RankGroup;
  template <typename R>
  friend class CollectiveAwaiter;

  RankEndpoint(std::shared_ptr<RankGroup> group, int rank) : group_(std::move(group)), rank_(rank) {}

  std::shared_ptr<RankGroup> group_;
  int rank_ = 0;
  CollectiveStats stats_;
};

/// Shared state of N ranks: per-sequence-number mailboxes holding each
/// rank's contribution until the collective completes.
class RankGroup : public std::enable_shared_from_this<RankGroup> {
 public:
  static std::shared_ptr<RankGroup> create(int world_size, GroupOptions options = {});

  int world_size() const noexcept { return world_size_; }
  const GroupOptions& options() const noexcept { return options_; }

  /// Hands out rank `rank`'s endpoint; each rank may be claimed once.
  RankEndpoint endpoint(int rank);

  /// Poisons the group: every rank waiting now or later gets CollectiveAbortedError.
  void abort(int rank, const std::string& reason);
  bool aborted() const;

  std::vector<TraceEvent> trace() const;
  void record_finish(int rank);

  // Used by the lockstep driver.
  bool resumable(int rank) const;
  std::coroutine_handle<> take_parked(int rank);
  std::string describe_blocked(int rank) const;

  // Used by CollectiveAwaiter.
  std::uint64_t arrive(int rank, detail::Arrival arrival);
  void wait(int rank, std::uint64_t seq);
  void park(int rank, std::uint64_t seq, std::coroutine_handle<> h);
  detail::Payload collect(int rank, std::uint64_t seq);

 private:
  struct Slot {
    std::vector<std::optional<detail::Arrival>> arrivals;
    int arrived = 0;
    int collected = 0;
    bool complete = false;
    std::shared_ptr<const detail::Payload> result;
    std::string error;
  };

  struct Parked {
    std::coroutine_handle<> handle;
    std::uint64_t seq = 0;
    bool active = false;
  };

  RankGroup(int world_size, GroupOptions options);
  void complete_locked(std::uint64_t seq, Slot& slot, int completing_rank);
  std::vector<int> missing_locked(const Slot& slot) const;

  const int world_size_;
  const GroupOptions options_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::uint64_t, Slot> slots_;
  std::vector<bool> claimed_;
  std::vector<std::uint64_t> next_seq_;
  std::vector<Parked> parked_;
  std::vector<TraceEvent> trace_;
  bool aborted_ = false;
  std::string abort_reason_;
};

template <typename R>
bool CollectiveAwaiter<R>::await_ready() {
  auto& group = *endpoint_->group_;
  seq_ = group.arrive(endpoint_->rank_, std::move(arrival_));
  if (group.options().mode == SchedulerMode::Lockstep) return false;
  group.wait(endpoint_->rank_, seq_);
  return true;
}

template <typename R>
void CollectiveAwaiter<R>::await_suspend(std::coroutine_handle<> h) {
  endpoint_->group_->park(endpoint_->rank_, seq_, h);
}

template <typename R>
R CollectiveAwaiter<R>::await_resume() {
  auto payload = endpoint_->group_->collect(endpoint_->rank_, seq_);
  auto& stats = endpoint_->stats_;
  const auto n = static_cast<std::uint64_t>(endpoint_->world_size());
  if constexpr (std::is_void_v<R>) {
    ++stats.barriers;
  } else {
    using Scalar = typename detail::ScalarOf<R>::type;
    auto out = detail::take_matrix<Scalar>(std::move(payload));
    if (kind_ == CollectiveKind::AllGather) {
      ++stats.gathers;
      stats.elements_received += out.size();
    } else {
      ++stats.reduces;
      stats.elements_received += n * out.size();
    }
    if constexpr (std::is_floating_point_v<R>) {
      return out(0, 0);
    } else {
      return out;
    }
  }
}

// ---------------------------------------------------------------------------
// Running rank programs.

/// Chooses which runnable rank the lockstep scheduler resumes next. Receives
/// the runnable ranks in ascending order; returns an index into that list.
using PickPolicy = std::function<std::size_t(std::span<const int> runnable)>;

/// Round-robin over ranks, starting after the last rank resumed.
PickPolicy round_robin_policy();

struct RunOptions {
  GroupOptions group;
  PickPolicy pick;  // lockstep only; round-robin when empty
  std::shared_ptr<RankGroup>* group_out = nullptr;  // receives the group (for traces)
};

namespace detail {

struct RankDriverHooks {
  std::vector<std::coroutine_handle<>> tops;
  std::function<bool(int)> finished;
  std::function<std::string(int)> failure;  // empty when the rank succeeded
};

void drive_lockstep(RankGroup& group, const RankDriverHooks& hooks, PickPolicy pick);
void drive_concurrent(RankGroup& group, const RankDriverHooks& hooks);
[[noreturn]] void rethrow_root_cause(const std::vector<std::exception_ptr>& errors);

std::string describe_exception(const std::exception_ptr& e);

}  // namespace detail

/// Runs `program(endpoint)` on each of `world_size` ranks and returns the
/// per-rank results in rank order. If any rank fails, the group is aborted and
/// the first non-abort error is rethrown.
template <typename Program>
auto run_ranks(int world_size, Program program, RunOptions options = {}) {
  using TaskType = std::invoke_result_t<Program&, RankEndpoint&>;
  using Result = decltype(std::declval<TaskType&>().result());

  auto group = RankGroup::create(world_size, options.group);
  if (options.group_out != nullptr) *options.group_out = group;

  std::vector<RankEndpoint> endpoints;
  endpoints.reserve(static_cast<std::size_t>(world_size));
  for (int r = 0; r < world_size; ++r) endpoints.push_back(group->endpoint(r));

  std::vector<TaskType> tasks;
  tasks.reserve(endpoints.size());
  for (auto& ep : endpoints) tasks.push_back(program(ep));

  detail::RankDriverHooks hooks;
  for (auto& t : tasks) hooks.tops.push_back(t.handle());
  hooks.finished = [&](int r) { return tasks[static_cast<std::size_t>(r)].done(); };
  hooks.failure = [&](int r) -> std::string {
    auto& t = tasks[static_cast<std::size_t>(r)];
    return t.failed() ? detail::describe_exception(t.error()) : std::string();
  };

  if (options.group.mode == SchedulerMode::Lockstep) {
    detail::drive_lockstep(*group, hooks, options.pick ? options.pick : round_robin_policy());
  } else {
    detail::drive_concurrent(*group, hooks);
  }

  std::vector<std::exception_ptr> errors;
  for (auto& t : tasks)
    if (t.failed()) errors.push_back(t.error());
  if (!errors.empty()) detail::rethrow_root_cause(errors);

  if constexpr (std::is_void_v<Result>) {
    return;
  } else {
    std::vector<Result> results;
    results.reserve(tasks.size());
    for (auto& t : tasks) results.push_back(t.result());
    return results;
  }
}

/// Enumerates every lockstep schedule of a program depth-first over the pick
/// decisions. `run_once` must execute the program once under the policy it is
/// given (typically via run_ranks). Returns the number of schedules explored.
std::size_t explore_schedules(const std::function<void(const PickPolicy&)>& run_once,
                              std::size_t max_schedules = 1'000'000);

}  // namespace disco
