#include "disco/collective.hpp"
#include "disco/dense.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <string_view>

namespace disco {

const char* to_string(SchedulerMode mode) noexcept {
  return mode == SchedulerMode::Lockstep ? "lockstep" : "concurrent";
}

const char* to_string(CollectiveKind kind) noexcept {
  switch (kind) {
    case CollectiveKind::AllGather:
      return "all_gather";
    case CollectiveKind::AllReduce:
      return "all_reduce";
    case CollectiveKind::Barrier:
      return "barrier";
  }
  return "?";
}

SchedulerMode scheduler_from_env() {
  const char* raw = std::getenv("DISCO_SCHEDULER");
  if (raw == nullptr || *raw == '\0') return SchedulerMode::Lockstep;
  const std::string_view value(raw);
  if (value == "lockstep") return SchedulerMode::Lockstep;
  if (value == "concurrent") return SchedulerMode::Concurrent;
  throw DomainError("DISCO_SCHEDULER must be 'lockstep' or 'concurrent', got '" +
                    std::string(value) + "'");
}

int RankEndpoint::world_size() const noexcept { return group_->world_size(); }

namespace {

std::string payload_shape(const detail::Payload& p) {
  return std::visit(
      [](const auto& m) -> std::string {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, std::monostate>) {
          return "nothing";
        } else {
          return shape_string(m.rows(), m.cols()) +
                 (std::is_same_v<typename M::value_type, float> ? " f32" : " f64");
        }
      },
      p);
}

bool same_shape(const detail::Payload& a, const detail::Payload& b) {
  if (a.index() != b.index()) return false;
  return std::visit(
      [&](const auto& ma) {
        using M = std::decay_t<decltype(ma)>;
        if constexpr (std::is_same_v<M, std::monostate>) {
          return true;
        } else {
          const auto& mb = std::get<M>(b);
          return ma.rows() == mb.rows() && ma.cols() == mb.cols();
        }
      },
      a);
}

const char* op_name(ReduceOp op) { return op == ReduceOp::Sum ? "SUM" : "AVG"; }

template <typename T>
BasicMatrix<T> gather_rows(const std::vector<std::optional<detail::Arrival>>& arrivals) {
  std::vector<BasicMatrix<T>> blocks;
  blocks.reserve(arrivals.size());
  for (const auto& a : arrivals) blocks.push_back(std::get<BasicMatrix<T>>(a->payload));
  return concat_rows<T>(blocks);
}

template <typename T>
BasicMatrix<T> reduce_in_rank_order(const std::vector<std::optional<detail::Arrival>>& arrivals,
                                    ReduceOp op) {
  BasicMatrix<T> acc = std::get<BasicMatrix<T>>(arrivals.front()->payload);
  auto values = acc.values();
  for (std::size_t r = 1; r < arrivals.size(); ++r) {
    auto contribution = std::get<BasicMatrix<T>>(arrivals[r]->payload).values();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += contribution[i];
  }
  if (op == ReduceOp::Avg) {
    const T n = static_cast<T>(arrivals.size());
    for (auto& v : values) v /= n;
  }
  return acc;
}

}  // namespace

std::shared_ptr<RankGroup> RankGroup::create(int world_size, GroupOptions options) {
  if (world_size < 1) {
    throw DomainError("world size must be >= 1, got " + std::to_string(world_size));
  }
  return std::shared_ptr<RankGroup>(new RankGroup(world_size, options));
}

RankGroup::RankGroup(int world_size, GroupOptions options)
    : world_size_(world_size),
      options_(options),
      claimed_(static_cast<std::size_t>(world_size), false),
      next_seq_(static_cast<std::size_t>(world_size), 0),
      parked_(static_cast<std::size_t>(world_size)) {}

RankEndpoint RankGroup::endpoint(int rank) {
  std::lock_guard lock(mu_);
  if (rank < 0 || rank >= world_size_) {
    throw LayoutError("rank " + std::to_string(rank) + " outside [0, " +
                      std::to_string(world_size_) + ")");
  }
  if (claimed_[static_cast<std::size_t>(rank)]) {
    throw CollectiveContractError("endpoint for rank " + std::to_string(rank) +
                                  " was already handed out");
  }
  claimed_[static_cast<std::size_t>(rank)] = true;
  return RankEndpoint(shared_from_this(), rank);
}

void RankGroup::abort(int rank, const std::string& reason) {
  {
    std::lock_guard lock(mu_);
    if (aborted_) return;
    aborted_ = true;
    abort_reason_ = "rank " + std::to_string(rank) + " failed: " + reason;
  }
  cv_.notify_all();
}

bool RankGroup::aborted() const {
  std::lock_guard lock(mu_);
  return aborted_;
}

std::vector<TraceEvent> RankGroup::trace() const {
  std::lock_guard lock(mu_);
  return trace_;
}

void RankGroup::record_finish(int rank) {
  std::lock_guard lock(mu_);
  trace_.push_back({TraceEvent::Type::Finish, rank, next_seq_[static_cast<std::size_t>(rank)],
                    CollectiveKind::Barrier});
}

bool RankGroup::resumable(int rank) const {
  std::lock_guard lock(mu_);
  const auto& p = parked_[static_cast<std::size_t>(rank)];
  if (!p.active) return false;
  if (aborted_) return true;
  auto it = slots_.find(p.seq);
  return it != slots_.end() && it->second.complete;
}

std::coroutine_handle<> RankGroup::take_parked(int rank) {
  std::lock_guard lock(mu_);
  auto& p = parked_[static_cast<std::size_t>(rank)];
  p.active = false;
  return std::exchange(p.handle, {});
}

std::string RankGroup::describe_blocked(int rank) const {
  std::lock_guard lock(mu_);
  const auto& p = parked_[static_cast<std::size_t>(rank)];
  if (!p.active) return "rank " + std::to_string(rank) + " not parked";
  std::ostringstream out;
  out << "rank " << rank << " waiting in call #" << p.seq;
  auto it = slots_.find(p.seq);
  if (it != slots_.end()) {
    const auto& arrival = it->second.arrivals[static_cast<std::size_t>(rank)];
    if (arrival) out << " (" << to_string(arrival->kind) << ")";
    out << ", " << it->second.arrived << "/" << world_size_ << " arrived";
    const auto missing = missing_locked(it->second);
    if (!missing.empty()) {
      out << ", missing ranks";
      for (int m : missing) out << " " << m;
    }
  }
  return out.str();
}

std::vector<int> RankGroup::missing_locked(const Slot& slot) const {
  std::vector<int> missing;
  for (int r = 0; r < world_size_; ++r)
    if (!slot.arrivals[static_cast<std::size_t>(r)]) missing.push_back(r);
  return missing;
}

std::uint64_t RankGroup::arrive(int rank, detail::Arrival arrival) {
  std::unique_lock lock(mu_);
  if (aborted_) throw CollectiveAbortedError(abort_reason_);
  const std::uint64_t seq = next_seq_[static_cast<std::size_t>(rank)]++;
  auto& slot = slots_[seq];
  if (slot.arrivals.empty()) slot.arrivals.resize(static_cast<std::size_t>(world_size_));
  trace_.push_back({TraceEvent::Type::Arrive, rank, seq, arrival.kind});
  slot.arrivals[static_cast<std::size_t>(rank)] = std::move(arrival);
  ++slot.arrived;
  if (slot.arrived == world_size_) {
    complete_locked(seq, slot, rank);
    lock.unlock();
    cv_.notify_all();
  }
  return seq;
}

void RankGroup::complete_locked(std::uint64_t seq, Slot& slot, int completing_rank) {
  // The reduction is done on behalf of every rank; charge nobody's scope.
  UninstrumentedRegion uninstrumented;
  const auto& first = *slot.arrivals.front();
  std::string error;
  for (int r = 1; r < world_size_ && error.empty(); ++r) {
    const auto& other = *slot.arrivals[static_cast<std::size_t>(r)];
    std::ostringstream msg;
    if (other.kind != first.kind) {
      msg << "collective mismatch at call #" << seq << ": rank 0 entered "
          << to_string(first.kind) << ", rank " << r << " entered " << to_string(other.kind);
    } else if (first.kind == CollectiveKind::AllReduce && other.op != first.op) {
      msg << "all_reduce op mismatch at call #" << seq << ": rank 0 used " << op_name(first.op)
          << ", rank " << r << " used " << op_name(other.op);
    } else if (!same_shape(first.payload, other.payload)) {
      msg << to_string(first.kind) << " buffer mismatch at call #" << seq << ": rank 0 supplied "
          << payload_shape(first.payload) << ", rank " << r << " supplied "
          << payload_shape(other.payload);
    }
    error = msg.str();
  }

  if (error.empty()) {
    slot.result = std::visit(
        [&](const auto& m) -> std::shared_ptr<const detail::Payload> {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, std::monostate>) {
            return std::make_shared<const detail::Payload>();
          } else {
            using T = typename M::value_type;
            if (first.kind == CollectiveKind::AllGather) {
              return std::make_shared<const detail::Payload>(gather_rows<T>(slot.arrivals));
            }
            return std::make_shared<const detail::Payload>(
                reduce_in_rank_order<T>(slot.arrivals, first.op));
          }
        },
        first.payload);
  } else {
    slot.error = std::move(error);
  }
  slot.complete = true;
  // Contributions are no longer needed.
  for (auto& a : slot.arrivals) a->payload = std::monostate{};
  trace_.push_back({TraceEvent::Type::Complete, completing_rank, seq, first.kind});
}

void RankGroup::wait(int rank, std::uint64_t seq) {
  std::unique_lock lock(mu_);
  auto& slot = slots_.at(seq);
  const bool done = cv_.wait_for(lock, options_.timeout, [&] { return slot.complete || aborted_; });
  if (slot.complete) return;
  if (aborted_) throw CollectiveAbortedError(abort_reason_);
  if (!done) {
    const auto missing = missing_locked(slot);
    std::ostringstream msg;
    msg << "rank " << rank << " timed out after " << options_.timeout.count()
        << " ms in call #" << seq << "; missing rank(s):";
    for (int m : missing) msg << " " << m;
    aborted_ = true;
    abort_reason_ = msg.str();
    lock.unlock();
    cv_.notify_all();
    throw CollectiveTimeoutError(msg.str(), missing);
  }
}

void RankGroup::park(int rank, std::uint64_t seq, std::coroutine_handle<> h) {
  std::lock_guard lock(mu_);
  parked_[static_cast<std::size_t>(rank)] = {h, seq, true};
}

detail::Payload RankGroup::collect(int rank, std::uint64_t seq) {
  std::lock_guard lock(mu_);
  auto it = slots_.find(seq);
  if (it == slots_.end() || !it->second.complete) {
    throw CollectiveAbortedError(aborted_ ? abort_reason_ : "collective not complete");
  }
  auto& slot = it->second;
  trace_.push_back({TraceEvent::Type::Return, rank, seq,
                    slot.arrivals[static_cast<std::size_t>(rank)]->kind});
  std::string error = slot.error;
  detail::Payload out;
  if (error.empty()) out = *slot.result;
  if (++slot.collected == world_size_) slots_.erase(it);
  if (!error.empty()) throw CollectiveContractError(error);
  return out;
}

PickPolicy round_robin_policy() {
  auto last = std::make_shared<int>(-1);
  return [last](std::span<const int> runnable) -> std::size_t {
    for (std::size_t i = 0; i < runnable.size(); ++i) {
      if (runnable[i] > *last) {
        *last = runnable[i];
        return i;
      }
    }
    *last = runnable.front();
    return 0;
  };
}

namespace detail {

std::string describe_exception(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown exception";
  }
}

void drive_lockstep(RankGroup& group, const RankDriverHooks& hooks, PickPolicy pick) {
  const int n = static_cast<int>(hooks.tops.size());
  std::vector<bool> started(hooks.tops.size(), false);
  std::vector<bool> finished(hooks.tops.size(), false);
  std::vector<int> runnable;
  while (true) {
    runnable.clear();
    bool all_finished = true;
    for (int r = 0; r < n; ++r) {
      const auto i = static_cast<std::size_t>(r);
      if (finished[i]) continue;
      all_finished = false;
      if (!started[i] || group.resumable(r)) runnable.push_back(r);
    }
    if (all_finished) return;
    if (runnable.empty()) {
      std::string msg = "lockstep deadlock: every unfinished rank is blocked";
      for (int r = 0; r < n; ++r)
        if (!finished[static_cast<std::size_t>(r)]) msg += "; " + group.describe_blocked(r);
      throw DeadlockError(msg);
    }
    const std::size_t choice = pick(runnable);
    if (choice >= runnable.size()) throw DomainError("pick policy returned an invalid index");
    const int r = runnable[choice];
    const auto i = static_cast<std::size_t>(r);
    std::coroutine_handle<> h = started[i] ? group.take_parked(r) : hooks.tops[i];
    started[i] = true;
    h.resume();
    if (hooks.finished(r)) {
      finished[i] = true;
      group.record_finish(r);
      if (auto failure = hooks.failure(r); !failure.empty()) group.abort(r, failure);
    }
  }
}

void drive_concurrent(RankGroup& group, const RankDriverHooks& hooks) {
  std::vector<std::thread> workers;
  workers.reserve(hooks.tops.size());
  for (std::size_t i = 0; i < hooks.tops.size(); ++i) {
    workers.emplace_back([&group, &hooks, i] {
      const int r = static_cast<int>(i);
      hooks.tops[i].resume();
      group.record_finish(r);
      if (auto failure = hooks.failure(r); !failure.empty()) group.abort(r, failure);
    });
  }
  for (auto& w : workers) w.join();
}

void rethrow_root_cause(const std::vector<std::exception_ptr>& errors) {
  for (const auto& e : errors) {
    try {
      std::rethrow_exception(e);
    } catch (const CollectiveAbortedError&) {
      continue;
    } catch (...) {
      throw;
    }
  }
  std::rethrow_exception(errors.front());
}

}  // namespace detail

std::size_t explore_schedules(const std::function<void(const PickPolicy&)>& run_once,
                              std::size_t max_schedules) {
  struct Decision {
    std::size_t choice;
    std::size_t options;
  };
  std::vector<Decision> path;
  std::size_t explored = 0;
  while (explored < max_schedules) {
    std::size_t depth = 0;
    PickPolicy replay = [&](std::span<const int> runnable) -> std::size_t {
      if (depth < path.size()) {
        path[depth].options = runnable.size();
      } else {
        path.push_back({0, runnable.size()});
      }
      return path[depth++].choice;
    };
    run_once(replay);
    ++explored;
    path.resize(depth);
    while (!path.empty() && path.back().choice + 1 >= path.back().options) path.pop_back();
    if (path.empty()) break;
    ++path.back().choice;
  }
  return explored;
}

}  // namespace disco
