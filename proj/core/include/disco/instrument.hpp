#pragma once

#include <atomic>
#include <cstdint>
#include <memory>

namespace disco {

/// Snapshot of one measurement scope.
///
/// `peak_live_elements >= live_elements` always holds. Within a scope
/// `flops_accumulated` and `peak_live_elements` only grow; `live_elements`
/// drops when a charged buffer is released.
struct InstrumentCounters {
  std::uint64_t flops_accumulated = 0;
  std::uint64_t peak_live_elements = 0;
  std::uint64_t live_elements = 0;

  /// Combines counters from another worker: flops add up, peaks take the max.
  void merge(const InstrumentCounters& other) noexcept;
};

namespace detail {

struct CounterState {
  std::atomic<std::uint64_t> flops{0};
  std::atomic<std::uint64_t> live{0};
  std::atomic<std::uint64_t> peak{0};

  void acquire(std::uint64_t elements) noexcept;
  void release(std::uint64_t elements) noexcept;
};

/// Counter state installed on the calling thread, or null.
std::shared_ptr<CounterState> active_state() noexcept;

}  // namespace detail

/// Installs a fresh counter state as the calling thread's active scope.
///
/// While the scope is active, matrices allocated on this thread charge their
/// element count to it (and release on destruction, wherever that happens),
/// and matmul-family operations add their FLOPs. Scopes nest; the innermost
/// one receives the charges. Not movable: a scope is bound to its thread.
class InstrumentScope {
 public:
  InstrumentScope();
  ~InstrumentScope();
  InstrumentScope(const InstrumentScope&) = delete;
  InstrumentScope& operator=(const InstrumentScope&) = delete;

  InstrumentCounters snapshot() const noexcept;

 private:
  std::shared_ptr<detail::CounterState> state_;
  std::shared_ptr<detail::CounterState> previous_;
};

/// Detaches the thread's active scope for its lifetime, so work done on behalf
/// of other workers (e.g. reducing a collective) is not charged here.
class UninstrumentedRegion {
 public:
  UninstrumentedRegion();
  ~UninstrumentedRegion();
  UninstrumentedRegion(const UninstrumentedRegion&) = delete;
  UninstrumentedRegion& operator=(const UninstrumentedRegion&) = delete;

 private:
  std::shared_ptr<detail::CounterState> saved_;
};

/// Adds to the active scope's FLOP counter, if any.
void record_flops(std::uint64_t flops) noexcept;

/// When enabled (the default), dense operations reject non-finite results.
void set_verification_mode(bool enabled) noexcept;
bool verification_mode() noexcept;

}  // namespace disco
