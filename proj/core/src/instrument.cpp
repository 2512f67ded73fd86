#include "disco/instrument.hpp"

#include <algorithm>

namespace disco {

namespace {

thread_local std::shared_ptr<detail::CounterState> t_active;
std::atomic<bool> g_verification{true};

}  // namespace

void InstrumentCounters::merge(const InstrumentCounters& other) noexcept {
  flops_accumulated += other.flops_accumulated;
  peak_live_elements = std::max(peak_live_elements, other.peak_live_elements);
  live_elements += other.live_elements;
  peak_live_elements = std::max(peak_live_elements, live_elements);
}

namespace detail {

void CounterState::acquire(std::uint64_t elements) noexcept {
  const std::uint64_t now = live.fetch_add(elements, std::memory_order_relaxed) + elements;
  std::uint64_t seen = peak.load(std::memory_order_relaxed);
  while (now > seen && !peak.compare_exchange_weak(seen, now, std::memory_order_relaxed)) {
  }
}

void CounterState::release(std::uint64_t elements) noexcept {
  live.fetch_sub(elements, std::memory_order_relaxed);
}

std::shared_ptr<CounterState> active_state() noexcept { return t_active; }

}  // namespace detail

InstrumentScope::InstrumentScope()
    : state_(std::make_shared<detail::CounterState>()), previous_(t_active) {
  t_active = state_;
}

InstrumentScope::~InstrumentScope() { t_active = std::move(previous_); }

InstrumentCounters InstrumentScope::snapshot() const noexcept {
  InstrumentCounters out;
  out.flops_accumulated = state_->flops.load(std::memory_order_relaxed);
  out.live_elements = state_->live.load(std::memory_order_relaxed);
  out.peak_live_elements = state_->peak.load(std::memory_order_relaxed);
  return out;
}

UninstrumentedRegion::UninstrumentedRegion() : saved_(std::move(t_active)) { t_active.reset(); }

UninstrumentedRegion::~UninstrumentedRegion() { t_active = std::move(saved_); }

void record_flops(std::uint64_t flops) noexcept {
  if (t_active) t_active->flops.fetch_add(flops, std::memory_order_relaxed);
}

void set_verification_mode(bool enabled) noexcept { g_verification.store(enabled); }

bool verification_mode() noexcept { return g_verification.load(); }

}  // namespace disco
