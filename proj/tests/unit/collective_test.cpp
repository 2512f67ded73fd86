#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "disco/collective.hpp"
#include "disco/dense.hpp"
#include "oracles.hpp"

namespace disco {
namespace {

using namespace std::chrono_literals;

DenseMatrix rank_block(int rank, std::size_t rows, std::size_t cols) {
  return testing::random_matrix(rows, cols, 1000 + static_cast<std::uint64_t>(rank));
}

RunOptions with_mode(SchedulerMode mode) {
  RunOptions options;
  options.group.mode = mode;
  return options;
}

class BothSchedulers : public ::testing::TestWithParam<SchedulerMode> {};

TEST_P(BothSchedulers, IdentityAtWorldSizeOne) {
  const auto local = rank_block(0, 3, 4);
  auto results = run_ranks(
      1,
      [&](RankEndpoint& ep) -> Task<std::vector<DenseMatrix>> {
        std::vector<DenseMatrix> out;
        out.push_back(co_await ep.all_gather(local));
        out.push_back(co_await ep.all_reduce(local, ReduceOp::Sum));
        out.push_back(co_await ep.all_reduce(local, ReduceOp::Avg));
        co_return out;
      },
      with_mode(GetParam()));
  for (const auto& m : results.front()) EXPECT_TRUE(bitwise_equal(m, local));
}

TEST_P(BothSchedulers, AllGatherConcatenatesInRankOrder) {
  for (int n = 1; n <= 8; ++n) {
    auto results = run_ranks(
        n,
        [&](RankEndpoint& ep) -> Task<DenseMatrix> {
          co_return co_await ep.all_gather(rank_block(ep.rank(), 2, 3));
        },
        with_mode(GetParam()));
    for (int r = 0; r < n; ++r) {
      const auto& g = results[static_cast<std::size_t>(r)];
      ASSERT_EQ(g.rows(), static_cast<std::size_t>(2 * n));
      for (int src = 0; src < n; ++src) {
        EXPECT_TRUE(bitwise_equal(slice_rows(g, static_cast<std::size_t>(2 * src), 2),
                                  rank_block(src, 2, 3)));
      }
    }
  }
}

TEST_P(BothSchedulers, AllReduceAccumulatesInAscendingRankOrder) {
  for (int n = 1; n <= 8; ++n) {
    // Expected values built by the test: ((x0 + x1) + x2) + ..., then / N.
    DenseMatrix sum = rank_block(0, 4, 2);
    for (int r = 1; r < n; ++r) {
      const auto x = rank_block(r, 4, 2);
      for (std::size_t i = 0; i < sum.size(); ++i) sum.values()[i] += x.values()[i];
    }
    DenseMatrix avg = sum;
    for (auto& v : avg.values()) v /= n;

    auto results = run_ranks(
        n,
        [&](RankEndpoint& ep) -> Task<std::pair<DenseMatrix, DenseMatrix>> {
          const auto mine = rank_block(ep.rank(), 4, 2);
          auto s = co_await ep.all_reduce(mine, ReduceOp::Sum);
          auto a = co_await ep.all_reduce(mine, ReduceOp::Avg);
          co_return std::make_pair(std::move(s), std::move(a));
        },
        with_mode(GetParam()));
    for (const auto& [s, a] : results) {
      EXPECT_TRUE(bitwise_equal(s, sum)) << "N=" << n;
      EXPECT_TRUE(bitwise_equal(a, avg)) << "N=" << n;
    }
  }
}

TEST_P(BothSchedulers, ScalarReduce) {
  auto results = run_ranks(
      4,
      [](RankEndpoint& ep) -> Task<double> {
        co_return co_await ep.all_reduce_scalar(static_cast<double>(ep.rank() + 1), ReduceOp::Avg);
      },
      with_mode(GetParam()));
  for (double v : results) EXPECT_EQ(v, 2.5);
}

TEST_P(BothSchedulers, FloatPayloads) {
  auto results = run_ranks(
      3,
      [](RankEndpoint& ep) -> Task<DenseMatrixF> {
        DenseMatrixF mine{{static_cast<float>(ep.rank()), 0.5f}};
        co_return co_await ep.all_reduce(mine, ReduceOp::Sum);
      },
      with_mode(GetParam()));
  for (const auto& m : results) EXPECT_EQ(m, (DenseMatrixF{{3.0f, 1.5f}}));
}

TEST_P(BothSchedulers, StatsCountReceivedElements) {
  constexpr int n = 4;
  auto results = run_ranks(
      n,
      [](RankEndpoint& ep) -> Task<CollectiveStats> {
        (void)co_await ep.all_gather(DenseMatrix(2, 3));
        (void)co_await ep.all_reduce(DenseMatrix(8, 3), ReduceOp::Avg);
        co_await ep.barrier();
        co_return ep.stats();
      },
      with_mode(GetParam()));
  for (const auto& s : results) {
    EXPECT_EQ(s.gathers, 1u);
    EXPECT_EQ(s.reduces, 1u);
    EXPECT_EQ(s.barriers, 1u);
    EXPECT_EQ(s.elements_received, n * 2u * 3 + n * 8u * 3);
  }
}

TEST_P(BothSchedulers, ManySequentialCollectives) {
  constexpr int n = 5;
  auto results = run_ranks(
      n,
      [](RankEndpoint& ep) -> Task<double> {
        double acc = 0;
        for (int i = 0; i < 200; ++i) {
          acc += co_await ep.all_reduce_scalar(static_cast<double>(ep.rank() * i), ReduceOp::Sum);
          if (i % 7 == 0) co_await ep.barrier();
        }
        co_return acc;
      },
      with_mode(GetParam()));
  // Σ_i Σ_r r·i = 10 · Σ_i i
  for (double v : results) EXPECT_EQ(v, 10.0 * (199.0 * 200.0 / 2));
}

TEST_P(BothSchedulers, ShapeMismatchIsContractError) {
  auto program = [](RankEndpoint& ep) -> Task<DenseMatrix> {
    co_return co_await ep.all_reduce(DenseMatrix(ep.rank() == 1 ? 3 : 2, 2), ReduceOp::Sum);
  };
  EXPECT_THROW(run_ranks(3, program, with_mode(GetParam())), CollectiveContractError);
}

TEST_P(BothSchedulers, OpMismatchIsContractError) {
  auto program = [](RankEndpoint& ep) -> Task<DenseMatrix> {
    co_return co_await ep.all_reduce(DenseMatrix(2, 2),
                                     ep.rank() == 0 ? ReduceOp::Sum : ReduceOp::Avg);
  };
  EXPECT_THROW(run_ranks(2, program, with_mode(GetParam())), CollectiveContractError);
}

TEST_P(BothSchedulers, KindMismatchIsContractError) {
  auto program = [](RankEndpoint& ep) -> Task<void> {
    if (ep.rank() == 0) {
      (void)co_await ep.all_gather(DenseMatrix(1, 1));
    } else {
      (void)co_await ep.all_reduce(DenseMatrix(1, 1), ReduceOp::Sum);
    }
  };
  try {
    run_ranks(2, program, with_mode(GetParam()));
    FAIL() << "expected a contract error";
  } catch (const CollectiveContractError& e) {
    EXPECT_NE(std::string(e.what()).find("all_reduce"), std::string::npos) << e.what();
  }
}

TEST_P(BothSchedulers, RankFailureIsRethrownAsRootCause) {
  auto program = [](RankEndpoint& ep) -> Task<void> {
    if (ep.rank() == 2) throw ShapeError("rank 2 failed on purpose");
    co_await ep.barrier();
  };
  RunOptions options = with_mode(GetParam());
  options.group.timeout = 5s;
  EXPECT_THROW(run_ranks(4, program, options), ShapeError);
}

INSTANTIATE_TEST_SUITE_P(Schedulers, BothSchedulers,
                         ::testing::Values(SchedulerMode::Lockstep, SchedulerMode::Concurrent),
                         [](const auto& info) { return std::string(to_string(info.param)); });

// A program mixing every collective, whose result depends on all of them.
Task<DenseMatrix> mixed_program(RankEndpoint& ep) {
  const auto mine = rank_block(ep.rank(), 2, 2);
  auto gathered = co_await ep.all_gather(mine);
  co_await ep.barrier();
  auto summed = co_await ep.all_reduce(gathered, ReduceOp::Sum);
  const double scale = co_await ep.all_reduce_scalar(static_cast<double>(ep.rank()), ReduceOp::Avg);
  for (auto& v : summed.values()) v *= scale + 1;
  co_return summed;
}

TEST(Lockstep, MatchesConcurrentBitwise) {
  for (int n = 1; n <= 8; ++n) {
    const auto a = run_ranks(n, mixed_program, with_mode(SchedulerMode::Lockstep));
    const auto b = run_ranks(n, mixed_program, with_mode(SchedulerMode::Concurrent));
    for (std::size_t r = 0; r < a.size(); ++r) {
      EXPECT_TRUE(bitwise_equal(a[r], b[r])) << "N=" << n;
      EXPECT_TRUE(bitwise_equal(a[r], a.front())) << "N=" << n;
    }
  }
}

TEST(Lockstep, EveryInterleavingCompletesWithIdenticalResults) {
  for (int n = 1; n <= 3; ++n) {
    const auto reference = run_ranks(n, mixed_program);
    std::size_t mismatches = 0;
    const auto explored = explore_schedules([&](const PickPolicy& pick) {
      RunOptions options;
      options.pick = pick;
      const auto results = run_ranks(n, mixed_program, options);
      for (std::size_t r = 0; r < results.size(); ++r)
        if (!bitwise_equal(results[r], reference[r])) ++mismatches;
    });
    EXPECT_EQ(mismatches, 0u) << "N=" << n;
    if (n > 1) {
      EXPECT_GT(explored, 1u);
    }
  }
}

TEST(Lockstep, ExhaustiveExplorationCountsAllSchedules) {
  // Two ranks, one barrier each: both must start (2 orders) and then both
  // resume (2 orders), so exactly 4 schedules exist.
  const auto explored = explore_schedules([](const PickPolicy& pick) {
    RunOptions options;
    options.pick = pick;
    run_ranks(
        2, [](RankEndpoint& ep) -> Task<void> { co_await ep.barrier(); }, options);
  });
  EXPECT_EQ(explored, 4u);
}

TEST(Lockstep, StaggeredBarrierNeverReturnsEarly) {
  constexpr int n = 4;
  std::shared_ptr<RankGroup> group;
  RunOptions options;
  options.group_out = &group;
  // Always prefer the highest runnable rank to stagger arrivals.
  options.pick = [](std::span<const int> runnable) { return runnable.size() - 1; };
  run_ranks(
      n,
      [](RankEndpoint& ep) -> Task<void> {
        for (int i = 0; i < ep.rank(); ++i) co_await ep.barrier();
        for (int i = ep.rank(); i < n; ++i) co_await ep.barrier();
      },
      options);

  const auto trace = group->trace();
  std::map<std::uint64_t, int> arrivals;
  for (const auto& e : trace) {
    if (e.type == TraceEvent::Type::Arrive) ++arrivals[e.seq];
    if (e.type == TraceEvent::Type::Return) EXPECT_EQ(arrivals[e.seq], n) << "call " << e.seq;
  }
  EXPECT_EQ(arrivals.size(), static_cast<std::size_t>(n));
  const auto finishes = std::count_if(trace.begin(), trace.end(), [](const TraceEvent& e) {
    return e.type == TraceEvent::Type::Finish;
  });
  EXPECT_EQ(finishes, n);
}

TEST(Lockstep, MissingRankIsDeadlock) {
  auto program = [](RankEndpoint& ep) -> Task<void> {
    if (ep.rank() != 1) co_await ep.barrier();
  };
  try {
    run_ranks(3, program);
    FAIL() << "expected a deadlock";
  } catch (const DeadlockError& e) {
    EXPECT_NE(std::string(e.what()).find("missing ranks 1"), std::string::npos) << e.what();
  }
}

TEST(Concurrent, MissingRankTimesOutNamingIt) {
  RunOptions options = with_mode(SchedulerMode::Concurrent);
  options.group.timeout = 100ms;
  auto program = [](RankEndpoint& ep) -> Task<void> {
    if (ep.rank() != 2) co_await ep.barrier();
  };
  try {
    run_ranks(3, program, options);
    FAIL() << "expected a timeout";
  } catch (const CollectiveTimeoutError& e) {
    EXPECT_EQ(e.missing_ranks(), std::vector<int>{2});
  }
}

TEST(RankGroup, ValidatesConstruction) {
  EXPECT_THROW(RankGroup::create(0), DomainError);
  auto group = RankGroup::create(2);
  EXPECT_THROW(group->endpoint(2), LayoutError);
  auto ep = group->endpoint(0);
  EXPECT_EQ(ep.rank(), 0);
  EXPECT_EQ(ep.world_size(), 2);
  EXPECT_THROW(group->endpoint(0), CollectiveContractError);
}

TEST(Scheduler, ReadsEnvironment) {
  ::unsetenv("DISCO_SCHEDULER");
  EXPECT_EQ(scheduler_from_env(), SchedulerMode::Lockstep);
  ::setenv("DISCO_SCHEDULER", "concurrent", 1);
  EXPECT_EQ(scheduler_from_env(), SchedulerMode::Concurrent);
  ::setenv("DISCO_SCHEDULER", "fast", 1);
  EXPECT_THROW(scheduler_from_env(), DomainError);
  ::unsetenv("DISCO_SCHEDULER");
}

}  // namespace
}  // namespace disco
