#include "disco/cost_model.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include "disco/dense.hpp"
#include "disco/shard.hpp"

namespace disco {

namespace {

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) throw DomainError("cost model count overflows 64 bits");
  return out;
}

std::uint64_t add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_add_overflow(a, b, &out)) throw DomainError("cost model count overflows 64 bits");
  return out;
}

template <typename T>
BasicMatrix<T> random_unit_rows(std::uint64_t rows, std::uint64_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  DenseMatrix raw(rows, cols);
  for (auto& v : raw.values()) v = dist(rng);
  return convert<T>(l2_normalize_rows(raw));
}

template <typename T>
MeasuredFootprint measure(RunMode mode, const MeasureSizes& sizes) {
  const std::size_t world = sizes.world_size;
  const std::size_t batch = sizes.global_batch;
  (void)ShardLayout::make(batch, world, 0);

  std::mt19937_64 rng(sizes.seed);
  const auto image = random_unit_rows<T>(batch, sizes.dim, rng);
  const auto text = random_unit_rows<T>(batch, sizes.dim, rng);
  const std::size_t local = batch / world;

  std::vector<LossScopeStats> stats(world);
  RunOptions options;
  options.group.mode = sizes.scheduler;
  run_ranks(
      static_cast<int>(world),
      [&](RankEndpoint& endpoint) -> Task<DiscoStepResult<T>> {
        const auto r = static_cast<std::size_t>(endpoint.rank());
        auto local_image = slice_rows(image, r * local, local);
        auto local_text = slice_rows(text, r * local, local);
        if (mode == RunMode::Naive) {
          return replicated_step<T>(endpoint, std::move(local_image), std::move(local_text), T(1),
                                    &stats[r]);
        }
        DiscoStepOptions step_options;
        step_options.stats = &stats[r];
        return disco_step<T>(endpoint, std::move(local_image), std::move(local_text), T(1),
                             step_options);
      },
      options);

  MeasuredFootprint out;
  out.report.method = mode == RunMode::Naive ? Method::Clip : Method::Disco;
  out.report.global_batch = sizes.global_batch;
  out.report.world_size = sizes.world_size;
  out.report.dim = sizes.dim;
  for (const auto& s : stats) {
    RankMeasurement m;
    m.loss_peak_elements = s.loss_scope.peak_live_elements;
    m.similarity_flops = s.similarity_flops;
    m.loss_flops = s.loss_scope.flops_accumulated;
    m.exchange_elements = s.exchange_elements;
    out.report.loss_elements = std::max(out.report.loss_elements, m.loss_peak_elements);
    out.report.loss_flops = std::max(out.report.loss_flops, m.similarity_flops);
    out.ranks.push_back(m);
  }
  out.report.total_elements = out.report.loss_elements;
  out.report.bytes = mul(out.report.total_elements, sizes.bytes_per_scalar);
  return out;
}

}  // namespace

const char* to_string(Method method) noexcept {
  switch (method) {
    case Method::Clip: return "CLIP";
    case Method::Basic: return "BASIC";
    case Method::Disco: return "DisCo";
    case Method::DiscoStar: return "DisCo*";
  }
  return "?";
}

void CostInputs::validate() const {
  if (global_batch == 0 || world_size == 0 || layers == 0 || dim == 0) {
    throw DomainError("B, N, L and D must all be >= 1");
  }
  if (global_batch % world_size != 0) {
    throw DomainError("B=" + std::to_string(global_batch) + " is not divisible by N=" +
                      std::to_string(world_size));
  }
  if (bytes_per_scalar != 4 && bytes_per_scalar != 8) {
    throw DomainError("bytes per scalar must be 4 or 8, got " + std::to_string(bytes_per_scalar));
  }
}

CostReport analytic_footprint(const CostInputs& inputs, Method method) {
  inputs.validate();
  const std::uint64_t b = inputs.global_batch / inputs.world_size;
  const bool full_backbone = method == Method::Clip || method == Method::Disco;
  const bool full_loss = method == Method::Clip || method == Method::Basic;
  const std::uint64_t square = mul(inputs.global_batch, inputs.global_batch);

  CostReport r;
  r.method = method;
  r.global_batch = inputs.global_batch;
  r.world_size = inputs.world_size;
  r.layers = inputs.layers;
  r.dim = inputs.dim;
  r.backbone_elements = full_backbone ? mul(mul(b, inputs.layers), inputs.dim) : mul(b, inputs.dim);
  // 2B²/N is integral because N | B.
  r.loss_elements = full_loss ? square : mul(2 * b, inputs.global_batch);
  r.total_elements = add(r.backbone_elements, r.loss_elements);
  // B²·D and 2B²·D/N are both loss_elements·D.
  r.loss_flops = mul(r.loss_elements, inputs.dim);
  r.bytes = mul(r.total_elements, inputs.bytes_per_scalar);
  return r;
}

std::string Fraction::str() const {
  if (numerator == 0) return "0";
  if (denominator == 1) return std::to_string(numerator);
  return std::to_string(numerator) + "/" + std::to_string(denominator);
}

Fraction savings_fraction(std::uint64_t world_size) {
  if (world_size == 0) throw DomainError("world size must be >= 1");
  if (world_size <= 2) return {0, 1};
  const std::uint64_t num = world_size - 2;
  const std::uint64_t g = std::gcd(num, world_size);
  return {num / g, world_size / g};
}

std::uint64_t bytes_moved(CollectiveKind collective, std::uint64_t buffer_elements,
                          std::uint64_t world_size) {
  if (world_size == 0) throw DomainError("world size must be >= 1");
  switch (collective) {
    case CollectiveKind::AllGather:
    case CollectiveKind::AllReduce:
      return mul(world_size, buffer_elements);
    case CollectiveKind::Barrier:
      return 0;
  }
  return 0;
}

MeasuredFootprint measured_footprint(RunMode mode, const MeasureSizes& sizes) {
  if (sizes.global_batch == 0 || sizes.world_size == 0 || sizes.dim == 0) {
    throw DomainError("B, N and D must all be >= 1");
  }
  if (sizes.global_batch > kMaxMeasuredBatch) {
    throw DomainError("B=" + std::to_string(sizes.global_batch) +
                      " is above the executable limit of " + std::to_string(kMaxMeasuredBatch));
  }
  if (sizes.bytes_per_scalar == 4) return measure<float>(mode, sizes);
  if (sizes.bytes_per_scalar == 8) return measure<double>(mode, sizes);
  throw DomainError("bytes per scalar must be 4 or 8");
}

}  // namespace disco
