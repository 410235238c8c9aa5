#include "colaudit/kernels.h"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "colaudit/market.h"
#include "colaudit/rng.h"

namespace colaudit::kernels {
namespace {

int SampleChoice(const market::BuyerModel& buyer,
                 std::span<const double> prices, std::uint64_t seed,
                 std::size_t sample, std::span<double> uniforms,
                 std::span<double> valuations) {
  const std::size_t n = prices.size();
  for (std::size_t i = 0; i < n; ++i) {
    uniforms[i] = CounterUniform(seed, sample * n + i);
  }
  buyer.Valuations(uniforms, valuations);
  return market::BuyerChoice(valuations, prices);
}

double RowMax(std::span<const double> a, std::span<const double> b,
              std::size_t row, std::size_t k, double c) {
  double best = a[row * k] + c * b[row * k];
  for (std::size_t q = 1; q < k; ++q) {
    best = std::max(best, a[row * k + q] + c * b[row * k + q]);
  }
  return best;
}

}  // namespace

int MaxThreads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::vector<std::uint64_t> MonteCarloPurchaseCounts(
    const market::BuyerModel& buyer, std::span<const double> prices,
    std::size_t n_samples, std::uint64_t seed) {
  const std::size_t n = prices.size();
  std::vector<std::uint64_t> counts(n, 0);
#pragma omp parallel
  {
    std::vector<std::uint64_t> local(n, 0);
    std::vector<double> u(n), v(n);
#pragma omp for schedule(static)
    for (std::size_t s = 0; s < n_samples; ++s) {
      const int choice = SampleChoice(buyer, prices, seed, s, u, v);
      if (choice >= 0) ++local[choice];
    }
#pragma omp critical
    for (std::size_t i = 0; i < n; ++i) counts[i] += local[i];
  }
  return counts;
}

void AccumulateCrossMoments(std::span<const double> weights,
                            std::span<const double> values, std::size_t rows,
                            std::size_t k, std::span<double> moments) {
  const long long kk = static_cast<long long>(k);
#pragma omp parallel for schedule(static)
  for (long long p = 0; p < kk; ++p) {
    double* out = moments.data() + p * k;
    for (std::size_t r = 0; r < rows; ++r) {
      const double w = weights[r * k + p];
      if (w == 0.0) continue;
      const double* x = values.data() + r * k;
      for (std::size_t q = 0; q < k; ++q) out[q] += w * x[q];
    }
  }
}

void AccumulatePropensityMoments(std::span<const double> probs,
                                 std::span<const std::size_t> posted,
                                 std::span<const double> estimates,
                                 std::size_t k, std::span<double> moments) {
  const long long kk = static_cast<long long>(k);
  const std::size_t rounds = posted.size();
#pragma omp parallel for schedule(static)
  for (long long p = 0; p < kk; ++p) {
    double* out = moments.data() + p * k;
    for (std::size_t t = 0; t < rounds; ++t) {
      out[posted[t]] += probs[t * k + p] * estimates[t];
    }
  }
}

void EvaluateRemapObjective(std::span<const double> a,
                            std::span<const double> b, std::size_t k,
                            std::span<const double> costs,
                            std::span<double> out) {
  const long long m = static_cast<long long>(costs.size());
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < m; ++i) {
    double total = 0.0;
    for (std::size_t p = 0; p < k; ++p) total += RowMax(a, b, p, k, costs[i]);
    out[i] = total;
  }
}

namespace serial {

std::vector<std::uint64_t> MonteCarloPurchaseCounts(
    const market::BuyerModel& buyer, std::span<const double> prices,
    std::size_t n_samples, std::uint64_t seed) {
  const std::size_t n = prices.size();
  std::vector<std::uint64_t> counts(n, 0);
  std::vector<double> u(n), v(n);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const int choice = SampleChoice(buyer, prices, seed, s, u, v);
    if (choice >= 0) ++counts[choice];
  }
  return counts;
}

void AccumulateCrossMoments(std::span<const double> weights,
                            std::span<const double> values, std::size_t rows,
                            std::size_t k, std::span<double> moments) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double w = weights[r * k + p];
      if (w == 0.0) continue;
      for (std::size_t q = 0; q < k; ++q) {
        moments[p * k + q] += w * values[r * k + q];
      }
    }
  }
}

void AccumulatePropensityMoments(std::span<const double> probs,
                                 std::span<const std::size_t> posted,
                                 std::span<const double> estimates,
                                 std::size_t k, std::span<double> moments) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t t = 0; t < posted.size(); ++t) {
      moments[p * k + posted[t]] += probs[t * k + p] * estimates[t];
    }
  }
}

void EvaluateRemapObjective(std::span<const double> a,
                            std::span<const double> b, std::size_t k,
                            std::span<const double> costs,
                            std::span<double> out) {
  for (std::size_t i = 0; i < costs.size(); ++i) {
    double total = 0.0;
    for (std::size_t p = 0; p < k; ++p) total += RowMax(a, b, p, k, costs[i]);
    out[i] = total;
  }
}

}  // namespace serial
}  // namespace colaudit::kernels
