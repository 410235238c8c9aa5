#ifndef COLAUDIT_KERNELS_H_
#define COLAUDIT_KERNELS_H_

// Data-parallel inner loops. Every kernel in `colaudit::kernels` is an
// OpenMP version of the same-named function in `colaudit::kernels::serial`.
// Both visit each output element's terms in the same order, so results are
// bitwise identical regardless of thread count; the tests rely on that.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace colaudit::market {
struct BuyerModel;
}  // namespace colaudit::market

namespace colaudit::kernels {

// Purchases per seller over `n_samples` counter-seeded buyers.
std::vector<std::uint64_t> MonteCarloPurchaseCounts(
    const market::BuyerModel& buyer, std::span<const double> prices,
    std::size_t n_samples, std::uint64_t seed);

// moments[p*k + q] += sum_r weights[r*k + p] * values[r*k + q]
// for a block of `rows` rounds.
void AccumulateCrossMoments(std::span<const double> weights,
                            std::span<const double> values, std::size_t rows,
                            std::size_t k, std::span<double> moments);

// Propensity-weighted moments of a transcript:
// moments[p*k + posted[t]] += probs[t*k + p] * estimates[t].
void AccumulatePropensityMoments(std::span<const double> probs,
                                 std::span<const std::size_t> posted,
                                 std::span<const double> estimates,
                                 std::size_t k, std::span<double> moments);

// out[i] = sum_p max_q (a[p*k+q] + c_i * b[p*k+q]) for each candidate c_i.
void EvaluateRemapObjective(std::span<const double> a,
                            std::span<const double> b, std::size_t k,
                            std::span<const double> costs,
                            std::span<double> out);

// Number of threads the OpenMP kernels will use (1 without OpenMP).
int MaxThreads();

namespace serial {

std::vector<std::uint64_t> MonteCarloPurchaseCounts(
    const market::BuyerModel& buyer, std::span<const double> prices,
    std::size_t n_samples, std::uint64_t seed);

void AccumulateCrossMoments(std::span<const double> weights,
                            std::span<const double> values, std::size_t rows,
                            std::size_t k, std::span<double> moments);

void AccumulatePropensityMoments(std::span<const double> probs,
                                 std::span<const std::size_t> posted,
                                 std::span<const double> estimates,
                                 std::size_t k, std::span<double> moments);

void EvaluateRemapObjective(std::span<const double> a,
                            std::span<const double> b, std::size_t k,
                            std::span<const double> costs,
                            std::span<double> out);

}  // namespace serial
}  // namespace colaudit::kernels

#endif  // COLAUDIT_KERNELS_H_
