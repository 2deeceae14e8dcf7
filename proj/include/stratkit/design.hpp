#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stratkit/core.hpp"
#include "stratkit/rng.hpp"

namespace stratkit::design {

enum class DesignKind { iid, complete, coarse_stratified, fine_stratified };
enum class BlockingMethod { sorted_scalar, greedy_multivariate };

/// Assignment-mechanism descriptor. `shape` and `blocking` only matter for
/// fine stratification; `strata_fn` only for coarse stratification.
struct DesignSpec {
    DesignKind kind = DesignKind::fine_stratified;
    BlockShape shape{1, 2};
    BlockingMethod blocking = BlockingMethod::sorted_scalar;
    std::size_t coordinate = 0;
    std::function<int(std::span<const double>)> strata_fn;
    double eta = 0.5;
};

/// Sort units ascending on one covariate (stable, so ties keep input order)
/// and cut the sorted list into consecutive runs of k.
BlockPartition block_sorted(const RowMatrix& x, std::size_t coordinate, BlockShape shape);

/// Greedy nearest-neighbour blocking: the lowest-index unblocked unit is
/// grouped with its k-1 nearest unblocked neighbours (Euclidean; distance
/// ties go to the lower index). O(n^2); a heuristic, not optimal matching.
BlockPartition block_greedy(const RowMatrix& x, BlockShape shape);

/// (1/n) sum_j max_{i,i' in block j} ||X_i - X_i'||^2
double max_block_discrepancy(const RowMatrix& x, const BlockPartition& partition);

/// Uniform draw of l treated units inside every block, independently.
std::vector<int> assign_fine(const BlockPartition& partition, Rng& rng);

std::vector<int> assign_iid(std::size_t n, double eta, Rng& rng);

/// Exactly eta*n treated, uniformly placed. Throws NonIntegralCount.
std::vector<int> assign_complete(std::size_t n, double eta, Rng& rng);

/// Complete randomization inside each stratum. When eta * n_s is fractional
/// the treated count is floor(eta n_s) + Bernoulli(frac), so its expectation
/// is exactly eta n_s.
std::vector<int> assign_coarse(std::span<const int> strata, double eta, Rng& rng);

struct DiscreteEtaAssignment {
    std::vector<int> assignment;
    std::vector<BlockPartition> partitions;  // one per eta-stratum, same order as `shapes`
};

/// Fine stratification run separately within each {i : eta(X_i) = l_s/k_s}.
/// `eta_of` must return, for every unit, a value equal to one of the shapes'
/// fractions. Blocking inside each stratum uses `method` on `coordinate`.
DiscreteEtaAssignment assign_fine_discrete_eta(const RowMatrix& x,
                                               const std::function<double(std::span<const double>)>& eta_of,
                                               std::span<const BlockShape> shapes, BlockingMethod method,
                                               std::size_t coordinate, Rng& rng);

/// Blocking plus assignment for any DesignSpec. The returned partition is
/// set only for fine stratification.
struct DesignDraw {
    std::vector<int> assignment;
    std::optional<BlockPartition> partition;
};

DesignDraw draw_design(const DesignSpec& spec, const RowMatrix& x, Rng& rng);

}  // namespace stratkit::design
