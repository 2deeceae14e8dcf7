#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "stratkit/core.hpp"

namespace stratkit::adjust {

/// Regressor sets for the first-stage fits. `zero` (no columns, so every
/// prediction is 0) and `intercept` exist for reductions and tests.
enum class BasisKind { zero, intercept, quad, quad_kink };

BasisKind parse_basis(std::string_view name);
std::string_view to_string(BasisKind kind);

struct BasisSpec {
    BasisKind kind = BasisKind::quad;
    std::size_t coordinate = 0;  // which covariate plays the role of scalar X
};

/// n x p design matrix: quad = (1, X, X^2); quad_kink adds X 1{X > t} with t
/// the full-sample median of X.
Eigen::MatrixXd basis_matrix(const RowMatrix& x, const BasisSpec& spec);

/// Ordinary median (mean of the two middle order statistics for even n).
double sample_median(std::span<const double> values);

/// Least squares on the rows in `subset`. Rank deficiency is resolved by the
/// minimum-norm solution of a complete orthogonal decomposition, treating
/// pivots below 1e-10 times the largest as zero.
Eigen::VectorXd ols_fit(const Eigen::MatrixXd& basis, std::span<const double> y, std::span<const std::size_t> subset);

struct LogitFit {
    Eigen::VectorXd coef;
    int iterations = 0;
    bool converged = false;
    bool capped = false;  // separation guard hit (|coef| clamped to the cap)
};

struct LogitOptions {
    double score_tolerance = 1e-8;
    int max_iterations = 100;
    double coefficient_cap = 30.0;
};

/// Bernoulli maximum likelihood with an expit link via IRLS. Never throws on
/// separation: coefficients are clamped to +-cap and `capped` is set. When
/// every outcome in the subset is equal, an intercept-only fit at +-cap is
/// returned (requires the first basis column to be the intercept).
LogitFit logit_fit(const Eigen::MatrixXd& basis, std::span<const double> d, std::span<const std::size_t> subset,
                   const LogitOptions& options = {});

/// Arm-specific predictions mu_1(X_i), mu_0(X_i) for every unit.
struct FirstStage {
    Eigen::VectorXd mu1;
    Eigen::VectorXd mu0;
    bool capped = false;
    bool converged = true;
};

FirstStage fit_outcome_ols(const ExperimentData& data, const Eigen::MatrixXd& basis, int column);
FirstStage fit_outcome_logit(const ExperimentData& data, const Eigen::MatrixXd& basis, int column);

struct AdjustedEstimate {
    double theta = 0.0;
    /// Sandwich variance of the augmented moment, treating assignment as
    /// i.i.d.: mean of squared influence terms.
    double vhat_iid = 0.0;
    bool capped = false;
};

/// (1/n) sum [A (Y - mu1)/eta - (1-A)(Y - mu0)/(1-eta) + mu1 - mu0]
/// with mu_a fit by OLS on arm a.
AdjustedEstimate adjusted_ate(const ExperimentData& data, const BasisSpec& basis);

/// Ratio of the augmented-Y sum to the augmented-D sum; mu^Y by OLS, mu^D by
/// logistic regression, each on arm a. Throws ZeroFirstStage when the
/// denominator (per unit) is below `first_stage_tol`.
AdjustedEstimate adjusted_late(const ExperimentData& data, const BasisSpec& basis, double first_stage_tol = 1e-12);

/// Augmented sums with caller-supplied first stages (the estimators above
/// reduce to these once the fits are done).
double augmented_mean(const ExperimentData& data, int column, const FirstStage& fit);

}  // namespace stratkit::adjust
