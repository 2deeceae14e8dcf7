#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace stratkit {

enum class ErrorKind {
    NonBinaryTreatment,
    NonFiniteValue,
    LengthMismatch,
    EtaOutOfRange,
    EmptyInput,
    NotDivisible,
    NonIntegralCount,
    EmptyStratum,
    EmptyArm,
    QuantileUnreachable,
    ZeroFirstStage,
    ZeroWeightMass,
    DegenerateArm,
    NoConvergence,
    NonScalarParameter,
    NegativeVariance,
    TooFewReplications,
    MissingColumn,
    NonNumericCovariate,
    SchemaError,
    InvalidArgument,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind, so callers (the CLI,
/// the Monte Carlo harness) can branch on it without parsing messages.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::span<const double> row_span(const RowMatrix& m, Eigen::Index i) {
    return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

/// Observed experiment: covariates X (n x d_x), assignment A, responses R
/// (n x d_r) and the known assignment probability eta.
struct ExperimentData {
    RowMatrix x;
    std::vector<int> a;
    RowMatrix r;
    double eta = 0.5;

    std::size_t size() const { return a.size(); }
    std::span<const double> x_row(std::size_t i) const { return row_span(x, static_cast<Eigen::Index>(i)); }
    std::span<const double> r_row(std::size_t i) const { return row_span(r, static_cast<Eigen::Index>(i)); }
    double y(std::size_t i) const { return r(static_cast<Eigen::Index>(i), 0); }
    std::size_t treated_count() const;
};

/// Simulation-side potential responses. Assignment reveals R = R(1)A + R(0)(1-A).
struct PotentialData {
    RowMatrix x;
    RowMatrix r1;
    RowMatrix r0;

    std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
    ExperimentData reveal(std::span<const int> assignment, double eta) const;
};

/// Block shape: l treated out of every k units, so eta = l/k.
struct BlockShape {
    std::size_t l = 1;
    std::size_t k = 2;

    double eta() const { return static_cast<double>(l) / static_cast<double>(k); }
    bool operator==(const BlockShape&) const = default;
};

/// Blocks lambda_1..lambda_{n/k}; indices are 0-based internally.
struct BlockPartition {
    std::vector<std::vector<std::size_t>> blocks;
    BlockShape shape;

    std::size_t unit_count() const { return blocks.size() * shape.k; }
    std::size_t block_count() const { return blocks.size(); }
};

/// Throws InvalidArgument unless the blocks partition {0..n-1} with size k.
void check_partition(const BlockPartition& partition, std::size_t n);

using ThetaVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using JacobianMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct Estimate {
    ThetaVec theta;
    std::optional<double> transformed;
    std::optional<double> vhat;
    std::optional<double> se;
    std::optional<Interval> ci;
};

/// Checks every ExperimentData invariant; returns the data unchanged on success.
const ExperimentData& validate(const ExperimentData& data);

/// q(tau) = inf{v : F(v) >= tau} for the empirical distribution of `values`.
double weighted_quantile(std::span<const double> values, double tau);

/// Weighted variant: F(v) = sum_{y_i <= v} w_i / total_mass. Pass total_mass
/// <= 0 to use sum(w). Throws QuantileUnreachable when F never reaches tau.
double weighted_quantile(std::span<const double> values, std::span<const double> weights, double tau,
                         double total_mass = 0.0);

}  // namespace stratkit
