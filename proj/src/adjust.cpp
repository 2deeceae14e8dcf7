#include "stratkit/adjust.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/QR>

#include "stratkit/stats.hpp"

namespace stratkit::adjust {

BasisKind parse_basis(std::string_view name) {
    if (name == "quad") return BasisKind::quad;
    if (name == "quad-kink" || name == "quad_kink") return BasisKind::quad_kink;
    if (name == "intercept") return BasisKind::intercept;
    if (name == "zero") return BasisKind::zero;
    throw Error(ErrorKind::InvalidArgument, "unknown basis '" + std::string(name) + "'");
}

std::string_view to_string(BasisKind kind) {
    switch (kind) {
        case BasisKind::zero: return "zero";
        case BasisKind::intercept: return "intercept";
        case BasisKind::quad: return "quad";
        case BasisKind::quad_kink: return "quad-kink";
    }
    return "?";
}

double sample_median(std::span<const double> values) {
    if (values.empty()) throw Error(ErrorKind::EmptyInput, "median of an empty sample");
    std::vector<double> v(values.begin(), values.end());
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

Eigen::MatrixXd basis_matrix(const RowMatrix& x, const BasisSpec& spec) {
    const Eigen::Index n = x.rows();
    const auto col = static_cast<Eigen::Index>(spec.coordinate);
    if (col >= x.cols()) throw Error(ErrorKind::InvalidArgument, "basis coordinate out of range");
    const Eigen::VectorXd xs = x.col(col);
    switch (spec.kind) {
        case BasisKind::zero:
            return Eigen::MatrixXd(n, 0);
        case BasisKind::intercept:
            return Eigen::MatrixXd::Ones(n, 1);
        case BasisKind::quad: {
            Eigen::MatrixXd b(n, 3);
            b.col(0).setOnes();
            b.col(1) = xs;
            b.col(2) = xs.array().square();
            return b;
        }
        case BasisKind::quad_kink: {
            const double t = sample_median(std::span<const double>(xs.data(), static_cast<std::size_t>(n)));
            Eigen::MatrixXd b(n, 4);
            b.col(0).setOnes();
            b.col(1) = xs;
            b.col(2) = xs.array().square();
            b.col(3) = (xs.array() > t).select(xs, 0.0);
            return b;
        }
    }
    throw Error(ErrorKind::InvalidArgument, "unknown basis");
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

Eigen::VectorXd take(std::span<const double> v, std::span<const std::size_t> rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[rows[i]];
    return out;
}

Eigen::VectorXd min_norm_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(1e-10);
    cod.compute(a);
    return cod.solve(b);
}

std::vector<std::size_t> arm_rows(const ExperimentData& data, int arm) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.a[i] == arm) rows.push_back(i);
    }
    if (rows.empty()) throw Error(ErrorKind::EmptyArm, arm == 1 ? "no treated units" : "no control units");
    return rows;
}

std::vector<double> response_column(const ExperimentData& data, int column) {
    if (data.r.cols() <= column) {
        throw Error(ErrorKind::LengthMismatch, "response column " + std::to_string(column + 1) + " missing");
    }
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = data.r(static_cast<Eigen::Index>(i), column);
    return out;
}

}  // namespace

Eigen::VectorXd ols_fit(const Eigen::MatrixXd& basis, std::span<const double> y, std::span<const std::size_t> subset) {
    if (subset.empty()) throw Error(ErrorKind::EmptyInput, "ols_fit on an empty subset");
    if (basis.cols() == 0) return Eigen::VectorXd(0);
    return min_norm_solve(take_rows(basis, subset), take(y, subset));
}

LogitFit logit_fit(const Eigen::MatrixXd& basis, std::span<const double> d, std::span<const std::size_t> subset,
                   const LogitOptions& options) {
    if (subset.empty()) throw Error(ErrorKind::EmptyInput, "logit_fit on an empty subset");
    const Eigen::MatrixXd xs = take_rows(basis, subset);
    const Eigen::VectorXd ds = take(d, subset);
    const Eigen::Index p = xs.cols();

    LogitFit fit;
    fit.coef = Eigen::VectorXd::Zero(p);
    if (p == 0) {
        fit.converged = true;
        return fit;
    }
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        if (ds(i) != 0.0 && ds(i) != 1.0) throw Error(ErrorKind::InvalidArgument, "logit_fit needs a binary outcome");
    }
    const double total = ds.sum();
    if (total == 0.0 || total == static_cast<double>(ds.size())) {
        fit.coef(0) = total == 0.0 ? -options.coefficient_cap : options.coefficient_cap;
        fit.capped = true;
        return fit;
    }

    int clamped_in_a_row = 0;
    for (fit.iterations = 0; fit.iterations < options.max_iterations; ++fit.iterations) {
        const Eigen::VectorXd prob = (xs * fit.coef).unaryExpr([](double z) { return expit(z); });
        const Eigen::VectorXd score = xs.transpose() * (ds - prob);
        if (score.cwiseAbs().maxCoeff() <= options.score_tolerance) {
            fit.converged = true;
            break;
        }
        const Eigen::VectorXd w = prob.array() * (1.0 - prob.array());
        const Eigen::MatrixXd info = xs.transpose() * w.asDiagonal() * xs;
        fit.coef += min_norm_solve(info, score);
        if (fit.coef.cwiseAbs().maxCoeff() > options.coefficient_cap) {
            fit.coef = fit.coef.cwiseMax(-options.coefficient_cap).cwiseMin(options.coefficient_cap);
            fit.capped = true;
            if (++clamped_in_a_row >= 2) break;
        } else {
            clamped_in_a_row = 0;
        }
    }
    return fit;
}

FirstStage fit_outcome_ols(const ExperimentData& data, const Eigen::MatrixXd& basis, int column) {
    const auto values = response_column(data, column);
    FirstStage out;
    const Eigen::Index n = static_cast<Eigen::Index>(data.size());
    if (basis.cols() == 0) {
        out.mu1 = Eigen::VectorXd::Zero(n);
        out.mu0 = Eigen::VectorXd::Zero(n);
        return out;
    }
    out.mu1 = basis * ols_fit(basis, values, arm_rows(data, 1));
    out.mu0 = basis * ols_fit(basis, values, arm_rows(data, 0));
    return out;
}

FirstStage fit_outcome_logit(const ExperimentData& data, const Eigen::MatrixXd& basis, int column) {
    const auto values = response_column(data, column);
    FirstStage out;
    const Eigen::Index n = static_cast<Eigen::Index>(data.size());
    if (basis.cols() == 0) {
        out.mu1 = Eigen::VectorXd::Zero(n);
        out.mu0 = Eigen::VectorXd::Zero(n);
        return out;
    }
    const auto f1 = logit_fit(basis, values, arm_rows(data, 1));
    const auto f0 = logit_fit(basis, values, arm_rows(data, 0));
    out.mu1 = (basis * f1.coef).unaryExpr([](double z) { return expit(z); });
    out.mu0 = (basis * f0.coef).unaryExpr([](double z) { return expit(z); });
    out.capped = f1.capped || f0.capped;
    out.converged = f1.converged && f0.converged;
    return out;
}

namespace {

double augmented_term(const ExperimentData& data, std::size_t i, int column, const FirstStage& fit) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double w = data.r(ii, column);
    const double mu1 = fit.mu1(ii);
    const double mu0 = fit.mu0(ii);
    const double resid = data.a[i] == 1 ? (w - mu1) / data.eta : -(w - mu0) / (1.0 - data.eta);
    return resid + mu1 - mu0;
}

}  // namespace

double augmented_mean(const ExperimentData& data, int column, const FirstStage& fit) {
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) sum += augmented_term(data, i, column, fit);
    return sum / static_cast<double>(data.size());
}

AdjustedEstimate adjusted_ate(const ExperimentData& data, const BasisSpec& basis) {
    const auto fit = fit_outcome_ols(data, basis_matrix(data.x, basis), 0);
    AdjustedEstimate out;
    out.theta = augmented_mean(data, 0, fit);
    double ss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double psi = augmented_term(data, i, 0, fit) - out.theta;
        ss += psi * psi;
    }
    out.vhat_iid = ss / static_cast<double>(data.size());
    return out;
}

AdjustedEstimate adjusted_late(const ExperimentData& data, const BasisSpec& basis, double first_stage_tol) {
    const Eigen::MatrixXd b = basis_matrix(data.x, basis);
    const auto fit_y = fit_outcome_ols(data, b, 0);
    const auto fit_d = fit_outcome_logit(data, b, 1);
    const double num = augmented_mean(data, 0, fit_y);
    const double den = augmented_mean(data, 1, fit_d);
    if (std::abs(den) < first_stage_tol) {
        throw Error(ErrorKind::ZeroFirstStage, "augmented first stage is " + std::to_string(den));
    }
    AdjustedEstimate out;
    out.theta = num / den;
    out.capped = fit_d.capped;
    double ss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double psi = (augmented_term(data, i, 0, fit_y) - out.theta * augmented_term(data, i, 1, fit_d)) / den;
        ss += psi * psi;
    }
    out.vhat_iid = ss / static_cast<double>(data.size());
    return out;
}

}  // namespace stratkit::adjust
