#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "stratkit/core.hpp"

namespace stratkit::moments {

/// A parameter defined by E[m(X, A, R, theta)] = 0 with a known function m.
///
/// Models with a closed-form sample solution override `solve`; everything
/// else goes through `solve_generic`. `jacobian_hat` is the averaged sample
/// derivative (1/n) sum_i dm/dtheta at theta; the default implementation uses
/// central differences.
class MomentModel {
  public:
    virtual ~MomentModel() = default;

    virtual std::string_view name() const = 0;
    virtual int dim() const = 0;
    /// Number of response columns the model reads.
    virtual int response_dim() const { return 1; }

    virtual ThetaVec evaluate(std::span<const double> x, int a, std::span<const double> r, const ThetaVec& theta,
                              double eta) const = 0;

    virtual bool has_solver() const { return false; }
    virtual ThetaVec solve(const ExperimentData& data) const;
    virtual JacobianMat jacobian_hat(const ExperimentData& data, const ThetaVec& theta) const;

    virtual bool has_transform() const { return false; }
    virtual double transform(const ThetaVec& theta) const;

    /// Each component is monotone in its own coordinate and independent of
    /// the others (the quantile moments). Lets the generic solver bisect.
    virtual bool monotone_separable() const { return false; }

    /// (1/n) sum_i m(X_i, A_i, R_i, theta)
    ThetaVec sample_moment(const ExperimentData& data, const ThetaVec& theta) const;
};

/// m = Y A / eta - Y (1 - A) / (1 - eta) - theta
double m_ate(int a, double y, double theta, double eta);

class AteModel final : public MomentModel {
  public:
    std::string_view name() const override { return "ate"; }
    int dim() const override { return 1; }
    ThetaVec evaluate(std::span<const double> x, int a, std::span<const double> r, const ThetaVec& theta,
                      double eta) const override;
    bool has_solver() const override { return true; }
    ThetaVec solve(const ExperimentData& data) const override;
    JacobianMat jacobian_hat(const ExperimentData& data, const ThetaVec& theta) const override;
};

enum class QuantileBase {
    realized_arm,  // empirical quantile of the realized arm sample
    eta_scaled,    // F(v) = sum_{A=a} 1{Y <= v} / (eta_a n), the literal sample moment
};

/// theta = (q_{Y(1)}(tau), q_{Y(0)}(tau)); transform gives the QTE.
class QteModel final : public MomentModel {
  public:
    explicit QteModel(double tau, QuantileBase base = QuantileBase::realized_arm);

    std::string_view name() const override { return "qte"; }
    int dim() const override { return 2; }
    ThetaVec evaluate(std::span<const double> x, int a, std::span<const double> r, const ThetaVec& theta,
                      double eta) const override;
    bool has_solver() const override { return true; }
    ThetaVec solve(const ExperimentData& data) const override;
    bool has_transform() const override { return true; }
    double transform(const ThetaVec& theta) const override { return theta(0) - theta(1); }
    bool monotone_separable() const override { return true; }

    double tau() const { return tau_; }

  private:
    double tau_;
    QuantileBase base_;
};

/// Horvitz-Thompson contrast (1/(eta n)) sum W A - (1/((1-eta) n)) sum W (1-A)
/// of response column `column`.
double ht_contrast(const ExperimentData& data, int column);

/// Wald ratio; responses are (Y, D).
class LateModel final : public MomentModel {
  public:
    explicit LateModel(double first_stage_tol = 1e-12) : tol_(first_stage_tol) {}

    std::string_view name() const override { return "late"; }
    int dim() const override { return 1; }
    int response_dim() const override { return 2; }
    ThetaVec evaluate(std::span<const double> x, int a, std::span<const double> r, const ThetaVec& theta,
                      double eta) const override;
    bool has_solver() const override { return true; }
    ThetaVec solve(const ExperimentData& data) const override;
    JacobianMat jacobian_hat(const ExperimentData& data, const ThetaVec& theta) const override;

  private:
    double tol_;
};

using WeightFn = std::function<double(std::span<const double>)>;

/// Weighted ATE with a known covariate weight omega(x).
class WateModel final : public MomentModel {
  public:
    explicit WateModel(WeightFn omega) : omega_(std::move(omega)) {}

    std::string_view name() const override { return "wate"; }
    int dim() const override { return 1; }
    ThetaVec evaluate(std::span<const double> x, int a, std::span<const double> r, const ThetaVec& theta,
                      double eta) const override;
    bool has_solver() const override { return true; }
    ThetaVec solve(const ExperimentData& data) const override;
    JacobianMat jacobian_hat(const ExperimentData& data, const ThetaVec& theta) const override;

  private:
    WeightFn omega_;
};

/// theta = (logit E Y(0), logit E Y(1) - logit E Y(0)); transform extracts
/// the log-odds ratio.
class LogOddsModel final : public MomentModel {
  public:
    std::string_view name() const override { return "logodds"; }
    int dim() const override { return 2; }
    ThetaVec evaluate(std::span<const double> x, int a, std::span<const double> r, const ThetaVec& theta,
                      double eta) const override;
    bool has_solver() const override { return true; }
    ThetaVec solve(const ExperimentData& data) const override;
    JacobianMat jacobian_hat(const ExperimentData& data, const ThetaVec& theta) const override;
    bool has_transform() const override { return true; }
    double transform(const ThetaVec& theta) const override { return theta(1); }
};

using MomentFn = std::function<ThetaVec(std::span<const double> x, int a, std::span<const double> r,
                                        const ThetaVec& theta, double eta)>;

/// User-supplied moment without a dedicated solver.
class FunctionMoment final : public MomentModel {
  public:
    FunctionMoment(std::string name, int dim, MomentFn fn, int response_dim = 1, bool monotone_separable = false);

    std::string_view name() const override { return name_; }
    int dim() const override { return dim_; }
    int response_dim() const override { return response_dim_; }
    ThetaVec evaluate(std::span<const double> x, int a, std::span<const double> r, const ThetaVec& theta,
                      double eta) const override {
        return fn_(x, a, r, theta, eta);
    }
    bool monotone_separable() const override { return separable_; }

  private:
    std::string name_;
    int dim_;
    MomentFn fn_;
    int response_dim_;
    bool separable_;
};

struct GenericSolverOptions {
    double tolerance = 1e-10;
    int max_newton_iterations = 100;
    int max_bisection_iterations = 400;
};

/// Zero of the sample moment for an arbitrary model (d_theta <= 3).
/// Smooth moments: damped Newton with a central-difference Jacobian.
/// Monotone separable moments (and d_theta = 1 when Newton stalls): bisection
/// per coordinate for the smallest theta at which the moment reaches its
/// far-side sign, i.e. the inf-convention root of a step function.
ThetaVec solve_generic(const MomentModel& model, const ExperimentData& data, const ThetaVec& theta_init,
                       const GenericSolverOptions& options = {});

/// Dedicated solver if available, otherwise solve_generic from theta_init.
ThetaVec solve(const MomentModel& model, const ExperimentData& data, const ThetaVec& theta_init);

/// Builds a model by CLI name: ate | qte | late | wate | logodds.
std::unique_ptr<MomentModel> make_model(std::string_view name, double tau = 0.5, WeightFn omega = {});

}  // namespace stratkit::moments
