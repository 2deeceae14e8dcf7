#include "stratkit/moments.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/LU>

#include "stratkit/stats.hpp"

namespace stratkit::moments {
namespace {

void require_columns(const ExperimentData& data, int needed, std::string_view model) {
    if (data.r.cols() < needed) {
        throw Error(ErrorKind::LengthMismatch, std::string(model) + " needs " + std::to_string(needed) +
                                                   " response column(s), got " + std::to_string(data.r.cols()));
    }
}

ThetaVec scalar(double v) {
    ThetaVec t(1);
    t(0) = v;
    return t;
}

JacobianMat scalar_jacobian(double v) {
    JacobianMat j(1, 1);
    j(0, 0) = v;
    return j;
}

std::vector<double> arm_values(const ExperimentData& data, int arm) {
    std::vector<double> out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.a[i] == arm) out.push_back(data.y(i));
    }
    return out;
}

}  // namespace

ThetaVec MomentModel::solve(const ExperimentData&) const {
    throw Error(ErrorKind::InvalidArgument, std::string(name()) + " has no dedicated solver");
}

double MomentModel::transform(const ThetaVec& theta) const {
    if (dim() == 1) return theta(0);
    throw Error(ErrorKind::InvalidArgument, std::string(name()) + " has no scalar transform");
}

ThetaVec MomentModel::sample_moment(const ExperimentData& data, const ThetaVec& theta) const {
    ThetaVec sum = ThetaVec::Zero(dim());
    for (std::size_t i = 0; i < data.size(); ++i) {
        sum += evaluate(data.x_row(i), data.a[i], data.r_row(i), theta, data.eta);
    }
    return sum / static_cast<double>(data.size());
}

JacobianMat MomentModel::jacobian_hat(const ExperimentData& data, const ThetaVec& theta) const {
    const int d = dim();
    JacobianMat jac(d, d);
    for (int j = 0; j < d; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(theta(j)));
        ThetaVec up = theta;
        ThetaVec down = theta;
        up(j) += h;
        down(j) -= h;
        jac.col(j) = (sample_moment(data, up) - sample_moment(data, down)) / (2.0 * h);
    }
    return jac;
}

// --- ATE -------------------------------------------------------------------

double m_ate(int a, double y, double theta, double eta) {
    return a == 1 ? y / eta - theta : -y / (1.0 - eta) - theta;
}

ThetaVec AteModel::evaluate(std::span<const double>, int a, std::span<const double> r, const ThetaVec& theta,
                            double eta) const {
    return scalar(m_ate(a, r[0], theta(0), eta));
}

ThetaVec AteModel::solve(const ExperimentData& data) const {
    require_columns(data, 1, name());
    return scalar(ht_contrast(data, 0));
}

JacobianMat AteModel::jacobian_hat(const ExperimentData&, const ThetaVec&) const { return scalar_jacobian(-1.0); }

double ht_contrast(const ExperimentData& data, int column) {
    const double n = static_cast<double>(data.size());
    double treated = 0.0;
    double control = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double w = data.r(static_cast<Eigen::Index>(i), column);
        if (data.a[i] == 1) {
            treated += w;
        } else {
            control += w;
        }
    }
    return treated / (data.eta * n) - control / ((1.0 - data.eta) * n);
}

// --- QTE -------------------------------------------------------------------

QteModel::QteModel(double tau, QuantileBase base) : tau_(tau), base_(base) {
    if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::InvalidArgument, "tau must lie in (0, 1)");
}

ThetaVec QteModel::evaluate(std::span<const double>, int a, std::span<const double> r, const ThetaVec& theta,
                            double eta) const {
    ThetaVec out(2);
    const double y = r[0];
    out(0) = a == 1 ? (tau_ - (y <= theta(0) ? 1.0 : 0.0)) / eta : 0.0;
    out(1) = a == 0 ? (tau_ - (y <= theta(1) ? 1.0 : 0.0)) / (1.0 - eta) : 0.0;
    return out;
}

ThetaVec QteModel::solve(const ExperimentData& data) const {
    require_columns(data, 1, name());
    ThetaVec out(2);
    const double n = static_cast<double>(data.size());
    for (int arm : {1, 0}) {
        const auto values = arm_values(data, arm);
        if (values.empty()) throw Error(ErrorKind::EmptyArm, arm == 1 ? "no treated units" : "no control units");
        const int slot = arm == 1 ? 0 : 1;
        if (base_ == QuantileBase::realized_arm) {
            out(slot) = weighted_quantile(values, tau_);
        } else {
            const std::vector<double> ones(values.size(), 1.0);
            const double mass = (arm == 1 ? data.eta : 1.0 - data.eta) * n;
            out(slot) = weighted_quantile(values, ones, tau_, mass);
        }
    }
    return out;
}

// --- LATE ------------------------------------------------------------------

ThetaVec LateModel::evaluate(std::span<const double>, int a, std::span<const double> r, const ThetaVec& theta,
                             double eta) const {
    const double w = a == 1 ? 1.0 / eta : -1.0 / (1.0 - eta);
    return scalar(w * r[0] - theta(0) * w * r[1]);
}

ThetaVec LateModel::solve(const ExperimentData& data) const {
    require_columns(data, 2, name());
    const double first_stage = ht_contrast(data, 1);
    if (std::abs(first_stage) < tol_) {
        std::ostringstream msg;
        msg << "first-stage contrast " << first_stage << " is below " << tol_;
        throw Error(ErrorKind::ZeroFirstStage, msg.str());
    }
    return scalar(ht_contrast(data, 0) / first_stage);
}

JacobianMat LateModel::jacobian_hat(const ExperimentData& data, const ThetaVec&) const {
    require_columns(data, 2, name());
    return scalar_jacobian(-ht_contrast(data, 1));
}

// --- WATE ------------------------------------------------------------------

ThetaVec WateModel::evaluate(std::span<const double> x, int a, std::span<const double> r, const ThetaVec& theta,
                             double eta) const {
    const double w = omega_(x);
    return scalar(w * (m_ate(a, r[0], 0.0, eta) - theta(0)));
}

ThetaVec WateModel::solve(const ExperimentData& data) const {
    require_columns(data, 1, name());
    double num = 0.0;
    double mass = 0.0;
    double abs_mass = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double w = omega_(data.x_row(i));
        if (!std::isfinite(w)) {
            throw Error(ErrorKind::NonFiniteValue, "weight at row " + std::to_string(i + 1));
        }
        num += w * m_ate(data.a[i], data.y(i), 0.0, data.eta);
        mass += w;
        abs_mass += std::abs(w);
    }
    if (abs_mass == 0.0 || std::abs(mass) <= 1e-14 * abs_mass) {
        throw Error(ErrorKind::ZeroWeightMass, "weights sum to zero");
    }
    return scalar(num / mass);
}

JacobianMat WateModel::jacobian_hat(const ExperimentData& data, const ThetaVec&) const {
    double mass = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) mass += omega_(data.x_row(i));
    return scalar_jacobian(-mass / static_cast<double>(data.size()));
}

// --- log-odds --------------------------------------------------------------

ThetaVec LogOddsModel::evaluate(std::span<const double>, int a, std::span<const double> r, const ThetaVec& theta,
                                double) const {
    const double resid = r[0] - expit(theta(0) + theta(1) * a);
    ThetaVec out(2);
    out(0) = (1 - a) * resid;
    out(1) = a * resid;
    return out;
}

ThetaVec LogOddsModel::solve(const ExperimentData& data) const {
    require_columns(data, 1, name());
    double p[2] = {0.0, 0.0};
    double count[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double y = data.y(i);
        if (y != 0.0 && y != 1.0) {
            throw Error(ErrorKind::InvalidArgument, "log-odds needs a binary outcome, row " + std::to_string(i + 1));
        }
        p[data.a[i]] += y;
        count[data.a[i]] += 1.0;
    }
    for (int arm : {0, 1}) {
        if (count[arm] == 0.0) throw Error(ErrorKind::EmptyArm, arm == 1 ? "no treated units" : "no control units");
        p[arm] /= count[arm];
        if (p[arm] == 0.0 || p[arm] == 1.0) {
            throw Error(ErrorKind::DegenerateArm, std::string(arm == 1 ? "treated" : "control") +
                                                      " arm mean is " + std::to_string(p[arm]));
        }
    }
    ThetaVec out(2);
    out(0) = logit(p[0]);
    out(1) = logit(p[1]) - logit(p[0]);
    return out;
}

JacobianMat LogOddsModel::jacobian_hat(const ExperimentData& data, const ThetaVec& theta) const {
    // d/dtheta of (1-A, A)' (Y - expit(t1 + t2 A)), averaged.
    const double p0 = expit(theta(0));
    const double p1 = expit(theta(0) + theta(1));
    double n1 = 0.0;
    for (int ai : data.a) n1 += ai;
    const double n = static_cast<double>(data.size());
    const double n0 = n - n1;
    JacobianMat jac(2, 2);
    jac(0, 0) = -p0 * (1.0 - p0) * n0 / n;
    jac(0, 1) = 0.0;
    jac(1, 0) = -p1 * (1.0 - p1) * n1 / n;
    jac(1, 1) = jac(1, 0);
    return jac;
}

// --- user moments ----------------------------------------------------------

FunctionMoment::FunctionMoment(std::string name, int dim, MomentFn fn, int response_dim, bool monotone_separable)
    : name_(std::move(name)), dim_(dim), fn_(std::move(fn)), response_dim_(response_dim), separable_(monotone_separable) {
    if (dim_ < 1 || dim_ > 3) throw Error(ErrorKind::InvalidArgument, "moment dimension must be 1..3");
}

// --- generic solver --------------------------------------------------------

namespace {

struct BisectionOutcome {
    bool ok = false;
    double root = 0.0;
};

// Smallest t (up to bracket resolution) at which f reaches the sign it has on
// the far side of its sign change.
template <typename F>
BisectionOutcome bisect_inf_root(F&& f, double start, int max_iterations) {
    double lo = start - 1.0;
    double hi = start + 1.0;
    double flo = f(lo);
    double fhi = f(hi);
    for (int expand = 0; expand < 200 && !(flo * fhi < 0.0); ++expand) {
        const double width = hi - lo;
        lo -= width;
        hi += width;
        flo = f(lo);
        fhi = f(hi);
        if (!std::isfinite(lo) || !std::isfinite(hi)) break;
    }
    if (!(flo * fhi < 0.0)) return {};
    const bool far_positive = fhi > 0.0;
    auto on_far_side = [&](double v) { return v == 0.0 || (v > 0.0) == far_positive; };
    for (int it = 0; it < max_iterations; ++it) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) break;
        if (on_far_side(f(mid))) {
            hi = mid;
        } else {
            lo = mid;
        }
        if (hi - lo <= 1e-13 * std::max(1.0, std::abs(hi))) break;
    }
    return {true, hi};
}

}  // namespace

ThetaVec solve_generic(const MomentModel& model, const ExperimentData& data, const ThetaVec& theta_init,
                       const GenericSolverOptions& options) {
    const int d = model.dim();
    if (d < 1 || d > 3) throw Error(ErrorKind::InvalidArgument, "solve_generic supports d_theta <= 3");
    if (theta_init.size() != d) throw Error(ErrorKind::LengthMismatch, "theta_init has the wrong dimension");
    if (data.size() == 0) throw Error(ErrorKind::EmptyInput, "no units");

    auto residual = [&](const ThetaVec& t) { return model.sample_moment(data, t); };

    auto bisect_all = [&](ThetaVec theta) -> std::optional<ThetaVec> {
        for (int j = 0; j < d; ++j) {
            auto component = [&](double v) {
                ThetaVec t = theta;
                t(j) = v;
                return residual(t)(j);
            };
            const auto out = bisect_inf_root(component, theta(j), options.max_bisection_iterations);
            if (!out.ok) return std::nullopt;
            theta(j) = out.root;
        }
        return theta;
    };

    if (model.monotone_separable()) {
        if (auto root = bisect_all(theta_init)) return *root;
        throw Error(ErrorKind::NoConvergence, "no sign change found for a monotone moment");
    }

    ThetaVec theta = theta_init;
    ThetaVec g = residual(theta);
    double norm = g.norm();
    int iterations = 0;
    for (; iterations < options.max_newton_iterations && norm > options.tolerance; ++iterations) {
        JacobianMat jac(d, d);
        for (int j = 0; j < d; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(theta(j)));
            ThetaVec up = theta;
            ThetaVec down = theta;
            up(j) += h;
            down(j) -= h;
            jac.col(j) = (residual(up) - residual(down)) / (2.0 * h);
        }
        Eigen::FullPivLU<JacobianMat> lu(jac);
        if (!lu.isInvertible()) break;
        const ThetaVec step = lu.solve(-g);
        double t = 1.0;
        bool improved = false;
        for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
            const ThetaVec trial = theta + t * step;
            const ThetaVec g_trial = residual(trial);
            if (g_trial.allFinite() && g_trial.norm() < norm) {
                theta = trial;
                g = g_trial;
                norm = g.norm();
                improved = true;
                break;
            }
        }
        if (!improved) break;
    }
    if (norm <= options.tolerance) return theta;

    if (d == 1) {
        if (auto root = bisect_all(theta_init)) {
            const double r = residual(*root).norm();
            if (std::isfinite(r)) return *root;
        }
    }
    std::ostringstream msg;
    msg << "after " << iterations << " Newton iterations the moment norm is " << norm;
    throw Error(ErrorKind::NoConvergence, msg.str());
}

ThetaVec solve(const MomentModel& model, const ExperimentData& data, const ThetaVec& theta_init) {
    return model.has_solver() ? model.solve(data) : solve_generic(model, data, theta_init);
}

std::unique_ptr<MomentModel> make_model(std::string_view name, double tau, WeightFn omega) {
    if (name == "ate") return std::make_unique<AteModel>();
    if (name == "qte") return std::make_unique<QteModel>(tau);
    if (name == "late") return std::make_unique<LateModel>();
    if (name == "wate") {
        if (!omega) throw Error(ErrorKind::InvalidArgument, "wate needs a weight function");
        return std::make_unique<WateModel>(std::move(omega));
    }
    if (name == "logodds") return std::make_unique<LogOddsModel>();
    throw Error(ErrorKind::InvalidArgument, "unknown parameter '" + std::string(name) + "'");
}

}  // namespace stratkit::moments
