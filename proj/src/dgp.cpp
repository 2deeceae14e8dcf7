#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

#include "stratkit/moments.hpp"
#include "stratkit/simbench.hpp"
#include "stratkit/stats.hpp"

namespace stratkit::simbench {

Arm parse_arm(std::string_view name) {
    if (name == "ate") return Arm::ate;
    if (name == "late") return Arm::late;
    throw Error(ErrorKind::SchemaError, "unknown parameter '" + std::string(name) + "' (expected ate or late)");
}

const char* to_string(Arm arm) { return arm == Arm::ate ? "ate" : "late"; }

void check_spec(const DgpSpec& spec) {
    if (spec.model < 1 || spec.model > 3) {
        throw Error(ErrorKind::InvalidArgument, "model must be 1, 2 or 3, got " + std::to_string(spec.model));
    }
    if (spec.sigma_override && !(*spec.sigma_override > 0.0 && std::isfinite(*spec.sigma_override))) {
        throw Error(ErrorKind::InvalidArgument, "sigma_override must be positive");
    }
}

double mu(int model, int a, double x) {
    const double q = (x * x - 1.0) / 3.0;
    switch (model) {
        case 1:
            return (a == 1 ? 0.2 : 0.0) + x + q;
        case 2: {
            const double s = std::sin(x) + x;
            return a == 1 ? 0.2 + s + q : -s + q;
        }
        case 3:
            return a == 1 ? 0.2 + 3.0 * (x * x - 1.0) : 0.0;
        default:
            throw Error(ErrorKind::InvalidArgument, "unknown model " + std::to_string(model));
    }
}

double sigma(const DgpSpec& spec, int a, double x) {
    if (spec.model == 1) return spec.sigma_override.value_or(2.0);
    return (1.0 + a) * x * x;
}

double compliance_index(double x) { return x + (x * x - 1.0) / 3.0; }

namespace {

struct LateDraw {
    double y1, y0;
    int d1, d0;
};

LateDraw late_unit(const DgpSpec& spec, double x, double eps, double e1, double e2) {
    const double alpha = compliance_index(x);
    const int d0 = 0.5 + alpha > e1 ? 1 : 0;
    const int d1 = d0 == 1 ? 1 : (1.0 + alpha > e2 ? 1 : 0);
    auto y = [&](int d) { return mu(spec.model, d, x) + sigma(spec, d, x) * eps; };
    return {y(d1), y(d0), d1, d0};
}

}  // namespace

PotentialData draw_potential_ate(const DgpSpec& spec, Rng& rng) {
    check_spec(spec);
    const auto n = static_cast<Eigen::Index>(spec.n);
    PotentialData out;
    out.x.resize(n, 1);
    out.r1.resize(n, 1);
    out.r0.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = rng.normal();
        const double eps = rng.normal();
        out.x(i, 0) = x;
        out.r1(i, 0) = mu(spec.model, 1, x) + sigma(spec, 1, x) * eps;
        out.r0(i, 0) = mu(spec.model, 0, x) + sigma(spec, 0, x) * eps;
    }
    return out;
}

PotentialData draw_potential_late(const DgpSpec& spec, Rng& rng) {
    check_spec(spec);
    const auto n = static_cast<Eigen::Index>(spec.n);
    PotentialData out;
    out.x.resize(n, 1);
    out.r1.resize(n, 2);
    out.r0.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = rng.normal();
        const double eps = rng.normal();
        const double e1 = 2.0 * rng.normal();
        const double e2 = 2.0 * rng.normal();
        const LateDraw u = late_unit(spec, x, eps, e1, e2);
        out.x(i, 0) = x;
        out.r1(i, 0) = u.y1;
        out.r1(i, 1) = u.d1;
        out.r0(i, 0) = u.y0;
        out.r0(i, 1) = u.d0;
    }
    return out;
}

PotentialData draw_potential(const DgpSpec& spec, Rng& rng) {
    return spec.arm == Arm::ate ? draw_potential_ate(spec, rng) : draw_potential_late(spec, rng);
}

BuiltinSampler::BuiltinSampler(DgpSpec spec) : spec_(spec) { check_spec(spec_); }

void BuiltinSampler::draw_x(std::span<const double> u, std::span<double> x) const { x[0] = normal_quantile(u[0]); }

void BuiltinSampler::draw_responses(std::span<const double> x, std::span<const double> u, std::span<double> r1,
                                    std::span<double> r0) const {
    const double eps = normal_quantile(u[0]);
    if (spec_.arm == Arm::ate) {
        r1[0] = mu(spec_.model, 1, x[0]) + sigma(spec_, 1, x[0]) * eps;
        r0[0] = mu(spec_.model, 0, x[0]) + sigma(spec_, 0, x[0]) * eps;
        return;
    }
    const LateDraw d = late_unit(spec_, x[0], eps, 2.0 * normal_quantile(u[1]), 2.0 * normal_quantile(u[2]));
    r1[0] = d.y1;
    r1[1] = d.d1;
    r0[0] = d.y0;
    r0[1] = d.d0;
}

variance::AteMoments ate_moments(const DgpSpec& spec) {
    check_spec(spec);
    variance::AteMoments m;
    constexpr double eq2 = 2.0 / 9.0;  // E[((X^2-1)/3)^2]
    switch (spec.model) {
        case 1: {
            const double s = spec.sigma_override.value_or(2.0);
            m.e_mu1 = 0.2;
            m.e_mu0_sq = 1.0 + eq2;
            m.e_mu1_sq = 0.04 + m.e_mu0_sq;
            m.e_mu1_mu0 = m.e_mu0_sq;
            m.e_sigma1_sq = m.e_sigma0_sq = s * s;
            break;
        }
        case 2: {
            // Var(sin X + X) from E[sin^2 X] = (1 - e^-2)/2 and E[X sin X] = e^-1/2
            const double vs = (1.0 - std::exp(-2.0)) / 2.0 + 2.0 * std::exp(-0.5) + 1.0;
            m.e_mu1 = 0.2;
            m.e_mu1_sq = 0.04 + vs + eq2;
            m.e_mu0_sq = vs + eq2;
            m.e_mu1_mu0 = -vs + eq2;
            m.e_sigma1_sq = 12.0;
            m.e_sigma0_sq = 3.0;
            break;
        }
        case 3:
            m.e_mu1 = 0.2;
            m.e_mu1_sq = 0.04 + 18.0;
            m.e_sigma1_sq = 12.0;
            m.e_sigma0_sq = 3.0;
            break;
    }
    return m;
}

TrueTheta true_theta(const DgpSpec& spec, std::uint64_t draws, std::uint64_t seed) {
    check_spec(spec);
    if (spec.arm == Arm::ate) return {0.2, 0.0, 0, 0};
    if (draws < 2) throw Error(ErrorKind::InvalidArgument, "true_theta needs at least two draws");

    static std::mutex cache_mutex;
    static std::map<std::tuple<int, std::uint64_t, std::uint64_t>, TrueTheta> cache;
    const auto key = std::make_tuple(spec.model, draws, seed);
    {
        std::lock_guard lock(cache_mutex);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }

    // Complier probability given X integrates e1, e2 out analytically.
    Rng rng = Rng::derive(seed, {stream_tag("late-theta"), static_cast<std::uint64_t>(spec.model)});
    double sp = 0.0, spd = 0.0, spd2 = 0.0, sp2d = 0.0, sp2 = 0.0;
    for (std::uint64_t i = 0; i < draws; ++i) {
        const double x = rng.normal();
        const double alpha = compliance_index(x);
        const double p = (1.0 - normal_cdf((0.5 + alpha) / 2.0)) * normal_cdf((1.0 + alpha) / 2.0);
        const double delta = mu(spec.model, 1, x) - mu(spec.model, 0, x);
        sp += p;
        spd += p * delta;
        spd2 += p * p * delta * delta;
        sp2d += p * p * delta;
        sp2 += p * p;
    }
    const double nd = static_cast<double>(draws);
    TrueTheta out;
    out.value = spd / sp;
    const double ez2 = (spd2 - 2.0 * out.value * sp2d + out.value * out.value * sp2) / nd;
    out.std_error = std::sqrt(std::max(0.0, ez2) / nd) / (sp / nd);
    out.draws = draws;
    out.seed = seed;

    std::lock_guard lock(cache_mutex);
    cache.emplace(key, out);
    return out;
}

variance::OracleVariances oracle_variances(const DgpSpec& spec, double eta, OraclePath path,
                                           const variance::QuasiMcOptions& qmc) {
    check_spec(spec);
    const bool closed = path == OraclePath::closed_form || (path == OraclePath::automatic && spec.arm == Arm::ate);
    if (closed) {
        if (spec.arm != Arm::ate) throw Error(ErrorKind::InvalidArgument, "no closed form for the LATE oracle");
        return variance::ate_closed_form(ate_moments(spec), eta);
    }
    const BuiltinSampler sampler(spec);
    if (spec.arm == Arm::ate) return variance::quasi_mc(sampler, moments::AteModel{}, eta, qmc);
    return variance::quasi_mc(sampler, moments::LateModel{}, eta, qmc);
}

}  // namespace stratkit::simbench
