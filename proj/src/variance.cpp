#include "stratkit/variance.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include "stratkit/stats.hpp"

namespace stratkit::variance {
namespace {

struct BlockArms {
    std::vector<double> treated;
    std::vector<double> control;
};

// Mean over blocks of the average pairwise product within each block.
double within_average(const std::vector<BlockArms>& blocks, bool treated) {
    double total = 0.0;
    for (const auto& b : blocks) {
        const auto& v = treated ? b.treated : b.control;
        double s = 0.0;
        for (std::size_t p = 0; p < v.size(); ++p) {
            for (std::size_t q = p + 1; q < v.size(); ++q) s += v[p] * v[q];
        }
        const double pairs = 0.5 * static_cast<double>(v.size() * (v.size() - 1));
        total += s / pairs;
    }
    return total / static_cast<double>(blocks.size());
}

// Single unit per block: products across blocks (1,2), (3,4), ...
double between_average(const std::vector<BlockArms>& blocks, bool treated) {
    const std::size_t pairs = blocks.size() / 2;
    if (pairs == 0) throw Error(ErrorKind::InvalidArgument, "between-block variance needs at least two blocks");
    double total = 0.0;
    for (std::size_t j = 0; j < pairs; ++j) {
        const auto& u = treated ? blocks[2 * j].treated : blocks[2 * j].control;
        const auto& w = treated ? blocks[2 * j + 1].treated : blocks[2 * j + 1].control;
        total += u[0] * w[0];
    }
    return total / static_cast<double>(pairs);
}

}  // namespace

const char* to_string(VarsigmaVariant v) { return v == VarsigmaVariant::within ? "within" : "between"; }

VarianceBreakdown vhat_fine(const ExperimentData& data, const BlockPartition& partition,
                            const moments::MomentModel& model, const ThetaVec& theta) {
    if (model.dim() != 1) {
        throw Error(ErrorKind::NonScalarParameter,
                    "variance is only available for scalar parameters; '" + std::string(model.name()) + "' has " +
                        std::to_string(model.dim()) + " components");
    }
    const std::size_t n = data.size();
    check_partition(partition, n);
    const BlockShape shape = partition.shape;
    const double eta = data.eta;
    if (std::abs(shape.eta() - eta) > 1e-12) {
        throw Error(ErrorKind::InvalidArgument, "block shape l/k does not match eta");
    }

    std::vector<double> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = model.evaluate(data.x_row(i), data.a[i], data.r_row(i), theta, eta)(0);

    VarianceBreakdown out;
    out.m_hat = model.jacobian_hat(data, theta)(0, 0);

    const double nd = static_cast<double>(n);
    double s1 = 0.0, s0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) (data.a[i] == 1 ? s1 : s0) += m[i];
    out.mu1 = s1 / (eta * nd);
    out.mu0 = s0 / ((1.0 - eta) * nd);

    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = m[i] - (data.a[i] == 1 ? out.mu1 : out.mu0);
        ss += d * d;
    }
    out.sigma1 = ss / nd;

    std::vector<BlockArms> blocks(partition.block_count());
    double cross = 0.0;
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        for (std::size_t i : partition.blocks[j]) (data.a[i] == 1 ? blocks[j].treated : blocks[j].control).push_back(m[i]);
        if (blocks[j].treated.size() != shape.l) {
            throw Error(ErrorKind::InvalidArgument, "block " + std::to_string(j + 1) + " has " +
                                                        std::to_string(blocks[j].treated.size()) +
                                                        " treated units, expected " + std::to_string(shape.l));
        }
        double s = 0.0;
        for (double t : blocks[j].treated) {
            for (double c : blocks[j].control) s += t * c;
        }
        cross += s / static_cast<double>(shape.l * (shape.k - shape.l));
    }
    out.varsigma01 = cross / static_cast<double>(blocks.size());

    const bool odd = blocks.size() % 2 == 1;
    if (shape.l > 1) {
        out.varsigma11 = within_average(blocks, true);
    } else {
        out.variant11 = VarsigmaVariant::between;
        out.varsigma11 = between_average(blocks, true);
        out.odd_block_dropped = odd;
    }
    if (shape.k - shape.l > 1) {
        out.varsigma00 = within_average(blocks, false);
    } else {
        out.variant00 = VarsigmaVariant::between;
        out.varsigma00 = between_average(blocks, false);
        out.odd_block_dropped = odd;
    }

    const double gap = out.mu1 - out.mu0;
    out.sigma2 = -eta * (1.0 - eta) * (out.varsigma11 + out.varsigma00 - 2.0 * out.varsigma01 - gap * gap);
    out.vhat = (out.sigma1 + out.sigma2) / (out.m_hat * out.m_hat);
    return out;
}

Interval confidence_interval(double theta, double vhat, std::size_t n, double level) {
    if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::InvalidArgument, "level must lie in (0, 1)");
    if (n == 0) throw Error(ErrorKind::EmptyInput, "confidence interval with n = 0");
    if (!(vhat >= 0.0)) throw Error(ErrorKind::NegativeVariance, "variance estimate " + std::to_string(vhat) + " < 0");
    const double half = normal_quantile(0.5 + 0.5 * level) * std::sqrt(vhat / static_cast<double>(n));
    return {theta - half, theta + half};
}

double empirical_variance(std::span<const double> estimates, std::size_t n) {
    if (estimates.size() < 2) throw Error(ErrorKind::TooFewReplications, "need at least two replications");
    return static_cast<double>(n) * sample_variance(estimates);
}

std::string describe(const OracleVariances& o) {
    char buf[256];
    if (o.method == OracleMethod::closed_form) {
        std::snprintf(buf, sizeof buf, "v=%.6f v_star=%.6f ratio=%.6f method=closed_form", o.v, o.v_star, o.ratio);
    } else {
        std::snprintf(buf, sizeof buf, "v=%.6f v_star=%.6f ratio=%.6f method=quasi_mc(%llu)", o.v, o.v_star,
                      o.ratio, static_cast<unsigned long long>(o.draws));
    }
    return buf;
}

OracleVariances ate_closed_form(const AteMoments& mom, double eta) {
    if (!(eta > 0.0 && eta < 1.0)) throw Error(ErrorKind::EtaOutOfRange, "eta must lie in (0, 1)");
    OracleVariances out;
    out.theta0 = mom.e_mu1 - mom.e_mu0;
    out.m = -1.0;
    const double ey1 = mom.e_mu1_sq + mom.e_sigma1_sq;
    const double ey0 = mom.e_mu0_sq + mom.e_sigma0_sq;
    out.v = ey1 / eta + ey0 / (1.0 - eta) - out.theta0 * out.theta0;
    const double cross = mom.e_mu1_sq / (eta * eta) + 2.0 * mom.e_mu1_mu0 / (eta * (1.0 - eta)) +
                         mom.e_mu0_sq / ((1.0 - eta) * (1.0 - eta));
    out.v_star = out.v - eta * (1.0 - eta) * cross;
    out.ratio = out.v_star / out.v;
    return out;
}

}  // namespace stratkit::variance
