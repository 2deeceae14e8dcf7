#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "stratkit/core.hpp"
#include "stratkit/moments.hpp"

namespace stratkit::variance {

enum class VarsigmaVariant { within, between };

const char* to_string(VarsigmaVariant v);

struct VarianceBreakdown {
    double m_hat = 0.0;
    double mu1 = 0.0;
    double mu0 = 0.0;
    double sigma1 = 0.0;
    double varsigma11 = 0.0;
    double varsigma00 = 0.0;
    double varsigma01 = 0.0;
    double sigma2 = 0.0;
    double vhat = 0.0;
    VarsigmaVariant variant11 = VarsigmaVariant::within;
    VarsigmaVariant variant00 = VarsigmaVariant::within;
    /// Odd block count with a between-block term: the last block was left out
    /// of the varsigma sums (sigma1 still uses every unit).
    bool odd_block_dropped = false;
};

/// Plug-in variance for a scalar parameter under fine stratification.
/// Products of treated (control) moments are averaged within blocks when a
/// block holds more than one treated (control) unit, otherwise across the
/// adjacent block pairs (1,2), (3,4), ...
VarianceBreakdown vhat_fine(const ExperimentData& data, const BlockPartition& partition,
                            const moments::MomentModel& model, const ThetaVec& theta);

/// theta +- z * sqrt(vhat / n). Throws NegativeVariance for vhat < 0.
Interval confidence_interval(double theta, double vhat, std::size_t n, double level);

/// n times the unbiased sample variance of per-replication estimates.
double empirical_variance(std::span<const double> estimates, std::size_t n);

enum class OracleMethod { closed_form, quasi_mc };

struct OracleVariances {
    double v = 0.0;
    double v_star = 0.0;
    double ratio = 0.0;
    OracleMethod method = OracleMethod::closed_form;
    std::uint64_t draws = 0;
    double theta0 = 0.0;
    double m = 0.0;
};

std::string describe(const OracleVariances& o);

/// Moments of Y(a) = mu_a(X) + sigma_a(X) eps needed for the ATE oracle.
struct AteMoments {
    double e_mu1 = 0.0;
    double e_mu0 = 0.0;
    double e_mu1_sq = 0.0;
    double e_mu0_sq = 0.0;
    double e_mu1_mu0 = 0.0;
    double e_sigma1_sq = 0.0;
    double e_sigma0_sq = 0.0;
};

OracleVariances ate_closed_form(const AteMoments& mom, double eta);

/// Source of (X, R(1), R(0)) driven by uniforms, so the oracle can feed it a
/// low-discrepancy sequence. The response draw given X must use only its own
/// uniforms, which lets the oracle take two conditionally independent draws.
class PotentialSampler {
  public:
    virtual ~PotentialSampler() = default;
    virtual int x_dim() const = 0;
    virtual int response_dim() const = 0;
    virtual int x_uniforms() const = 0;
    virtual int noise_uniforms() const = 0;
    virtual void draw_x(std::span<const double> u, std::span<double> x) const = 0;
    virtual void draw_responses(std::span<const double> x, std::span<const double> u, std::span<double> r1,
                                std::span<double> r0) const = 0;
};

struct QuasiMcOptions {
    std::uint64_t draws = 10'000'000;
    /// Halton index offset; the point set is fixed given (draws, start).
    std::uint64_t start = 1;
    unsigned threads = 0;
};

/// V and V* for a scalar moment that is affine in theta, by quasi-Monte
/// Carlo over a Halton sequence: theta0 and M from the averaged moment, then
/// V = M^-2 E[m^2] and V* = V - M^-2 eta(1-eta) E[(g1 - g0)^2], g_a = E[m_a|X].
OracleVariances quasi_mc(const PotentialSampler& sampler, const moments::MomentModel& model, double eta,
                         const QuasiMcOptions& options = {});

/// Radical inverse of `index` in `base`.
double radical_inverse(std::uint64_t index, unsigned base);

}  // namespace stratkit::variance
