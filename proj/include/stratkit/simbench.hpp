#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stratkit/core.hpp"
#include "stratkit/rng.hpp"
#include "stratkit/variance.hpp"

namespace stratkit::simbench {

enum class Arm { ate, late };

Arm parse_arm(std::string_view name);
const char* to_string(Arm arm);

/// Built-in data-generating process. X, eps ~ N(0,1); Y(a) = mu_a(X) + sigma_a(X) eps.
/// Model 1: mu_0 = X + (X^2-1)/3, mu_1 = 0.2 + mu_0, sigma_a = 2 (or sigma_override).
/// Model 2: mu_a = 0.2 1{a=1} + gamma_a (sin X + X) + (X^2-1)/3, gamma = (1, -1).
/// Model 3: mu_1 = 0.2 + 3(X^2-1), mu_0 = 0.
/// Models 2 and 3 use sigma_a = (1+a) X^2.
/// The LATE layer draws take-up D(0) = 1{0.5 + alpha > e1}, D(1) = 1 if D(0)
/// else 1{1 + alpha > e2}, alpha = X + (X^2-1)/3, e1, e2 ~ N(0, 4), and
/// reveals Y(D(a)).
struct DgpSpec {
    int model = 1;
    Arm arm = Arm::ate;
    std::size_t n = 200;
    std::optional<double> sigma_override;  // Model 1 only
    std::uint64_t seed = 0;
};

void check_spec(const DgpSpec& spec);

double mu(int model, int a, double x);
double sigma(const DgpSpec& spec, int a, double x);
/// Index of the LATE take-up equations.
double compliance_index(double x);

PotentialData draw_potential_ate(const DgpSpec& spec, Rng& rng);
/// Responses per arm are (Y~, D).
PotentialData draw_potential_late(const DgpSpec& spec, Rng& rng);
PotentialData draw_potential(const DgpSpec& spec, Rng& rng);

/// Uniform-driven version of the same DGP for the quasi-MC oracle.
class BuiltinSampler final : public variance::PotentialSampler {
  public:
    explicit BuiltinSampler(DgpSpec spec);

    int x_dim() const override { return 1; }
    int response_dim() const override { return spec_.arm == Arm::ate ? 1 : 2; }
    int x_uniforms() const override { return 1; }
    int noise_uniforms() const override { return spec_.arm == Arm::ate ? 1 : 3; }
    void draw_x(std::span<const double> u, std::span<double> x) const override;
    void draw_responses(std::span<const double> x, std::span<const double> u, std::span<double> r1,
                        std::span<double> r0) const override;

  private:
    DgpSpec spec_;
};

variance::AteMoments ate_moments(const DgpSpec& spec);

struct TrueTheta {
    double value = 0.0;
    double std_error = 0.0;
    std::uint64_t draws = 0;  // 0 when the value is exact
    std::uint64_t seed = 0;
};

/// ATE: 0.2 for every model. LATE: E[p_c(X)(mu_1 - mu_0)] / E[p_c(X)] with
/// p_c the complier probability given X, by Monte Carlo over X. Cached per
/// (model, draws, seed).
TrueTheta true_theta(const DgpSpec& spec, std::uint64_t draws = 10'000'000, std::uint64_t seed = 20240917);

enum class OraclePath { automatic, closed_form, quasi_mc };

/// Closed form for the ATE models; quasi-MC for LATE or on request.
variance::OracleVariances oracle_variances(const DgpSpec& spec, double eta, OraclePath path = OraclePath::automatic,
                                           const variance::QuasiMcOptions& qmc = {});

enum class DesignId { iid, complete, matched_pairs, fine_2_4, coarse };
enum class EstimatorId { unadjusted, adjusted_quad, adjusted_quad_kink };

DesignId parse_design(std::string_view name);
const char* to_string(DesignId d);
EstimatorId parse_estimator(std::string_view name);
const char* to_string(EstimatorId e);

struct MCConfig {
    std::size_t reps = 2000;
    std::vector<std::size_t> n_grid{200, 400, 1000, 2000};
    std::vector<Arm> params{Arm::ate};
    std::vector<int> models{1, 2, 3};
    std::vector<DesignId> designs{DesignId::iid, DesignId::matched_pairs};
    std::vector<EstimatorId> estimators{EstimatorId::unadjusted, EstimatorId::adjusted_quad,
                                        EstimatorId::adjusted_quad_kink};
    std::uint64_t master_seed = 20240917;
    std::optional<double> sigma_override;
    double level = 0.95;
    double max_fail_rate = 0.01;
    std::uint64_t late_theta_draws = 10'000'000;
    std::uint64_t late_theta_seed = 20240917;
};

/// Throws SchemaError when the grid is unusable (reps < 2, no iid/unadjusted
/// baseline, n not divisible by the block sizes, ...).
void check_config(const MCConfig& config);

struct CellResult {
    std::size_t n = 0;
    Arm param = Arm::ate;
    int model = 1;
    DesignId design = DesignId::iid;
    EstimatorId estimator = EstimatorId::unadjusted;
    double theta0 = 0.0;
    double mse = 0.0;
    double ratio = 0.0;
    double bias = 0.0;
    double emp_var_n = 0.0;
    double mean_vhat = 0.0;
    double coverage = 0.0;
    double fail_rate = 0.0;
    std::size_t failures = 0;
    std::size_t negative_vhat = 0;
    std::size_t separation_flags = 0;
    std::vector<double> estimates;  // successful replications, in order
};

struct ThetaAudit {
    Arm param = Arm::ate;
    int model = 1;
    TrueTheta theta;
};

struct MCResult {
    std::vector<CellResult> cells;
    std::vector<ThetaAudit> audit;
    bool within_fail_threshold = true;

    const CellResult& cell(std::size_t n, Arm param, int model, DesignId design, EstimatorId estimator) const;
};

/// Runs the grid. Replications run in parallel on `threads` workers (0 =
/// resolve from the environment); the result does not depend on the count.
MCResult run_grid(const MCConfig& config, unsigned threads = 0);

void write_csv(const MCResult& result, std::ostream& out);
void write_markdown(const MCResult& result, std::ostream& out);

}  // namespace stratkit::simbench
