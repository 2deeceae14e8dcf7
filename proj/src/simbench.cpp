#include "stratkit/simbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <set>
#include <string>

#include "stratkit/adjust.hpp"
#include "stratkit/design.hpp"
#include "stratkit/moments.hpp"
#include "stratkit/parallel.hpp"
#include "stratkit/stats.hpp"

namespace stratkit::simbench {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Outcome {
    double theta = kNaN;
    double vhat = kNaN;
    bool failed = false;
    bool capped = false;
};

struct Group {
    Arm param;
    int model;
    std::size_t n;
    double theta0;
};

design::DesignSpec design_spec(DesignId id) {
    design::DesignSpec spec;
    spec.eta = 0.5;
    switch (id) {
        case DesignId::iid:
            spec.kind = design::DesignKind::iid;
            break;
        case DesignId::complete:
            spec.kind = design::DesignKind::complete;
            break;
        case DesignId::matched_pairs:
            spec.kind = design::DesignKind::fine_stratified;
            spec.shape = {1, 2};
            break;
        case DesignId::fine_2_4:
            spec.kind = design::DesignKind::fine_stratified;
            spec.shape = {2, 4};
            break;
        case DesignId::coarse:
            // quartiles of the N(0,1) covariate
            spec.kind = design::DesignKind::coarse_stratified;
            spec.strata_fn = [](std::span<const double> x) {
                constexpr double q = 0.6744897501960817;
                return x[0] <= -q ? 0 : x[0] <= 0.0 ? 1 : x[0] <= q ? 2 : 3;
            };
            break;
    }
    return spec;
}

Outcome run_estimator(const ExperimentData& data, const std::optional<BlockPartition>& partition, Arm param,
                      EstimatorId estimator) {
    Outcome out;
    try {
        if (estimator == EstimatorId::unadjusted) {
            const moments::AteModel ate;
            const moments::LateModel late;
            const moments::MomentModel& model = param == Arm::ate ? static_cast<const moments::MomentModel&>(ate)
                                                                  : static_cast<const moments::MomentModel&>(late);
            const ThetaVec theta = model.solve(data);
            out.theta = theta(0);
            if (partition) {
                out.vhat = variance::vhat_fine(data, *partition, model, theta).vhat;
            } else {
                // i.i.d. sandwich M^-2 mean(m^2)
                double ss = 0.0;
                for (std::size_t i = 0; i < data.size(); ++i) {
                    const double m = model.evaluate(data.x_row(i), data.a[i], data.r_row(i), theta, data.eta)(0);
                    ss += m * m;
                }
                const double jac = model.jacobian_hat(data, theta)(0, 0);
                out.vhat = ss / static_cast<double>(data.size()) / (jac * jac);
            }
        } else {
            const adjust::BasisSpec basis{estimator == EstimatorId::adjusted_quad ? adjust::BasisKind::quad
                                                                                  : adjust::BasisKind::quad_kink,
                                          0};
            const auto est = param == Arm::ate ? adjust::adjusted_ate(data, basis) : adjust::adjusted_late(data, basis);
            out.theta = est.theta;
            out.vhat = est.vhat_iid;
            out.capped = est.capped;
        }
        if (!std::isfinite(out.theta)) out.failed = true;
    } catch (const Error&) {
        out.failed = true;
    }
    return out;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.8g", v);
    return buf;
}

}  // namespace

DesignId parse_design(std::string_view name) {
    if (name == "iid") return DesignId::iid;
    if (name == "complete") return DesignId::complete;
    if (name == "matched_pairs") return DesignId::matched_pairs;
    if (name == "fine_2_4") return DesignId::fine_2_4;
    if (name == "coarse") return DesignId::coarse;
    throw Error(ErrorKind::SchemaError, "unknown design '" + std::string(name) + "'");
}

const char* to_string(DesignId d) {
    switch (d) {
        case DesignId::iid: return "iid";
        case DesignId::complete: return "complete";
        case DesignId::matched_pairs: return "matched_pairs";
        case DesignId::fine_2_4: return "fine_2_4";
        case DesignId::coarse: return "coarse";
    }
    return "?";
}

EstimatorId parse_estimator(std::string_view name) {
    if (name == "unadjusted") return EstimatorId::unadjusted;
    if (name == "adjusted_quad") return EstimatorId::adjusted_quad;
    if (name == "adjusted_quad_kink") return EstimatorId::adjusted_quad_kink;
    throw Error(ErrorKind::SchemaError, "unknown estimator '" + std::string(name) + "'");
}

const char* to_string(EstimatorId e) {
    switch (e) {
        case EstimatorId::unadjusted: return "unadjusted";
        case EstimatorId::adjusted_quad: return "adjusted_quad";
        case EstimatorId::adjusted_quad_kink: return "adjusted_quad_kink";
    }
    return "?";
}

void check_config(const MCConfig& c) {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::SchemaError, msg); };
    auto unique = [](const auto& v) { return std::set(v.begin(), v.end()).size() == v.size(); };
    if (c.reps < 2) fail("reps must be at least 2");
    if (c.n_grid.empty() || c.params.empty() || c.models.empty() || c.designs.empty() || c.estimators.empty()) {
        fail("n_grid, params, models, designs and estimators must be non-empty");
    }
    if (!unique(c.n_grid) || !unique(c.params) || !unique(c.models) || !unique(c.designs) || !unique(c.estimators)) {
        fail("grid lists must not repeat entries");
    }
    if (std::find(c.designs.begin(), c.designs.end(), DesignId::iid) == c.designs.end() ||
        std::find(c.estimators.begin(), c.estimators.end(), EstimatorId::unadjusted) == c.estimators.end()) {
        fail("the grid must contain the iid design and the unadjusted estimator (the ratio baseline)");
    }
    for (int m : c.models) {
        if (m < 1 || m > 3) fail("models must be 1, 2 or 3");
    }
    for (std::size_t n : c.n_grid) {
        if (n < 8) fail("every n must be at least 8");
        for (DesignId d : c.designs) {
            const std::size_t k = d == DesignId::fine_2_4 ? 4 : (d == DesignId::iid || d == DesignId::coarse) ? 1 : 2;
            if (n % k != 0) fail("n=" + std::to_string(n) + " is not divisible by " + std::to_string(k) + " for design " + to_string(d));
        }
    }
    if (!(c.level > 0.0 && c.level < 1.0)) fail("level must lie in (0, 1)");
    if (!(c.max_fail_rate >= 0.0 && c.max_fail_rate <= 1.0)) fail("max_fail_rate must lie in [0, 1]");
    if (c.sigma_override && !(*c.sigma_override > 0.0 && std::isfinite(*c.sigma_override))) {
        fail("sigma_override must be positive");
    }
    if (c.late_theta_draws < 2) fail("late_theta_draws must be at least 2");
}

const CellResult& MCResult::cell(std::size_t n, Arm param, int model, DesignId design, EstimatorId estimator) const {
    for (const auto& c : cells) {
        if (c.n == n && c.param == param && c.model == model && c.design == design && c.estimator == estimator) return c;
    }
    throw Error(ErrorKind::InvalidArgument, "no such cell in the result");
}

MCResult run_grid(const MCConfig& config, unsigned threads) {
    check_config(config);
    MCResult result;

    std::vector<Group> groups;
    for (Arm param : config.params) {
        for (int model : config.models) {
            DgpSpec spec{model, param, 0, config.sigma_override, config.master_seed};
            const TrueTheta t = true_theta(spec, config.late_theta_draws, config.late_theta_seed);
            if (param == Arm::late) result.audit.push_back({param, model, t});
            for (std::size_t n : config.n_grid) groups.push_back({param, model, n, t.value});
        }
    }

    const std::size_t nd = config.designs.size();
    const std::size_t ne = config.estimators.size();
    const std::size_t reps = config.reps;
    std::vector<design::DesignSpec> designs;
    for (DesignId d : config.designs) designs.push_back(design_spec(d));

    // outcomes[((g * nd + d) * ne + e) * reps + r]
    std::vector<Outcome> outcomes(groups.size() * nd * ne * reps);
    parallel_for(groups.size() * reps, resolve_threads(threads), [&](std::size_t task) {
        const std::size_t g = task / reps;
        const std::size_t r = task % reps;
        const Group& grp = groups[g];
        const auto param_key = static_cast<std::uint64_t>(grp.param);
        const auto model_key = static_cast<std::uint64_t>(grp.model);
        const DgpSpec spec{grp.model, grp.param, grp.n, config.sigma_override, config.master_seed};

        Rng potential_rng = Rng::derive(config.master_seed, {stream_tag("potential"), param_key, model_key, grp.n, r});
        const PotentialData potential = draw_potential(spec, potential_rng);
        for (std::size_t d = 0; d < nd; ++d) {
            Rng assign_rng = Rng::derive(config.master_seed, {stream_tag("assign"), param_key, model_key, grp.n, r,
                                                              static_cast<std::uint64_t>(config.designs[d])});
            const auto draw = design::draw_design(designs[d], potential.x, assign_rng);
            const ExperimentData data = potential.reveal(draw.assignment, 0.5);
            for (std::size_t e = 0; e < ne; ++e) {
                outcomes[((g * nd + d) * ne + e) * reps + r] =
                    run_estimator(data, draw.partition, grp.param, config.estimators[e]);
            }
        }
    });

    for (std::size_t g = 0; g < groups.size(); ++g) {
        const Group& grp = groups[g];
        const std::size_t first_cell = result.cells.size();
        double baseline = kNaN;
        for (std::size_t d = 0; d < nd; ++d) {
            for (std::size_t e = 0; e < ne; ++e) {
                CellResult cell;
                cell.n = grp.n;
                cell.param = grp.param;
                cell.model = grp.model;
                cell.design = config.designs[d];
                cell.estimator = config.estimators[e];
                cell.theta0 = grp.theta0;

                double se = 0.0, vsum = 0.0;
                std::size_t vcount = 0, covered = 0, eligible = 0;
                for (std::size_t r = 0; r < reps; ++r) {
                    const Outcome& o = outcomes[((g * nd + d) * ne + e) * reps + r];
                    if (o.failed) {
                        ++cell.failures;
                        continue;
                    }
                    if (o.capped) ++cell.separation_flags;
                    cell.estimates.push_back(o.theta);
                    const double err = o.theta - grp.theta0;
                    se += err * err;
                    if (!std::isfinite(o.vhat)) continue;
                    vsum += o.vhat;
                    ++vcount;
                    if (o.vhat < 0.0) {
                        ++cell.negative_vhat;
                        continue;
                    }
                    const Interval ci = variance::confidence_interval(o.theta, o.vhat, grp.n, config.level);
                    ++eligible;
                    if (ci.lo <= grp.theta0 && grp.theta0 <= ci.hi) ++covered;
                }
                const std::size_t ok = cell.estimates.size();
                cell.mse = ok > 0 ? se / static_cast<double>(ok) : kNaN;
                cell.bias = ok > 0 ? mean(cell.estimates) - grp.theta0 : kNaN;
                cell.emp_var_n = ok >= 2 ? variance::empirical_variance(cell.estimates, grp.n) : kNaN;
                cell.mean_vhat = vcount > 0 ? vsum / static_cast<double>(vcount) : kNaN;
                cell.coverage = eligible > 0 ? static_cast<double>(covered) / static_cast<double>(eligible) : kNaN;
                cell.fail_rate = static_cast<double>(cell.failures) / static_cast<double>(reps);
                if (cell.fail_rate > config.max_fail_rate) result.within_fail_threshold = false;
                if (cell.design == DesignId::iid && cell.estimator == EstimatorId::unadjusted) baseline = cell.mse;
                result.cells.push_back(std::move(cell));
            }
        }
        for (std::size_t c = first_cell; c < result.cells.size(); ++c) result.cells[c].ratio = result.cells[c].mse / baseline;
    }
    return result;
}

void write_csv(const MCResult& result, std::ostream& out) {
    out << "n,param,model,design,estimator,mse,ratio,bias,emp_var_n,mean_vhat,coverage,fail_rate\n";
    for (const auto& c : result.cells) {
        out << c.n << ',' << to_string(c.param) << ',' << c.model << ',' << to_string(c.design) << ','
            << to_string(c.estimator) << ',' << fmt(c.mse) << ',' << fmt(c.ratio) << ',' << fmt(c.bias) << ','
            << fmt(c.emp_var_n) << ',' << fmt(c.mean_vhat) << ',' << fmt(c.coverage) << ',' << fmt(c.fail_rate)
            << '\n';
    }
}

void write_markdown(const MCResult& result, std::ostream& out) {
    const std::vector<std::string> header{"n",    "param",     "model",     "design",   "estimator", "mse",
                                          "ratio", "bias",     "emp_var_n", "mean_vhat", "coverage", "fail_rate",
                                          "neg_vhat", "sep_flags"};
    std::vector<std::vector<std::string>> rows;
    for (const auto& c : result.cells) {
        rows.push_back({std::to_string(c.n), to_string(c.param), std::to_string(c.model), to_string(c.design),
                        to_string(c.estimator), fmt(c.mse), fmt(c.ratio), fmt(c.bias), fmt(c.emp_var_n),
                        fmt(c.mean_vhat), fmt(c.coverage), fmt(c.fail_rate), std::to_string(c.negative_vhat),
                        std::to_string(c.separation_flags)});
    }
    std::vector<std::size_t> width(header.size());
    for (std::size_t j = 0; j < header.size(); ++j) {
        width[j] = header[j].size();
        for (const auto& row : rows) width[j] = std::max(width[j], row[j].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
        out << '|';
        for (std::size_t j = 0; j < cells.size(); ++j) {
            out << ' ' << cells[j] << std::string(width[j] - cells[j].size(), ' ') << " |";
        }
        out << '\n';
    };
    line(header);
    out << '|';
    for (std::size_t w : width) out << std::string(w + 2, '-') << '|';
    out << '\n';
    for (const auto& row : rows) line(row);

    if (!result.audit.empty()) {
        out << "\nTrue LATE values (Monte Carlo over X):\n\n";
        for (const auto& a : result.audit) {
            out << "- model " << a.model << ": theta0=" << fmt(a.theta.value) << " se=" << fmt(a.theta.std_error)
                << " draws=" << a.theta.draws << " seed=" << a.theta.seed << '\n';
        }
    }
}

}  // namespace stratkit::simbench
