// stratkit: block-and-assign, estimate, simulate and oracle workflows.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "stratkit/commands.hpp"
#include "stratkit/csv.hpp"

namespace {

using namespace stratkit;

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write '" + path + "'");
    out << text;
}

std::string sidecar_path(const std::string& out) {
    const auto dot = out.rfind('.');
    const auto slash = out.find_last_of('/');
    const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
    return (has_ext ? out.substr(0, dot) : out) + ".dropped.csv";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finely stratified experiments: blocking, assignment, estimation and simulation"};
    app.require_subcommand(1);

    // assign
    auto* assign = app.add_subcommand("assign", "Block units on covariates and randomize within blocks");
    std::string assign_in, assign_out;
    commands::AssignOptions ao;
    std::uint64_t seed = 0;
    assign->add_option("input", assign_in, "Input CSV with a unit_id column")->required();
    assign->add_option("-o,--out", assign_out, "Output CSV (default: stdout)");
    assign->add_option("--k", ao.k, "Block size")->default_val(2);
    assign->add_option("--l", ao.l, "Treated units per block")->default_val(1);
    assign->add_option("--covariates", ao.covariates, "Covariate columns (comma separated)")->delimiter(',')->required();
    assign->add_option("--method", ao.method, "sorted | greedy")->default_val("sorted");
    assign->add_option("--seed", seed, "Randomization seed")->required();
    assign->add_option("--id-col", ao.id_col, "Unit id column")->default_val("unit_id");
    assign->add_flag("--drop-remainder", ao.drop_remainder, "Drop the last n mod k units (sorted on the first covariate)");

    // estimate
    auto* est = app.add_subcommand("estimate", "Estimate a treatment-effect parameter from a completed experiment");
    std::string est_in, est_out;
    commands::EstimateOptions eo;
    double eta = 0.5, tau = 0.5;
    std::string block_col, d_col, weight_col, x_col;
    est->add_option("input", est_in, "Experiment CSV")->required();
    est->add_option("-o,--out", est_out, "Write the report as CSV");
    est->add_option("--param", eo.param, "ate | late | wate | qte | logodds")->default_val("ate");
    est->add_option("--eta", eta, "Known assignment probability")->required();
    est->add_option("--y-col", eo.y_col, "Outcome column")->default_val("y");
    est->add_option("--a-col", eo.a_col, "Treatment column")->default_val("treatment");
    auto* block_opt = est->add_option("--block-col", block_col, "Block id column; enables the variance estimate");
    auto* d_opt = est->add_option("--d-col", d_col, "Take-up column (late)");
    auto* w_opt = est->add_option("--weight-col", weight_col, "Weight column (wate)");
    auto* x_opt = est->add_option("--x-col", x_col, "Covariate for the adjusted estimator");
    auto* tau_opt = est->add_option("--tau", tau, "Quantile level (qte)");
    est->add_option("--basis", eo.basis, "none | quad | quad-kink")->default_val("none");
    est->add_option("--level", eo.level, "Confidence level")->default_val(0.95);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo grid from a JSON config");
    std::string sim_config, sim_out = "simulation";
    unsigned threads = 0;
    sim->add_option("config", sim_config, "JSON run configuration")->required();
    sim->add_option("-o,--out", sim_out, "Output prefix: writes <prefix>.csv and <prefix>.md")->default_val("simulation");
    sim->add_option("--threads", threads, "Worker count (default: STRATKIT_THREADS or all cores)");

    // oracle
    auto* orc = app.add_subcommand("oracle", "Asymptotic variances V and V* for a built-in model");
    commands::OracleOptions oo;
    double sigma = 0.0;
    orc->add_option("--model", oo.model, "1 | 2 | 3")->default_val(2);
    orc->add_option("--param", oo.param, "ate | late")->default_val("ate");
    orc->add_option("--eta", oo.eta, "Assignment probability")->default_val(0.5);
    orc->add_option("--method", oo.method, "auto | closed | qmc")->default_val("auto");
    orc->add_option("--draws", oo.draws, "Quasi-MC points")->default_val(10'000'000);
    auto* sigma_opt = orc->add_option("--sigma", sigma, "Model 1 noise scale override");
    orc->add_option("--threads", oo.threads, "Worker count");

    CLI11_PARSE(app, argc, argv);

    try {
        if (assign->parsed()) {
            ao.seed = seed;
            const auto res = commands::assign(csv::read_file(assign_in), ao);
            if (assign_out.empty()) {
                std::cout << res.output;
            } else {
                write_file(assign_out, res.output);
            }
            if (res.dropped_count > 0) {
                const std::string side = sidecar_path(assign_out.empty() ? assign_in : assign_out);
                write_file(side, res.dropped);
                std::cerr << "dropped " << res.dropped_count << " unit(s), listed in " << side << '\n';
            }
        } else if (est->parsed()) {
            eo.eta = eta;
            if (*block_opt) eo.block_col = block_col;
            if (*d_opt) eo.d_col = d_col;
            if (*w_opt) eo.weight_col = weight_col;
            if (*x_opt) eo.x_col = x_col;
            if (*tau_opt) eo.tau = tau;
            const auto rep = commands::estimate(csv::read_file(est_in), eo);
            std::cout << rep.text();
            if (!est_out.empty()) write_file(est_out, rep.csv());
        } else if (sim->parsed()) {
            const auto cfg = config::load(sim_config);
            const auto out = commands::simulate(cfg, threads);
            write_file(sim_out + ".csv", out.csv);
            write_file(sim_out + ".md", out.markdown);
            std::cout << out.markdown;
            if (!out.within_fail_threshold) {
                std::cerr << "some cells exceeded max_fail_rate\n";
                return 3;
            }
        } else if (orc->parsed()) {
            if (*sigma_opt) oo.sigma_override = sigma;
            std::cout << commands::oracle(oo).text();
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
