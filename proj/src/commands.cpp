#include "stratkit/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "stratkit/adjust.hpp"
#include "stratkit/design.hpp"
#include "stratkit/moments.hpp"
#include "stratkit/rng.hpp"
#include "stratkit/variance.hpp"

namespace stratkit::commands {
namespace {

[[noreturn]] void schema_error(const std::string& msg) { throw Error(ErrorKind::SchemaError, msg); }

RowMatrix column_matrix(const std::vector<std::vector<double>>& cols, std::size_t n) {
    RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cols[j][i];
    }
    return x;
}

std::optional<double> parse_number(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// Blocks ordered by numeric id when every id is numeric, else by first
// appearance; the order matters for the between-block variance term.
BlockPartition partition_from_column(const csv::Table& t, const std::string& name, const std::vector<int>& a) {
    const std::size_t j = t.column(name);
    std::vector<std::string> ids;
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const std::string& id = t.rows[i][j];
        if (id.empty()) schema_error("row " + std::to_string(i + 1) + ": empty block id");
        if (!members.count(id)) ids.push_back(id);
        members[id].push_back(i);
    }
    const bool numeric = std::all_of(ids.begin(), ids.end(), [](const std::string& s) { return parse_number(s).has_value(); });
    if (numeric) {
        std::stable_sort(ids.begin(), ids.end(),
                         [](const std::string& p, const std::string& q) { return *parse_number(p) < *parse_number(q); });
    }
    BlockPartition p;
    const std::size_t k = members[ids.front()].size();
    std::size_t l = 0;
    for (std::size_t i : members[ids.front()]) l += static_cast<std::size_t>(a[i]);
    if (k < 2 || l == 0 || l >= k) {
        throw Error(ErrorKind::InvalidArgument, "block '" + ids.front() + "' needs both treated and control units");
    }
    p.shape = {l, k};
    for (const auto& id : ids) {
        if (members[id].size() != k) {
            throw Error(ErrorKind::InvalidArgument, "block '" + id + "' has " + std::to_string(members[id].size()) +
                                                        " units, expected " + std::to_string(k));
        }
        p.blocks.push_back(members[id]);
    }
    return p;
}

}  // namespace

AssignResult assign(const csv::Table& input, const AssignOptions& o) {
    if (!o.seed) schema_error("--seed is required");
    if (o.covariates.empty()) schema_error("--covariates needs at least one column");
    if (o.method != "sorted" && o.method != "greedy") schema_error("--method must be sorted or greedy");
    const std::size_t id_col = input.column(o.id_col);
    std::vector<std::vector<double>> cols;
    for (const auto& c : o.covariates) cols.push_back(input.numeric(c, ErrorKind::NonNumericCovariate));
    const std::size_t n = input.size();
    const BlockShape shape{o.l, o.k};
    if (shape.k < 2 || shape.l < 1 || shape.l >= shape.k) schema_error("need 1 <= l < k");

    std::vector<std::size_t> keep(n);
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    std::vector<std::size_t> dropped;
    if (n % shape.k != 0) {
        if (!o.drop_remainder) {
            throw Error(ErrorKind::NotDivisible, "n=" + std::to_string(n) + " is not divisible by k=" +
                                                     std::to_string(shape.k) + " (use --drop-remainder)");
        }
        std::vector<std::size_t> order = keep;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) { return cols[0][p] < cols[0][q]; });
        for (std::size_t t = n - n % shape.k; t < n; ++t) dropped.push_back(order[t]);
        std::sort(dropped.begin(), dropped.end());
        keep.erase(std::remove_if(keep.begin(), keep.end(),
                                  [&](std::size_t i) { return std::binary_search(dropped.begin(), dropped.end(), i); }),
                   keep.end());
    }
    if (keep.empty()) throw Error(ErrorKind::EmptyInput, "no units to assign");

    std::vector<std::vector<double>> kept_cols(cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
        for (std::size_t i : keep) kept_cols[j].push_back(cols[j][i]);
    }
    const RowMatrix x = column_matrix(kept_cols, keep.size());
    const BlockPartition part = o.method == "sorted" ? design::block_sorted(x, 0, shape) : design::block_greedy(x, shape);
    Rng rng = Rng::derive(*o.seed, {stream_tag("cli-assign")});
    const std::vector<int> a = design::assign_fine(part, rng);

    std::vector<std::size_t> block_of(keep.size());
    for (std::size_t b = 0; b < part.blocks.size(); ++b) {
        for (std::size_t u : part.blocks[b]) block_of[u] = b + 1;
    }
    std::ostringstream out;
    csv::write_row(out, {"unit_id", "block_id", "treatment"});
    for (std::size_t t = 0; t < keep.size(); ++t) {
        csv::write_row(out, {input.rows[keep[t]][id_col], std::to_string(block_of[t]), std::to_string(a[t])});
    }
    std::ostringstream side;
    csv::write_row(side, input.header);
    for (std::size_t i : dropped) csv::write_row(side, input.rows[i]);
    return {out.str(), side.str(), dropped.size()};
}

void Report::add(std::string name, std::string value) {
    names.push_back(std::move(name));
    values.push_back(std::move(value));
}

void Report::add(std::string name, double value) { add(std::move(name), csv::format_number(value)); }

std::string Report::value(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (names[j] == name) return values[j];
    }
    throw Error(ErrorKind::InvalidArgument, "report has no field '" + name + "'");
}

std::string Report::csv() const {
    std::ostringstream out;
    csv::write_row(out, names);
    csv::write_row(out, values);
    return out.str();
}

std::string Report::text() const {
    std::size_t w = 0;
    for (const auto& n : names) w = std::max(w, n.size());
    std::ostringstream out;
    for (std::size_t j = 0; j < names.size(); ++j) out << names[j] << std::string(w - names[j].size() + 2, ' ') << values[j] << '\n';
    for (const auto& note : notes) out << "note: " << note << '\n';
    return out.str();
}

Report estimate(const csv::Table& input, const EstimateOptions& o) {
    if (!o.eta) schema_error("--eta is required");
    const std::string& p = o.param;
    if (p != "ate" && p != "late" && p != "wate" && p != "qte" && p != "logodds") {
        schema_error("unknown --param '" + p + "'");
    }
    if (p == "late" && !o.d_col) schema_error("--param late needs --d-col");
    if (p == "wate" && !o.weight_col) schema_error("--param wate needs --weight-col");
    if (p == "qte" && !o.tau) schema_error("--param qte needs --tau");
    const bool adjusted = o.basis != "none";
    if (adjusted && p != "ate" && p != "late") schema_error("--basis is available for ate and late only");
    if (adjusted && !o.x_col) schema_error("--basis needs --x-col");
    if ((p == "qte" || p == "logodds") && o.block_col) {
        throw Error(ErrorKind::NonScalarParameter, "variance is not available for '" + p + "' (two-component parameter)");
    }

    const std::size_t n = input.size();
    ExperimentData data;
    data.eta = *o.eta;
    const auto a_raw = input.numeric(o.a_col);
    data.a.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (a_raw[i] != 0.0 && a_raw[i] != 1.0) {
            throw Error(ErrorKind::NonBinaryTreatment, "row " + std::to_string(i + 1) + ": treatment must be 0 or 1");
        }
        data.a[i] = static_cast<int>(a_raw[i]);
    }
    std::vector<std::vector<double>> r{input.numeric(o.y_col)};
    if (p == "late") r.push_back(input.numeric(*o.d_col));
    data.r = column_matrix(r, n);
    if (p == "wate") {
        data.x = column_matrix({input.numeric(*o.weight_col)}, n);
    } else if (o.x_col) {
        data.x = column_matrix({input.numeric(*o.x_col, ErrorKind::NonNumericCovariate)}, n);
    } else {
        data.x = RowMatrix::Zero(static_cast<Eigen::Index>(n), 1);
    }
    validate(data);

    Report rep;
    rep.add("param", p);
    rep.add("n", std::to_string(n));
    rep.add("eta", data.eta);

    if (adjusted) {
        const adjust::BasisSpec basis{adjust::parse_basis(o.basis), 0};
        const auto est = p == "ate" ? adjust::adjusted_ate(data, basis) : adjust::adjusted_late(data, basis);
        rep.add("estimator", "adjusted_" + o.basis);
        rep.add("theta", est.theta);
        rep.add("vhat_iid", est.vhat_iid);
        rep.add("se", std::sqrt(est.vhat_iid / static_cast<double>(n)));
        const Interval ci = variance::confidence_interval(est.theta, est.vhat_iid, n, o.level);
        rep.add("ci_lo", ci.lo);
        rep.add("ci_hi", ci.hi);
        if (est.capped) rep.notes.push_back("logistic first stage hit the coefficient cap (separation)");
        return rep;
    }

    auto model = moments::make_model(p, o.tau.value_or(0.5), [](std::span<const double> x) { return x[0]; });
    const ThetaVec theta = model->solve(data);
    if (theta.size() == 1) {
        rep.add("theta", theta(0));
    } else {
        for (Eigen::Index j = 0; j < theta.size(); ++j) rep.add("theta_" + std::to_string(j + 1), theta(j));
    }
    if (model->has_transform()) rep.add("transformed", model->transform(theta));
    if (!o.block_col) return rep;

    const BlockPartition part = partition_from_column(input, *o.block_col, data.a);
    const auto b = variance::vhat_fine(data, part, *model, theta);
    rep.add("m_hat", b.m_hat);
    rep.add("mu1", b.mu1);
    rep.add("mu0", b.mu0);
    rep.add("sigma1", b.sigma1);
    rep.add("varsigma11", b.varsigma11);
    rep.add("varsigma00", b.varsigma00);
    rep.add("varsigma01", b.varsigma01);
    rep.add("sigma2", b.sigma2);
    rep.add("vhat", b.vhat);
    rep.add("variant11", variance::to_string(b.variant11));
    rep.add("variant00", variance::to_string(b.variant00));
    if (b.odd_block_dropped) rep.notes.push_back("odd block count: last block left out of the between-block terms");
    if (b.vhat >= 0.0) {
        const Interval ci = variance::confidence_interval(theta(0), b.vhat, n, o.level);
        rep.add("se", std::sqrt(b.vhat / static_cast<double>(n)));
        rep.add("ci_lo", ci.lo);
        rep.add("ci_hi", ci.hi);
    } else {
        rep.add("se", "NA");
        rep.add("ci_lo", "NA");
        rep.add("ci_hi", "NA");
        rep.notes.push_back("negative variance estimate; interval omitted");
    }
    return rep;
}

SimulateOutput simulate(const config::RunConfig& config, unsigned threads) {
    const auto result = simbench::run_grid(config.mc, threads);
    std::ostringstream csv_out, md_out;
    simbench::write_csv(result, csv_out);
    simbench::write_markdown(result, md_out);
    return {csv_out.str(), md_out.str(), result.within_fail_threshold};
}

Report oracle(const OracleOptions& o) {
    simbench::DgpSpec spec;
    spec.model = o.model;
    spec.arm = simbench::parse_arm(o.param);
    spec.sigma_override = o.sigma_override;
    simbench::OraclePath path = simbench::OraclePath::automatic;
    if (o.method == "closed") {
        path = simbench::OraclePath::closed_form;
    } else if (o.method == "qmc") {
        path = simbench::OraclePath::quasi_mc;
    } else if (o.method != "auto") {
        schema_error("--method must be auto, closed or qmc");
    }
    variance::QuasiMcOptions q;
    q.draws = o.draws;
    q.threads = o.threads;
    const auto r = simbench::oracle_variances(spec, o.eta, path, q);
    Report rep;
    rep.add("model", std::to_string(o.model));
    rep.add("param", o.param);
    rep.add("v", r.v);
    rep.add("v_star", r.v_star);
    rep.add("ratio", r.ratio);
    rep.add("method", r.method == variance::OracleMethod::closed_form ? "closed_form" : "quasi_mc");
    rep.add("draws", std::to_string(r.draws));
    rep.add("theta0", r.theta0);
    return rep;
}

}  // namespace stratkit::commands
