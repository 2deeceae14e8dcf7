#include "stratkit/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace stratkit {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NonBinaryTreatment: return "NonBinaryTreatment";
        case ErrorKind::NonFiniteValue: return "NonFiniteValue";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::EtaOutOfRange: return "EtaOutOfRange";
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::NotDivisible: return "NotDivisible";
        case ErrorKind::NonIntegralCount: return "NonIntegralCount";
        case ErrorKind::EmptyStratum: return "EmptyStratum";
        case ErrorKind::EmptyArm: return "EmptyArm";
        case ErrorKind::QuantileUnreachable: return "QuantileUnreachable";
        case ErrorKind::ZeroFirstStage: return "ZeroFirstStage";
        case ErrorKind::ZeroWeightMass: return "ZeroWeightMass";
        case ErrorKind::DegenerateArm: return "DegenerateArm";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::NonScalarParameter: return "NonScalarParameter";
        case ErrorKind::NegativeVariance: return "NegativeVariance";
        case ErrorKind::TooFewReplications: return "TooFewReplications";
        case ErrorKind::MissingColumn: return "MissingColumn";
        case ErrorKind::NonNumericCovariate: return "NonNumericCovariate";
        case ErrorKind::SchemaError: return "SchemaError";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

std::size_t ExperimentData::treated_count() const {
    return static_cast<std::size_t>(std::count(a.begin(), a.end(), 1));
}

ExperimentData PotentialData::reveal(std::span<const int> assignment, double eta) const {
    const auto n = static_cast<Eigen::Index>(size());
    if (static_cast<Eigen::Index>(assignment.size()) != n || r1.rows() != n || r0.rows() != n ||
        r1.cols() != r0.cols()) {
        throw Error(ErrorKind::LengthMismatch, "assignment and potential responses disagree in shape");
    }
    ExperimentData out;
    out.x = x;
    out.a.assign(assignment.begin(), assignment.end());
    out.r.resize(n, r1.cols());
    out.eta = eta;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int ai = assignment[static_cast<std::size_t>(i)];
        if (ai != 0 && ai != 1) {
            throw Error(ErrorKind::NonBinaryTreatment, "row " + std::to_string(i + 1));
        }
        out.r.row(i) = ai == 1 ? r1.row(i) : r0.row(i);
    }
    return out;
}

void check_partition(const BlockPartition& partition, std::size_t n) {
    const auto& [l, k] = partition.shape;
    if (k == 0 || l == 0 || l >= k) {
        throw Error(ErrorKind::InvalidArgument, "block shape requires 1 <= l < k");
    }
    std::vector<char> seen(n, 0);
    std::size_t covered = 0;
    for (std::size_t j = 0; j < partition.blocks.size(); ++j) {
        const auto& block = partition.blocks[j];
        if (block.size() != k) {
            throw Error(ErrorKind::InvalidArgument, "block " + std::to_string(j + 1) + " has size " +
                                                        std::to_string(block.size()) + ", expected " +
                                                        std::to_string(k));
        }
        for (std::size_t i : block) {
            if (i >= n || seen[i]) {
                throw Error(ErrorKind::InvalidArgument, "unit " + std::to_string(i + 1) +
                                                            " is out of range or appears in two blocks");
            }
            seen[i] = 1;
            ++covered;
        }
    }
    if (covered != n) {
        throw Error(ErrorKind::InvalidArgument, "blocks cover " + std::to_string(covered) + " of " +
                                                    std::to_string(n) + " units");
    }
}

const ExperimentData& validate(const ExperimentData& data) {
    if (!(data.eta > 0.0 && data.eta < 1.0)) {
        std::ostringstream msg;
        msg << "eta=" << data.eta << " must lie strictly inside (0, 1)";
        throw Error(ErrorKind::EtaOutOfRange, msg.str());
    }
    const auto n = static_cast<Eigen::Index>(data.a.size());
    if (data.x.rows() != n) {
        throw Error(ErrorKind::LengthMismatch, "x has " + std::to_string(data.x.rows()) + " rows, a has " +
                                                   std::to_string(n));
    }
    if (data.r.rows() != n) {
        throw Error(ErrorKind::LengthMismatch, "r has " + std::to_string(data.r.rows()) + " rows, a has " +
                                                   std::to_string(n));
    }
    if (data.x.cols() < 1 || data.r.cols() < 1) {
        throw Error(ErrorKind::LengthMismatch, "x and r need at least one column");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const int ai = data.a[static_cast<std::size_t>(i)];
        if (ai != 0 && ai != 1) {
            throw Error(ErrorKind::NonBinaryTreatment,
                        "row " + std::to_string(i + 1) + " has a=" + std::to_string(ai));
        }
        for (Eigen::Index j = 0; j < data.x.cols(); ++j) {
            if (!std::isfinite(data.x(i, j))) {
                throw Error(ErrorKind::NonFiniteValue,
                            "row " + std::to_string(i + 1) + ", covariate " + std::to_string(j + 1));
            }
        }
        for (Eigen::Index j = 0; j < data.r.cols(); ++j) {
            if (!std::isfinite(data.r(i, j))) {
                throw Error(ErrorKind::NonFiniteValue,
                            "row " + std::to_string(i + 1) + ", response " + std::to_string(j + 1));
            }
        }
    }
    return data;
}

double weighted_quantile(std::span<const double> values, double tau) {
    if (values.empty()) throw Error(ErrorKind::EmptyInput, "quantile of an empty sample");
    if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::InvalidArgument, "tau must lie in (0, 1)");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    // Smallest order statistic y_(j) with j/n >= tau. Integer arithmetic on the
    // boundary avoids tau*n rounding just below an integer.
    const double n = static_cast<double>(sorted.size());
    auto j = static_cast<std::size_t>(std::ceil(tau * n));
    if (j >= 1 && static_cast<double>(j - 1) / n >= tau) --j;
    j = std::clamp<std::size_t>(j, 1, sorted.size());
    return sorted[j - 1];
}

double weighted_quantile(std::span<const double> values, std::span<const double> weights, double tau,
                         double total_mass) {
    if (values.empty()) throw Error(ErrorKind::EmptyInput, "quantile of an empty sample");
    if (values.size() != weights.size()) throw Error(ErrorKind::LengthMismatch, "values and weights differ");
    if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::InvalidArgument, "tau must lie in (0, 1)");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
    const double mass = total_mass > 0.0 ? total_mass : std::accumulate(weights.begin(), weights.end(), 0.0);
    double cum = 0.0;
    for (std::size_t idx = 0; idx < order.size(); ++idx) {
        cum += weights[order[idx]];
        // F jumps only after all ties at this value are absorbed.
        if (idx + 1 < order.size() && values[order[idx + 1]] == values[order[idx]]) continue;
        if (cum / mass >= tau * (1.0 - 1e-14)) return values[order[idx]];
    }
    throw Error(ErrorKind::QuantileUnreachable, "weighted distribution never reaches tau");
}

}  // namespace stratkit
