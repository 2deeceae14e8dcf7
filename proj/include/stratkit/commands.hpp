#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stratkit/config.hpp"
#include "stratkit/csv.hpp"

namespace stratkit::commands {

struct AssignOptions {
    std::size_t k = 2;
    std::size_t l = 1;
    std::vector<std::string> covariates;
    std::string method = "sorted";  // sorted | greedy
    std::optional<std::uint64_t> seed;
    bool drop_remainder = false;
    std::string id_col = "unit_id";
};

struct AssignResult {
    std::string output;   // unit_id,block_id,treatment in input order
    std::string dropped;  // input rows left out by --drop-remainder (header only when none)
    std::size_t dropped_count = 0;
};

/// Blocks on the named covariates (sorted: the first one; greedy: all of
/// them) and draws l treated per block.
AssignResult assign(const csv::Table& input, const AssignOptions& options);

struct EstimateOptions {
    std::string param = "ate";  // ate | late | wate | qte | logodds
    std::optional<double> eta;
    std::string y_col = "y";
    std::string a_col = "treatment";
    std::optional<std::string> block_col;
    std::optional<std::string> d_col;
    std::optional<std::string> weight_col;
    std::optional<std::string> x_col;
    std::optional<double> tau;
    std::string basis = "none";  // none | quad | quad-kink
    double level = 0.95;
};

/// One named value per column of the report.
struct Report {
    std::vector<std::string> names;
    std::vector<std::string> values;
    std::vector<std::string> notes;

    void add(std::string name, std::string value);
    void add(std::string name, double value);
    std::string value(const std::string& name) const;
    std::string csv() const;
    std::string text() const;
};

Report estimate(const csv::Table& input, const EstimateOptions& options);

struct SimulateOutput {
    std::string csv;
    std::string markdown;
    bool within_fail_threshold = true;
};

SimulateOutput simulate(const config::RunConfig& config, unsigned threads = 0);

struct OracleOptions {
    int model = 2;
    std::string param = "ate";
    double eta = 0.5;
    std::string method = "auto";  // auto | closed | qmc
    std::uint64_t draws = 10'000'000;
    std::optional<double> sigma_override;
    unsigned threads = 0;
};

Report oracle(const OracleOptions& options);

}  // namespace stratkit::commands
