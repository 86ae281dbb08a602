#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace tokenlab {

// Structured experiment result. The JSON form carries
// {experiment, config, grid, measured, bounds, slopes, pass, failures};
// the companion CSV holds raw per-trial values for external plotting.
// All doubles serialize shortest-roundtrip (JSON) or %.17g (CSV), so equal
// results produce byte-identical files.
struct ExperimentReport {
    std::string experiment;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    std::vector<double> grid;
    nlohmann::ordered_json measured = nlohmann::ordered_json::object();
    nlohmann::ordered_json bounds = nlohmann::ordered_json::object();
    nlohmann::ordered_json slopes = nlohmann::ordered_json::object();
    bool pass = true;
    std::vector<std::string> failures; // names of failed checks, first is headline

    std::vector<std::string> csv_header;
    std::vector<std::vector<double>> csv_rows;

    void fail(const std::string& check_name);

    nlohmann::ordered_json to_json() const;
    std::string csv_string() const;

    // Writes <basename>.json and, when csv rows exist, <basename>.csv under
    // out_dir (atomic rename; no partial files on failure).
    void write(const std::string& out_dir, const std::string& basename) const;
};

// Least-squares slope of log(y) vs log(x); x and y must be positive.
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

// Harmonic number H_n = sum_{j=1..n} 1/j, accumulated in extended precision
// so small n values are correctly rounded (H_4 == 25.0/12.0 exactly).
double harmonic_number(std::uint64_t n);

} // namespace tokenlab
