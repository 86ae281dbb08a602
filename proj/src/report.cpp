#include "tokenlab/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "tokenlab/errors.hpp"
#include "tokenlab/io_util.hpp"

namespace tokenlab {

void ExperimentReport::fail(const std::string& check_name) {
    pass = false;
    failures.push_back(check_name);
}

nlohmann::ordered_json ExperimentReport::to_json() const {
    nlohmann::ordered_json j;
    j["experiment"] = experiment;
    j["config"] = config;
    j["grid"] = grid;
    j["measured"] = measured;
    j["bounds"] = bounds;
    j["slopes"] = slopes;
    j["pass"] = pass;
    j["failures"] = failures;
    return j;
}

std::string ExperimentReport::csv_string() const {
    std::string out;
    for (std::size_t i = 0; i < csv_header.size(); ++i) {
        if (i) out += ',';
        out += csv_header[i];
    }
    out += '\n';
    char buf[40];
    for (const auto& row : csv_rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            std::snprintf(buf, sizeof buf, "%.17g", row[i]);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

void ExperimentReport::write(const std::string& out_dir, const std::string& basename) const {
    namespace fs = std::filesystem;
    const fs::path dir(out_dir);
    write_file_atomic((dir / (basename + ".json")).string(), to_json().dump(2) + "\n");
    if (!csv_rows.empty()) {
        write_file_atomic((dir / (basename + ".csv")).string(), csv_string());
    }
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw Error(ErrorCode::invalid_argument, "slope needs two same-length positive series");
    }
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const auto n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
            throw Error(ErrorCode::invalid_argument, "log-log slope requires positive values");
        }
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) {
        throw Error(ErrorCode::singular_system, "degenerate abscissa in slope fit");
    }
    return (n * sxy - sx * sy) / denom;
}

double harmonic_number(std::uint64_t n) {
    long double acc = 0.0L;
    for (std::uint64_t j = 1; j <= n; ++j) acc += 1.0L / static_cast<long double>(j);
    return static_cast<double>(acc);
}

} // namespace tokenlab
