#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace tokenlab {

// Flat key=value configuration with declared keys. Each subcommand declares
// its keys with defaults; loading a file or applying a CLI override for an
// undeclared key is a config error, so typos never pass silently. Values are
// stored as strings and parsed on access, which keeps the resolved-config
// echo file a faithful record of exactly what the run used.
class RunConfig {
public:
    void declare(const std::string& key, const std::string& default_value);
    bool has(const std::string& key) const;

    // Parses `key=value` lines; `#` starts a comment, blank lines ignored.
    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);

    std::string get_str(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_real(const std::string& key) const;
    std::vector<std::uint64_t> get_u64_list(const std::string& key) const; // comma-separated
    std::vector<double> get_real_list(const std::string& key) const;

    // One `key=value` line per declared key, in declaration order.
    std::string resolved_text() const;
    nlohmann::ordered_json to_json() const;

private:
    const std::string& raw(const std::string& key) const;

    std::vector<std::string> order_;
    std::map<std::string, std::string> values_;
};

} // namespace tokenlab
