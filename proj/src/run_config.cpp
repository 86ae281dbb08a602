#include "tokenlab/run_config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>

#include "tokenlab/errors.hpp"

namespace tokenlab {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> parts;
    std::string item;
    for (char c : value) {
        if (c == ',') {
            parts.push_back(trim(item));
            item.clear();
        } else {
            item.push_back(c);
        }
    }
    item = trim(item);
    if (!item.empty() || !parts.empty()) parts.push_back(item);
    return parts;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* wanted) {
    throw Error(ErrorCode::config_error,
                "config key '" + key + "': cannot parse '" + value + "' as " + wanted);
}

} // namespace

void RunConfig::declare(const std::string& key, const std::string& default_value) {
    if (values_.count(key) == 0) order_.push_back(key);
    values_[key] = default_value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

const std::string& RunConfig::raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
        throw Error(ErrorCode::config_error, "unknown config key '" + key + "'");
    return it->second;
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot open config file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::config_error,
                        path + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw Error(ErrorCode::config_error,
                        path + ":" + std::to_string(line_no) + ": empty key");
        if (values_.count(key) == 0)
            throw Error(ErrorCode::config_error,
                        path + ":" + std::to_string(line_no) + ": unknown config key '" + key +
                            "'");
        values_[key] = value;
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (values_.count(key) == 0)
        throw Error(ErrorCode::config_error, "unknown config key '" + key + "'");
    values_[key] = value;
}

std::string RunConfig::get_str(const std::string& key) const { return raw(key); }

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = raw(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, v, "bool (true/false/1/0)");
}

std::int64_t RunConfig::get_int(const std::string& key) const {
    const std::string& v = raw(key);
    errno = 0;
    char* end = nullptr;
    const long long parsed = std::strtoll(v.c_str(), &end, 10);
    if (errno != 0 || end == v.c_str() || *end != '\0') bad_value(key, v, "integer");
    return parsed;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string& v = raw(key);
    if (!v.empty() && v[0] == '-') bad_value(key, v, "unsigned integer");
    errno = 0;
    char* end = nullptr;
    const unsigned long long parsed = std::strtoull(v.c_str(), &end, 10);
    if (errno != 0 || end == v.c_str() || *end != '\0') bad_value(key, v, "unsigned integer");
    return parsed;
}

double RunConfig::get_real(const std::string& key) const {
    const std::string& v = raw(key);
    errno = 0;
    char* end = nullptr;
    const double parsed = std::strtod(v.c_str(), &end);
    if (errno != 0 || end == v.c_str() || *end != '\0') bad_value(key, v, "real number");
    return parsed;
}

std::vector<std::uint64_t> RunConfig::get_u64_list(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const std::string& part : split_list(raw(key))) {
        errno = 0;
        char* end = nullptr;
        if (!part.empty() && part[0] == '-') bad_value(key, part, "unsigned integer list");
        const unsigned long long parsed = std::strtoull(part.c_str(), &end, 10);
        if (errno != 0 || end == part.c_str() || *end != '\0')
            bad_value(key, part, "unsigned integer list");
        out.push_back(parsed);
    }
    return out;
}

std::vector<double> RunConfig::get_real_list(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& part : split_list(raw(key))) {
        errno = 0;
        char* end = nullptr;
        const double parsed = std::strtod(part.c_str(), &end);
        if (errno != 0 || end == part.c_str() || *end != '\0') bad_value(key, part, "real list");
        out.push_back(parsed);
    }
    return out;
}

std::string RunConfig::resolved_text() const {
    std::string out;
    for (const std::string& key : order_) {
        out += key;
        out += '=';
        out += values_.at(key);
        out += '\n';
    }
    return out;
}

nlohmann::ordered_json RunConfig::to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const std::string& key : order_) j[key] = values_.at(key);
    return j;
}

} // namespace tokenlab
