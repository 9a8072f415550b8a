#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ape::report {

struct MethodRow {
    std::string method;
    std::size_t epochs = 0;
    std::size_t params = 0;
    std::optional<double> accuracy;  // percent; absent without test labels
};

/// Accuracy report: an aligned method/epochs/param/acc table, optional extra sections,
/// and a trailing `[results]` key/value block that tests and scripts read back.
struct EvalReport {
    std::vector<MethodRow> rows;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::pair<std::string, std::vector<std::string>>> sections;
    std::optional<double> wall_time_s;

    void add_config(const std::string& key, const std::string& value) {
        config.emplace_back(key, value);
    }
    std::string format() const;
};

std::string format_double(double x);

/// Parses `key = value` lines of the `[results]` and `[config]` blocks,
/// prefixing config keys with `config.`.
std::map<std::string, std::string> parse_values(const std::string& text);

}  // namespace ape::report
