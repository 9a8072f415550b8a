#include "ape/report.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "ape/error.hpp"
#include "ape/numkit.hpp"

namespace ape::report {

std::string format_double(double x) { return numkit::format_exact(x); }

std::string EvalReport::format() const {
    std::ostringstream os;
    os << "APE-REPORT v1\n\n";
    os << std::left << std::setw(14) << "method" << std::right << std::setw(8) << "epochs"
       << std::setw(12) << "param" << std::setw(10) << "acc(%)" << "\n";
    for (const auto& row : rows) {
        require(!row.accuracy || (*row.accuracy >= 0.0 && *row.accuracy <= 100.0),
                ErrorKind::InvalidArgument, "accuracy outside [0, 100]");
        os << std::left << std::setw(14) << row.method << std::right << std::setw(8) << row.epochs
           << std::setw(12) << row.params << std::setw(10);
        if (row.accuracy) {
            os << std::fixed << std::setprecision(2) << *row.accuracy << std::defaultfloat;
        } else {
            os << "-";
        }
        os << "\n";
    }
    for (const auto& [title, lines] : sections) {
        os << "\n[" << title << "]\n";
        for (const auto& line : lines) os << line << "\n";
    }
    os << "\n[config]\n";
    for (const auto& [k, v] : config) os << k << " = " << v << "\n";
    os << "\n[results]\n";
    for (const auto& row : rows) {
        if (row.accuracy) os << row.method << ".acc = " << format_double(*row.accuracy) << "\n";
        os << row.method << ".param = " << row.params << "\n";
        os << row.method << ".epochs = " << row.epochs << "\n";
    }
    if (wall_time_s) os << "wall_time_s = " << std::fixed << std::setprecision(3) << *wall_time_s << "\n";
    return os.str();
}

std::map<std::string, std::string> parse_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream is(text);
    std::string line;
    std::string block;
    while (std::getline(is, line)) {
        if (!line.empty() && line.front() == '[') {
            block = line;
            continue;
        }
        if (block != "[results]" && block != "[config]") continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        out[block == "[config]" ? "config." + key : key] = line.substr(eq + 3);
    }
    return out;
}

}  // namespace ape::report
