#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace invamp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : Error {
    std::size_t line;
    ParseError(const std::string& msg, std::size_t line_no)
        : Error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
};
struct ValidationError : Error { using Error::Error; };
struct AllocationError : Error { using Error::Error; };
struct BrauerSolowError : Error { using Error::Error; };
struct NumericalError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct SpecError : Error { using Error::Error; };
struct ParameterError : Error { using Error::Error; };
struct EstimationError : Error { using Error::Error; };
struct CalibrationError : Error { using Error::Error; };
struct ConvergenceError : Error { using Error::Error; };

// collects non-fatal warnings; callers decide whether to print them
struct Diagnostics {
    std::vector<std::string> warnings;
    void warn(std::string w) { warnings.push_back(std::move(w)); }
};

inline void warn(Diagnostics* d, std::string w) {
    if (d) d->warn(std::move(w));
}

}  // namespace invamp
