#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace timepar {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Contract violations: mismatched shapes, bad layer ranges, invalid arguments.
struct ContractError : std::invalid_argument {
    explicit ContractError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Non-finite values or rank-deficient solves.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken message contract between segment workers.
struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed external files (IDX, config).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

inline void require_finite(const Matrix& m, const std::string& what) {
    if (!m.allFinite()) throw NumericError("non-finite values in " + what);
}

inline void require_finite(const Vector& v, const std::string& what) {
    if (!v.allFinite()) throw NumericError("non-finite values in " + what);
}

}  // namespace timepar
