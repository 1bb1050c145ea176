#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace eigenscope {

using cplx = std::complex<double>;
using Index = Eigen::Index;
using Matrix = Eigen::MatrixXcd;  // column-major
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

enum class ErrorKind {
  InvalidArgument,
  DimensionMismatch,
  NotUnitary,
  Precondition,
  Budget,
  Io,
};

const char* to_string(ErrorKind kind);

/// Exception carrying a category and, where one exists, the measured quantity
/// that triggered it (a norm defect, a mass, an estimated work size).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what,
        std::optional<double> measured = std::nullopt)
      : std::runtime_error(what), kind_(kind), measured_(measured) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<double> measured() const noexcept { return measured_; }

 private:
  ErrorKind kind_;
  std::optional<double> measured_;
};

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kPi = 3.1415926535897932384626433832795;

}  // namespace eigenscope
