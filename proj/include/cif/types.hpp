#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cif {

using Scalar = double;
using Index = Eigen::Index;

using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using ConstVecRef = Eigen::Ref<const Vector>;
using ConstMatRef = Eigen::Ref<const Matrix>;

// Rows are samples, columns are variables; entries are 0 or 1.
using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A subset of {1..n} or a joint state: bit i-1 is set iff x_i belongs to the set / equals one.
using Mask = std::uint32_t;

// Exact enumeration ceiling (2^20 states).
inline constexpr int kMaxVariables = 20;

enum class ErrorCode {
  NonPositiveEntry,
  BadLength,
  NonPositiveReconstruction,
  Overflow,
  BadOrder,
  NoConvergence,
  NonRealizable,
  DimensionMismatch,
  SingularSubblock,
  CapExceeded,
  Diverged,
  Parse,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline int cardinality(Mask m) { return __builtin_popcount(m); }

inline Mask full_mask(int n) { return n >= 32 ? ~Mask{0} : (Mask{1} << n) - 1; }

inline Index state_count(int n) { return Index{1} << n; }

}  // namespace cif
