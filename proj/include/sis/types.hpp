#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sis {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using IntVector = Eigen::VectorXi;
using BoolArray = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Raised for malformed or inconsistent on-disk data (bad magic, truncated
/// payloads, label bytes out of range, mismatched manifests).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a numeric procedure leaves the finite domain (e.g. the
/// training loss becomes NaN/Inf).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Spatial layout of one input. Feature vectors are pixel-major: feature
/// index = pixel * channels + channel, with pixel = row * width + col.
struct InputShape {
  int height = 0;
  int width = 0;
  int channels = 0;

  int pixels() const { return height * width; }
  int features() const { return height * width * channels; }

  bool operator==(const InputShape& other) const = default;

  std::string str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" +
           std::to_string(channels);
  }
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

}  // namespace sis
