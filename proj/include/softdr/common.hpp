#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>
#include <vector>

namespace softdr {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Per-vertex 3D field (positions, velocities, forces).
using Field3 = std::vector<Vec3>;

/// Malformed input: bad files, schema violations, inconsistent dimensions.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values, singular systems, integration blow-ups.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Field3 zero_field(std::size_t n) { return Field3(n, Vec3::Zero()); }

}  // namespace softdr
