#pragma once

#include <span>
#include <string>
#include <variant>

#include "softdr/common.hpp"

namespace softdr {

struct Sphere {
  Vec3 center;
  double radius;
};

/// Solid cylinder from `base` along unit `axis` for `height`, with flat caps.
struct CappedCylinder {
  Vec3 base;
  Vec3 axis;
  double radius;
  double height;
};

/// Sphere of `equatorial_radius` scaled along +z by polar_scale_top above the
/// center and by polar_scale_bottom below it.
struct Egg {
  Vec3 center;
  double equatorial_radius;
  double polar_scale_top;
  double polar_scale_bottom;
};

struct HalfSpace {
  Vec3 point;
  Vec3 normal;  // outward, pointing away from the solid
};

using SDFShape = std::variant<Sphere, CappedCylinder, Egg, HalfSpace>;

std::string shape_type_name(const SDFShape& s);
void validate(const SDFShape& s);

/// Point used as the camera-rig center for the shape.
Vec3 shape_center(const SDFShape& s);

struct SdfSample {
  double distance;
  Vec3 normal;  // unit outward direction
};

/// Signed distance: negative inside. Exact for sphere, cylinder and
/// half-space; for the egg the zero set and sign are exact and |d| is a lower
/// bound on the true distance.
SdfSample sdf_eval(const SDFShape& shape, const Vec3& point);

/// Distance, its gradient and the Jacobian of the returned normal, needed by
/// the contact adjoint. Only meaningful for points inside the solid.
struct SdfDerivatives {
  double distance;
  Vec3 gradient;  // d(distance)/d(point)
  Vec3 normal;
  Mat3 normal_jacobian;
};
SdfDerivatives sdf_derivatives(const SDFShape& shape, const Vec3& point);

struct ContactParams {
  double penalty_stiffness = 1e4;  // N/m
  double penalty_damping = 1.0;    // N*s/m
};

void validate(const ContactParams& p);

/// Adds penalty forces for nodes inside `shape`; nodes with d >= 0 are untouched.
void add_penalty_forces(std::span<const Vec3> pos, std::span<const Vec3> vel,
                        const SDFShape& shape, const ContactParams& params,
                        std::span<Vec3> forces);

Field3 penalty_forces(std::span<const Vec3> pos, std::span<const Vec3> vel, const SDFShape& shape,
                      const ContactParams& params);

/// Adjoint of add_penalty_forces for cotangent `a`.
void add_penalty_forces_vjp(std::span<const Vec3> pos, std::span<const Vec3> vel,
                            const SDFShape& shape, const ContactParams& params,
                            std::span<const Vec3> a, std::span<Vec3> x_bar, std::span<Vec3> v_bar);

}  // namespace softdr
