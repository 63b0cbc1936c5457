#include "softdr/contact.hpp"

#include <cmath>

namespace softdr {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Deterministic unit vector orthogonal to `a`.
Vec3 any_orthogonal(const Vec3& a) {
  const Vec3 helper = std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return a.cross(helper).normalized();
}

SdfDerivatives sphere_sdf(const Sphere& s, const Vec3& p) {
  const Vec3 r = p - s.center;
  const double rho = r.norm();
  if (rho == 0) return {-s.radius, Vec3::UnitZ(), Vec3::UnitZ(), Mat3::Zero()};
  const Vec3 n = r / rho;
  return {rho - s.radius, n, n, (Mat3::Identity() - n * n.transpose()) / rho};
}

SdfDerivatives cylinder_sdf(const CappedCylinder& c, const Vec3& p) {
  const Vec3& a = c.axis;
  const Vec3 q = p - c.base;
  const double h = q.dot(a);
  const Vec3 u = q - h * a;
  const double rho = u.norm();
  const Vec3 radial = rho > 0 ? Vec3(u / rho) : any_orthogonal(a);
  const double half = 0.5 * c.height;
  const double side = (h >= half) ? 1.0 : -1.0;
  const double dx = rho - c.radius;
  const double dy = std::abs(h - half) - half;
  const Mat3 radial_jac =
      rho > 0 ? Mat3((Mat3::Identity() - a * a.transpose() - radial * radial.transpose()) / rho)
              : Mat3::Zero();

  if (dx > 0 && dy > 0) {
    const Vec3 w = dx * radial + dy * side * a;
    const double d = w.norm();
    const Vec3 n = w / d;
    // d(w)/dp = radial radial^T + a a^T + dx * radial_jac
    const Mat3 dw = radial * radial.transpose() + a * a.transpose() + dx * radial_jac;
    return {d, n, n, (Mat3::Identity() - n * n.transpose()) * dw / d};
  }
  if (dx > 0) return {dx, radial, radial, radial_jac};
  if (dy > 0) return {dy, side * a, side * a, Mat3::Zero()};
  if (dx >= dy) return {dx, radial, radial, radial_jac};
  return {dy, side * a, side * a, Mat3::Zero()};
}

SdfDerivatives egg_sdf(const Egg& e, const Vec3& p) {
  const Vec3 r = p - e.center;
  const double s = r.z() >= 0 ? e.polar_scale_top : e.polar_scale_bottom;
  const double m = std::min({1.0, e.polar_scale_top, e.polar_scale_bottom});
  const Vec3 scaled(r.x(), r.y(), r.z() / s);
  const double rho = scaled.norm();
  const double d = m * (rho - e.equatorial_radius);
  if (rho == 0) return {d, Vec3::Zero(), Vec3::UnitZ(), Mat3::Zero()};
  const Vec3 g(r.x(), r.y(), r.z() / (s * s));  // D * scaled
  const double gn = g.norm();
  const Vec3 n = g / gn;
  const Mat3 E = Vec3(1, 1, 1 / (s * s)).asDiagonal();
  return {d, m * g / rho, n, (Mat3::Identity() - n * n.transpose()) * E / gn};
}

SdfDerivatives half_space_sdf(const HalfSpace& h, const Vec3& p) {
  return {(p - h.point).dot(h.normal), h.normal, h.normal, Mat3::Zero()};
}

}  // namespace

std::string shape_type_name(const SDFShape& s) {
  return std::visit(Overloaded{[](const Sphere&) { return std::string("sphere"); },
                               [](const CappedCylinder&) { return std::string("capped_cylinder"); },
                               [](const Egg&) { return std::string("egg"); },
                               [](const HalfSpace&) { return std::string("half_space"); }},
                    s);
}

void validate(const SDFShape& shape) {
  auto unit = [](const Vec3& v, const char* what) {
    if (!v.allFinite() || std::abs(v.norm() - 1.0) > 1e-12) {
      throw ValidationError(std::string(what) + " must be unit length");
    }
  };
  std::visit(Overloaded{
                 [](const Sphere& s) {
                   if (!(s.radius > 0)) throw ValidationError("sphere radius must be > 0");
                 },
                 [&](const CappedCylinder& c) {
                   if (!(c.radius > 0) || !(c.height > 0)) {
                     throw ValidationError("cylinder radius and height must be > 0");
                   }
                   unit(c.axis, "cylinder axis");
                 },
                 [](const Egg& e) {
                   if (!(e.equatorial_radius > 0) || !(e.polar_scale_top > 0) ||
                       !(e.polar_scale_bottom > 0)) {
                     throw ValidationError("egg radius and polar scales must be > 0");
                   }
                 },
                 [&](const HalfSpace& h) { unit(h.normal, "half-space normal"); }},
             shape);
}

Vec3 shape_center(const SDFShape& shape) {
  return std::visit(Overloaded{[](const Sphere& s) { return s.center; },
                               [](const CappedCylinder& c) { return Vec3(c.base + 0.5 * c.height * c.axis); },
                               [](const Egg& e) { return e.center; },
                               [](const HalfSpace& h) { return h.point; }},
                    shape);
}

SdfDerivatives sdf_derivatives(const SDFShape& shape, const Vec3& point) {
  return std::visit(Overloaded{[&](const Sphere& s) { return sphere_sdf(s, point); },
                               [&](const CappedCylinder& c) { return cylinder_sdf(c, point); },
                               [&](const Egg& e) { return egg_sdf(e, point); },
                               [&](const HalfSpace& h) { return half_space_sdf(h, point); }},
                    shape);
}

SdfSample sdf_eval(const SDFShape& shape, const Vec3& point) {
  const SdfDerivatives d = sdf_derivatives(shape, point);
  return {d.distance, d.normal};
}

void validate(const ContactParams& p) {
  if (!(p.penalty_stiffness >= 0) || !(p.penalty_damping >= 0)) {
    throw ValidationError("contact: penalty stiffness and damping must be >= 0");
  }
}

void add_penalty_forces(std::span<const Vec3> pos, std::span<const Vec3> vel,
                        const SDFShape& shape, const ContactParams& params,
                        std::span<Vec3> forces) {
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const SdfSample s = sdf_eval(shape, pos[i]);
    if (!(s.distance < 0)) continue;
    forces[i] += (-params.penalty_stiffness * s.distance) * s.normal -
                 (params.penalty_damping * vel[i].dot(s.normal)) * s.normal;
  }
}

Field3 penalty_forces(std::span<const Vec3> pos, std::span<const Vec3> vel, const SDFShape& shape,
                      const ContactParams& params) {
  Field3 out = zero_field(pos.size());
  add_penalty_forces(pos, vel, shape, params, out);
  return out;
}

void add_penalty_forces_vjp(std::span<const Vec3> pos, std::span<const Vec3> vel,
                            const SDFShape& shape, const ContactParams& params,
                            std::span<const Vec3> a, std::span<Vec3> x_bar,
                            std::span<Vec3> v_bar) {
  const double k = params.penalty_stiffness, c = params.penalty_damping;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const SdfDerivatives s = sdf_derivatives(shape, pos[i]);
    if (!(s.distance < 0)) continue;
    const Vec3& n = s.normal;
    const double an = a[i].dot(n);
    const double vn = vel[i].dot(n);
    const Vec3 w = k * s.distance * a[i] + c * an * vel[i] + c * vn * a[i];
    x_bar[i] += -k * an * s.gradient - s.normal_jacobian.transpose() * w;
    v_bar[i] += -c * an * n;
  }
}

}  // namespace softdr
