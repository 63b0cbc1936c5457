#pragma once

#include <span>
#include <string>
#include <vector>

#include "softdr/common.hpp"
#include "softdr/tetmesh.hpp"

namespace softdr {

/// How neighbouring via points share spring forces.
///
/// conserving: spring j pushes +s_j on via point j and -s_j on j+1, so the
///             via forces sum to zero when damping is off.
/// literal:    the spring part follows g_i = -g_{i-1} + s_i (g_{H-1} closing
///             as -g_{H-2}); damping -b*hdot_i is added per point. Agrees
///             with `conserving` only for two via points.
enum class CableMode { conserving, literal };

CableMode cable_mode_from_string(const std::string& s);
std::string to_string(CableMode m);

/// A cable threaded through the mesh. Via-point kinematics always come from
/// the nodal state through `scatter.embedding()`.
struct Cable {
  ForceScatter scatter;
  double stiffness = 100.0;  // N/m
  double damping = 0.01;     // kg/s

  std::size_t via_count() const { return scatter.embedding().size(); }
};

/// Builds a cable by embedding its via points in `mesh`.
Cable make_cable(const TetMesh& mesh, std::span<const Vec3> via_points, double stiffness,
                 double damping, ScatterMode mapping = ScatterMode::transpose);

/// ||h1 - h0|| / ||hH - h1||.
double pull_ratio_from_geometry(const Vec3& h0, const Vec3& h1, const Vec3& hH);

/// Forces at the H via points for pull ratio p.
Field3 via_point_forces(double p, double stiffness, double damping, std::span<const Vec3> via_pos,
                        std::span<const Vec3> via_vel, CableMode mode);

/// Vector-Jacobian products of via_point_forces. Given the cotangent `f_bar`
/// of the forces, accumulates into pos_bar and vel_bar and returns df/dp^T f_bar.
double via_point_forces_vjp(double p, double stiffness, double damping,
                            std::span<const Vec3> via_pos, std::span<const Vec3> f_bar,
                            CableMode mode, std::span<Vec3> pos_bar, std::span<Vec3> vel_bar);

/// Cable force field F^c: interpolate -> via forces -> scatter, added into `out`.
void add_nodal_cable_forces(const TetMesh& mesh, const Cable& cable, double p,
                            std::span<const Vec3> nodal_pos, std::span<const Vec3> nodal_vel,
                            CableMode mode, std::span<Vec3> out);

Field3 nodal_cable_forces(const TetMesh& mesh, const Cable& cable, double p,
                          std::span<const Vec3> nodal_pos, std::span<const Vec3> nodal_vel,
                          CableMode mode);

/// Adjoint of add_nodal_cable_forces for cotangent `a` on the nodal forces.
/// Accumulates into x_bar / v_bar and returns the p cotangent.
double nodal_cable_forces_vjp(const TetMesh& mesh, const Cable& cable, double p,
                              std::span<const Vec3> nodal_pos, std::span<const Vec3> a,
                              CableMode mode, std::span<Vec3> x_bar, std::span<Vec3> v_bar);

}  // namespace softdr
