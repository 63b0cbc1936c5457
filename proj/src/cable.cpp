#include "softdr/cable.hpp"

namespace softdr {

CableMode cable_mode_from_string(const std::string& s) {
  if (s == "conserving") return CableMode::conserving;
  if (s == "literal") return CableMode::literal;
  throw ValidationError("unknown cable mode '" + s + "' (expected conserving or literal)");
}

std::string to_string(CableMode m) { return m == CableMode::conserving ? "conserving" : "literal"; }

Cable make_cable(const TetMesh& mesh, std::span<const Vec3> via_points, double stiffness,
                 double damping, ScatterMode mapping) {
  if (via_points.size() < 2) throw ValidationError("a cable needs at least 2 via points");
  if (!(stiffness >= 0) || !(damping >= 0)) {
    throw ValidationError("cable stiffness and damping must be >= 0");
  }
  return Cable{ForceScatter(mesh, embed_points(mesh, via_points), mapping), stiffness, damping};
}

double pull_ratio_from_geometry(const Vec3& h0, const Vec3& h1, const Vec3& hH) {
  const double span = (hH - h1).norm();
  if (!(span > 0)) throw NumericalError("pull ratio: h1 and hH coincide (zero cable span)");
  return (h1 - h0).norm() / span;
}

Field3 via_point_forces(double p, double stiffness, double damping, std::span<const Vec3> via_pos,
                        std::span<const Vec3> via_vel, CableMode mode) {
  const std::size_t h = via_pos.size();
  if (h < 2) throw ValidationError("via_point_forces: need at least 2 via points");
  if (via_vel.size() != h) throw ValidationError("via_point_forces: velocity count mismatch");

  const double pk = p * stiffness;
  Field3 f(h);
  if (mode == CableMode::conserving) {
    for (std::size_t i = 0; i < h; ++i) f[i] = -damping * via_vel[i];
    for (std::size_t j = 0; j + 1 < h; ++j) {
      const Vec3 s = pk * (via_pos[j + 1] - via_pos[j]);
      f[j] += s;
      f[j + 1] -= s;
    }
    return f;
  }
  // The recursion carries the spring part g_i; damping stays local to each
  // via point. Same operation order as above so that H = 2 matches bitwise.
  for (std::size_t i = 0; i < h; ++i) f[i] = -damping * via_vel[i];
  Vec3 g = pk * (via_pos[1] - via_pos[0]);
  f[0] += g;
  for (std::size_t i = 1; i + 1 < h; ++i) {
    g = -g + pk * (via_pos[i + 1] - via_pos[i]);
    f[i] += g;
  }
  f[h - 1] -= g;
  return f;
}

double via_point_forces_vjp(double p, double stiffness, double damping,
                            std::span<const Vec3> via_pos, std::span<const Vec3> f_bar,
                            CableMode mode, std::span<Vec3> pos_bar, std::span<Vec3> vel_bar) {
  const std::size_t h = via_pos.size();
  const double pk = p * stiffness;
  // s_bar[j] is the cotangent of spring term s_j = pk (h_{j+1} - h_j)
  std::vector<Vec3> s_bar(h - 1);
  if (mode == CableMode::conserving) {
    for (std::size_t i = 0; i < h; ++i) vel_bar[i] -= damping * f_bar[i];
    for (std::size_t j = 0; j + 1 < h; ++j) s_bar[j] = f_bar[j] - f_bar[j + 1];
  } else {
    // reverse the spring recursion: g_{i+1} depends on -g_i
    for (std::size_t i = 0; i < h; ++i) vel_bar[i] -= damping * f_bar[i];
    Vec3 next = f_bar[h - 1];
    for (std::size_t i = h - 1; i-- > 0;) {
      s_bar[i] = f_bar[i] - next;
      next = s_bar[i];
    }
  }
  double p_bar = 0;
  for (std::size_t j = 0; j + 1 < h; ++j) {
    const Vec3 d = via_pos[j + 1] - via_pos[j];
    pos_bar[j + 1] += pk * s_bar[j];
    pos_bar[j] -= pk * s_bar[j];
    p_bar += stiffness * s_bar[j].dot(d);
  }
  return p_bar;
}

void add_nodal_cable_forces(const TetMesh& mesh, const Cable& cable, double p,
                            std::span<const Vec3> nodal_pos, std::span<const Vec3> nodal_vel,
                            CableMode mode, std::span<Vec3> out) {
  const auto& emb = cable.scatter.embedding();
  const Field3 h = interpolate(mesh, emb, nodal_pos);
  const Field3 hdot = interpolate(mesh, emb, nodal_vel);
  const Field3 f = via_point_forces(p, cable.stiffness, cable.damping, h, hdot, mode);
  cable.scatter.scatter_add(f, out);
}

Field3 nodal_cable_forces(const TetMesh& mesh, const Cable& cable, double p,
                          std::span<const Vec3> nodal_pos, std::span<const Vec3> nodal_vel,
                          CableMode mode) {
  Field3 out = zero_field(mesh.vertex_count());
  add_nodal_cable_forces(mesh, cable, p, nodal_pos, nodal_vel, mode, out);
  return out;
}

double nodal_cable_forces_vjp(const TetMesh& mesh, const Cable& cable, double p,
                              std::span<const Vec3> nodal_pos, std::span<const Vec3> a,
                              CableMode mode, std::span<Vec3> x_bar, std::span<Vec3> v_bar) {
  const auto& emb = cable.scatter.embedding();
  const std::size_t h = emb.size();
  Field3 f_bar = zero_field(h);
  cable.scatter.gather_transpose(a, f_bar);

  const Field3 via_pos = interpolate(mesh, emb, nodal_pos);
  Field3 pos_bar = zero_field(h), vel_bar = zero_field(h);
  const double p_bar =
      via_point_forces_vjp(p, cable.stiffness, cable.damping, via_pos, f_bar, mode, pos_bar, vel_bar);

  // interpolation adjoint is W^T
  for (std::size_t i = 0; i < h; ++i) {
    const auto& e = emb.entries[i];
    const Tet& t = mesh.tets[e.host_tet];
    for (int k = 0; k < 4; ++k) {
      x_bar[t[k]] += e.weights[k] * pos_bar[i];
      v_bar[t[k]] += e.weights[k] * vel_bar[i];
    }
  }
  return p_bar;
}

}  // namespace softdr
