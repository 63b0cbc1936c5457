#include "softdr/elasticity.hpp"

#include <Eigen/LU>

#include <cmath>

namespace softdr {

void validate(const Material& m) {
  if (!(m.young_modulus > 0)) throw ValidationError("material: young_modulus must be > 0");
  if (!(m.poisson_ratio > 0)) throw ValidationError("material: poisson_ratio must be > 0");
  if (!(m.poisson_ratio < 0.5)) {
    throw ValidationError("material: poisson_ratio must be < 0.5 (incompressible limit)");
  }
  if (!(m.density > 0)) throw ValidationError("material: density must be > 0");
  if (!(m.damping_factor >= 0)) throw ValidationError("material: damping_factor must be >= 0");
}

LameParams lame_from_material(const Material& m) {
  if (!(m.young_modulus > 0)) throw ValidationError("material: young_modulus must be > 0");
  if (!(m.poisson_ratio < 0.5)) {
    throw ValidationError("material: poisson_ratio must be < 0.5 (incompressible limit)");
  }
  const double e = m.young_modulus, nu = m.poisson_ratio;
  return {e / (2 * (1 + nu)), e * nu / ((1 + nu) * (1 - 2 * nu))};
}

std::vector<double> lumped_masses(const TetMesh& mesh, double density) {
  std::vector<double> m(mesh.vertex_count(), 0.0);
  for (const Tet& t : mesh.tets) {
    const double vol = signed_tet_volume(mesh.vertices[t[0]], mesh.vertices[t[1]],
                                         mesh.vertices[t[2]], mesh.vertices[t[3]]);
    const double share = density * vol / 4;
    for (int v : t) m[v] += share;
  }
  return m;
}

namespace {

// Columns are dJ/dF columns: f1 x f2, f2 x f0, f0 x f1.
Mat3 cofactor(const Mat3& F) {
  Mat3 c;
  c.col(0) = F.col(1).cross(F.col(2));
  c.col(1) = F.col(2).cross(F.col(0));
  c.col(2) = F.col(0).cross(F.col(1));
  return c;
}

}  // namespace

double snh_energy_density(const Mat3& F, const LameParams& lame) {
  const double lam = lame.lambda + lame.mu;
  const double j = F.determinant();
  return 0.5 * lame.mu * (F.squaredNorm() - 3) - lame.mu * (j - 1) + 0.5 * lam * (j - 1) * (j - 1);
}

Mat3 snh_stress(const Mat3& F, const LameParams& lame) {
  const double lam = lame.lambda + lame.mu;
  const double j = F.determinant();
  return lame.mu * F + (lam * (j - 1) - lame.mu) * cofactor(F);
}

Mat3 snh_stress_differential(const Mat3& F, const Mat3& dF, const LameParams& lame) {
  const double lam = lame.lambda + lame.mu;
  const double j = F.determinant();
  const Mat3 cof = cofactor(F);
  Mat3 dcof;
  dcof.col(0) = dF.col(1).cross(F.col(2)) + F.col(1).cross(dF.col(2));
  dcof.col(1) = dF.col(2).cross(F.col(0)) + F.col(2).cross(dF.col(0));
  dcof.col(2) = dF.col(0).cross(F.col(1)) + F.col(0).cross(dF.col(1));
  const double dj = cof.cwiseProduct(dF).sum();
  return lame.mu * dF + lam * dj * cof + (lam * (j - 1) - lame.mu) * dcof;
}

ElasticModel::ElasticModel(const TetMesh& mesh, std::span<const Vec3> rest_pos,
                           const Material& material)
    : material_(material), lame_(lame_from_material(material)) {
  validate(material);
  if (rest_pos.size() != mesh.vertex_count()) {
    throw ValidationError("elastic model: rest positions do not match vertex count");
  }
  elements_.reserve(mesh.tet_count());
  for (std::size_t i = 0; i < mesh.tets.size(); ++i) {
    Element e{mesh.tets[i], Mat3::Zero(), 0};
    Mat3 dm;
    for (int k = 0; k < 3; ++k) dm.col(k) = rest_pos[e.nodes[k + 1]] - rest_pos[e.nodes[0]];
    e.volume = dm.determinant() / 6;
    if (!(e.volume > 0)) {
      throw ValidationError("elastic model: rest tet " + std::to_string(i) + " is degenerate");
    }
    e.dm_inv = dm.inverse();
    elements_.push_back(e);
  }
}

Mat3 ElasticModel::shape_matrix(const Element& e, std::span<const Vec3> x) const {
  Mat3 ds;
  for (int k = 0; k < 3; ++k) ds.col(k) = x[e.nodes[k + 1]] - x[e.nodes[0]];
  return ds;
}

double ElasticModel::add_forces(std::span<const Vec3> pos, std::span<const Vec3> vel,
                                std::span<Vec3> forces, int* inverted) const {
  const double eta = material_.damping_factor;
  double energy = 0;
  int n_inverted = 0;
  for (const Element& e : elements_) {
    const Mat3 F = shape_matrix(e, pos) * e.dm_inv;
    const double j = F.determinant();
    if (j <= 0) ++n_inverted;
    energy += e.volume * snh_energy_density(F, lame_);
    Mat3 P = snh_stress(F, lame_);
    if (eta > 0) P += eta * (shape_matrix(e, vel) * e.dm_inv);
    // gradient of the element energy w.r.t. nodes 1..3; node 0 takes minus the sum
    const Mat3 h = e.volume * P * e.dm_inv.transpose();
    for (int k = 0; k < 3; ++k) forces[e.nodes[k + 1]] -= h.col(k);
    forces[e.nodes[0]] += h.col(0) + h.col(1) + h.col(2);
  }
  if (inverted) *inverted = n_inverted;
  return energy;
}

double ElasticModel::energy(std::span<const Vec3> pos) const {
  double energy = 0;
  for (const Element& e : elements_) {
    energy += e.volume * snh_energy_density(shape_matrix(e, pos) * e.dm_inv, lame_);
  }
  return energy;
}

void ElasticModel::add_forces_vjp(std::span<const Vec3> pos, std::span<const Vec3> a,
                                  std::span<Vec3> x_bar, std::span<Vec3> v_bar) const {
  // Both force Jacobians are symmetric (energy Hessian, Kelvin-Voigt operator),
  // so the VJP is the Jacobian applied to `a`.
  const double eta = material_.damping_factor;
  for (const Element& e : elements_) {
    const Mat3 F = shape_matrix(e, pos) * e.dm_inv;
    const Mat3 dF = shape_matrix(e, a) * e.dm_inv;
    const Mat3 hx = e.volume * snh_stress_differential(F, dF, lame_) * e.dm_inv.transpose();
    for (int k = 0; k < 3; ++k) x_bar[e.nodes[k + 1]] -= hx.col(k);
    x_bar[e.nodes[0]] += hx.col(0) + hx.col(1) + hx.col(2);
    if (eta > 0) {
      const Mat3 hv = (e.volume * eta) * dF * e.dm_inv.transpose();
      for (int k = 0; k < 3; ++k) v_bar[e.nodes[k + 1]] -= hv.col(k);
      v_bar[e.nodes[0]] += hv.col(0) + hv.col(1) + hv.col(2);
    }
  }
}

ElasticResult elastic_forces(const TetMesh& mesh, std::span<const Vec3> rest_pos,
                             std::span<const Vec3> pos, std::span<const Vec3> vel,
                             const Material& material) {
  if (pos.size() != mesh.vertex_count() || vel.size() != mesh.vertex_count()) {
    throw ValidationError("elastic_forces: positions/velocities do not match vertex count");
  }
  ElasticModel model(mesh, rest_pos, material);
  ElasticResult out;
  out.forces = zero_field(mesh.vertex_count());
  out.energy = model.add_forces(pos, vel, out.forces, &out.inverted);
  return out;
}

}  // namespace softdr
