#pragma once

#include <span>
#include <vector>

#include "softdr/common.hpp"
#include "softdr/tetmesh.hpp"

namespace softdr {

/// Isotropic soft material. damping_factor is the Kelvin-Voigt viscosity in
/// Pa*s applied to the rate of the deformation gradient.
struct Material {
  double young_modulus = 149e3;  // Pa
  double poisson_ratio = 0.40;
  double density = 1080.0;       // kg/m^3
  double damping_factor = 0.40;
};

struct LameParams {
  double mu;
  double lambda;
};

void validate(const Material& m);
LameParams lame_from_material(const Material& m);

/// rho * vol / 4 per tet corner, accumulated in tet order.
std::vector<double> lumped_masses(const TetMesh& mesh, double density);

/// Stable Neo-Hookean energy density
///   psi(F) = mu/2 (tr(F^T F) - 3) - mu (J - 1) + lambda'/2 (J - 1)^2,
/// lambda' = lambda + mu.
double snh_energy_density(const Mat3& F, const LameParams& lame);
/// First Piola-Kirchhoff stress dpsi/dF.
Mat3 snh_stress(const Mat3& F, const LameParams& lame);
/// Directional derivative of the stress, dP/dF : dF.
Mat3 snh_stress_differential(const Mat3& F, const Mat3& dF, const LameParams& lame);

struct ElasticResult {
  Field3 forces;
  double energy = 0;
  int inverted = 0;
};

/// Precomputed rest-shape data for one mesh.
class ElasticModel {
 public:
  ElasticModel(const TetMesh& mesh, std::span<const Vec3> rest_pos, const Material& material);

  const LameParams& lame() const { return lame_; }
  const Material& material() const { return material_; }

  /// Adds elastic and Kelvin-Voigt forces into `forces`; returns elastic energy.
  /// `inverted` (optional) receives the count of elements with J <= 0.
  double add_forces(std::span<const Vec3> pos, std::span<const Vec3> vel,
                    std::span<Vec3> forces, int* inverted = nullptr) const;

  double energy(std::span<const Vec3> pos) const;

  /// x_bar += (dF/dx)^T a,  v_bar += (dF/dv)^T a  for the forces of add_forces.
  void add_forces_vjp(std::span<const Vec3> pos, std::span<const Vec3> a,
                      std::span<Vec3> x_bar, std::span<Vec3> v_bar) const;

 private:
  struct Element {
    Tet nodes;
    Mat3 dm_inv;
    double volume;
  };
  Mat3 shape_matrix(const Element& e, std::span<const Vec3> x) const;

  std::vector<Element> elements_;
  Material material_;
  LameParams lame_;
};

ElasticResult elastic_forces(const TetMesh& mesh, std::span<const Vec3> rest_pos,
                             std::span<const Vec3> pos, std::span<const Vec3> vel,
                             const Material& material);

}  // namespace softdr
