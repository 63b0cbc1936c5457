#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "softdr/common.hpp"

namespace softdr {

using Tet = std::array<int, 4>;
using Tri = std::array<int, 3>;

/// Tetrahedral volume mesh. Tets are positively oriented, surface triangles
/// face outward and cover the boundary of the complex exactly once.
struct TetMesh {
  Field3 vertices;
  std::vector<Tet> tets;
  std::vector<Tri> surface_tris;
  std::vector<int> fixed_nodes;  // sorted, unique

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t tet_count() const { return tets.size(); }
};

/// What mesh construction had to repair.
struct MeshReport {
  std::vector<int> reoriented_tets;
};

double signed_tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

/// Validates indices, flips negatively oriented tets, rejects degenerate ones
/// and extracts the outward boundary. Throws ValidationError.
TetMesh build_tet_mesh(Field3 vertices, std::vector<Tet> tets, std::vector<int> fixed_nodes,
                       MeshReport* report = nullptr);

/// Boundary faces of a positively oriented tet complex, in tet order.
std::vector<Tri> extract_surface(std::span<const Tet> tets);

/// Ordered via-point path of one cable, in mesh coordinates.
struct CablePath {
  Field3 via_points;
};

/// A mesh together with the cable paths declared alongside it.
struct MeshFile {
  TetMesh mesh;
  std::vector<CablePath> cables;
  MeshReport report;
};

enum class MeshFormat { json, tetgen };

MeshFormat mesh_format_from_string(const std::string& s);
std::string to_string(MeshFormat f);

/// Reads a mesh. For tetgen, `path` may name the .node file, the .ele file or
/// the common stem.
MeshFile load_mesh(const std::filesystem::path& path, MeshFormat format);
void save_mesh_json(const std::filesystem::path& path, const TetMesh& mesh,
                    std::span<const CablePath> cables = {});

// ---------------------------------------------------------------------------
// Procedural robots

enum class RobotKind { finger, trunk, starfish };

RobotKind robot_kind_from_string(const std::string& s);
std::string to_string(RobotKind k);

/// Dimensions and resolution for the procedural generators. Lengths in meters.
///
/// finger:   box of width (x) * depth (y) * length (z), cells nx * ny * nz,
///           each cell split into 6 tets. Base at z = 0.
/// trunk:    cylinder of `radius` and `length` along +z, `rings` concentric
///           rings per cross-section and `segments` layers. Radius is scaled
///           linearly to `tip_scale * radius` at the tip.
/// starfish: pentagonal hub of circumradius `radius` with five arms of
///           `length`, `segments` cells per arm and `layers` through the
///           `thickness` (z). Arms lie in the xy-plane.
struct RobotParams {
  RobotKind kind = RobotKind::finger;
  double length = 0.1;
  double width = 0.012;
  double depth = 0.012;
  double radius = 0.01;
  double thickness = 0.01;
  double tip_scale = 1.0;
  int nx = 2;
  int ny = 2;
  int segments = 8;
  int rings = 2;
  int layers = 2;
  int cable_count = 3;
  int via_points = 3;
  double cable_offset = 0.6;  // fraction of the half cross-section
  double cable_phase = 0.3;   // radians
};

struct CountFormula {
  std::size_t vertices;
  std::size_t tets;
};

/// Closed-form vertex/tet counts of the generator for `params`.
CountFormula robot_counts(const RobotParams& params);

struct GeneratedRobot {
  TetMesh mesh;
  std::vector<CablePath> cables;
};

GeneratedRobot generate_robot(const RobotParams& params);

// ---------------------------------------------------------------------------
// Barycentric embedding

struct EmbeddingEntry {
  int host_tet;
  std::array<double, 4> weights;
};

/// Rows of the sparse H x N matrix W: point i = sum_k weights[k] * v[tet[k]].
struct BarycentricEmbedding {
  std::vector<EmbeddingEntry> entries;
  std::size_t size() const { return entries.size(); }
};

/// Barycentric coordinates of p with respect to the tet (a, b, c, d).
std::array<double, 4> barycentric(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d,
                                  const Vec3& p);

/// Host tet is the lowest-index tet containing the point (weights >= -1e-9);
/// weights are then clamped to >= 0 and renormalized.
BarycentricEmbedding embed_points(const TetMesh& mesh, std::span<const Vec3> points);

Field3 interpolate(const TetMesh& mesh, const BarycentricEmbedding& embedding,
                   std::span<const Vec3> nodal_field);

enum class ScatterMode { transpose, pseudoinverse };

ScatterMode scatter_mode_from_string(const std::string& s);
std::string to_string(ScatterMode m);

/// Linear map from via-point forces to nodal forces. Transpose mode applies
/// W^T. Pseudoinverse mode applies the Moore-Penrose inverse of W restricted
/// to the nodes W touches; it is precomputed once since W is fixed.
class ForceScatter {
 public:
  ForceScatter(const TetMesh& mesh, BarycentricEmbedding embedding, ScatterMode mode);

  ScatterMode mode() const { return mode_; }
  const BarycentricEmbedding& embedding() const { return embedding_; }

  /// nodal += S f
  void scatter_add(std::span<const Vec3> via_forces, std::span<Vec3> nodal) const;
  /// via += S^T a
  void gather_transpose(std::span<const Vec3> nodal, std::span<Vec3> via) const;

 private:
  BarycentricEmbedding embedding_;
  std::vector<Tet> hosts_;        // host tet nodes per via point
  ScatterMode mode_;
  std::vector<int> touched_;      // pseudoinverse only
  Eigen::MatrixXd pinv_;          // touched x H
};

/// Nodal forces for the given via forces (fresh zero field of vertex count).
Field3 scatter_forces(const TetMesh& mesh, const BarycentricEmbedding& embedding,
                      std::span<const Vec3> via_forces, ScatterMode mode);

}  // namespace softdr
