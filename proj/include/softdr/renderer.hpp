#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "softdr/common.hpp"
#include "softdr/contact.hpp"
#include "softdr/tetmesh.hpp"

namespace softdr {

/// Pinhole camera. Camera space is x = right, y = up, z = forward, with
/// right = forward x up. Depth is the forward-axis coordinate.
struct Camera {
  Vec3 position = Vec3::Zero();
  Vec3 forward = Vec3::UnitZ();
  Vec3 up = Vec3::UnitY();
  double vertical_fov = 1.5707963267948966;
  int width = 64;
  int height = 64;
  double near = 1e-3;
  double far = 1.0;

  Vec3 right() const { return forward.cross(up); }
  /// World-to-camera rotation (rows: right, up, forward).
  Mat3 rotation() const;
  Vec3 to_camera(const Vec3& world) const { return rotation() * (world - position); }
  /// Camera-space ray through the center of pixel (x, y), scaled so z = 1.
  Vec3 pixel_ray(int x, int y) const;
};

void validate(const Camera& c);

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // row-major, row 0 at the top

  DepthImage() = default;
  DepthImage(int w, int h, double fill) : width(w), height(h), pixels(std::size_t(w) * h, fill) {}
  double& at(int x, int y) { return pixels[std::size_t(y) * width + x]; }
  double at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
  std::size_t size() const { return pixels.size(); }
};

/// Depth image plus, per pixel, the winning triangle (-1 for background) and
/// its barycentric weights. This is what the coverage-frozen gradient needs.
struct Raster {
  DepthImage depth;
  std::vector<int> triangle;
  std::vector<std::array<double, 3>> weights;
};

enum CubeFace { kPosX = 0, kNegX, kPosY, kNegY, kPosZ, kNegZ };

/// Six 90-degree cameras at one center, one per signed axis.
struct CubeRig {
  Vec3 center;
  std::array<Camera, 6> faces;

  /// Face whose frustum contains `dir`: argmax |component|, ties resolved in
  /// face order +X, -X, +Y, -Y, +Z, -Z.
  static int classify(const Vec3& dir);
};

CubeRig cube_rig(const Vec3& center, int resolution, double near, double far);

/// Z-buffered forward-axis depth. Pixels take the smallest depth in
/// [near, far] over triangles the pixel-center ray hits (either facing);
/// equal depths go to the lower triangle index. Empty pixels hold `far`.
Raster rasterize(std::span<const Vec3> vertices, std::span<const Tri> tris, const Camera& camera);

DepthImage rasterize_depth(std::span<const Vec3> vertices, std::span<const Tri> tris,
                           const Camera& camera);

/// Coverage-frozen adjoint: grad[v] += sum_pixels pixel_grad * d depth / d vertex,
/// holding each pixel's triangle fixed.
void accumulate_depth_gradient(const Raster& raster, std::span<const double> pixel_grad,
                               std::span<const Vec3> vertices, std::span<const Tri> tris,
                               const Camera& camera, std::span<Vec3> grad);

/// Separable Gaussian blur (clamped borders); sigma in pixels, 0 = identity.
DepthImage blur(const DepthImage& img, double sigma);
/// Transpose of blur() applied to a pixel cotangent.
std::vector<double> blur_transpose(std::span<const double> grad, int width, int height,
                                   double sigma);

/// Closed surface meshes for rendering analytic shapes.
struct SurfaceMesh {
  Field3 vertices;
  std::vector<Tri> tris;
};

SurfaceMesh icosphere(const Vec3& center, double radius, int subdivisions);
/// Render mesh for `shape`; `resolution` is the icosphere subdivision level
/// or the number of cylinder segments / 8. Half-spaces have no render mesh.
SurfaceMesh surface_mesh(const SDFShape& shape, int resolution);

/// 16-bit binary PGM, value = round((v - lo) / (hi - lo) * 65535), clamped.
void write_pgm16(const std::filesystem::path& path, const DepthImage& img, double lo, double hi);
/// Six faces side by side in face order.
DepthImage cube_strip(std::span<const DepthImage> faces);

}  // namespace softdr
