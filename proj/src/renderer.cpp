#include "softdr/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

namespace softdr {

Mat3 Camera::rotation() const {
  Mat3 r;
  r.row(0) = right().transpose();
  r.row(1) = up.transpose();
  r.row(2) = forward.transpose();
  return r;
}

Vec3 Camera::pixel_ray(int x, int y) const {
  const double tan_half = std::tan(0.5 * vertical_fov);
  const double aspect = static_cast<double>(width) / height;
  return {(2.0 * (x + 0.5) / width - 1.0) * tan_half * aspect,
          (1.0 - 2.0 * (y + 0.5) / height) * tan_half, 1.0};
}

void validate(const Camera& c) {
  if (!(c.near > 0 && c.near < c.far)) throw ValidationError("camera: need 0 < near < far");
  if (!(c.vertical_fov > 0 && c.vertical_fov < std::numbers::pi)) {
    throw ValidationError("camera: fov must be in (0, pi)");
  }
  if (c.width < 1 || c.height < 1) throw ValidationError("camera: resolution must be >= 1x1");
  if (std::abs(c.forward.norm() - 1) > 1e-12 || std::abs(c.up.norm() - 1) > 1e-12 ||
      std::abs(c.forward.dot(c.up)) > 1e-12) {
    throw ValidationError("camera: forward/up must be orthonormal");
  }
}

int CubeRig::classify(const Vec3& d) {
  const double ax = std::abs(d.x()), ay = std::abs(d.y()), az = std::abs(d.z());
  if (ax >= ay && ax >= az) return d.x() >= 0 ? kPosX : kNegX;
  if (ay >= az) return d.y() >= 0 ? kPosY : kNegY;
  return d.z() >= 0 ? kPosZ : kNegZ;
}

CubeRig cube_rig(const Vec3& center, int resolution, double near, double far) {
  static const std::array<std::pair<Vec3, Vec3>, 6> kAxes = {{
      {Vec3::UnitX(), Vec3::UnitZ()},
      {-Vec3::UnitX(), Vec3::UnitZ()},
      {Vec3::UnitY(), Vec3::UnitZ()},
      {-Vec3::UnitY(), Vec3::UnitZ()},
      {Vec3::UnitZ(), Vec3::UnitY()},
      {-Vec3::UnitZ(), Vec3::UnitY()},
  }};
  CubeRig rig;
  rig.center = center;
  for (int f = 0; f < 6; ++f) {
    Camera& c = rig.faces[f];
    c.position = center;
    c.forward = kAxes[f].first;
    c.up = kAxes[f].second;
    c.vertical_fov = 0.5 * std::numbers::pi;
    c.width = c.height = resolution;
    c.near = near;
    c.far = far;
    validate(c);
  }
  return rig;
}

namespace {

struct ScreenMap {
  double sx, sy;  // ndc-to-pixel scale
};

// Clips a camera-space polygon to z >= near.
std::vector<Vec3> clip_near(const std::array<Vec3, 3>& poly, double near) {
  std::vector<Vec3> out;
  for (int i = 0; i < 3; ++i) {
    const Vec3& p = poly[i];
    const Vec3& q = poly[(i + 1) % 3];
    const bool pin = p.z() >= near, qin = q.z() >= near;
    if (pin) out.push_back(p);
    if (pin != qin) {
      const double t = (near - p.z()) / (q.z() - p.z());
      out.push_back(p + t * (q - p));
    }
  }
  return out;
}

}  // namespace

Raster rasterize(std::span<const Vec3> vertices, std::span<const Tri> tris, const Camera& cam) {
  const int w = cam.width, h = cam.height;
  Raster r;
  r.depth = DepthImage(w, h, cam.far);
  r.triangle.assign(std::size_t(w) * h, -1);
  r.weights.assign(std::size_t(w) * h, {0, 0, 0});

  const Mat3 rot = cam.rotation();
  const double tan_half = std::tan(0.5 * cam.vertical_fov);
  const double aspect = static_cast<double>(w) / h;

  std::vector<Vec3> rays(std::size_t(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) rays[std::size_t(y) * w + x] = cam.pixel_ray(x, y);

  for (std::size_t t = 0; t < tris.size(); ++t) {
    const std::array<Vec3, 3> v = {rot * (vertices[tris[t][0]] - cam.position),
                                   rot * (vertices[tris[t][1]] - cam.position),
                                   rot * (vertices[tris[t][2]] - cam.position)};
    if (v[0].z() > cam.far && v[1].z() > cam.far && v[2].z() > cam.far) continue;
    const std::vector<Vec3> poly = clip_near(v, cam.near);
    if (poly.size() < 3) continue;

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const Vec3& p : poly) {
      const double px = (p.x() / p.z() / (tan_half * aspect) + 1.0) * 0.5 * w;
      const double py = (1.0 - p.y() / p.z() / tan_half) * 0.5 * h;
      xmin = std::min(xmin, px);
      xmax = std::max(xmax, px);
      ymin = std::min(ymin, py);
      ymax = std::max(ymax, py);
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(xmin - 0.5)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(xmax - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(ymin - 0.5)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(ymax - 0.5)));
    if (x0 > x1 || y0 > y1) continue;

    const Vec3 ab = v[0].cross(v[1]), bc = v[1].cross(v[2]), ca = v[2].cross(v[0]);
    const double det = v[0].dot(bc);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const std::size_t idx = std::size_t(y) * w + x;
        const Vec3& d = rays[idx];
        const double e_c = d.dot(ab), e_a = d.dot(bc), e_b = d.dot(ca);
        const bool inside = (e_a >= 0 && e_b >= 0 && e_c >= 0) || (e_a <= 0 && e_b <= 0 && e_c <= 0);
        const double sum = e_a + e_b + e_c;
        if (!inside || sum == 0) continue;
        const double z = det / sum;
        if (!(z >= cam.near && z <= cam.far)) continue;
        double& cur = r.depth.pixels[idx];
        const int cur_tri = r.triangle[idx];
        const int ti = static_cast<int>(t);
        if (z < cur || (z == cur && (cur_tri < 0 || ti < cur_tri))) {
          cur = z;
          r.triangle[idx] = ti;
          r.weights[idx] = {e_a / sum, e_b / sum, e_c / sum};
        }
      }
    }
  }
  return r;
}

DepthImage rasterize_depth(std::span<const Vec3> vertices, std::span<const Tri> tris,
                           const Camera& camera) {
  return rasterize(vertices, tris, camera).depth;
}

void accumulate_depth_gradient(const Raster& raster, std::span<const double> pixel_grad,
                               std::span<const Vec3> vertices, std::span<const Tri> tris,
                               const Camera& cam, std::span<Vec3> grad) {
  const Mat3 rot = cam.rotation();
  const int w = raster.depth.width;
  for (std::size_t idx = 0; idx < raster.triangle.size(); ++idx) {
    const int t = raster.triangle[idx];
    const double g = pixel_grad[idx];
    if (t < 0 || g == 0) continue;
    const Tri& tri = tris[t];
    const Vec3 a = rot * (vertices[tri[0]] - cam.position);
    const Vec3 b = rot * (vertices[tri[1]] - cam.position);
    const Vec3 c = rot * (vertices[tri[2]] - cam.position);
    const Vec3 n = (b - a).cross(c - a);
    const Vec3 d = cam.pixel_ray(static_cast<int>(idx % w), static_cast<int>(idx / w));
    // moving vertex k by delta shifts the hit depth by w_k (n . delta) / (n . d)
    const Vec3 dz = rot.transpose() * (n / n.dot(d));
    for (int k = 0; k < 3; ++k) grad[tri[k]] += (g * raster.weights[idx][k]) * dz;
  }
}

// ---------------------------------------------------------------------------
// Blur

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

// out[i] = sum_j k[j] in[clamp(i + j - r)] along one axis.
void convolve_axis(std::span<const double> in, std::span<double> out, int w, int h, bool horizontal,
                   const std::vector<double>& k, bool transpose) {
  const int r = static_cast<int>(k.size() / 2);
  std::fill(out.begin(), out.end(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = std::size_t(y) * w + x;
      for (int j = -r; j <= r; ++j) {
        const int sx = horizontal ? std::clamp(x + j, 0, w - 1) : x;
        const int sy = horizontal ? y : std::clamp(y + j, 0, h - 1);
        const std::size_t s = std::size_t(sy) * w + sx;
        if (transpose) {
          out[s] += k[j + r] * in[i];
        } else {
          out[i] += k[j + r] * in[s];
        }
      }
    }
  }
}

}  // namespace

DepthImage blur(const DepthImage& img, double sigma) {
  if (!(sigma > 0)) return img;
  const auto k = gaussian_kernel(sigma);
  DepthImage tmp(img.width, img.height, 0), out(img.width, img.height, 0);
  convolve_axis(img.pixels, tmp.pixels, img.width, img.height, true, k, false);
  convolve_axis(tmp.pixels, out.pixels, img.width, img.height, false, k, false);
  return out;
}

std::vector<double> blur_transpose(std::span<const double> grad, int width, int height,
                                   double sigma) {
  std::vector<double> out(grad.begin(), grad.end());
  if (!(sigma > 0)) return out;
  const auto k = gaussian_kernel(sigma);
  std::vector<double> tmp(grad.size());
  convolve_axis(grad, tmp, width, height, false, k, true);
  convolve_axis(tmp, out, width, height, true, k, true);
  return out;
}

// ---------------------------------------------------------------------------
// Shape meshes

SurfaceMesh icosphere(const Vec3& center, double radius, int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  Field3 v = {{-1, t, 0}, {1, t, 0},   {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
              {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& p : v) p.normalize();
  std::vector<Tri> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      if (auto it = mid.find(key); it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      return mid[key] = static_cast<int>(v.size() - 1);
    };
    std::vector<Tri> next;
    next.reserve(f.size() * 4);
    for (const Tri& tri : f) {
      const int ab = midpoint(tri[0], tri[1]), bc = midpoint(tri[1], tri[2]),
                ca = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  for (Vec3& p : v) p = center + radius * p;
  return {std::move(v), std::move(f)};
}

namespace {

SurfaceMesh cylinder_mesh(const CappedCylinder& c, int resolution) {
  const int around = 8 * std::max(1, resolution);
  const int along = std::max(1, 2 * resolution);
  const Vec3 e1 = (std::abs(c.axis.x()) < 0.9 ? c.axis.cross(Vec3::UnitX())
                                               : c.axis.cross(Vec3::UnitY()))
                      .normalized();
  const Vec3 e2 = c.axis.cross(e1);
  SurfaceMesh m;
  for (int k = 0; k <= along; ++k) {
    const Vec3 base = c.base + (c.height * k / along) * c.axis;
    for (int i = 0; i < around; ++i) {
      const double th = 2 * std::numbers::pi * i / around;
      m.vertices.push_back(base + c.radius * (std::cos(th) * e1 + std::sin(th) * e2));
    }
  }
  for (int k = 0; k < along; ++k)
    for (int i = 0; i < around; ++i) {
      const int a = k * around + i, b = k * around + (i + 1) % around;
      m.tris.push_back({a, b, b + around});
      m.tris.push_back({a, b + around, a + around});
    }
  const int bottom = static_cast<int>(m.vertices.size());
  m.vertices.push_back(c.base);
  const int top = bottom + 1;
  m.vertices.push_back(c.base + c.height * c.axis);
  for (int i = 0; i < around; ++i) {
    const int j = (i + 1) % around;
    m.tris.push_back({bottom, j, i});
    m.tris.push_back({top, along * around + i, along * around + j});
  }
  return m;
}

}  // namespace

SurfaceMesh surface_mesh(const SDFShape& shape, int resolution) {
  if (const auto* s = std::get_if<Sphere>(&shape)) {
    return icosphere(s->center, s->radius, resolution);
  }
  if (const auto* c = std::get_if<CappedCylinder>(&shape)) return cylinder_mesh(*c, resolution);
  if (const auto* e = std::get_if<Egg>(&shape)) {
    SurfaceMesh m = icosphere(Vec3::Zero(), 1.0, resolution);
    for (Vec3& p : m.vertices) {
      const double s = p.z() >= 0 ? e->polar_scale_top : e->polar_scale_bottom;
      p = e->center + e->equatorial_radius * Vec3(p.x(), p.y(), s * p.z());
    }
    return m;
  }
  return {};
}

// ---------------------------------------------------------------------------
// Output

void write_pgm16(const std::filesystem::path& path, const DepthImage& img, double lo, double hi) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n65535\n";
  for (double v : img.pixels) {
    const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    const auto q = static_cast<std::uint16_t>(std::lround(t * 65535.0));
    const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
    out.write(bytes, 2);
  }
}

DepthImage cube_strip(std::span<const DepthImage> faces) {
  if (faces.empty()) return {};
  const int w = faces[0].width, h = faces[0].height;
  DepthImage out(w * static_cast<int>(faces.size()), h, 0);
  for (std::size_t f = 0; f < faces.size(); ++f)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(static_cast<int>(f) * w + x, y) = faces[f].at(x, y);
  return out;
}

}  // namespace softdr
