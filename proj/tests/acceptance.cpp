// Acceptance run: one PASS/FAIL line per criterion.
//   acceptance <scenes dir> [work dir]

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "softdr/runner.hpp"

using namespace softdr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

Vec3 rvec(std::mt19937_64& rng, double s) {
  std::uniform_real_distribution<double> u(-s, s);
  return {u(rng), u(rng), u(rng)};
}

TetMesh block(int nx, int ny, int nz) {
  RobotParams p;
  p.nx = nx;
  p.ny = ny;
  p.segments = nz;
  p.width = p.depth = 0.01;
  p.length = 0.02;
  p.cable_count = 0;
  return generate_robot(p).mesh;
}

// ---------------------------------------------------------------------------

Outcome cable_physics() {
  const double k = 100, b = 0.01;
  std::mt19937_64 rng(1);
  double worst_zero = 0, worst_sum = 0;
  bool bitwise = true;
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 2 + int(rng() % 7);
    Field3 pos, vel;
    for (int i = 0; i < h; ++i) {
      pos.push_back(rvec(rng, 0.1));
      vel.push_back(rvec(rng, 1.0));
    }
    for (CableMode m : {CableMode::conserving, CableMode::literal})
      for (const Vec3& f : via_point_forces(0.0, k, b, pos, Field3(h, Vec3::Zero()), m))
        worst_zero = std::max(worst_zero, f.cwiseAbs().maxCoeff());

    const Field3 f = via_point_forces(0.8, k, 0.0, pos, vel, CableMode::conserving);
    Vec3 sum = Vec3::Zero();
    double largest = 0;
    for (const Vec3& v : f) {
      sum += v;
      largest = std::max(largest, v.cwiseAbs().maxCoeff());
    }
    worst_sum = std::max(worst_sum, sum.cwiseAbs().maxCoeff() / largest);

    const Field3 two_pos{pos[0], pos[1]}, two_vel{vel[0], vel[1]};
    const Field3 a = via_point_forces(0.05 * trial, k, b, two_pos, two_vel, CableMode::conserving);
    const Field3 l = via_point_forces(0.05 * trial, k, b, two_pos, two_vel, CableMode::literal);
    for (int i = 0; i < 2; ++i)
      for (int c = 0; c < 3; ++c) bitwise = bitwise && a[i][c] == l[i][c];
  }
  return {worst_zero == 0 && worst_sum <= 1e-12 && bitwise,
          fmt("max |f| at p=0 %.1e, max |sum f|/max|f| %.1e, H=2 bitwise %s", worst_zero, worst_sum,
              bitwise ? "yes" : "no")};
}

Outcome embedding_algebra() {
  const TetMesh m = block(3, 2, 4);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Vec3> pts, forces;
  for (int i = 0; i < 200; ++i) {
    const Tet& t = m.tets[rng() % m.tet_count()];
    double w[4], s = 0;
    for (double& x : w) s += (x = u(rng));
    Vec3 p = Vec3::Zero();
    for (int c = 0; c < 4; ++c) p += w[c] / s * m.vertices[t[c]];
    pts.push_back(p);
    forces.push_back(rvec(rng, 1.0));
  }
  const BarycentricEmbedding e = embed_points(m, pts);
  double row = 0, recon = 0;
  for (const auto& entry : e.entries) {
    double s = 0;
    for (double w : entry.weights) s += w;
    row = std::max(row, std::abs(s - 1));
  }
  const Field3 back = interpolate(m, e, m.vertices);
  for (std::size_t i = 0; i < pts.size(); ++i) recon = std::max(recon, (back[i] - pts[i]).norm());

  const Field3 nodal = scatter_forces(m, e, forces, ScatterMode::transpose);
  Vec3 via_sum = Vec3::Zero(), nodal_sum = Vec3::Zero();
  for (const Vec3& f : forces) via_sum += f;
  for (const Vec3& f : nodal) nodal_sum += f;
  const double conservation = (via_sum - nodal_sum).norm() / via_sum.norm();

  Field3 field;
  for (std::size_t i = 0; i < m.vertex_count(); ++i) field.push_back(rvec(rng, 1.0));
  const Field3 wu = interpolate(m, e, field);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < forces.size(); ++i) lhs += wu[i].dot(forces[i]);
  for (std::size_t i = 0; i < field.size(); ++i) rhs += field[i].dot(nodal[i]);
  const double adj = rel_err(lhs, rhs);

  // rounding in the 4-term weighted sums is the only source of mismatch
  return {row <= 1e-12 && recon <= 1e-9 && conservation <= 1e-14 && adj <= 1e-10,
          fmt("row sum err %.1e, reconstruction %.1e m, total force rel err %.1e, adjointness %.1e", row,
              recon, conservation, adj)};
}

Outcome elasticity_consistency() {
  const Material mat{149e3, 0.40, 1080, 0.40};
  std::mt19937_64 rng(3);
  double worst = 0;
  for (int trial = 0; trial < 5; ++trial) {
    Field3 v;
    std::vector<Tet> tets;
    if (trial % 2 == 0) {
      v = {{0, 0, 0}, {0.01, 0, 0}, {0, 0.01, 0}, {0, 0, 0.01}, {0.01, 0.01, 0.01}};
      tets = {{0, 1, 2, 3}, {1, 2, 3, 4}};
    } else {
      for (int c = 0; c < 8; ++c) v.emplace_back(0.01 * (c & 1), 0.01 * ((c >> 1) & 1), 0.01 * (c >> 2));
      tets = {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7}, {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}};
    }
    for (Vec3& x : v) x += rvec(rng, 1e-3);
    const TetMesh m = build_tet_mesh(v, tets, {});
    const ElasticModel model(m, m.vertices, mat);
    Field3 x = m.vertices;
    for (Vec3& p : x) p += rvec(rng, 1e-3);
    Field3 f = zero_field(x.size());
    model.add_forces(x, Field3(x.size(), Vec3::Zero()), f);
    const double h = 1e-8;
    double err2 = 0, norm2 = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      for (int c = 0; c < 3; ++c) {
        Field3 xp = x, xm = x;
        xp[i][c] += h;
        xm[i][c] -= h;
        const double fd = -(model.energy(xp) - model.energy(xm)) / (2 * h);
        err2 += (fd - f[i][c]) * (fd - f[i][c]);
        norm2 += f[i][c] * f[i][c];
      }
    worst = std::max(worst, std::sqrt(err2 / norm2));
  }

  const TetMesh m = block(2, 2, 3);
  const Field3 still(m.vertex_count(), Vec3::Zero());
  Field3 moved = m.vertices;
  for (Vec3& x : moved) x += Vec3(0.3, -1.2, 0.05);
  double rest = 0;
  for (const Field3* pos : std::array<const Field3*, 2>{&m.vertices, &moved})
    for (const Vec3& f : elastic_forces(m, m.vertices, *pos, still, mat).forces)
      rest = std::max(rest, f.cwiseAbs().maxCoeff());
  return {worst <= 1e-4 && rest < 1e-8,
          fmt("force vs -grad E rel err %.1e, rest/translation max force %.1e N", worst, rest)};
}

double ray_triangle(const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a, p = d.cross(e2);
  const double det = e1.dot(p);
  if (det == 0) return INFINITY;
  const Vec3 s = -a;
  const double u = s.dot(p) / det;
  const Vec3 q = s.cross(e1);
  const double v = d.dot(q) / det;
  if (u < 0 || v < 0 || u + v > 1) return INFINITY;
  return e2.dot(q) / det;
}

Outcome renderer_checks() {
  Camera cam;
  cam.near = 0.1;
  cam.far = 10;
  auto ray = [](const Camera& c, int x, int y) -> Vec3 { return c.rotation().transpose() * c.pixel_ray(x, y); };

  // tilted plane n.x = 2, exact geometry
  const Vec3 n = Vec3(0.2, -0.3, 1).normalized();
  const Vec3 u = n.cross(Vec3::UnitX()).normalized(), w = n.cross(u), o = 2 * n;
  const Field3 pv{o - 8 * u - 8 * w, o + 8 * u - 8 * w, o + 8 * u + 8 * w, o - 8 * u + 8 * w};
  const DepthImage plane = rasterize_depth(pv, std::vector<Tri>{{0, 1, 2}, {0, 2, 3}}, cam);
  double plane_err = 0;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x)
      plane_err = std::max(plane_err, std::abs(plane.at(x, y) - 2 / n.dot(ray(cam, x, y))));

  // tessellated sphere
  const Vec3 center(0.1, -0.05, 2.0);
  const double r = 0.5;
  const SurfaceMesh s = icosphere(center, r, 4);
  const DepthImage sphere = rasterize_depth(s.vertices, s.tris, cam);
  double sphere_err = 0;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 d = ray(cam, x, y);
      const double bq = -2 * d.dot(center), cq = center.squaredNorm() - r * r, aq = d.dot(d);
      const double disc = bq * bq - 4 * aq * cq;
      if (disc < 0 || sphere.at(x, y) == cam.far) continue;
      const double exact = (-bq - std::sqrt(disc)) / (2 * aq);
      sphere_err = std::max(sphere_err, std::abs(sphere.at(x, y) - exact) / exact);
    }

  // brute force ray casting
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> zd(-0.5, 4.0);
  double brute = 0;
  for (int scene = 0; scene < 5; ++scene) {
    Field3 v;
    std::vector<Tri> t;
    for (int k = 0; k < 20; ++k) {
      const Vec3 c(0, 0, zd(rng));
      for (int j = 0; j < 3; ++j) v.push_back(c + rvec(rng, 1.2));
      t.push_back({3 * k, 3 * k + 1, 3 * k + 2});
    }
    const DepthImage img = rasterize_depth(v, t, cam);
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        double best = cam.far;
        for (const Tri& tr : t) {
          const double z = ray_triangle(ray(cam, x, y), v[tr[0]], v[tr[1]], v[tr[2]]);
          if (z >= cam.near && z <= cam.far) best = std::min(best, z);
        }
        brute = std::max(brute, std::abs(img.at(x, y) - best));
      }
  }

  // coverage-frozen pixel gradients
  double grad_err = 0;
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    Field3 v, dir;
    std::vector<Tri> t;
    for (int k = 0; k < 5; ++k) {
      const Vec3 c(0, 0, 1.0 + 0.4 * k);
      for (int j = 0; j < 3; ++j) v.push_back(c + rvec(rng, 1.0));
      t.push_back({3 * k, 3 * k + 1, 3 * k + 2});
    }
    for (std::size_t i = 0; i < v.size(); ++i) dir.push_back(rvec(rng, 1.0));
    std::vector<double> g(std::size_t(cam.width) * cam.height);
    std::uniform_real_distribution<double> ug(-1, 1);
    for (double& x : g) x = ug(rng);
    const Raster base = rasterize(v, t, cam);
    Field3 grad = zero_field(v.size());
    accumulate_depth_gradient(base, g, v, t, cam, grad);
    double analytic = 0;
    for (std::size_t i = 0; i < v.size(); ++i) analytic += grad[i].dot(dir[i]);
    const double h = 1e-7;
    Field3 vp = v, vm = v;
    for (std::size_t i = 0; i < v.size(); ++i) {
      vp[i] += h * dir[i];
      vm[i] -= h * dir[i];
    }
    const Raster rp = rasterize(vp, t, cam), rm = rasterize(vm, t, cam);
    if (rp.triangle != base.triangle || rm.triangle != base.triangle) continue;
    double fd = 0;
    for (std::size_t i = 0; i < g.size(); ++i) fd += g[i] * (rp.depth.pixels[i] - rm.depth.pixels[i]);
    grad_err = std::max(grad_err, rel_err(analytic, fd / (2 * h)));
    ++checked;
  }
  return {plane_err <= 1e-6 && sphere_err <= 0.02 && brute <= 1e-9 && grad_err <= 1e-4 && checked >= 5,
          fmt("plane %.1e, sphere %.2f%%, brute force %.1e, pixel gradient rel err %.1e (%d trials)",
              plane_err, 100 * sphere_err, brute, grad_err, checked)};
}

Outcome end_to_end_gradient(const fs::path& scenes) {
  const Problem pr = build_problem(parse_scene_file(scenes / "desk_gradient.json"));
  if (pr.dynamics.mesh().tet_count() > 500) return {false, "desk_gradient has more than 500 tets"};
  double worst_cos = 1, worst_rel = 0, worst_abs = 0;
  bool ok = pr.cable_count() == 3 && pr.duration <= 0.02 && pr.sim.dt == 5e-5;
  for (const std::vector<double>& p : {std::vector<double>{0.15, 0.05, 0.1}, std::vector<double>{0.5, 0.2, 0.3}}) {
    const GradientReport fd = fd_gradient(pr, p, 1e-3);
    const GradientReport adj = adjoint_gradient(pr, p);
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      ab += fd.grad[i] * adj.grad[i];
      aa += fd.grad[i] * fd.grad[i];
      bb += adj.grad[i] * adj.grad[i];
      const double abs_err = std::abs(fd.grad[i] - adj.grad[i]);
      worst_abs = std::max(worst_abs, abs_err);
      worst_rel = std::max(worst_rel, rel_err(fd.grad[i], adj.grad[i]));
      if (abs_err > 1e-6) ok = ok && rel_err(fd.grad[i], adj.grad[i]) <= 0.05;
    }
    worst_cos = std::min(worst_cos, ab / std::sqrt(aa * bb));
  }
  return {ok && worst_cos >= 0.99,
          fmt("%zu tets, min cosine %.8f, max rel err %.1e, max abs err %.1e", pr.dynamics.mesh().tet_count(),
              worst_cos, worst_rel, worst_abs)};
}

struct RunOutput {
  RunResult result;
  Scene scene;
};

RunOutput run(const fs::path& scenes, const std::string& name, const fs::path& dir, int threads) {
  fs::remove_all(dir);
  Scene s = parse_scene_file(scenes / (name + ".json"));
  return {run_experiment(s, dir, threads), s};
}

std::string p_summary(const std::vector<double>& p) {
  std::ostringstream os;
  for (std::size_t i = 0; i < p.size(); ++i) os << (i ? "," : "") << fmt("%.3f", p[i]);
  return os.str();
}

Outcome desk_reach(const RunOutput& out) {
  const auto& rows = out.result.rows;
  bool nonneg = true;
  for (const TraceRow& r : rows)
    for (double p : r.p) nonneg = nonneg && p >= 0;
  const double g0 = rows.front().grip_term, g1 = rows.back().grip_term;
  return {rows.size() == 31 && g1 <= 0.7 * g0 && nonneg,
          fmt("%zu rows, grip %.5f -> %.5f (%.1f%%), p = %s, all p >= 0: %s", rows.size(), g0, g1,
              100 * g1 / g0, p_summary(rows.back().p).c_str(), nonneg ? "yes" : "no")};
}

bool same_state(const SimState& a, const SimState& b) {
  if (a.positions.size() != b.positions.size() || a.time != b.time) return false;
  for (std::size_t i = 0; i < a.positions.size(); ++i)
    for (int c = 0; c < 3; ++c)
      if (a.positions[i][c] != b.positions[i][c] || a.velocities[i][c] != b.velocities[i][c]) return false;
  return true;
}

Outcome desk_avoidance(const RunOutput& out) {
  const auto& rows = out.result.rows;
  const double a0 = rows.front().avoid_term, g0 = rows.front().grip_term, g1 = rows.back().grip_term;
  double worst = -INFINITY;
  for (const TraceRow& r : rows) worst = std::max(worst, r.avoid_term - a0);

  // the same robot with no contact shapes at all
  const Problem pr = build_problem(out.scene);
  const Dynamics& d = pr.dynamics;
  const Dynamics bare(d.mesh(), d.elastic().material(), d.cables(), d.cable_mode(), {}, ContactParams{},
                      out.scene.sim.gravity);
  bool identical = true;
  for (const TraceRow& r : rows) {
    const Trajectory a = simulate(d, r.p, pr.duration, pr.sim);
    const Trajectory b = simulate(bare, r.p, pr.duration, pr.sim);
    identical = identical && same_state(a.final_state, b.final_state) && a.frames.size() == b.frames.size();
    for (std::size_t f = 0; identical && f < a.frames.size(); ++f) identical = same_state(a.frames[f], b.frames[f]);
  }
  return {rows.size() > 1 && worst <= 0.05 * std::abs(a0) && g1 <= 0.8 * g0 && identical,
          fmt("avoid %.5f, worst increase %.2f%% of initial; grip %.5f -> %.5f (-%.1f%%); "
              "contact-free trajectories bitwise equal: %s",
              a0, 100 * worst / std::abs(a0), g0, g1, 100 * (1 - g1 / g0), identical ? "yes" : "no")};
}

Outcome desk_cylinder(const RunOutput& out) {
  const auto& rows = out.result.rows;
  const int obj = *build_problem(out.scene).target;
  const FrameMetrics m0 = rows.front().metrics[obj], m1 = rows.back().metrics[obj];
  return {out.scene.sim.collisions_enabled && m1.mean_distance <= 0.7 * m0.mean_distance &&
              m1.close_fraction >= 2 * m0.close_fraction,
          fmt("mean distance %.5f -> %.5f (-%.1f%%), contact-close %.3f -> %.3f (x%.2f), p = %s",
              m0.mean_distance, m1.mean_distance, 100 * (1 - m1.mean_distance / m0.mean_distance),
              m0.close_fraction, m1.close_fraction, m1.close_fraction / m0.close_fraction,
              p_summary(rows.back().p).c_str())};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Relative paths of every file under `dir` whose bytes differ in `other`.
std::vector<std::string> differing_files(const fs::path& dir, const fs::path& other) {
  std::vector<std::string> diff;
  std::size_t count = 0, other_count = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    ++count;
    const fs::path rel = fs::relative(e.path(), dir);
    if (!fs::exists(other / rel) || slurp(e.path()) != slurp(other / rel)) diff.push_back(rel.string());
  }
  for (const auto& e : fs::recursive_directory_iterator(other)) other_count += e.is_regular_file();
  if (count != other_count) diff.push_back("<file count>");
  return diff;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <scenes dir> [work dir]\n";
    return 2;
  }
  const fs::path scenes = argv[1];
  const fs::path work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "softdr_acceptance";
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int id, const char* name, double limit_s, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0 && secs > limit_s) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s budget", limit_s);
    }
    failures += !o.pass;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail
              << fmt(" [%.1f s]", secs) << std::endl;
  };

  report(1, "cable physics", 1, cable_physics);
  report(2, "embedding algebra", 1, embedding_algebra);
  report(3, "elasticity consistency", 10, elasticity_consistency);
  report(4, "renderer", 30, renderer_checks);
  report(5, "end-to-end gradient", 300, [&] { return end_to_end_gradient(scenes); });

  const char* desk[] = {"desk_reach", "desk_avoidance", "desk_cylinder"};
  std::map<std::string, RunOutput> first;
  auto first_run = [&](const char* name) {
    first[name] = run(scenes, name, work / (std::string(name) + "_a"), 1);
    return first[name];
  };
  report(6, "desk reach", 900, [&] { return desk_reach(first_run(desk[0])); });
  report(7, "desk avoidance", 1200, [&] { return desk_avoidance(first_run(desk[1])); });
  report(8, "desk cylinder", 1800, [&] { return desk_cylinder(first_run(desk[2])); });

  report(9, "determinism", 0, [&] {
    std::string detail;
    bool ok = true;
    for (const char* name : desk) {
      const fs::path a = work / (std::string(name) + "_a"), b = work / (std::string(name) + "_b"),
                     c = work / (std::string(name) + "_c");
      if (!first.count(name)) run(scenes, name, a, 1);
      run(scenes, name, b, 1);
      run(scenes, name, c, 3);
      const bool rerun = slurp(a / "trace.csv") == slurp(b / "trace.csv") && !slurp(a / "trace.csv").empty();
      const std::vector<std::string> diff = differing_files(a, c);
      ok = ok && rerun && diff.empty();
      detail += fmt("%s%s: rerun trace %s, threads 1 vs 3 %s", detail.empty() ? "" : "; ", name,
                    rerun ? "identical" : "DIFFERS",
                    diff.empty() ? "identical" : ("differ in " + diff.front()).c_str());
    }
    return Outcome{ok, detail};
  });

  std::cout << (failures ? fmt("%d criteria failed", failures) : std::string("all criteria passed")) << std::endl;
  return failures ? 1 : 0;
}
