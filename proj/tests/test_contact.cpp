#include <gtest/gtest.h>

#include <numbers>

#include "softdr/contact.hpp"
#include "softdr/simulator.hpp"
#include "support.hpp"

using namespace softdr;
using softdr::test::random_vec;

TEST(Sdf, SphereExamples) {
  const Sphere s{Vec3::Zero(), 1.0};
  const SdfSample a = sdf_eval(s, {2, 0, 0});
  EXPECT_EQ(a.distance, 1.0);
  EXPECT_EQ(a.normal, Vec3(1, 0, 0));
  EXPECT_EQ(sdf_eval(s, Vec3::Zero()).distance, -1.0);
}

TEST(Sdf, CappedCylinderAgainstSampledSurface) {
  const CappedCylinder c{{0.1, -0.2, 0.05}, Vec3(1, 1, 0).normalized(), 0.3, 0.8};
  const Vec3 a = c.axis;
  const Vec3 u = a.cross(Vec3::UnitZ()).normalized(), w = a.cross(u);

  // samples 1.2 mm apart on the side and both caps; worst-case gap error ~0.85 mm
  const double spacing = 1.2e-3;
  Field3 surface;
  const int na = static_cast<int>(std::ceil(2 * std::numbers::pi * c.radius / spacing));
  const int nh = static_cast<int>(std::ceil(c.height / spacing));
  for (int i = 0; i < na; ++i) {
    const double th = 2 * std::numbers::pi * i / na;
    const Vec3 dir = std::cos(th) * u + std::sin(th) * w;
    for (int j = 0; j <= nh; ++j) surface.push_back(c.base + c.height * j / nh * a + c.radius * dir);
  }
  const int ng = static_cast<int>(std::ceil(c.radius / spacing));
  for (int i = -ng; i <= ng; ++i)
    for (int j = -ng; j <= ng; ++j) {
      const Vec3 r = spacing * (i * u + j * w);
      if (r.norm() > c.radius) continue;
      surface.push_back(c.base + r);
      surface.push_back(c.base + c.height * a + r);
    }

  std::mt19937_64 rng(42);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p = c.base + 0.4 * a + random_vec(rng, 0.9);
    const double h = (p - c.base).dot(a);
    const double rho = ((p - c.base) - h * a).norm();
    const bool inside = h > 0 && h < c.height && rho < c.radius;
    const double d = sdf_eval(c, p).distance;
    EXPECT_EQ(d < 0, inside) << i;
    double nearest = std::numeric_limits<double>::infinity();
    for (const Vec3& s : surface) nearest = std::min(nearest, (s - p).norm());
    EXPECT_NEAR(std::abs(d), nearest, 1e-3) << i;
  }
}

TEST(Sdf, EggSignAndBound) {
  const Egg e{{0, 0, 0}, 0.02, 1.3, 1.0};
  EXPECT_LT(sdf_eval(e, {0, 0, 0.025}).distance, 0);  // inside the stretched top
  EXPECT_GT(sdf_eval(e, {0, 0, -0.025}).distance, 0);
  EXPECT_NEAR(sdf_eval(e, {0, 0, 0.026}).distance, 0, 1e-15);
  // |d| never exceeds the true distance along the equator direction
  EXPECT_LE(std::abs(sdf_eval(e, {0.03, 0, 0}).distance), 0.01 + 1e-15);
}

TEST(Sdf, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  const std::vector<SDFShape> shapes{
      Sphere{{0, 0, 0}, 0.5}, CappedCylinder{{0, 0, -0.5}, Vec3::UnitZ(), 0.4, 1.0},
      Egg{{0, 0, 0}, 0.5, 1.3, 0.9}, HalfSpace{{0, 0, 0}, Vec3(1, 2, 2).normalized()}};
  for (const SDFShape& s : shapes) {
    for (int trial = 0; trial < 20; ++trial) {
      const Vec3 p = random_vec(rng, 0.35);
      const SdfDerivatives d = sdf_derivatives(s, p);
      if (!(d.distance < -1e-3)) continue;
      const double h = 1e-7;
      for (int c = 0; c < 3; ++c) {
        Vec3 pp = p, pm = p;
        pp[c] += h;
        pm[c] -= h;
        const SdfDerivatives a = sdf_derivatives(s, pp), b = sdf_derivatives(s, pm);
        EXPECT_NEAR(d.gradient[c], (a.distance - b.distance) / (2 * h), 1e-6) << shape_type_name(s);
        const Vec3 dn = (a.normal - b.normal) / (2 * h);
        EXPECT_LE((dn - d.normal_jacobian.col(c)).norm(), 1e-5 * (1 + dn.norm())) << shape_type_name(s);
      }
    }
  }
}

TEST(Penalty, Examples) {
  const HalfSpace floor{{0, 0, 0}, Vec3::UnitZ()};
  const ContactParams params{1e4, 1.0};
  const Field3 still(3, Vec3::Zero());
  const Field3 outside{{0, 0, 0.1}, {1, 2, 0.5}, {0, 0, 1e-9}};
  for (const Vec3& f : penalty_forces(outside, still, floor, params)) EXPECT_EQ(f, Vec3::Zero());

  const Field3 one{{0.3, 0.1, -0.01}};
  const Field3 f = penalty_forces(one, Field3(1, Vec3::Zero()), floor, params);
  EXPECT_NEAR(f[0].z(), 100.0, 1e-9);
  EXPECT_EQ(f[0].x(), 0.0);
  EXPECT_EQ(f[0].y(), 0.0);

  const Field3 on_surface{{0.5, 0.5, 0.0}};
  EXPECT_EQ(penalty_forces(on_surface, Field3(1, Vec3::Zero()), floor, params)[0], Vec3::Zero());
}

TEST(Penalty, LinearScalingTowardTheSurface) {
  const Sphere s{Vec3::Zero(), 1.0};
  const ContactParams params{1e4, 1.0};
  for (double depth : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
    const Field3 p{{0, 0, 1.0 - depth}};
    const Field3 f = penalty_forces(p, Field3(1, Vec3::Zero()), s, params);
    EXPECT_NEAR(f[0].norm() / depth, 1e4, 1e4 * 1e-9) << depth;
  }
}

TEST(Penalty, ForcePointsOutwardWhenApproaching) {
  const CappedCylinder c{{0, 0, 0}, Vec3::UnitX(), 0.2, 1.0};
  const ContactParams params{5e3, 0.5};
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p = Vec3(0.5, 0, 0) + random_vec(rng, 0.25);
    const SdfSample s = sdf_eval(c, p);
    if (!(s.distance < 0)) continue;
    // any velocity with an inward component: damping adds to the push-out
    const Vec3 v = -random_vec(rng).cwiseAbs().norm() * s.normal;
    const Field3 f = penalty_forces(Field3{p}, Field3{v}, c, params);
    EXPECT_GE(f[0].dot(s.normal), 0);
  }
}

TEST(Penalty, VjpMatchesFiniteDifferences) {
  const std::vector<SDFShape> shapes{Sphere{{0, 0, 0}, 0.5},
                                     CappedCylinder{{0, 0, -0.5}, Vec3::UnitZ(), 0.4, 1.0},
                                     Egg{{0, 0, 0}, 0.5, 1.3, 0.9}};
  const ContactParams params{1e4, 1.0};
  std::mt19937_64 rng(6);
  for (const SDFShape& s : shapes) {
    Field3 x, v, a, dx, dv;
    for (int i = 0; i < 6; ++i) {
      Vec3 p;
      do p = random_vec(rng, 0.4);
      while (!(sdf_eval(s, p).distance < -1e-3));
      x.push_back(p);
      v.push_back(random_vec(rng));
      a.push_back(random_vec(rng));
      dx.push_back(random_vec(rng));
      dv.push_back(random_vec(rng));
    }
    Field3 xb = zero_field(6), vb = zero_field(6);
    add_penalty_forces_vjp(x, v, s, params, a, xb, vb);
    auto obj = [&](const Field3& xx, const Field3& vv) {
      const Field3 f = penalty_forces(xx, vv, s, params);
      double r = 0;
      for (int i = 0; i < 6; ++i) r += a[i].dot(f[i]);
      return r;
    };
    // the force is linear in v, so a large velocity step is exact and avoids
    // cancellation against the much larger stiffness term
    const double h = 1e-7, hv = 1e-2;
    Field3 xp = x, xm = x, vp = v, vm = v;
    double dir_x = 0, dir_v = 0;
    for (int i = 0; i < 6; ++i) {
      xp[i] += h * dx[i];
      xm[i] -= h * dx[i];
      vp[i] += hv * dv[i];
      vm[i] -= hv * dv[i];
      dir_x += xb[i].dot(dx[i]);
      dir_v += vb[i].dot(dv[i]);
    }
    EXPECT_LE(test::rel_err(dir_x, (obj(xp, v) - obj(xm, v)) / (2 * h)), 1e-5) << shape_type_name(s);
    EXPECT_LE(test::rel_err(dir_v, (obj(x, vp) - obj(x, vm)) / (2 * hv)), 1e-9) << shape_type_name(s);
  }
}

TEST(Penalty, ValidationRejectsBadShapes) {
  EXPECT_THROW(validate(SDFShape{Sphere{Vec3::Zero(), 0}}), ValidationError);
  EXPECT_THROW(validate(SDFShape{CappedCylinder{Vec3::Zero(), Vec3(1, 1, 0), 0.1, 1}}), ValidationError);
  EXPECT_THROW(validate(SDFShape{HalfSpace{Vec3::Zero(), Vec3(0, 0, 2)}}), ValidationError);
  EXPECT_THROW(validate(ContactParams{-1, 0}), ValidationError);
}
