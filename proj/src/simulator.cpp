#include "softdr/simulator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace softdr {

void validate(const SimConfig& c) {
  if (!(c.dt > 0)) throw ValidationError("sim.dt must be > 0");
  if (!c.gravity.allFinite()) throw ValidationError("sim.gravity must be finite");
  if (c.frame_count < 1) throw ValidationError("sim.frame_count must be >= 1");
  if (!(c.frame_window > 0 && c.frame_window <= 1)) {
    throw ValidationError("sim.frame_window must be in (0, 1]");
  }
  if (c.frame_stride < 0) throw ValidationError("sim.frame_stride must be >= 0");
  validate(c.contact);
}

long step_count(double duration, double dt) {
  if (!(duration >= 0)) throw ValidationError("duration must be >= 0");
  const double ratio = duration / dt;
  const double nearest = std::round(ratio);
  if (std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, ratio)) return static_cast<long>(nearest);
  return static_cast<long>(std::ceil(ratio));
}

std::vector<long> frame_steps(long total_steps, const SimConfig& config) {
  std::vector<long> out;
  if (total_steps <= 0) return {0};
  if (config.frame_stride > 0) {
    for (long s = config.frame_stride; s <= total_steps; s += config.frame_stride) out.push_back(s);
    if (out.empty() || out.back() != total_steps) out.push_back(total_steps);
    return out;
  }
  const double n = static_cast<double>(total_steps);
  const double start = n * (1.0 - config.frame_window);
  const double span = n * config.frame_window;
  for (int i = 0; i < config.frame_count; ++i) {
    const long s = std::llround(start + (i + 1) * span / config.frame_count);
    out.push_back(std::clamp(s, 0L, total_steps));
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Dynamics::Dynamics(TetMesh mesh, const Material& material, std::vector<Cable> cables,
                   CableMode mode, std::vector<SDFShape> contact_shapes, ContactParams contact,
                   Vec3 gravity)
    : mesh_(std::move(mesh)),
      elastic_(mesh_, mesh_.vertices, material),
      cables_(std::move(cables)),
      mode_(mode),
      shapes_(std::move(contact_shapes)),
      contact_(contact),
      gravity_(gravity),
      masses_(lumped_masses(mesh_, material.density)),
      fixed_(mesh_.vertex_count(), 0) {
  for (int f : mesh_.fixed_nodes) fixed_[f] = 1;
  for (std::size_t i = 0; i < masses_.size(); ++i) {
    if (!(masses_[i] > 0)) {
      throw ValidationError("vertex " + std::to_string(i) + " has no mass (not used by any tet)");
    }
  }
  for (const auto& s : shapes_) validate(s);
  validate(contact_);
}

SimState Dynamics::rest_state() const {
  return {mesh_.vertices, zero_field(mesh_.vertex_count()), 0.0};
}

void Dynamics::total_forces(const SimState& s, std::span<const double> p, std::span<Vec3> out,
                            int* inverted) const {
  if (p.size() != cables_.size()) {
    throw ValidationError("expected " + std::to_string(cables_.size()) + " pull ratios, got " +
                          std::to_string(p.size()));
  }
  std::fill(out.begin(), out.end(), Vec3::Zero());
  for (std::size_t c = 0; c < cables_.size(); ++c) {
    add_nodal_cable_forces(mesh_, cables_[c], p[c], s.positions, s.velocities, mode_, out);
  }
  elastic_.add_forces(s.positions, s.velocities, out, inverted);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += masses_[i] * gravity_;
  for (const SDFShape& shape : shapes_) {
    add_penalty_forces(s.positions, s.velocities, shape, contact_, out);
  }
}

void Dynamics::total_forces_vjp(const SimState& s, std::span<const double> p,
                                std::span<const Vec3> a, std::span<Vec3> x_bar,
                                std::span<Vec3> v_bar, std::span<double> p_bar) const {
  for (std::size_t c = 0; c < cables_.size(); ++c) {
    p_bar[c] += nodal_cable_forces_vjp(mesh_, cables_[c], p[c], s.positions, a, mode_, x_bar, v_bar);
  }
  elastic_.add_forces_vjp(s.positions, a, x_bar, v_bar);
  for (const SDFShape& shape : shapes_) {
    add_penalty_forces_vjp(s.positions, s.velocities, shape, contact_, a, x_bar, v_bar);
  }
}

namespace {

void check_finite(std::span<const Vec3> f, long step_index, const char* what) {
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!f[i].allFinite()) {
      throw NumericalError("integration failure at step " + std::to_string(step_index) +
                           ": non-finite " + what + " at node " + std::to_string(i));
    }
  }
}

// In-place semi-implicit Euler update given the forces at the current state.
void advance(SimState& s, std::span<const Vec3> forces, std::span<const double> masses,
             std::span<const char> fixed, double dt, long step_index) {
  check_finite(forces, step_index, "force");
  for (std::size_t i = 0; i < s.positions.size(); ++i) {
    if (fixed[i]) {
      s.velocities[i].setZero();
      continue;
    }
    s.velocities[i] += (dt / masses[i]) * forces[i];
    s.positions[i] += dt * s.velocities[i];
  }
  s.time += dt;
  check_finite(s.positions, step_index, "position");
}

}  // namespace

SimState step(const SimState& state, const ForcesFn& forces_fn, std::span<const double> masses,
              std::span<const char> fixed_mask, double dt, long step_index) {
  if (!(dt > 0)) throw ValidationError("step: dt must be > 0");
  const std::size_t n = state.positions.size();
  if (masses.size() != n || fixed_mask.size() != n || state.velocities.size() != n) {
    throw ValidationError("step: array sizes do not match vertex count");
  }
  for (double m : masses) {
    if (!(m > 0)) throw ValidationError("step: masses must be > 0");
  }
  Field3 forces = zero_field(n);
  forces_fn(state, forces);
  SimState next = state;
  advance(next, forces, masses, fixed_mask, dt, step_index);
  return next;
}

void integrate(const Dynamics& dyn, std::span<const double> p, SimState& state, long from, long to,
               double dt, int* max_inverted, const StepObserver& observer) {
  Field3 forces = zero_field(state.positions.size());
  for (long n = from; n < to; ++n) {
    int inverted = 0;
    dyn.total_forces(state, p, forces, &inverted);
    if (max_inverted) *max_inverted = std::max(*max_inverted, inverted);
    advance(state, forces, dyn.masses(), dyn.fixed_mask(), dt, n);
    if (observer) observer(n + 1, state);
  }
}

Trajectory simulate(const Dynamics& dyn, std::span<const double> p, double duration,
                    const SimConfig& config) {
  validate(config);
  if (p.size() != dyn.cable_count()) {
    throw ValidationError("simulate: expected " + std::to_string(dyn.cable_count()) +
                          " pull ratios, got " + std::to_string(p.size()));
  }
  Trajectory traj;
  traj.steps = step_count(duration, config.dt);
  traj.frame_steps = frame_steps(traj.steps, config);
  SimState state = dyn.rest_state();
  std::size_t next_frame = 0;
  if (traj.frame_steps.front() == 0) {
    traj.frames.push_back(state);
    ++next_frame;
  }
  integrate(dyn, p, state, 0, traj.steps, config.dt, &traj.max_inverted,
            [&](long n, const SimState& s) {
              if (next_frame < traj.frame_steps.size() && traj.frame_steps[next_frame] == n) {
                traj.frames.push_back(s);
                ++next_frame;
              }
            });
  traj.final_state = std::move(state);
  return traj;
}

// ---------------------------------------------------------------------------
// IO

namespace {

constexpr char kStateMagic[8] = {'S', 'D', 'R', 'S', 'T', 'A', 'T', 'E'};

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <class T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("state file truncated");
  return to_little(v);
}

}  // namespace

void write_state(const std::filesystem::path& path, const SimState& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(kStateMagic, sizeof(kStateMagic));
  put<std::uint64_t>(out, s.positions.size());
  put<double>(out, s.time);
  for (const Field3* f : {&s.positions, &s.velocities})
    for (const Vec3& v : *f)
      for (int k = 0; k < 3; ++k) put<double>(out, v[k]);
}

SimState read_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kStateMagic, sizeof(magic)) != 0) {
    throw ValidationError(path.string() + " is not a state dump");
  }
  const auto n = get<std::uint64_t>(in);
  SimState s;
  s.time = get<double>(in);
  s.positions.resize(n);
  s.velocities.resize(n);
  for (Field3* f : {&s.positions, &s.velocities})
    for (Vec3& v : *f)
      for (int k = 0; k < 3; ++k) v[k] = get<double>(in);
  return s;
}

void write_obj(const std::filesystem::path& path, const TetMesh& mesh,
               std::span<const Vec3> positions) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.precision(17);
  for (const Vec3& v : positions) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const Tri& t : mesh.surface_tris) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
}

}  // namespace softdr
