#include "softdr/tetmesh.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

namespace softdr {

namespace {

using json = nlohmann::json;

constexpr double kInsideTolerance = 1e-9;

std::array<Tri, 4> outward_faces(const Tet& t) {
  return {Tri{t[0], t[2], t[1]}, Tri{t[0], t[1], t[3]}, Tri{t[0], t[3], t[2]},
          Tri{t[1], t[2], t[3]}};
}

Tri sorted(Tri f) {
  std::sort(f.begin(), f.end());
  return f;
}

double max_edge_length(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const double e[] = {(b - a).norm(), (c - a).norm(), (d - a).norm(),
                      (c - b).norm(), (d - b).norm(), (d - c).norm()};
  return *std::max_element(std::begin(e), std::end(e));
}

}  // namespace

double signed_tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

std::vector<Tri> extract_surface(std::span<const Tet> tets) {
  std::map<Tri, int> count;
  for (const Tet& t : tets) {
    for (const Tri& f : outward_faces(t)) ++count[sorted(f)];
  }
  std::vector<Tri> surface;
  for (std::size_t i = 0; i < tets.size(); ++i) {
    for (const Tri& f : outward_faces(tets[i])) {
      const int c = count.at(sorted(f));
      if (c > 2) {
        throw ValidationError("non-manifold face shared by " + std::to_string(c) +
                              " tets (tet " + std::to_string(i) + ")");
      }
      if (c == 1) surface.push_back(f);
    }
  }
  return surface;
}

TetMesh build_tet_mesh(Field3 vertices, std::vector<Tet> tets, std::vector<int> fixed_nodes,
                       MeshReport* report) {
  const int n = static_cast<int>(vertices.size());
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    if (!vertices[v].allFinite()) {
      throw ValidationError("vertex " + std::to_string(v) + " has non-finite coordinates");
    }
  }
  for (std::size_t i = 0; i < tets.size(); ++i) {
    Tet& t = tets[i];
    for (int idx : t) {
      if (idx < 0 || idx >= n) {
        throw ValidationError("tet " + std::to_string(i) + " references vertex " +
                              std::to_string(idx) + " but the mesh has " + std::to_string(n) +
                              " vertices");
      }
    }
    const Vec3 &a = vertices[t[0]], &b = vertices[t[1]], &c = vertices[t[2]], &d = vertices[t[3]];
    const double vol = signed_tet_volume(a, b, c, d);
    const double scale = max_edge_length(a, b, c, d);
    if (!(std::abs(vol) > 1e-12 * scale * scale * scale)) {
      throw ValidationError("tet " + std::to_string(i) + " is degenerate (volume " +
                            std::to_string(vol) + ")");
    }
    if (vol < 0) {
      std::swap(t[2], t[3]);
      if (report) report->reoriented_tets.push_back(static_cast<int>(i));
    }
  }
  for (int f : fixed_nodes) {
    if (f < 0 || f >= n) {
      throw ValidationError("fixed node " + std::to_string(f) + " out of range");
    }
  }
  std::sort(fixed_nodes.begin(), fixed_nodes.end());
  fixed_nodes.erase(std::unique(fixed_nodes.begin(), fixed_nodes.end()), fixed_nodes.end());

  TetMesh mesh;
  mesh.surface_tris = extract_surface(tets);
  mesh.vertices = std::move(vertices);
  mesh.tets = std::move(tets);
  mesh.fixed_nodes = std::move(fixed_nodes);
  return mesh;
}

// ---------------------------------------------------------------------------
// IO

MeshFormat mesh_format_from_string(const std::string& s) {
  if (s == "json") return MeshFormat::json;
  if (s == "tetgen") return MeshFormat::tetgen;
  throw ValidationError("unknown mesh format '" + s + "' (expected json or tetgen)");
}

std::string to_string(MeshFormat f) { return f == MeshFormat::json ? "json" : "tetgen"; }

namespace {

Vec3 vec3_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(where + ": expected [x, y, z]");
  Vec3 v;
  for (int k = 0; k < 3; ++k) {
    if (!j[k].is_number()) throw ValidationError(where + ": expected numbers");
    v[k] = j[k].get<double>();
  }
  return v;
}

MeshFile load_json_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open mesh file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("mesh " + path.string() + ": " + e.what());
  }
  if (!doc.contains("vertices") || !doc.contains("tets")) {
    throw ValidationError("mesh " + path.string() + ": missing 'vertices' or 'tets'");
  }
  Field3 vertices;
  for (std::size_t i = 0; i < doc["vertices"].size(); ++i) {
    vertices.push_back(vec3_from_json(doc["vertices"][i], "vertices[" + std::to_string(i) + "]"));
  }
  std::vector<Tet> tets;
  for (std::size_t i = 0; i < doc["tets"].size(); ++i) {
    const json& t = doc["tets"][i];
    if (!t.is_array() || t.size() != 4) {
      throw ValidationError("tets[" + std::to_string(i) + "]: expected 4 indices");
    }
    tets.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<int>(), t[3].get<int>()});
  }
  std::vector<int> fixed;
  if (doc.contains("fixed")) fixed = doc["fixed"].get<std::vector<int>>();

  MeshFile out;
  out.mesh = build_tet_mesh(std::move(vertices), std::move(tets), std::move(fixed), &out.report);
  if (doc.contains("cables")) {
    for (std::size_t c = 0; c < doc["cables"].size(); ++c) {
      const json& jc = doc["cables"][c];
      CablePath path_c;
      for (std::size_t i = 0; i < jc.at("via_points").size(); ++i) {
        path_c.via_points.push_back(vec3_from_json(
            jc["via_points"][i],
            "cables[" + std::to_string(c) + "].via_points[" + std::to_string(i) + "]"));
      }
      out.cables.push_back(std::move(path_c));
    }
  }
  return out;
}

// Whitespace-separated tokens of a TetGen file with '#' comments removed.
std::vector<std::vector<std::string>> tetgen_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    for (std::string tok; ss >> tok;) tokens.push_back(tok);
    if (!tokens.empty()) lines.push_back(std::move(tokens));
  }
  return lines;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(where + ": cannot parse '" + s + "'");
  }
}

int parse_int(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(where + ": cannot parse '" + s + "'");
  }
}

MeshFile load_tetgen_mesh(const std::filesystem::path& path) {
  std::filesystem::path stem = path;
  if (stem.extension() == ".node" || stem.extension() == ".ele") stem.replace_extension();
  const auto node_path = std::filesystem::path(stem.string() + ".node");
  const auto ele_path = std::filesystem::path(stem.string() + ".ele");

  const auto nodes = tetgen_lines(node_path);
  if (nodes.empty()) throw ValidationError(node_path.string() + ": empty");
  const int n = parse_int(nodes[0][0], node_path.string() + " header");
  if (static_cast<int>(nodes.size()) < n + 1) {
    throw ValidationError(node_path.string() + ": expected " + std::to_string(n) + " nodes");
  }
  Field3 vertices(n);
  int base = 0;
  for (int i = 0; i < n; ++i) {
    const auto& tok = nodes[i + 1];
    const std::string where = node_path.string() + " line " + std::to_string(i + 2);
    if (tok.size() < 4) throw ValidationError(where + ": expected index and 3 coordinates");
    const int idx = parse_int(tok[0], where);
    if (i == 0) base = idx;
    if (idx - base != i) throw ValidationError(where + ": nodes must be numbered consecutively");
    vertices[i] = Vec3(parse_double(tok[1], where), parse_double(tok[2], where),
                       parse_double(tok[3], where));
  }

  const auto eles = tetgen_lines(ele_path);
  if (eles.empty()) throw ValidationError(ele_path.string() + ": empty");
  const int m = parse_int(eles[0][0], ele_path.string() + " header");
  if (static_cast<int>(eles.size()) < m + 1) {
    throw ValidationError(ele_path.string() + ": expected " + std::to_string(m) + " tets");
  }
  std::vector<Tet> tets(m);
  for (int i = 0; i < m; ++i) {
    const auto& tok = eles[i + 1];
    const std::string where = ele_path.string() + " line " + std::to_string(i + 2);
    if (tok.size() < 5) throw ValidationError(where + ": expected index and 4 nodes");
    for (int k = 0; k < 4; ++k) tets[i][k] = parse_int(tok[k + 1], where) - base;
  }
  MeshFile out;
  out.mesh = build_tet_mesh(std::move(vertices), std::move(tets), {}, &out.report);
  return out;
}

}  // namespace

MeshFile load_mesh(const std::filesystem::path& path, MeshFormat format) {
  return format == MeshFormat::json ? load_json_mesh(path) : load_tetgen_mesh(path);
}

void save_mesh_json(const std::filesystem::path& path, const TetMesh& mesh,
                    std::span<const CablePath> cables) {
  json doc;
  doc["vertices"] = json::array();
  for (const Vec3& v : mesh.vertices) doc["vertices"].push_back({v.x(), v.y(), v.z()});
  doc["tets"] = json::array();
  for (const Tet& t : mesh.tets) doc["tets"].push_back({t[0], t[1], t[2], t[3]});
  doc["fixed"] = mesh.fixed_nodes;
  doc["cables"] = json::array();
  for (const CablePath& c : cables) {
    json pts = json::array();
    for (const Vec3& p : c.via_points) pts.push_back({p.x(), p.y(), p.z()});
    doc["cables"].push_back({{"via_points", pts}});
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  // doubles are dumped in shortest round-trip form
  out << doc.dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// Generators

RobotKind robot_kind_from_string(const std::string& s) {
  if (s == "finger") return RobotKind::finger;
  if (s == "trunk") return RobotKind::trunk;
  if (s == "starfish") return RobotKind::starfish;
  throw ValidationError("unknown robot kind '" + s + "' (expected finger, trunk or starfish)");
}

std::string to_string(RobotKind k) {
  switch (k) {
    case RobotKind::finger: return "finger";
    case RobotKind::trunk: return "trunk";
    case RobotKind::starfish: return "starfish";
  }
  return "finger";
}

CountFormula robot_counts(const RobotParams& p) {
  const std::size_t s = p.segments;
  switch (p.kind) {
    case RobotKind::finger:
      return {static_cast<std::size_t>(p.nx + 1) * (p.ny + 1) * (s + 1),
              6u * p.nx * p.ny * s};
    case RobotKind::trunk: {
      const std::size_t r = p.rings;
      return {(s + 1) * (1 + 3 * r * (r + 1)), 18 * r * r * s};
    }
    case RobotKind::starfish: {
      const std::size_t l = p.layers;
      return {(l + 1) * (6 + 10 * s), 3 * l * (5 + 10 * s)};
    }
  }
  return {0, 0};
}

namespace {

// Splits the prism over triangle (a, b, c) into 3 tets. Sorting by vertex
// index makes the quad-face diagonals agree between neighbouring prisms.
void split_prism(Tri bottom, int layer_stride, std::vector<Tet>& tets) {
  std::sort(bottom.begin(), bottom.end());
  const auto [a, b, c] = bottom;
  const int a1 = a + layer_stride, b1 = b + layer_stride, c1 = c + layer_stride;
  tets.push_back({a, b, c, c1});
  tets.push_back({a, b, b1, c1});
  tets.push_back({a, a1, b1, c1});
}

void extrude(const std::vector<Tri>& footprint, int footprint_vertices, int layers,
             std::vector<Tet>& tets) {
  for (int k = 0; k < layers; ++k) {
    for (const Tri& t : footprint) {
      const int off = k * footprint_vertices;
      split_prism({t[0] + off, t[1] + off, t[2] + off}, footprint_vertices, tets);
    }
  }
}

void check_common(const RobotParams& p) {
  if (p.segments < 2) throw ValidationError("robot resolution must be >= 2 segments");
  if (p.via_points < 2) throw ValidationError("each cable needs at least 2 via points");
  if (p.cable_count < 0) throw ValidationError("cable count must be >= 0");
  if (!(p.length > 0)) throw ValidationError("robot length must be positive");
  if (!(p.cable_offset >= 0 && p.cable_offset < 1)) {
    throw ValidationError("cable offset must be in [0, 1)");
  }
}

double via_height(const RobotParams& p, int h) {
  return p.length * (0.05 + 0.9 * h / static_cast<double>(p.via_points - 1));
}

GeneratedRobot make_finger(const RobotParams& p) {
  if (p.nx < 1 || p.ny < 1) throw ValidationError("finger needs nx, ny >= 1");
  if (!(p.width > 0 && p.depth > 0)) throw ValidationError("finger width/depth must be positive");
  const int nx = p.nx, ny = p.ny, nz = p.segments;
  auto idx = [&](int i, int j, int k) { return i + (nx + 1) * (j + (ny + 1) * k); };

  Field3 verts;
  for (int k = 0; k <= nz; ++k)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i)
        verts.emplace_back((i / double(nx) - 0.5) * p.width, (j / double(ny) - 0.5) * p.depth,
                           k / double(nz) * p.length);

  static constexpr int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                       {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  std::vector<Tet> tets;
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        for (const auto& perm : kPerms) {
          int c[3] = {0, 0, 0};
          Tet t;
          t[0] = idx(i, j, k);
          for (int s = 0; s < 3; ++s) {
            c[perm[s]] = 1;
            t[s + 1] = idx(i + c[0], j + c[1], k + c[2]);
          }
          tets.push_back(t);
        }

  std::vector<int> fixed;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) fixed.push_back(idx(i, j, 0));

  GeneratedRobot out;
  out.mesh = build_tet_mesh(std::move(verts), std::move(tets), std::move(fixed));
  const double e = p.cable_offset * 0.5 * std::min(p.width, p.depth);
  for (int c = 0; c < p.cable_count; ++c) {
    const double th = p.cable_phase + 2 * std::numbers::pi * c / p.cable_count;
    CablePath path;
    for (int h = 0; h < p.via_points; ++h)
      path.via_points.emplace_back(e * std::cos(th), e * std::sin(th), via_height(p, h));
    out.cables.push_back(std::move(path));
  }
  return out;
}

// Concentric-ring disk: center vertex plus ring r with 6r vertices.
void disk_footprint(int rings, std::vector<Tri>& tris) {
  auto ring_start = [](int r) { return r == 0 ? 0 : 1 + 3 * r * (r - 1); };
  auto ring_size = [](int r) { return r == 0 ? 1 : 6 * r; };
  for (int r = 1; r <= rings; ++r) {
    const int na = ring_size(r - 1), nb = ring_size(r);
    const int sa = ring_start(r - 1), sb = ring_start(r);
    if (na == 1) {
      for (int j = 0; j < nb; ++j) tris.push_back({sa, sb + j, sb + (j + 1) % nb});
      continue;
    }
    // zipper walk: advance whichever ring's next vertex has the smaller angle
    int i = 0, j = 0;
    while (i < na || j < nb) {
      const double next_a = (i + 1) / double(na);
      const double next_b = (j + 1) / double(nb);
      if (j < nb && (i >= na || next_b <= next_a)) {
        tris.push_back({sa + i % na, sb + j, sb + (j + 1) % nb});
        ++j;
      } else {
        tris.push_back({sa + i % na, sb + j % nb, sa + (i + 1) % na});
        ++i;
      }
    }
  }
}

GeneratedRobot make_trunk(const RobotParams& p) {
  if (p.rings < 1) throw ValidationError("trunk needs rings >= 1");
  if (!(p.radius > 0 && p.tip_scale > 0)) {
    throw ValidationError("trunk radius and tip scale must be positive");
  }
  const int nr = p.rings, nl = p.segments;
  const int per_layer = 1 + 3 * nr * (nr + 1);
  auto scale_at = [&](double z) { return 1.0 + (p.tip_scale - 1.0) * z / p.length; };

  Field3 verts;
  for (int k = 0; k <= nl; ++k) {
    const double z = k / double(nl) * p.length;
    const double s = scale_at(z);
    verts.emplace_back(0, 0, z);
    for (int r = 1; r <= nr; ++r) {
      const double rho = r / double(nr) * p.radius * s;
      for (int m = 0; m < 6 * r; ++m) {
        const double th = 2 * std::numbers::pi * m / (6 * r);
        verts.emplace_back(rho * std::cos(th), rho * std::sin(th), z);
      }
    }
  }
  std::vector<Tri> footprint;
  disk_footprint(nr, footprint);
  std::vector<Tet> tets;
  extrude(footprint, per_layer, nl, tets);

  std::vector<int> fixed(per_layer);
  for (int i = 0; i < per_layer; ++i) fixed[i] = i;

  GeneratedRobot out;
  out.mesh = build_tet_mesh(std::move(verts), std::move(tets), std::move(fixed));
  for (int c = 0; c < p.cable_count; ++c) {
    const double th = p.cable_phase + 2 * std::numbers::pi * c / p.cable_count;
    CablePath path;
    for (int h = 0; h < p.via_points; ++h) {
      const double z = via_height(p, h);
      const double e = p.cable_offset * p.radius * scale_at(z);
      path.via_points.emplace_back(e * std::cos(th), e * std::sin(th), z);
    }
    out.cables.push_back(std::move(path));
  }
  return out;
}

GeneratedRobot make_starfish(const RobotParams& p) {
  if (p.cable_count != 5) throw ValidationError("starfish has exactly one cable per finger (5)");
  if (p.layers < 1) throw ValidationError("starfish needs layers >= 1");
  if (!(p.radius > 0 && p.thickness > 0)) {
    throw ValidationError("starfish hub radius and thickness must be positive");
  }
  const int n = p.segments, nl = p.layers;
  const int per_layer = 6 + 10 * n;

  std::array<Eigen::Vector2d, 5> corners;
  for (int a = 0; a < 5; ++a) {
    const double th = std::numbers::pi / 2 + 2 * std::numbers::pi * a / 5;
    corners[a] = p.radius * Eigen::Vector2d(std::cos(th), std::sin(th));
  }
  auto arm_dir = [&](int a) { return (corners[a] + corners[(a + 1) % 5]).normalized(); };

  std::vector<Eigen::Vector2d> foot;
  foot.emplace_back(0, 0);
  for (const auto& c : corners) foot.push_back(c);
  for (int a = 0; a < 5; ++a) {
    const Eigen::Vector2d u = arm_dir(a);
    for (int s = 1; s <= n; ++s) {
      const double dist = s * p.length / n;
      foot.push_back(corners[a] + dist * u);
      foot.push_back(corners[(a + 1) % 5] + dist * u);
    }
  }
  std::vector<Tri> footprint;
  for (int a = 0; a < 5; ++a) footprint.push_back({0, 1 + a, 1 + (a + 1) % 5});
  for (int a = 0; a < 5; ++a) {
    int l0 = 1 + a, r0 = 1 + (a + 1) % 5;
    for (int s = 1; s <= n; ++s) {
      const int l1 = 6 + a * 2 * n + 2 * (s - 1), r1 = l1 + 1;
      footprint.push_back({l0, r0, r1});
      footprint.push_back({l0, r1, l1});
      l0 = l1;
      r0 = r1;
    }
  }

  Field3 verts;
  for (int k = 0; k <= nl; ++k) {
    const double z = k / double(nl) * p.thickness;
    for (const auto& q : foot) verts.emplace_back(q.x(), q.y(), z);
  }
  std::vector<Tet> tets;
  extrude(footprint, per_layer, nl, tets);

  std::vector<int> fixed;
  for (int k = 0; k <= nl; ++k)
    for (int i = 0; i < 6; ++i) fixed.push_back(k * per_layer + i);

  GeneratedRobot out;
  out.mesh = build_tet_mesh(std::move(verts), std::move(tets), std::move(fixed));
  // cable on the underside of each arm so pulling curls the arm downward (-z)
  const double z = (0.5 - 0.5 * p.cable_offset) * p.thickness + 0.013 * p.thickness;
  for (int a = 0; a < 5; ++a) {
    const Eigen::Vector2d u = arm_dir(a);
    const Eigen::Vector2d left = corners[a], right = corners[(a + 1) % 5];
    CablePath path;
    for (int h = 0; h < p.via_points; ++h) {
      const double along = p.length * (0.05 + 0.9 * h / double(p.via_points - 1));
      const Eigen::Vector2d q = left + 0.43 * (right - left) + along * u;
      path.via_points.emplace_back(q.x(), q.y(), z);
    }
    out.cables.push_back(std::move(path));
  }
  return out;
}

}  // namespace

GeneratedRobot generate_robot(const RobotParams& params) {
  check_common(params);
  switch (params.kind) {
    case RobotKind::finger: return make_finger(params);
    case RobotKind::trunk: return make_trunk(params);
    case RobotKind::starfish: return make_starfish(params);
  }
  throw ValidationError("unknown robot kind");
}

// ---------------------------------------------------------------------------
// Embedding

std::array<double, 4> barycentric(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d,
                                  const Vec3& p) {
  const Vec3 ab = b - a, ac = c - a, ad = d - a, ap = p - a;
  const double vol = ab.dot(ac.cross(ad));
  const double w1 = ap.dot(ac.cross(ad)) / vol;
  const double w2 = ab.dot(ap.cross(ad)) / vol;
  const double w3 = ab.dot(ac.cross(ap)) / vol;
  return {1.0 - w1 - w2 - w3, w1, w2, w3};
}

BarycentricEmbedding embed_points(const TetMesh& mesh, std::span<const Vec3> points) {
  BarycentricEmbedding out;
  out.entries.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    int host = -1;
    std::array<double, 4> w{};
    int nearest = -1;
    double nearest_min = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
      const Tet& tet = mesh.tets[t];
      const auto wt = barycentric(mesh.vertices[tet[0]], mesh.vertices[tet[1]],
                                  mesh.vertices[tet[2]], mesh.vertices[tet[3]], p);
      const double mn = *std::min_element(wt.begin(), wt.end());
      if (mn > nearest_min) {
        nearest_min = mn;
        nearest = static_cast<int>(t);
      }
      if (mn >= -kInsideTolerance) {
        host = static_cast<int>(t);
        w = wt;
        break;
      }
    }
    if (host < 0) {
      throw ValidationError("point " + std::to_string(i) + " lies outside the mesh (nearest tet " +
                            std::to_string(nearest) + ", min barycentric weight " +
                            std::to_string(nearest_min) + ")");
    }
    double sum = 0;
    for (double& x : w) {
      x = std::max(x, 0.0);
      sum += x;
    }
    for (double& x : w) x /= sum;
    out.entries.push_back({host, w});
  }
  return out;
}

Field3 interpolate(const TetMesh& mesh, const BarycentricEmbedding& embedding,
                   std::span<const Vec3> nodal_field) {
  if (nodal_field.size() != mesh.vertex_count()) {
    throw ValidationError("interpolate: nodal field has " + std::to_string(nodal_field.size()) +
                          " entries, mesh has " + std::to_string(mesh.vertex_count()) +
                          " vertices");
  }
  Field3 out(embedding.size());
  for (std::size_t i = 0; i < embedding.size(); ++i) {
    const auto& e = embedding.entries[i];
    const Tet& t = mesh.tets[e.host_tet];
    out[i] = e.weights[0] * nodal_field[t[0]] + e.weights[1] * nodal_field[t[1]] +
             e.weights[2] * nodal_field[t[2]] + e.weights[3] * nodal_field[t[3]];
  }
  return out;
}

ScatterMode scatter_mode_from_string(const std::string& s) {
  if (s == "transpose") return ScatterMode::transpose;
  if (s == "pseudoinverse") return ScatterMode::pseudoinverse;
  throw ValidationError("unknown force mapping '" + s + "' (expected transpose or pseudoinverse)");
}

std::string to_string(ScatterMode m) {
  return m == ScatterMode::transpose ? "transpose" : "pseudoinverse";
}

ForceScatter::ForceScatter(const TetMesh& mesh, BarycentricEmbedding embedding, ScatterMode mode)
    : embedding_(std::move(embedding)), mode_(mode) {
  for (const auto& e : embedding_.entries) {
    if (e.host_tet < 0 || e.host_tet >= static_cast<int>(mesh.tet_count())) {
      throw ValidationError("embedding references tet " + std::to_string(e.host_tet) +
                            " outside the mesh");
    }
    hosts_.push_back(mesh.tets[e.host_tet]);
  }
  if (mode_ == ScatterMode::transpose) return;

  for (const auto& e : embedding_.entries)
    for (int v : mesh.tets[e.host_tet]) touched_.push_back(v);
  std::sort(touched_.begin(), touched_.end());
  touched_.erase(std::unique(touched_.begin(), touched_.end()), touched_.end());

  const Eigen::Index rows = static_cast<Eigen::Index>(embedding_.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(touched_.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& e = embedding_.entries[i];
    for (int k = 0; k < 4; ++k) {
      const auto col = std::lower_bound(touched_.begin(), touched_.end(), mesh.tets[e.host_tet][k]) -
                       touched_.begin();
      w(i, col) += e.weights[k];
    }
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(w);
  cod.setThreshold(1e-10);
  const Eigen::Index rank = cod.rank();
  if (rank < std::min(rows, cols)) {
    throw NumericalError("pseudoinverse force mapping: W restricted to touched nodes is " +
                         std::to_string(rows) + "x" + std::to_string(cols) + " with rank " +
                         std::to_string(rank) + " (rank deficiency " +
                         std::to_string(std::min(rows, cols) - rank) + ")");
  }
  pinv_ = cod.pseudoInverse();
}

void ForceScatter::scatter_add(std::span<const Vec3> via_forces, std::span<Vec3> nodal) const {
  if (via_forces.size() != embedding_.size()) {
    throw ValidationError("scatter: expected " + std::to_string(embedding_.size()) +
                          " via forces, got " + std::to_string(via_forces.size()));
  }
  if (mode_ == ScatterMode::transpose) {
    for (std::size_t i = 0; i < embedding_.size(); ++i) {
      const auto& w = embedding_.entries[i].weights;
      const Tet& t = hosts_[i];
      for (int k = 0; k < 4; ++k) nodal[t[k]] += w[k] * via_forces[i];
    }
    return;
  }
  for (std::size_t r = 0; r < touched_.size(); ++r) {
    Vec3 acc = Vec3::Zero();
    for (std::size_t i = 0; i < via_forces.size(); ++i) acc += pinv_(r, i) * via_forces[i];
    nodal[touched_[r]] += acc;
  }
}

void ForceScatter::gather_transpose(std::span<const Vec3> nodal, std::span<Vec3> via) const {
  if (mode_ == ScatterMode::transpose) {
    for (std::size_t i = 0; i < embedding_.size(); ++i) {
      const auto& w = embedding_.entries[i].weights;
      const Tet& t = hosts_[i];
      for (int k = 0; k < 4; ++k) via[i] += w[k] * nodal[t[k]];
    }
    return;
  }
  for (std::size_t i = 0; i < embedding_.size(); ++i) {
    Vec3 acc = Vec3::Zero();
    for (std::size_t r = 0; r < touched_.size(); ++r) acc += pinv_(r, i) * nodal[touched_[r]];
    via[i] += acc;
  }
}

Field3 scatter_forces(const TetMesh& mesh, const BarycentricEmbedding& embedding,
                      std::span<const Vec3> via_forces, ScatterMode mode) {
  ForceScatter scatter(mesh, embedding, mode);
  Field3 out = zero_field(mesh.vertex_count());
  scatter.scatter_add(via_forces, out);
  return out;
}

}  // namespace softdr
