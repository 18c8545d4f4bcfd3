#include "wproj/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "wproj/errors.hpp"

namespace wproj {

namespace {

constexpr double kBoundaryTol = 1e-14;

bool on_unit_cube_boundary(const Vec3& p) {
  for (int a = 0; a < 3; ++a) {
    const double c = p[a];
    if (std::abs(c) <= kBoundaryTol || std::abs(c - 1.0) <= kBoundaryTol) return true;
  }
  return false;
}

void orient_positive(const std::vector<Vec3>& verts, Tet& t) {
  if (tet_signed_volume(verts[static_cast<size_t>(t[0])], verts[static_cast<size_t>(t[1])],
                        verts[static_cast<size_t>(t[2])], verts[static_cast<size_t>(t[3])]) < 0.0)
    std::swap(t[2], t[3]);
}

} // namespace

std::vector<int> MeshLevel::boundary_vertices() const {
  std::vector<int> out;
  for (int v = 0; v < num_vertices(); ++v)
    if (vertex_on_boundary[static_cast<size_t>(v)]) out.push_back(v);
  return out;
}

double MeshLevel::tet_volume(int t) const {
  const Tet& k = tets[static_cast<size_t>(t)];
  return tet_signed_volume(vertices[static_cast<size_t>(k[0])], vertices[static_cast<size_t>(k[1])],
                           vertices[static_cast<size_t>(k[2])], vertices[static_cast<size_t>(k[3])]);
}

double MeshLevel::total_volume() const {
  double v = 0.0;
  for (int t = 0; t < num_tets(); ++t) v += tet_volume(t);
  return v;
}

Vec3 MeshLevel::tet_centroid(int t) const {
  const Tet& k = tets[static_cast<size_t>(t)];
  Vec3 c{0, 0, 0};
  for (int i = 0; i < 4; ++i) c = c + vertices[static_cast<size_t>(k[i])];
  return c * 0.25;
}

MeshLevel build_coarse_mesh(int cells_per_axis) {
  if (cells_per_axis < 1) throw ConfigError("build_coarse_mesh: cells_per_axis must be >= 1");
  const int n = cells_per_axis;
  const int nv = n + 1;

  MeshLevel m;
  m.mesh_size = 1.0 / n;
  m.level_index = 0;
  m.vertices.reserve(static_cast<size_t>(nv) * nv * nv);
  for (int k = 0; k < nv; ++k)
    for (int j = 0; j < nv; ++j)
      for (int i = 0; i < nv; ++i)
        m.vertices.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n, static_cast<double>(k) / n});

  auto vid = [nv](int i, int j, int k) { return i + nv * (j + nv * k); };

  // Kuhn subdivision: one tet per permutation of the axis order, all sharing
  // the cube's main diagonal. Identical orientation in every cube keeps the
  // global mesh conforming.
  static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  m.tets.reserve(static_cast<size_t>(6) * n * n * n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        for (const auto& p : perms) {
          int c[3] = {i, j, k};
          Tet t;
          t[0] = vid(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            c[p[s]] += 1;
            t[s + 1] = vid(c[0], c[1], c[2]);
          }
          orient_positive(m.vertices, t);
          m.tets.push_back(t);
        }

  m.vertex_on_boundary.resize(m.vertices.size());
  for (size_t v = 0; v < m.vertices.size(); ++v) m.vertex_on_boundary[v] = on_unit_cube_boundary(m.vertices[v]);
  m.first_new_vertex = m.num_vertices();
  return m;
}

MeshLevel refine(const MeshLevel& mesh) {
  MeshLevel f;
  f.mesh_size = mesh.mesh_size / 2.0;
  f.level_index = mesh.level_index + 1;
  f.vertices = mesh.vertices;
  f.first_new_vertex = mesh.num_vertices();

  std::map<std::pair<int, int>, int> midpoint_of;
  auto midpoint_vertex = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = midpoint_of.find(key);
    if (it != midpoint_of.end()) return it->second;
    const int idx = static_cast<int>(f.vertices.size());
    f.vertices.push_back(midpoint(mesh.vertices[static_cast<size_t>(a)], mesh.vertices[static_cast<size_t>(b)]));
    f.new_vertex_parents.push_back({key.first, key.second});
    midpoint_of.emplace(key, idx);
    return idx;
  };

  f.tets.reserve(static_cast<size_t>(mesh.num_tets()) * 8);
  f.parent_tet.reserve(static_cast<size_t>(mesh.num_tets()) * 8);
  for (int t = 0; t < mesh.num_tets(); ++t) {
    const Tet& k = mesh.tets[static_cast<size_t>(t)];
    const int v0 = k[0], v1 = k[1], v2 = k[2], v3 = k[3];
    const int m01 = midpoint_vertex(v0, v1), m02 = midpoint_vertex(v0, v2), m03 = midpoint_vertex(v0, v3);
    const int m12 = midpoint_vertex(v1, v2), m13 = midpoint_vertex(v1, v3), m23 = midpoint_vertex(v2, v3);
    // Four corner children plus Bey's split of the interior octahedron.
    const Tet children[8] = {
        {v0, m01, m02, m03}, {m01, v1, m12, m13}, {m02, m12, v2, m23}, {m03, m13, m23, v3},
        {m01, m02, m03, m13}, {m01, m02, m12, m13}, {m02, m03, m13, m23}, {m02, m12, m13, m23}};
    for (Tet c : children) {
      orient_positive(f.vertices, c);
      f.tets.push_back(c);
      f.parent_tet.push_back(t);
    }
  }

  f.vertex_on_boundary.resize(f.vertices.size());
  for (size_t v = 0; v < f.vertices.size(); ++v) f.vertex_on_boundary[v] = on_unit_cube_boundary(f.vertices[v]);
  return f;
}

MeshHierarchy MeshHierarchy::build(int coarse_cells_per_axis, int refine_levels) {
  MeshHierarchy h;
  h.levels.push_back(build_coarse_mesh(coarse_cells_per_axis));
  for (int i = 0; i < refine_levels; ++i) h.levels.push_back(refine(h.levels.back()));
  return h;
}

SparseMatrix MeshHierarchy::prolongation_all_nodes(int coarse, int fine) const {
  if (coarse < 0 || fine >= size() || coarse >= fine)
    throw ConfigError("prolongation: levels must satisfy 0 <= coarse < fine < size");

  // One-level interpolation: carried vertices keep their value, new vertices
  // average their parent-edge endpoints. Composition handles multiple levels.
  auto one_level = [&](int lev) {
    const MeshLevel& fl = levels[static_cast<size_t>(lev)];
    std::vector<Triplet> t;
    t.reserve(static_cast<size_t>(fl.num_vertices()) * 2);
    for (int v = 0; v < fl.first_new_vertex; ++v) t.push_back({v, v, 1.0});
    for (int v = fl.first_new_vertex; v < fl.num_vertices(); ++v) {
      const auto& par = fl.new_vertex_parents[static_cast<size_t>(v - fl.first_new_vertex)];
      t.push_back({v, par[0], 0.5});
      t.push_back({v, par[1], 0.5});
    }
    return SparseMatrix::from_triplets(fl.num_vertices(), fl.first_new_vertex, std::move(t));
  };

  SparseMatrix p = one_level(coarse + 1);
  for (int lev = coarse + 2; lev <= fine; ++lev) p = one_level(lev).multiply(p);
  return p;
}

double evaluate_p1(const MeshLevel& mesh, const std::vector<double>& all_node_values, const Vec3& p) {
  const double tol = -1e-12;
  for (int t = 0; t < mesh.num_tets(); ++t) {
    const Tet& k = mesh.tets[static_cast<size_t>(t)];
    const Vec3& a = mesh.vertices[static_cast<size_t>(k[0])];
    const Vec3& b = mesh.vertices[static_cast<size_t>(k[1])];
    const Vec3& c = mesh.vertices[static_cast<size_t>(k[2])];
    const Vec3& d = mesh.vertices[static_cast<size_t>(k[3])];
    const double vol = tet_signed_volume(a, b, c, d);
    const double l1 = tet_signed_volume(a, p, c, d) / vol;
    const double l2 = tet_signed_volume(a, b, p, d) / vol;
    const double l3 = tet_signed_volume(a, b, c, p) / vol;
    const double l0 = 1.0 - l1 - l2 - l3;
    if (l0 >= tol && l1 >= tol && l2 >= tol && l3 >= tol)
      return l0 * all_node_values[static_cast<size_t>(k[0])] + l1 * all_node_values[static_cast<size_t>(k[1])] +
             l2 * all_node_values[static_cast<size_t>(k[2])] + l3 * all_node_values[static_cast<size_t>(k[3])];
  }
  throw std::runtime_error("evaluate_p1: point not located in any tet");
}

void export_mesh_tables(const MeshLevel& mesh, const std::string& prefix, const std::vector<int>* tet_ids) {
  {
    std::ofstream out(prefix + ".nodes.txt");
    if (!out) throw std::runtime_error("cannot open " + prefix + ".nodes.txt");
    char buf[128];
    for (int v = 0; v < mesh.num_vertices(); ++v) {
      const Vec3& p = mesh.vertices[static_cast<size_t>(v)];
      std::snprintf(buf, sizeof(buf), "%d %.17g %.17g %.17g %d\n", v, p.x, p.y, p.z,
                    static_cast<int>(mesh.vertex_on_boundary[static_cast<size_t>(v)]));
      out << buf;
    }
  }
  {
    std::ofstream out(prefix + ".tets.txt");
    if (!out) throw std::runtime_error("cannot open " + prefix + ".tets.txt");
    for (int t = 0; t < mesh.num_tets(); ++t) {
      const Tet& k = mesh.tets[static_cast<size_t>(t)];
      out << t << ' ' << k[0] << ' ' << k[1] << ' ' << k[2] << ' ' << k[3];
      if (tet_ids) out << ' ' << (*tet_ids)[static_cast<size_t>(t)];
      out << '\n';
    }
  }
}

} // namespace wproj
