#include "wproj/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <set>

#include "wproj/errors.hpp"

namespace wproj {

namespace {

const std::array<std::array<int, 3>, 4> kTetFaces = {{{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};

FaceKey face_key(const Tet& t, int local) {
  FaceKey f{t[kTetFaces[static_cast<size_t>(local)][0]], t[kTetFaces[static_cast<size_t>(local)][1]],
            t[kTetFaces[static_cast<size_t>(local)][2]]};
  std::sort(f.begin(), f.end());
  return f;
}

EdgeKey edge_key(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

struct Plane {
  Vec3 normal{0, 0, 0}; // unit
  double offset = 0.0;  // dot(normal, x) == offset on the plane

  double distance(const Vec3& p) const { return std::abs(dot(normal, p) - offset); }
};

Plane triangle_plane(const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 n = cross(b - a, c - a);
  const double len = norm(n);
  n = n * (1.0 / len);
  // Canonical sign: first component of magnitude > tolerance positive.
  for (int i = 0; i < 3; ++i) {
    if (std::abs(n[i]) > 1e-12) {
      if (n[i] < 0) n = n * -1.0;
      break;
    }
  }
  return {n, dot(n, a)};
}

// Grouping key with quantized coordinates; exact for the axis-aligned planes
// of box decompositions.
std::array<long long, 4> plane_key(const Plane& p) {
  auto q = [](double v) { return static_cast<long long>(std::llround(v * 1e9)); };
  return {q(p.normal.x), q(p.normal.y), q(p.normal.z), q(p.offset)};
}

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(static_cast<size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[static_cast<size_t>(x)] != x) {
      parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
      x = parent[static_cast<size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
  }
};

// Least-squares plane through the node cloud (normal: eigenvector of the
// smallest covariance eigenvalue, via Jacobi rotations on the 3x3 matrix).
Plane least_squares_plane(const std::vector<Vec3>& pts) {
  Vec3 c{0, 0, 0};
  for (const Vec3& p : pts) c = c + p;
  c = c * (1.0 / static_cast<double>(pts.size()));
  double m[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  for (const Vec3& p : pts) {
    const Vec3 d = p - c;
    const double v[3] = {d.x, d.y, d.z};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m[i][j] += v[i] * v[j];
  }
  double q[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int sweep = 0; sweep < 32; ++sweep) {
    double off = std::abs(m[0][1]) + std::abs(m[0][2]) + std::abs(m[1][2]);
    if (off < 1e-14) break;
    for (int p = 0; p < 2; ++p)
      for (int r = p + 1; r < 3; ++r) {
        if (std::abs(m[p][r]) < 1e-15) continue;
        const double theta = 0.5 * std::atan2(2.0 * m[p][r], m[r][r] - m[p][p]);
        const double cs = std::cos(theta), sn = std::sin(theta);
        for (int k = 0; k < 3; ++k) {
          const double mp = m[p][k], mr = m[r][k];
          m[p][k] = cs * mp - sn * mr;
          m[r][k] = sn * mp + cs * mr;
        }
        for (int k = 0; k < 3; ++k) {
          const double mp = m[k][p], mr = m[k][r];
          m[k][p] = cs * mp - sn * mr;
          m[k][r] = sn * mp + cs * mr;
          const double qp = q[k][p], qr = q[k][r];
          q[k][p] = cs * qp - sn * qr;
          q[k][r] = sn * qp + cs * qr;
        }
      }
  }
  int smallest = 0;
  for (int i = 1; i < 3; ++i)
    if (m[i][i] < m[smallest][smallest]) smallest = i;
  Vec3 n{q[0][smallest], q[1][smallest], q[2][smallest]};
  const double len = norm(n);
  n = (len > 0) ? n * (1.0 / len) : Vec3{1, 0, 0};
  return {n, dot(n, c)};
}

double max_plane_distance(const Plane& plane, const std::vector<Vec3>& pts) {
  double worst = 0.0;
  for (const Vec3& p : pts) worst = std::max(worst, plane.distance(p));
  return worst;
}

// Flatness of a node cloud: deviation from the best of a small family of
// reference planes (supplied reference, least-squares fit, axis mid-range).
double flatness(const std::vector<Vec3>& pts, const Plane* reference) {
  double best = std::numeric_limits<double>::infinity();
  if (reference) best = std::min(best, max_plane_distance(*reference, pts));
  if (pts.size() >= 3) best = std::min(best, max_plane_distance(least_squares_plane(pts), pts));
  for (int a = 0; a < 3; ++a) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const Vec3& p : pts) {
      lo = std::min(lo, p[a]);
      hi = std::max(hi, p[a]);
    }
    Plane axis_plane{a == 0 ? Vec3{1, 0, 0} : (a == 1 ? Vec3{0, 1, 0} : Vec3{0, 0, 1}), (lo + hi) / 2.0};
    best = std::min(best, max_plane_distance(axis_plane, pts));
  }
  return best;
}

int cube_side_of_face(const MeshLevel& mesh, const FaceKey& f) {
  for (int a = 0; a < 3; ++a)
    for (int s = 0; s < 2; ++s) {
      const double target = static_cast<double>(s);
      bool all = true;
      for (int v : f)
        if (std::abs(mesh.vertices[static_cast<size_t>(v)][a] - target) > 1e-12) {
          all = false;
          break;
        }
      if (all) return 2 * a + s;
    }
  return -1;
}

struct LabeledFace {
  FaceKey tri;
  int sub_a; // smaller id for pairs; the subdomain for outer faces
  int sub_b; // other subdomain, or -1 - side for outer faces
};

// All subdomain-boundary triangles at one level, labeled by the unordered
// pair they separate.
std::vector<LabeledFace> boundary_faces(const MeshLevel& mesh, const std::vector<int>& sub) {
  std::map<FaceKey, std::array<int, 2>> adj; // tets per face (-1 absent)
  for (int t = 0; t < mesh.num_tets(); ++t)
    for (int l = 0; l < 4; ++l) {
      const FaceKey f = face_key(mesh.tets[static_cast<size_t>(t)], l);
      auto [it, fresh] = adj.try_emplace(f, std::array<int, 2>{t, -1});
      if (!fresh) it->second[1] = t;
    }
  std::vector<LabeledFace> out;
  for (const auto& [f, tets] : adj) {
    if (tets[1] < 0) {
      const int side = cube_side_of_face(mesh, f);
      if (side < 0) throw std::logic_error("single-sided face off the cube boundary");
      out.push_back({f, sub[static_cast<size_t>(tets[0])], -1 - side});
    } else {
      const int ka = sub[static_cast<size_t>(tets[0])], kb = sub[static_cast<size_t>(tets[1])];
      if (ka != kb) out.push_back({f, std::min(ka, kb), std::max(ka, kb)});
    }
  }
  return out;
}

std::vector<int> face_neighbors_per_tet(const MeshLevel& mesh, std::vector<std::array<int, 4>>& nbr) {
  std::map<FaceKey, std::array<int, 2>> adj;
  for (int t = 0; t < mesh.num_tets(); ++t)
    for (int l = 0; l < 4; ++l) {
      const FaceKey f = face_key(mesh.tets[static_cast<size_t>(t)], l);
      auto [it, fresh] = adj.try_emplace(f, std::array<int, 2>{t, -1});
      if (!fresh) it->second[1] = t;
    }
  nbr.assign(static_cast<size_t>(mesh.num_tets()), {-1, -1, -1, -1});
  std::vector<int> count(static_cast<size_t>(mesh.num_tets()), 0);
  for (const auto& [f, tets] : adj) {
    if (tets[1] < 0) continue;
    nbr[static_cast<size_t>(tets[0])][static_cast<size_t>(count[static_cast<size_t>(tets[0])]++)] = tets[1];
    nbr[static_cast<size_t>(tets[1])][static_cast<size_t>(count[static_cast<size_t>(tets[1])]++)] = tets[0];
  }
  return count;
}

bool subdomain_connected(const std::vector<int>& members, const std::vector<std::array<int, 4>>& nbr,
                         const std::vector<int>& sub, int id) {
  if (members.empty()) return false;
  std::set<int> member_set(members.begin(), members.end());
  std::vector<int> stack{members.front()};
  std::set<int> seen{members.front()};
  while (!stack.empty()) {
    const int t = stack.back();
    stack.pop_back();
    for (int n : nbr[static_cast<size_t>(t)]) {
      if (n < 0 || sub[static_cast<size_t>(n)] != id) continue;
      if (member_set.count(n) && !seen.count(n)) {
        seen.insert(n);
        stack.push_back(n);
      }
    }
  }
  return seen.size() == member_set.size();
}

} // namespace

CoefficientField::CoefficientField(std::vector<double> a) : alpha(std::move(a)) {
  for (double v : alpha)
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("coefficients must be strictly positive and finite");
}

CoefficientField CoefficientField::scaled(double c) const {
  std::vector<double> a = alpha;
  for (double& v : a) v *= c;
  return CoefficientField(a);
}

std::string to_string(InterfaceClass c) {
  switch (c) {
    case InterfaceClass::Face: return "Face";
    case InterfaceClass::Edge: return "Edge";
    case InterfaceClass::Vertex: return "Vertex";
    case InterfaceClass::Mixed: return "Mixed";
    case InterfaceClass::Empty: return "Empty";
  }
  return "?";
}

const InterfaceGeometry* SurfaceTopology::interface(int k, int l) const {
  auto it = interfaces.find({std::min(k, l), std::max(k, l)});
  return it == interfaces.end() ? nullptr : &it->second;
}

bool SurfaceTopology::chain_is_edge_of(int chain_id, int sub) const {
  const auto& list = chains_of_sub.at(static_cast<size_t>(sub));
  return std::binary_search(list.begin(), list.end(), chain_id);
}

SubdomainDecomposition SubdomainDecomposition::build(const MeshHierarchy& hierarchy, const BoxGridSpec& spec) {
  const MeshLevel& coarse = hierarchy[0];
  const int base_n = static_cast<int>(std::llround(1.0 / coarse.mesh_size));
  const auto& g = spec.grid;
  if (g[0] < 1 || g[1] < 1 || g[2] < 1) throw ConfigError("grid dimensions must be positive");
  for (int a = 0; a < 3; ++a)
    if (base_n % g[static_cast<size_t>(a)] != 0)
      throw ConfigError("grid must divide cells_per_axis evenly (axis " + std::to_string(a) + ")");

  const int ncells = g[0] * g[1] * g[2];
  std::vector<int> cell_group(static_cast<size_t>(ncells), -1);
  for (size_t gi = 0; gi < spec.merge_groups.size(); ++gi)
    for (int c : spec.merge_groups[gi]) {
      if (c < 0 || c >= ncells) throw ConfigError("merge cell id out of range");
      if (cell_group[static_cast<size_t>(c)] != -1) throw ConfigError("merge groups overlap");
      cell_group[static_cast<size_t>(c)] = static_cast<int>(gi);
    }

  // Merged groups must be face-connected in the cell grid.
  for (size_t gi = 0; gi < spec.merge_groups.size(); ++gi) {
    const auto& cells = spec.merge_groups[gi];
    if (cells.empty()) throw ConfigError("empty merge group");
    std::set<int> members(cells.begin(), cells.end());
    std::vector<int> stack{cells.front()};
    std::set<int> seen{cells.front()};
    auto cxyz = [&](int c) { return std::array<int, 3>{c % g[0], (c / g[0]) % g[1], c / (g[0] * g[1])}; };
    while (!stack.empty()) {
      const auto [cx, cy, cz] = cxyz(stack.back());
      stack.pop_back();
      const int steps[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
      for (const auto& s : steps) {
        const int nx = cx + s[0], ny = cy + s[1], nz = cz + s[2];
        if (nx < 0 || nx >= g[0] || ny < 0 || ny >= g[1] || nz < 0 || nz >= g[2]) continue;
        const int nc = nx + g[0] * (ny + g[1] * nz);
        if (members.count(nc) && !seen.count(nc)) {
          seen.insert(nc);
          stack.push_back(nc);
        }
      }
    }
    if (seen.size() != members.size()) throw ConfigError("merged subdomain is disconnected");
  }

  // Subdomain ids: units ordered by their smallest cell.
  std::vector<std::pair<int, int>> units; // (smallest cell, group or -1-cell)
  for (size_t gi = 0; gi < spec.merge_groups.size(); ++gi)
    units.push_back({*std::min_element(spec.merge_groups[gi].begin(), spec.merge_groups[gi].end()),
                     static_cast<int>(gi)});
  for (int c = 0; c < ncells; ++c)
    if (cell_group[static_cast<size_t>(c)] == -1) units.push_back({c, -1 - c});
  std::sort(units.begin(), units.end());

  SubdomainDecomposition dec;
  dec.hierarchy_ = &hierarchy;
  dec.grid_ = g;
  dec.num_subdomains_ = static_cast<int>(units.size());
  dec.cell_to_sub_.assign(static_cast<size_t>(ncells), -1);
  for (size_t u = 0; u < units.size(); ++u) {
    const int tag = units[u].second;
    if (tag >= 0)
      for (int c : spec.merge_groups[static_cast<size_t>(tag)]) dec.cell_to_sub_[static_cast<size_t>(c)] = static_cast<int>(u);
    else
      dec.cell_to_sub_[static_cast<size_t>(-1 - tag)] = static_cast<int>(u);
  }

  // Level-0 assignment by centroid cell; finer levels inherit from parents.
  dec.sub_of_tet_.resize(static_cast<size_t>(hierarchy.size()));
  {
    std::vector<int>& s0 = dec.sub_of_tet_[0];
    s0.resize(static_cast<size_t>(coarse.num_tets()));
    for (int t = 0; t < coarse.num_tets(); ++t) {
      const Vec3 c = coarse.tet_centroid(t);
      int cx = std::min(g[0] - 1, static_cast<int>(c.x * g[0]));
      int cy = std::min(g[1] - 1, static_cast<int>(c.y * g[1]));
      int cz = std::min(g[2] - 1, static_cast<int>(c.z * g[2]));
      s0[static_cast<size_t>(t)] = dec.cell_to_sub_[static_cast<size_t>(cx + g[0] * (cy + g[1] * cz))];
    }
  }
  for (int lev = 1; lev < hierarchy.size(); ++lev) {
    const MeshLevel& m = hierarchy[lev];
    std::vector<int>& s = dec.sub_of_tet_[static_cast<size_t>(lev)];
    s.resize(static_cast<size_t>(m.num_tets()));
    for (int t = 0; t < m.num_tets(); ++t)
      s[static_cast<size_t>(t)] = dec.sub_of_tet_[static_cast<size_t>(lev - 1)][static_cast<size_t>(m.parent_tet[static_cast<size_t>(t)])];
  }
  dec.base_sub_of_tet_ = dec.sub_of_tet_;

  double h_max = 0.0;
  for (int s = 0; s < dec.num_subdomains_; ++s) h_max = std::max(h_max, dec.diameter_of(s));
  dec.subdomain_diameter_ = h_max;
  return dec;
}

double SubdomainDecomposition::diameter_of(int sub) const {
  const MeshLevel& coarse = (*hierarchy_)[0];
  Vec3 lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
  for (int t = 0; t < coarse.num_tets(); ++t) {
    if (sub_of_tet_[0][static_cast<size_t>(t)] != sub) continue;
    for (int v : coarse.tets[static_cast<size_t>(t)]) {
      const Vec3& p = coarse.vertices[static_cast<size_t>(v)];
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
  }
  return norm(hi - lo);
}

const std::vector<int>& SubdomainDecomposition::tet_subdomains(int level) const {
  return sub_of_tet_.at(static_cast<size_t>(level));
}

const std::vector<int>& SubdomainDecomposition::base_tet_subdomains(int level) const {
  return base_sub_of_tet_.at(static_cast<size_t>(level));
}

std::vector<int> SubdomainDecomposition::tets_of(int sub, int level) const {
  std::vector<int> out;
  const auto& s = tet_subdomains(level);
  for (int t = 0; t < static_cast<int>(s.size()); ++t)
    if (s[static_cast<size_t>(t)] == sub) out.push_back(t);
  return out;
}

bool SubdomainDecomposition::closure_adjacent(int k, int l, int level) const {
  const MeshLevel& m = (*hierarchy_)[level];
  const auto& s = tet_subdomains(level);
  std::vector<char> mark(static_cast<size_t>(m.num_vertices()), 0);
  for (int t = 0; t < m.num_tets(); ++t)
    if (s[static_cast<size_t>(t)] == k)
      for (int v : m.tets[static_cast<size_t>(t)]) mark[static_cast<size_t>(v)] = 1;
  for (int t = 0; t < m.num_tets(); ++t)
    if (s[static_cast<size_t>(t)] == l)
      for (int v : m.tets[static_cast<size_t>(t)])
        if (mark[static_cast<size_t>(v)]) return true;
  return false;
}

bool SubdomainDecomposition::face_adjacent(int k, int l, int level) const {
  const MeshLevel& m = (*hierarchy_)[level];
  const auto& s = tet_subdomains(level);
  std::map<FaceKey, int> first_side;
  for (int t = 0; t < m.num_tets(); ++t) {
    const int st = s[static_cast<size_t>(t)];
    if (st != k && st != l) continue;
    for (int f = 0; f < 4; ++f) {
      const FaceKey key = face_key(m.tets[static_cast<size_t>(t)], f);
      auto [it, fresh] = first_side.try_emplace(key, st);
      if (!fresh && it->second != st) return true;
    }
  }
  return false;
}

SubdomainDecomposition perturb_subdomain_boundary(const SubdomainDecomposition& dec, int level,
                                                  std::uint64_t seed, int amplitude) {
  if (amplitude < 0) throw ConfigError("perturbation amplitude must be >= 0");
  SubdomainDecomposition out = dec;
  if (amplitude == 0) return out;

  const MeshHierarchy& hier = dec.hierarchy();
  const MeshLevel& mesh = hier[level];
  const double h = mesh.mesh_size;
  std::vector<int> sub = dec.tet_subdomains(level);

  std::vector<std::array<int, 4>> nbr;
  face_neighbors_per_tet(mesh, nbr);

  // Element-layer distance from the original interfaces.
  std::vector<int> layer(static_cast<size_t>(mesh.num_tets()), std::numeric_limits<int>::max());
  std::queue<int> bfs;
  for (int t = 0; t < mesh.num_tets(); ++t)
    for (int n : nbr[static_cast<size_t>(t)])
      if (n >= 0 && sub[static_cast<size_t>(n)] != sub[static_cast<size_t>(t)]) {
        layer[static_cast<size_t>(t)] = 1;
        bfs.push(t);
        break;
      }
  while (!bfs.empty()) {
    const int t = bfs.front();
    bfs.pop();
    for (int n : nbr[static_cast<size_t>(t)])
      if (n >= 0 && layer[static_cast<size_t>(n)] > layer[static_cast<size_t>(t)] + 1) {
        layer[static_cast<size_t>(n)] = layer[static_cast<size_t>(t)] + 1;
        bfs.push(n);
      }
  }

  // Original interface planes per subdomain pair; moved tets must stay within
  // amplitude * h of one of them, which bounds delta_E / delta_F by construction.
  std::map<std::pair<int, int>, std::vector<Plane>> pair_planes;
  {
    std::map<std::pair<int, int>, std::set<std::array<long long, 4>>> seen;
    for (const LabeledFace& lf : boundary_faces(mesh, sub)) {
      if (lf.sub_b < 0) continue;
      const Plane pl = triangle_plane(mesh.vertices[static_cast<size_t>(lf.tri[0])],
                                      mesh.vertices[static_cast<size_t>(lf.tri[1])],
                                      mesh.vertices[static_cast<size_t>(lf.tri[2])]);
      const auto key = std::make_pair(lf.sub_a, lf.sub_b);
      if (seen[key].insert(plane_key(pl)).second) pair_planes[key].push_back(pl);
    }
  }

  std::vector<std::vector<int>> members(static_cast<size_t>(dec.num_subdomains()));
  for (int t = 0; t < mesh.num_tets(); ++t) members[static_cast<size_t>(sub[static_cast<size_t>(t)])].push_back(t);

  std::mt19937_64 rng(seed);
  const double guard = amplitude * h + 1e-12;
  bool moved_any = false;

  for (int round = 0; round < amplitude; ++round) {
    for (int t = 0; t < mesh.num_tets(); ++t) {
      if (layer[static_cast<size_t>(t)] > amplitude) continue;
      const int k = sub[static_cast<size_t>(t)];
      int target = -1;
      int best_neighbor = std::numeric_limits<int>::max();
      for (int n : nbr[static_cast<size_t>(t)])
        if (n >= 0 && sub[static_cast<size_t>(n)] != k && n < best_neighbor) {
          best_neighbor = n;
          target = sub[static_cast<size_t>(n)];
        }
      if (target < 0) continue;

      const bool flip = (rng() & 1ull) != 0;
      if (!flip) continue;

      const auto planes_it = pair_planes.find({std::min(k, target), std::max(k, target)});
      if (planes_it == pair_planes.end()) continue;
      bool within = true;
      for (int v : mesh.tets[static_cast<size_t>(t)]) {
        const Vec3& p = mesh.vertices[static_cast<size_t>(v)];
        double dmin = std::numeric_limits<double>::infinity();
        for (const Plane& pl : planes_it->second) dmin = std::min(dmin, pl.distance(p));
        if (dmin > guard) {
          within = false;
          break;
        }
      }
      if (!within) continue;

      auto& donor = members[static_cast<size_t>(k)];
      if (donor.size() <= 1) continue;
      std::vector<int> donor_rest;
      donor_rest.reserve(donor.size() - 1);
      for (int m : donor)
        if (m != t) donor_rest.push_back(m);
      sub[static_cast<size_t>(t)] = target;
      if (!subdomain_connected(donor_rest, nbr, sub, k)) {
        sub[static_cast<size_t>(t)] = k; // undo: move would disconnect the donor
        continue;
      }
      donor = std::move(donor_rest);
      members[static_cast<size_t>(target)].insert(
          std::lower_bound(members[static_cast<size_t>(target)].begin(), members[static_cast<size_t>(target)].end(), t), t);
      moved_any = true;
    }
  }

  for (int s = 0; s < dec.num_subdomains(); ++s)
    if (!subdomain_connected(members[static_cast<size_t>(s)], nbr, sub, s))
      throw ConfigError("perturbation rejected: subdomain " + std::to_string(s) + " would become disconnected");

  out.sub_of_tet_[static_cast<size_t>(level)] = sub;
  for (int lev = level + 1; lev < hier.size(); ++lev) {
    const MeshLevel& m = hier[lev];
    std::vector<int>& s = out.sub_of_tet_[static_cast<size_t>(lev)];
    s.resize(static_cast<size_t>(m.num_tets()));
    for (int t = 0; t < m.num_tets(); ++t)
      s[static_cast<size_t>(t)] =
          out.sub_of_tet_[static_cast<size_t>(lev - 1)][static_cast<size_t>(m.parent_tet[static_cast<size_t>(t)])];
  }
  out.perturbed_ = moved_any;
  return out;
}

SurfaceTopology analyze_surface(const SubdomainDecomposition& dec, int level) {
  const MeshHierarchy& hier = dec.hierarchy();
  const MeshLevel& mesh = hier[level];
  const std::vector<int>& sub = dec.tet_subdomains(level);

  SurfaceTopology topo;
  topo.level = level;
  const int nsub = dec.num_subdomains();

  const std::vector<LabeledFace> faces = boundary_faces(mesh, sub);

  // Reference planes of the unperturbed base, per label; a perturbed piece is
  // matched to the nearest base plane of its label.
  std::map<std::pair<int, int>, std::vector<Plane>> base_planes;
  if (dec.is_perturbed()) {
    std::map<std::pair<int, int>, std::set<std::array<long long, 4>>> seen;
    for (const LabeledFace& lf : boundary_faces(mesh, dec.base_tet_subdomains(level))) {
      const Plane pl = triangle_plane(mesh.vertices[static_cast<size_t>(lf.tri[0])],
                                      mesh.vertices[static_cast<size_t>(lf.tri[1])],
                                      mesh.vertices[static_cast<size_t>(lf.tri[2])]);
      const auto key = std::make_pair(lf.sub_a, lf.sub_b);
      if (seen[key].insert(plane_key(pl)).second) base_planes[key].push_back(pl);
    }
  }

  // Group triangles by label, then by reference plane, then into connected
  // components; every group becomes a face piece.
  std::map<std::pair<int, int>, std::vector<size_t>> by_label;
  for (size_t i = 0; i < faces.size(); ++i) by_label[{faces[i].sub_a, faces[i].sub_b}].push_back(i);

  for (const auto& [label, tri_ids] : by_label) {
    // Plane assignment: base planes when available, else each triangle's own plane.
    std::vector<int> plane_of(tri_ids.size());
    std::vector<Plane> planes;
    const auto base_it = base_planes.find(label);
    if (base_it != base_planes.end() && !base_it->second.empty()) {
      planes = base_it->second;
      for (size_t i = 0; i < tri_ids.size(); ++i) {
        const FaceKey& tri = faces[tri_ids[i]].tri;
        const Vec3 c = (mesh.vertices[static_cast<size_t>(tri[0])] + mesh.vertices[static_cast<size_t>(tri[1])] +
                        mesh.vertices[static_cast<size_t>(tri[2])]) *
                       (1.0 / 3.0);
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (size_t p = 0; p < planes.size(); ++p) {
          const double d = planes[p].distance(c);
          if (d < best_d - 1e-15) {
            best_d = d;
            best = static_cast<int>(p);
          }
        }
        plane_of[i] = best;
      }
    } else {
      std::map<std::array<long long, 4>, int> plane_ids;
      for (size_t i = 0; i < tri_ids.size(); ++i) {
        const FaceKey& tri = faces[tri_ids[i]].tri;
        const Plane pl = triangle_plane(mesh.vertices[static_cast<size_t>(tri[0])],
                                        mesh.vertices[static_cast<size_t>(tri[1])],
                                        mesh.vertices[static_cast<size_t>(tri[2])]);
        auto [it, fresh] = plane_ids.try_emplace(plane_key(pl), static_cast<int>(planes.size()));
        if (fresh) planes.push_back(pl);
        plane_of[i] = it->second;
      }
    }

    // Connected components among triangles sharing an edge within a plane group.
    DisjointSet ds(static_cast<int>(tri_ids.size()));
    std::map<EdgeKey, int> edge_first;
    for (size_t i = 0; i < tri_ids.size(); ++i) {
      const FaceKey& tri = faces[tri_ids[i]].tri;
      const EdgeKey edges[3] = {edge_key(tri[0], tri[1]), edge_key(tri[0], tri[2]), edge_key(tri[1], tri[2])};
      for (const EdgeKey& e : edges) {
        auto [it, fresh] = edge_first.try_emplace(e, static_cast<int>(i));
        if (!fresh && plane_of[static_cast<size_t>(it->second)] == plane_of[i]) ds.unite(it->second, static_cast<int>(i));
      }
    }
    std::map<std::pair<int, int>, std::vector<size_t>> comps; // (plane, root) -> triangles
    for (size_t i = 0; i < tri_ids.size(); ++i) comps[{plane_of[i], ds.find(static_cast<int>(i))}].push_back(tri_ids[i]);

    for (const auto& [tag, comp_tris] : comps) {
      FacePiece piece;
      piece.id = static_cast<int>(topo.pieces.size());
      piece.sub_a = label.first;
      piece.sub_b = label.second;
      const Plane& pl = planes[static_cast<size_t>(tag.first)];
      piece.plane_normal = pl.normal;
      piece.plane_offset = pl.offset;
      std::set<int> nodes;
      for (size_t ti : comp_tris) {
        piece.tris.push_back(faces[ti].tri);
        for (int v : faces[ti].tri) nodes.insert(v);
      }
      piece.nodes.assign(nodes.begin(), nodes.end());
      std::vector<Vec3> pts;
      pts.reserve(piece.nodes.size());
      for (int v : piece.nodes) pts.push_back(mesh.vertices[static_cast<size_t>(v)]);
      piece.delta_f = flatness(pts, &pl);
      topo.pieces.push_back(std::move(piece));
    }
  }

  topo.pieces_of_sub.assign(static_cast<size_t>(nsub), {});
  for (const FacePiece& p : topo.pieces) {
    topo.pieces_of_sub[static_cast<size_t>(p.sub_a)].push_back(p.id);
    if (p.sub_b >= 0) topo.pieces_of_sub[static_cast<size_t>(p.sub_b)].push_back(p.id);
  }

  // Edge chains: crease edges grouped by their full incident-piece set.
  std::map<EdgeKey, std::vector<int>> pieces_at_edge;
  for (const FacePiece& p : topo.pieces)
    for (const FaceKey& tri : p.tris) {
      const EdgeKey edges[3] = {edge_key(tri[0], tri[1]), edge_key(tri[0], tri[2]), edge_key(tri[1], tri[2])};
      for (const EdgeKey& e : edges) {
        auto& list = pieces_at_edge[e];
        if (list.empty() || list.back() != p.id) list.push_back(p.id);
      }
    }

  auto crease_subs = [&](const std::vector<int>& piece_ids) {
    std::vector<int> counts(static_cast<size_t>(nsub), 0);
    for (int pid : piece_ids) {
      const FacePiece& p = topo.pieces[static_cast<size_t>(pid)];
      counts[static_cast<size_t>(p.sub_a)]++;
      if (p.sub_b >= 0) counts[static_cast<size_t>(p.sub_b)]++;
    }
    std::vector<int> subs;
    for (int s = 0; s < nsub; ++s)
      if (counts[static_cast<size_t>(s)] >= 2) subs.push_back(s);
    return subs;
  };

  std::vector<EdgeKey> crease_edges;
  std::vector<std::vector<int>> crease_incident;
  for (const auto& [e, piece_ids] : pieces_at_edge)
    if (!crease_subs(piece_ids).empty()) {
      crease_edges.push_back(e);
      crease_incident.push_back(piece_ids);
    }

  {
    DisjointSet ds(static_cast<int>(crease_edges.size()));
    std::map<int, std::vector<int>> edges_at_node;
    for (size_t i = 0; i < crease_edges.size(); ++i) {
      edges_at_node[crease_edges[i][0]].push_back(static_cast<int>(i));
      edges_at_node[crease_edges[i][1]].push_back(static_cast<int>(i));
    }
    for (const auto& [node, ids] : edges_at_node)
      for (size_t a = 0; a + 1 < ids.size(); ++a)
        for (size_t b = a + 1; b < ids.size(); ++b)
          if (crease_incident[static_cast<size_t>(ids[a])] == crease_incident[static_cast<size_t>(ids[b])])
            ds.unite(ids[a], ids[b]);

    std::map<int, std::vector<int>> groups;
    for (size_t i = 0; i < crease_edges.size(); ++i) groups[ds.find(static_cast<int>(i))].push_back(static_cast<int>(i));

    for (const auto& [root, ids] : groups) {
      EdgeChain chain;
      chain.id = static_cast<int>(topo.chains.size());
      chain.incident_pieces = crease_incident[static_cast<size_t>(ids.front())];
      std::set<int> nodes;
      std::map<int, int> degree;
      for (int i : ids) {
        chain.edges.push_back(crease_edges[static_cast<size_t>(i)]);
        for (int v : crease_edges[static_cast<size_t>(i)]) {
          nodes.insert(v);
          degree[v]++;
        }
      }
      chain.nodes.assign(nodes.begin(), nodes.end());
      std::vector<int> ends;
      for (const auto& [v, d] : degree)
        if (d == 1) ends.push_back(v);
      if (ends.size() >= 2) {
        chain.endpoints = {ends.front(), ends.back()};
      } else {
        // Closed loop: deterministic fallback, smallest node and the farthest one.
        const int a = chain.nodes.front();
        int b = a;
        double best = -1.0;
        for (int v : chain.nodes) {
          const double d = norm(mesh.vertices[static_cast<size_t>(v)] - mesh.vertices[static_cast<size_t>(a)]);
          if (d > best) {
            best = d;
            b = v;
          }
        }
        chain.endpoints = {a, b};
      }
      double worst = 0.0;
      for (int v : chain.nodes)
        worst = std::max(worst, point_line_distance(mesh.vertices[static_cast<size_t>(v)],
                                                    mesh.vertices[static_cast<size_t>(chain.endpoints[0])],
                                                    mesh.vertices[static_cast<size_t>(chain.endpoints[1])]));
      chain.delta_e = worst;
      topo.chains.push_back(std::move(chain));
    }
  }

  topo.chains_of_sub.assign(static_cast<size_t>(nsub), {});
  for (const EdgeChain& c : topo.chains)
    for (int s : crease_subs(c.incident_pieces)) topo.chains_of_sub[static_cast<size_t>(s)].push_back(c.id);

  // Corner vertices: nodes where at least three pieces of one subdomain meet.
  {
    std::map<int, std::map<int, std::set<int>>> pieces_at_node_per_sub; // node -> sub -> pieces
    for (const FacePiece& p : topo.pieces)
      for (int v : p.nodes) {
        pieces_at_node_per_sub[v][p.sub_a].insert(p.id);
        if (p.sub_b >= 0) pieces_at_node_per_sub[v][p.sub_b].insert(p.id);
      }
    topo.vertices_of_sub.assign(static_cast<size_t>(nsub), {});
    for (const auto& [node, per_sub] : pieces_at_node_per_sub) {
      VertexFeature vf;
      vf.node = node;
      for (const auto& [s, pieceset] : per_sub)
        if (pieceset.size() >= 3) vf.subdomains.push_back(s);
      if (!vf.subdomains.empty()) {
        for (int s : vf.subdomains) topo.vertices_of_sub[static_cast<size_t>(s)].push_back(node);
        topo.vertices.push_back(std::move(vf));
      }
    }
  }

  // Pairwise interface geometry.
  {
    std::vector<std::set<EdgeKey>> sub_edges(static_cast<size_t>(nsub));
    std::vector<std::set<int>> sub_nodes(static_cast<size_t>(nsub));
    for (const FacePiece& p : topo.pieces) {
      const int owners[2] = {p.sub_a, p.sub_b};
      for (int o : owners) {
        if (o < 0) continue;
        for (const FaceKey& tri : p.tris) {
          sub_edges[static_cast<size_t>(o)].insert(edge_key(tri[0], tri[1]));
          sub_edges[static_cast<size_t>(o)].insert(edge_key(tri[0], tri[2]));
          sub_edges[static_cast<size_t>(o)].insert(edge_key(tri[1], tri[2]));
        }
        for (int v : p.nodes) sub_nodes[static_cast<size_t>(o)].insert(v);
      }
    }

    std::set<std::pair<int, int>> pairs;
    for (int k = 0; k < nsub; ++k)
      for (int l = k + 1; l < nsub; ++l) {
        std::vector<int> common;
        std::set_intersection(sub_nodes[static_cast<size_t>(k)].begin(), sub_nodes[static_cast<size_t>(k)].end(),
                              sub_nodes[static_cast<size_t>(l)].begin(), sub_nodes[static_cast<size_t>(l)].end(),
                              std::back_inserter(common));
        if (!common.empty()) pairs.insert({k, l});
      }

    for (const auto& pr : pairs) {
      InterfaceGeometry geo;
      std::set<EdgeKey> face_edges;
      std::set<int> face_nodes;
      for (const FacePiece& p : topo.pieces) {
        if (p.sub_a != pr.first || p.sub_b != pr.second) continue;
        geo.flatness_face.push_back(p.delta_f);
        for (const FaceKey& tri : p.tris) {
          geo.shared_faces.push_back(tri);
          face_edges.insert(edge_key(tri[0], tri[1]));
          face_edges.insert(edge_key(tri[0], tri[2]));
          face_edges.insert(edge_key(tri[1], tri[2]));
        }
        for (int v : p.nodes) face_nodes.insert(v);
      }

      std::vector<EdgeKey> both;
      std::set_intersection(sub_edges[static_cast<size_t>(pr.first)].begin(), sub_edges[static_cast<size_t>(pr.first)].end(),
                            sub_edges[static_cast<size_t>(pr.second)].begin(), sub_edges[static_cast<size_t>(pr.second)].end(),
                            std::back_inserter(both));
      std::set<int> edge_nodes;
      for (const EdgeKey& e : both)
        if (!face_edges.count(e)) {
          geo.shared_edges.push_back(e);
          edge_nodes.insert(e[0]);
          edge_nodes.insert(e[1]);
        }

      // Straightness per connected component of the leftover edges.
      if (!geo.shared_edges.empty()) {
        DisjointSet ds(static_cast<int>(geo.shared_edges.size()));
        std::map<int, std::vector<int>> at_node;
        for (size_t i = 0; i < geo.shared_edges.size(); ++i) {
          at_node[geo.shared_edges[i][0]].push_back(static_cast<int>(i));
          at_node[geo.shared_edges[i][1]].push_back(static_cast<int>(i));
        }
        for (const auto& [v, ids] : at_node)
          for (size_t a = 0; a + 1 < ids.size(); ++a) ds.unite(ids[a], ids[a + 1]);
        std::map<int, std::vector<int>> comps;
        for (size_t i = 0; i < geo.shared_edges.size(); ++i) comps[ds.find(static_cast<int>(i))].push_back(static_cast<int>(i));
        for (const auto& [root, ids] : comps) {
          std::set<int> nodes;
          std::map<int, int> deg;
          for (int i : ids)
            for (int v : geo.shared_edges[static_cast<size_t>(i)]) {
              nodes.insert(v);
              deg[v]++;
            }
          std::vector<int> ends;
          for (const auto& [v, d] : deg)
            if (d == 1) ends.push_back(v);
          int e0 = *nodes.begin(), e1 = *nodes.rbegin();
          if (ends.size() >= 2) {
            e0 = ends.front();
            e1 = ends.back();
          }
          double worst = 0.0;
          for (int v : nodes)
            worst = std::max(worst, point_line_distance(mesh.vertices[static_cast<size_t>(v)],
                                                        mesh.vertices[static_cast<size_t>(e0)],
                                                        mesh.vertices[static_cast<size_t>(e1)]));
          geo.straightness_edge.push_back(worst);
        }
      }

      std::vector<int> common;
      std::set_intersection(sub_nodes[static_cast<size_t>(pr.first)].begin(), sub_nodes[static_cast<size_t>(pr.first)].end(),
                            sub_nodes[static_cast<size_t>(pr.second)].begin(), sub_nodes[static_cast<size_t>(pr.second)].end(),
                            std::back_inserter(common));
      for (int v : common)
        if (!face_nodes.count(v) && !edge_nodes.count(v)) geo.shared_vertices.push_back(v);

      const bool has_f = !geo.shared_faces.empty(), has_e = !geo.shared_edges.empty(), has_v = !geo.shared_vertices.empty();
      if (has_f && !has_e && !has_v)
        geo.classification = InterfaceClass::Face;
      else if (!has_f && has_e && !has_v)
        geo.classification = InterfaceClass::Edge;
      else if (!has_f && !has_e && has_v)
        geo.classification = InterfaceClass::Vertex;
      else if (has_f || has_e || has_v)
        geo.classification = InterfaceClass::Mixed;
      else
        geo.classification = InterfaceClass::Empty;
      topo.interfaces.emplace(pr, std::move(geo));
    }
  }

  for (auto& v : topo.pieces_of_sub) std::sort(v.begin(), v.end());
  for (auto& v : topo.chains_of_sub) std::sort(v.begin(), v.end());
  for (auto& v : topo.vertices_of_sub) std::sort(v.begin(), v.end());
  return topo;
}

} // namespace wproj
