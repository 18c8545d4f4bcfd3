#include "wproj/trace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "wproj/errors.hpp"
#include "wproj/fem.hpp"

namespace wproj {

namespace {

const std::array<std::array<int, 3>, 4> kTetFaces = {{{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};

FaceKey sorted_face(int a, int b, int c) {
  FaceKey f{a, b, c};
  std::sort(f.begin(), f.end());
  return f;
}

// Embeds boundary-index values into a local-node vector.
std::vector<double> embed_boundary(const PolyhedronRegion& region, const std::vector<double>& boundary_values) {
  std::vector<double> out(static_cast<size_t>(region.num_local()), 0.0);
  for (int b = 0; b < region.num_boundary(); ++b)
    out[static_cast<size_t>(region.boundary_nodes[static_cast<size_t>(b)])] = boundary_values[static_cast<size_t>(b)];
  return out;
}

std::vector<double> boundary_part(const PolyhedronRegion& region, const std::vector<double>& local_values) {
  std::vector<double> out(static_cast<size_t>(region.num_boundary()));
  for (int b = 0; b < region.num_boundary(); ++b)
    out[static_cast<size_t>(b)] = local_values[static_cast<size_t>(region.boundary_nodes[static_cast<size_t>(b)])];
  return out;
}

// Discrete H^{1/2} form: S g = A_BB g + A_BI w + (1/diam) M g with
// A_II w = -A_IB g; equals the boundary Schur complement of the Robin matrix.
std::vector<double> apply_h_half_form(const PolyhedronRegion& region, const std::vector<double>& g,
                                      double cg_rel_tol) {
  std::vector<double> w;
  if (region.num_interior() > 0) {
    std::vector<double> rhs = region.a_ib.apply(g);
    for (double& v : rhs) v = -v;
    if (norm2(rhs) > 0.0)
      cg_solve(region.a_ii, rhs, w, {cg_rel_tol, 0});
    else
      w.assign(static_cast<size_t>(region.num_interior()), 0.0);
  }

  // Assemble full local vector and apply the Neumann stiffness, then read the
  // boundary rows; add the scaled boundary mass.
  std::vector<double> full = embed_boundary(region, g);
  for (int i = 0; i < region.num_interior(); ++i)
    full[static_cast<size_t>(region.interior_nodes[static_cast<size_t>(i)])] = w.empty() ? 0.0 : w[static_cast<size_t>(i)];
  const std::vector<double> a_full = region.stiffness_full.apply(full);
  std::vector<double> out = boundary_part(region, a_full);
  const std::vector<double> mg = region.boundary_mass.apply(g);
  for (int b = 0; b < region.num_boundary(); ++b)
    out[static_cast<size_t>(b)] += mg[static_cast<size_t>(b)] / region.diameter;
  return out;
}

// (S^{-1} r)|_E via one Robin solve: the Schur complement inverse is the
// boundary block of the full Robin inverse.
std::vector<double> solve_h_half_form(const PolyhedronRegion& region, const std::vector<double>& r,
                                      double cg_rel_tol) {
  const std::vector<double> rhs = embed_boundary(region, r);
  std::vector<double> x;
  cg_solve(region.robin, rhs, x, {cg_rel_tol, 0});
  return boundary_part(region, x);
}

} // namespace

PolyhedronRegion extract_region(const SubdomainDecomposition& dec, int level, int sub) {
  const MeshLevel& mesh = dec.hierarchy()[level];
  PolyhedronRegion r;
  r.mesh = &mesh;
  r.sub = sub;
  r.tets = dec.tets_of(sub, level);
  if (r.tets.empty()) throw ConfigError("extract_region: empty subdomain");

  std::set<int> node_set;
  for (int t : r.tets)
    for (int v : mesh.tets[static_cast<size_t>(t)]) node_set.insert(v);
  r.nodes.assign(node_set.begin(), node_set.end());
  r.global_to_local.assign(static_cast<size_t>(mesh.num_vertices()), -1);
  for (size_t i = 0; i < r.nodes.size(); ++i) r.global_to_local[static_cast<size_t>(r.nodes[i])] = static_cast<int>(i);

  // Region boundary faces: faces with exactly one adjacent tet in the region.
  std::map<FaceKey, int> face_count;
  for (int t : r.tets) {
    const Tet& k = mesh.tets[static_cast<size_t>(t)];
    for (const auto& lf : kTetFaces) face_count[sorted_face(k[lf[0]], k[lf[1]], k[lf[2]])]++;
  }
  std::set<int> boundary_set;
  for (const auto& [f, c] : face_count)
    if (c == 1) {
      r.boundary_tris.push_back(f);
      for (int v : f) boundary_set.insert(v);
    }

  r.boundary_local.assign(r.nodes.size(), -1);
  r.interior_local.assign(r.nodes.size(), -1);
  for (size_t i = 0; i < r.nodes.size(); ++i) {
    if (boundary_set.count(r.nodes[i])) {
      r.boundary_local[i] = static_cast<int>(r.boundary_nodes.size());
      r.boundary_nodes.push_back(static_cast<int>(i));
    } else {
      r.interior_local[i] = static_cast<int>(r.interior_nodes.size());
      r.interior_nodes.push_back(static_cast<int>(i));
    }
  }

  Vec3 lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
  for (int n : r.nodes) {
    const Vec3& p = mesh.vertices[static_cast<size_t>(n)];
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  r.diameter = norm(hi - lo);

  // Local unweighted stiffness and its interior/boundary blocks.
  std::vector<double> ones(r.tets.size(), 1.0);
  std::vector<int> node_to_local = r.global_to_local;
  r.stiffness_full = assemble_p1(mesh, r.tets, ones, node_to_local, r.num_local(), true);

  {
    std::vector<Triplet> tii, tib;
    const auto& rp = r.stiffness_full.row_ptr();
    const auto& ci = r.stiffness_full.col_idx();
    const auto& va = r.stiffness_full.values();
    for (int row = 0; row < r.num_local(); ++row) {
      const int ri = r.interior_local[static_cast<size_t>(row)];
      if (ri < 0) continue;
      for (int k = rp[static_cast<size_t>(row)]; k < rp[static_cast<size_t>(row) + 1]; ++k) {
        const int col = ci[static_cast<size_t>(k)];
        const int cin = r.interior_local[static_cast<size_t>(col)];
        if (cin >= 0)
          tii.push_back({ri, cin, va[static_cast<size_t>(k)]});
        else
          tib.push_back({ri, r.boundary_local[static_cast<size_t>(col)], va[static_cast<size_t>(k)]});
      }
    }
    r.a_ii = SparseMatrix::from_triplets(r.num_interior(), r.num_interior(), std::move(tii));
    r.a_ib = SparseMatrix::from_triplets(r.num_interior(), r.num_boundary(), std::move(tib));
  }

  // Surface P1 mass on the boundary triangles.
  {
    std::vector<Triplet> tm;
    for (const FaceKey& f : r.boundary_tris) {
      const double area = triangle_area(mesh.vertices[static_cast<size_t>(f[0])], mesh.vertices[static_cast<size_t>(f[1])],
                                        mesh.vertices[static_cast<size_t>(f[2])]);
      int dof[3];
      for (int i = 0; i < 3; ++i) dof[i] = r.boundary_local[static_cast<size_t>(r.global_to_local[static_cast<size_t>(f[i])])];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) tm.push_back({dof[i], dof[j], area / 12.0 * (i == j ? 2.0 : 1.0)});
    }
    r.boundary_mass = SparseMatrix::from_triplets(r.num_boundary(), r.num_boundary(), std::move(tm));
  }

  // Robin operator: stiffness + (1/diam) boundary mass embedded on local dofs.
  {
    std::vector<Triplet> tr;
    const auto& rp = r.boundary_mass.row_ptr();
    const auto& ci = r.boundary_mass.col_idx();
    const auto& va = r.boundary_mass.values();
    for (int row = 0; row < r.num_boundary(); ++row)
      for (int k = rp[static_cast<size_t>(row)]; k < rp[static_cast<size_t>(row) + 1]; ++k)
        tr.push_back({r.boundary_nodes[static_cast<size_t>(row)],
                      r.boundary_nodes[static_cast<size_t>(ci[static_cast<size_t>(k)])],
                      va[static_cast<size_t>(k)] / r.diameter});
    const SparseMatrix mass_embedded = SparseMatrix::from_triplets(r.num_local(), r.num_local(), std::move(tr));
    r.robin = r.stiffness_full.add(mass_embedded);
  }
  return r;
}

std::vector<double> discrete_harmonic_extension(const PolyhedronRegion& region, const TraceFunction& g,
                                                double cg_rel_tol) {
  std::vector<double> full = embed_boundary(region, g.values);
  if (region.num_interior() > 0) {
    std::vector<double> rhs = region.a_ib.apply(g.values);
    for (double& v : rhs) v = -v;
    if (norm2(rhs) > 0.0) {
      std::vector<double> w;
      cg_solve(region.a_ii, rhs, w, {cg_rel_tol, 0});
      for (int i = 0; i < region.num_interior(); ++i)
        full[static_cast<size_t>(region.interior_nodes[static_cast<size_t>(i)])] = w[static_cast<size_t>(i)];
    }
  }
  return full;
}

double extension_energy(const PolyhedronRegion& region, const std::vector<double>& local_values) {
  return dot(local_values, region.stiffness_full.apply(local_values));
}

double h_half_norm(const PolyhedronRegion& region, const TraceFunction& g, double cg_rel_tol) {
  const std::vector<double> ext = discrete_harmonic_extension(region, g, cg_rel_tol);
  const double energy = extension_energy(region, ext);
  const double l2sq = dot(g.values, region.boundary_mass.apply(g.values));
  return std::sqrt(std::max(0.0, energy + l2sq / region.diameter));
}

std::vector<int> face_interior_boundary_nodes(const PolyhedronRegion& region, const FacePiece& piece) {
  std::set<FaceKey> piece_tris(piece.tris.begin(), piece.tris.end());
  std::map<int, std::pair<int, int>> counts; // global node -> (piece tris, all boundary tris)
  for (const FaceKey& f : region.boundary_tris) {
    const bool in_piece = piece_tris.count(f) > 0;
    for (int v : f) {
      auto& c = counts[v];
      if (in_piece) c.first++;
      c.second++;
    }
  }
  std::vector<int> out;
  for (const auto& [node, c] : counts)
    if (c.first > 0 && c.first == c.second)
      out.push_back(region.boundary_local[static_cast<size_t>(region.global_to_local[static_cast<size_t>(node)])]);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> edge_boundary_nodes(const PolyhedronRegion& region, const EdgeChain& chain) {
  std::vector<int> out;
  for (int node : chain.nodes) {
    const int local = region.global_to_local[static_cast<size_t>(node)];
    if (local < 0) throw ConfigError("edge chain node off the region");
    const int b = region.boundary_local[static_cast<size_t>(local)];
    if (b < 0) throw ConfigError("edge chain node not on the region boundary");
    out.push_back(b);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> whole_boundary_nodes(const PolyhedronRegion& region) {
  std::vector<int> out(static_cast<size_t>(region.num_boundary()));
  for (int b = 0; b < region.num_boundary(); ++b) out[static_cast<size_t>(b)] = b;
  return out;
}

TraceFunction restrict_to(const TraceFunction& g, const std::vector<int>& subset_boundary_nodes) {
  TraceFunction out;
  out.sub = g.sub;
  out.values.assign(g.values.size(), 0.0);
  for (int b : subset_boundary_nodes) out.values[static_cast<size_t>(b)] = g.values[static_cast<size_t>(b)];
  return out;
}

CentroidSlicing centroid_slicing(const PolyhedronRegion& region, const FacePiece& piece, const TraceFunction& v,
                                 double cg_rel_tol) {
  const MeshLevel& mesh = *region.mesh;
  const double h = mesh.mesh_size;

  // Elements with at least one face on F.
  std::set<FaceKey> piece_tris(piece.tris.begin(), piece.tris.end());
  std::vector<int> elems;
  for (int t : region.tets) {
    const Tet& k = mesh.tets[static_cast<size_t>(t)];
    for (const auto& lf : kTetFaces)
      if (piece_tris.count(sorted_face(k[lf[0]], k[lf[1]], k[lf[2]]))) {
        elems.push_back(t);
        break;
      }
  }
  if (elems.empty()) throw ConfigError("centroid_slicing: face has no adjacent elements in the region");

  // Projection axis: the longest extent of F, ties broken in x,y,z order. A
  // degenerate (near-zero extent) axis can never win, which realizes the
  // automatic alternate-axis fallback.
  CentroidSlicing out;
  out.slab_width = h;
  {
    double best = -1.0;
    for (int a = 0; a < 3; ++a) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int node : piece.nodes) {
        const double c = mesh.vertices[static_cast<size_t>(node)][a];
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
      if (hi - lo > best + 1e-15) {
        best = hi - lo;
        out.axis = a;
      }
    }
  }

  double smin = std::numeric_limits<double>::infinity();
  std::vector<double> proj(elems.size());
  for (size_t i = 0; i < elems.size(); ++i) {
    proj[i] = mesh.tet_centroid(elems[i])[out.axis];
    smin = std::min(smin, proj[i]);
  }
  int nslabs = 0;
  std::vector<int> slab_of(elems.size());
  for (size_t i = 0; i < elems.size(); ++i) {
    const int s = static_cast<int>(std::floor((proj[i] - smin) / h + 1e-12));
    slab_of[i] = s;
    nslabs = std::max(nslabs, s + 1);
  }
  out.slices.assign(static_cast<size_t>(nslabs), {});
  for (size_t i = 0; i < elems.size(); ++i) out.slices[static_cast<size_t>(slab_of[i])].push_back(elems[i]);

  // Harmonic extension for the derivative picks.
  const std::vector<double> ext = discrete_harmonic_extension(region, v, cg_rel_tol);

  std::set<int> face_nodes(piece.nodes.begin(), piece.nodes.end());
  out.picked_nodes.assign(static_cast<size_t>(nslabs), -1);
  out.picked_tets.assign(static_cast<size_t>(nslabs), {-1, -1, -1});
  for (int s = 0; s < nslabs; ++s) {
    double best_val = -1.0;
    for (int t : out.slices[static_cast<size_t>(s)]) {
      for (int node : mesh.tets[static_cast<size_t>(t)]) {
        if (!face_nodes.count(node)) continue;
        const int b = region.boundary_local[static_cast<size_t>(region.global_to_local[static_cast<size_t>(node)])];
        if (b < 0) continue;
        const double val = v.values[static_cast<size_t>(b)] * v.values[static_cast<size_t>(b)];
        if (val > best_val) {
          best_val = val;
          out.picked_nodes[static_cast<size_t>(s)] = b;
        }
      }
    }
    for (int j = 0; j < 3; ++j) {
      double best_grad = -1.0;
      for (int t : out.slices[static_cast<size_t>(s)]) {
        // Constant per-element gradient of the extension.
        const Tet& k = mesh.tets[static_cast<size_t>(t)];
        const Vec3& p0 = mesh.vertices[static_cast<size_t>(k[0])];
        const Vec3 e1 = mesh.vertices[static_cast<size_t>(k[1])] - p0;
        const Vec3 e2 = mesh.vertices[static_cast<size_t>(k[2])] - p0;
        const Vec3 e3 = mesh.vertices[static_cast<size_t>(k[3])] - p0;
        const double det = dot(e1, cross(e2, e3));
        const Vec3 g1 = cross(e2, e3) * (1.0 / det);
        const Vec3 g2 = cross(e3, e1) * (1.0 / det);
        const Vec3 g3 = cross(e1, e2) * (1.0 / det);
        const Vec3 g0 = (g1 + g2 + g3) * -1.0;
        Vec3 grad{0, 0, 0};
        const Vec3 gs[4] = {g0, g1, g2, g3};
        for (int a = 0; a < 4; ++a)
          grad = grad + gs[a] * ext[static_cast<size_t>(region.global_to_local[static_cast<size_t>(k[a])])];
        const double val = grad[j] * grad[j];
        if (val > best_grad) {
          best_grad = val;
          out.picked_tets[static_cast<size_t>(s)][static_cast<size_t>(j)] = t;
        }
      }
    }
  }
  return out;
}

namespace {

// 1D P1 mass matrix of the chain on the edge-node subspace.
SparseMatrix chain_mass(const PolyhedronRegion& region, const std::vector<int>& edge_nodes,
                        const std::vector<EdgeKey>& edges) {
  std::map<int, int> index_of; // boundary index -> edge-subspace index
  for (size_t i = 0; i < edge_nodes.size(); ++i) index_of[edge_nodes[i]] = static_cast<int>(i);
  std::vector<Triplet> t;
  for (const EdgeKey& e : edges) {
    const double len = norm(region.mesh->vertices[static_cast<size_t>(e[0])] - region.mesh->vertices[static_cast<size_t>(e[1])]);
    int dof[2];
    for (int i = 0; i < 2; ++i) {
      const int b = region.boundary_local[static_cast<size_t>(region.global_to_local[static_cast<size_t>(e[i])])];
      dof[i] = index_of.at(b);
    }
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) t.push_back({dof[i], dof[j], len / 6.0 * (i == j ? 2.0 : 1.0)});
  }
  return SparseMatrix::from_triplets(static_cast<int>(edge_nodes.size()), static_cast<int>(edge_nodes.size()),
                                     std::move(t));
}

std::vector<double> scatter(const std::vector<int>& nodes, const std::vector<double>& x, int size) {
  std::vector<double> out(static_cast<size_t>(size), 0.0);
  for (size_t i = 0; i < nodes.size(); ++i) out[static_cast<size_t>(nodes[i])] = x[i];
  return out;
}

std::vector<double> gather(const std::vector<int>& nodes, const std::vector<double>& x) {
  std::vector<double> out(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) out[i] = x[static_cast<size_t>(nodes[i])];
  return out;
}

constexpr double kInnerCgTol = 1e-11;
constexpr int kPowerCap = 600;

} // namespace

namespace {

// Dense Cholesky of the small chain mass for the symmetrized trace pencil.
struct SmallCholesky {
  int n = 0;
  std::vector<double> l; // lower triangle, row-major

  explicit SmallCholesky(const SparseMatrix& m) : n(m.rows()), l(static_cast<size_t>(n) * n, 0.0) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) {
        double s = m.coeff(i, j);
        for (int k = 0; k < j; ++k) s -= at(i, k) * at(j, k);
        if (i == j) {
          if (s <= 0.0) throw SolverError("chain mass not positive definite", s);
          at(i, i) = std::sqrt(s);
        } else {
          at(i, j) = s / at(j, j);
        }
      }
  }
  double& at(int i, int j) { return l[static_cast<size_t>(i) * n + j]; }
  double at(int i, int j) const { return l[static_cast<size_t>(i) * n + j]; }

  std::vector<double> apply_l(const std::vector<double>& x) const {
    std::vector<double> y(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) y[static_cast<size_t>(i)] += at(i, j) * x[static_cast<size_t>(j)];
    return y;
  }
  std::vector<double> apply_lt(const std::vector<double>& x) const {
    std::vector<double> y(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) y[static_cast<size_t>(j)] += at(i, j) * x[static_cast<size_t>(i)];
    return y;
  }
};

} // namespace

double edge_restriction_ratio(const PolyhedronRegion& region, const std::vector<int>& edge_nodes,
                              const std::vector<EdgeKey>& edges, double eig_rel_tol) {
  const int ne = static_cast<int>(edge_nodes.size());
  const SparseMatrix me = chain_mass(region, edge_nodes, edges);

  const FormApply apply_N = [&](const std::vector<double>& x) {
    const std::vector<double> g = scatter(edge_nodes, x, region.num_boundary());
    return gather(edge_nodes, apply_h_half_form(region, g, kInnerCgTol));
  };
  const FormApply apply_M = [&](const std::vector<double>& x) { return me.apply(x); };
  const FormSolve solve_M = [&](const std::vector<double>& x) {
    std::vector<double> y;
    cg_solve(me, x, y, {kInnerCgTol, 0});
    return y;
  };

  return std::sqrt(
      std::max(0.0, pencil_max_eigenvalue(ne, apply_N, apply_M, solve_M, deterministic_start(ne), eig_rel_tol, kPowerCap)));
}

double edge_trace_ratio(const PolyhedronRegion& region, const std::vector<int>& edge_nodes,
                        const std::vector<EdgeKey>& edges, double eig_rel_tol) {
  const int ne = static_cast<int>(edge_nodes.size());
  const SparseMatrix me = chain_mass(region, edge_nodes, edges);

  // The sup of ||u||^2_{L2(E)} / ||u||^2_{H^{1/2}} over all traces reduces on
  // the edge subspace to the pencil M_E x = lambda q* x, where q* is the
  // Schur complement of the H^{1/2} form onto the edge nodes (the minimizing
  // off-edge completion is built in) and (q*)^{-1} is the edge block of the
  // full Robin inverse. With M_E = L L^T, the symmetric operator
  // K = L^T (q*)^{-1} L has the same spectrum, at one Robin solve per apply.
  const SmallCholesky chol(me);
  const FormApply apply_K = [&](const std::vector<double>& x) {
    const std::vector<double> lx = chol.apply_l(x);
    const std::vector<double> qinv =
        gather(edge_nodes, solve_h_half_form(region, scatter(edge_nodes, lx, region.num_boundary()), kInnerCgTol));
    return chol.apply_lt(qinv);
  };
  return std::sqrt(std::max(0.0, symmetric_max_eigenvalue(ne, apply_K, deterministic_start(ne), eig_rel_tol, kPowerCap)));
}

double face_restriction_ratio(const PolyhedronRegion& region, const std::vector<int>& face_nodes,
                              double eig_rel_tol) {
  const int nb = region.num_boundary();
  const FormApply apply_N = [&](const std::vector<double>& u) {
    std::vector<double> restricted(static_cast<size_t>(nb), 0.0);
    for (int b : face_nodes) restricted[static_cast<size_t>(b)] = u[static_cast<size_t>(b)];
    std::vector<double> su = apply_h_half_form(region, restricted, kInnerCgTol);
    std::vector<double> out(static_cast<size_t>(nb), 0.0);
    for (int b : face_nodes) out[static_cast<size_t>(b)] = su[static_cast<size_t>(b)];
    return out;
  };
  const FormApply apply_A = [&](const std::vector<double>& u) { return apply_h_half_form(region, u, kInnerCgTol); };
  const FormSolve solve_A = [&](const std::vector<double>& r) { return solve_h_half_form(region, r, kInnerCgTol); };

  return std::sqrt(
      std::max(0.0, pencil_max_eigenvalue(nb, apply_N, apply_A, solve_A, deterministic_start(nb), eig_rel_tol, kPowerCap)));
}

SlicingSample slicing_quantities(const PolyhedronRegion& region, const FacePiece& piece, const TraceFunction& v) {
  const CentroidSlicing slicing = centroid_slicing(region, piece, v);
  const MeshLevel& mesh = *region.mesh;
  const double h = mesh.mesh_size;

  SlicingSample s;
  for (int b : slicing.picked_nodes)
    if (b >= 0) s.node_sum += h * v.values[static_cast<size_t>(b)] * v.values[static_cast<size_t>(b)];

  const std::vector<double> ext = discrete_harmonic_extension(region, v);
  double per_direction[3] = {0.0, 0.0, 0.0};
  for (const auto& picks : slicing.picked_tets)
    for (int j = 0; j < 3; ++j) {
      const int t = picks[static_cast<size_t>(j)];
      if (t < 0) continue;
      const Tet& k = mesh.tets[static_cast<size_t>(t)];
      const Vec3& p0 = mesh.vertices[static_cast<size_t>(k[0])];
      const Vec3 e1 = mesh.vertices[static_cast<size_t>(k[1])] - p0;
      const Vec3 e2 = mesh.vertices[static_cast<size_t>(k[2])] - p0;
      const Vec3 e3 = mesh.vertices[static_cast<size_t>(k[3])] - p0;
      const double det = dot(e1, cross(e2, e3));
      const Vec3 g1 = cross(e2, e3) * (1.0 / det);
      const Vec3 g2 = cross(e3, e1) * (1.0 / det);
      const Vec3 g3 = cross(e1, e2) * (1.0 / det);
      const Vec3 g0 = (g1 + g2 + g3) * -1.0;
      Vec3 grad{0, 0, 0};
      const Vec3 gs[4] = {g0, g1, g2, g3};
      for (int a = 0; a < 4; ++a)
        grad = grad + gs[a] * ext[static_cast<size_t>(region.global_to_local[static_cast<size_t>(k[a])])];
      per_direction[j] += grad[j] * grad[j];
    }
  s.gradient_sum = h * h * h * std::max({per_direction[0], per_direction[1], per_direction[2]});

  const double hh = h_half_norm(region, v);
  s.h_half_sq = hh * hh;
  return s;
}

} // namespace wproj
