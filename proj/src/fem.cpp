#include "wproj/fem.hpp"

#include <algorithm>
#include <cmath>

#include "wproj/errors.hpp"

namespace wproj {

namespace {

struct ElementGeometry {
  double volume = 0.0;
  Vec3 grad[4]; // barycentric basis gradients, constant on the tet
};

ElementGeometry element_geometry(const MeshLevel& mesh, int t) {
  const Tet& k = mesh.tets[static_cast<size_t>(t)];
  const Vec3& p0 = mesh.vertices[static_cast<size_t>(k[0])];
  const Vec3 e1 = mesh.vertices[static_cast<size_t>(k[1])] - p0;
  const Vec3 e2 = mesh.vertices[static_cast<size_t>(k[2])] - p0;
  const Vec3 e3 = mesh.vertices[static_cast<size_t>(k[3])] - p0;
  const double det = dot(e1, cross(e2, e3));

  ElementGeometry g;
  g.volume = det / 6.0;
  // Rows of the inverse Jacobian are the gradients of lambda_1..3.
  const Vec3 c1 = cross(e2, e3) * (1.0 / det);
  const Vec3 c2 = cross(e3, e1) * (1.0 / det);
  const Vec3 c3 = cross(e1, e2) * (1.0 / det);
  g.grad[1] = c1;
  g.grad[2] = c2;
  g.grad[3] = c3;
  g.grad[0] = (c1 + c2 + c3) * -1.0;
  return g;
}

} // namespace

FeSpace FeSpace::h10(const MeshLevel& mesh) {
  FeSpace s;
  s.mesh = &mesh;
  s.node_to_free.assign(static_cast<size_t>(mesh.num_vertices()), -1);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (!mesh.vertex_on_boundary[static_cast<size_t>(v)]) {
      s.node_to_free[static_cast<size_t>(v)] = static_cast<int>(s.free_to_node.size());
      s.free_to_node.push_back(v);
    }
  return s;
}

std::vector<double> FeSpace::to_all_nodes(const std::vector<double>& free_values) const {
  std::vector<double> all(static_cast<size_t>(mesh->num_vertices()), 0.0);
  for (size_t i = 0; i < free_to_node.size(); ++i) all[static_cast<size_t>(free_to_node[i])] = free_values[i];
  return all;
}

std::vector<double> FeSpace::from_all_nodes(const std::vector<double>& all_values) const {
  std::vector<double> out(free_to_node.size());
  for (size_t i = 0; i < free_to_node.size(); ++i) out[i] = all_values[static_cast<size_t>(free_to_node[i])];
  return out;
}

SparseMatrix assemble_p1(const MeshLevel& mesh, const std::vector<int>& tets,
                         const std::vector<double>& tet_weights, const std::vector<int>& node_to_dof,
                         int num_dofs, bool stiffness) {
  std::vector<Triplet> trip;
  trip.reserve(tets.size() * 16);
  for (size_t i = 0; i < tets.size(); ++i) {
    const int t = tets[i];
    const double w = tet_weights[i];
    const Tet& k = mesh.tets[static_cast<size_t>(t)];
    const ElementGeometry g = element_geometry(mesh, t);
    int dof[4];
    for (int a = 0; a < 4; ++a) dof[a] = node_to_dof[static_cast<size_t>(k[a])];
    for (int a = 0; a < 4; ++a) {
      if (dof[a] < 0) continue;
      for (int b = 0; b < 4; ++b) {
        if (dof[b] < 0) continue;
        // Weight applied last so scaling alpha scales entries bit-exactly.
        const double base = stiffness ? g.volume * dot(g.grad[a], g.grad[b])
                                      : g.volume / 20.0 * (a == b ? 2.0 : 1.0);
        trip.push_back({dof[a], dof[b], w * base});
      }
    }
  }
  return SparseMatrix::from_triplets(num_dofs, num_dofs, std::move(trip));
}

namespace {

SparseMatrix assemble_weighted(const MeshLevel& mesh, const FeSpace& space, const SubdomainDecomposition& dec,
                               const CoefficientField& alpha, bool stiffness) {
  const std::vector<int>& sub = dec.tet_subdomains(mesh.level_index);
  if (alpha.size() != dec.num_subdomains()) throw ConfigError("coefficient field size does not match decomposition");
  std::vector<int> tets(static_cast<size_t>(mesh.num_tets()));
  std::vector<double> w(static_cast<size_t>(mesh.num_tets()));
  for (int t = 0; t < mesh.num_tets(); ++t) {
    tets[static_cast<size_t>(t)] = t;
    w[static_cast<size_t>(t)] = alpha[sub[static_cast<size_t>(t)]];
  }
  return assemble_p1(mesh, tets, w, space.node_to_free, space.num_free(), stiffness);
}

} // namespace

SparseMatrix assemble_mass_weighted(const MeshLevel& mesh, const FeSpace& space,
                                    const SubdomainDecomposition& dec, const CoefficientField& alpha) {
  return assemble_weighted(mesh, space, dec, alpha, false);
}

SparseMatrix assemble_stiffness_weighted(const MeshLevel& mesh, const FeSpace& space,
                                         const SubdomainDecomposition& dec, const CoefficientField& alpha) {
  return assemble_weighted(mesh, space, dec, alpha, true);
}

SparseMatrix restrict_prolongation(const SparseMatrix& p_all_nodes, const FeSpace& coarse, const FeSpace& fine) {
  std::vector<Triplet> trip;
  const auto& rp = p_all_nodes.row_ptr();
  const auto& ci = p_all_nodes.col_idx();
  const auto& va = p_all_nodes.values();
  for (int r = 0; r < p_all_nodes.rows(); ++r) {
    const int fr = fine.node_to_free[static_cast<size_t>(r)];
    if (fr < 0) continue;
    for (int k = rp[static_cast<size_t>(r)]; k < rp[static_cast<size_t>(r) + 1]; ++k) {
      const int cc = coarse.node_to_free[static_cast<size_t>(ci[static_cast<size_t>(k)])];
      if (cc < 0) continue;
      trip.push_back({fr, cc, va[static_cast<size_t>(k)]});
    }
  }
  return SparseMatrix::from_triplets(fine.num_free(), coarse.num_free(), std::move(trip));
}

FEFunction interpolate(const std::function<double(const Vec3&)>& f, const FeSpace& space, bool multiply_bubble) {
  FEFunction u;
  u.level_index = space.mesh->level_index;
  u.values.resize(static_cast<size_t>(space.num_free()));
  for (int i = 0; i < space.num_free(); ++i) {
    const Vec3& p = space.mesh->vertices[static_cast<size_t>(space.free_to_node[static_cast<size_t>(i)])];
    double v = f(p);
    if (multiply_bubble) v *= 64.0 * p.x * (1.0 - p.x) * p.y * (1.0 - p.y) * p.z * (1.0 - p.z);
    u.values[static_cast<size_t>(i)] = v;
  }
  return u;
}

NormReport norms(const FEFunction& u, const FeSpace& space, const SubdomainDecomposition& dec,
                 const CoefficientField& alpha) {
  const MeshLevel& mesh = *space.mesh;
  const std::vector<int>& sub = dec.tet_subdomains(mesh.level_index);
  const int nsub = dec.num_subdomains();

  std::vector<double> l2sq(static_cast<size_t>(nsub), 0.0), h1sq(static_cast<size_t>(nsub), 0.0);
  for (int t = 0; t < mesh.num_tets(); ++t) {
    const Tet& k = mesh.tets[static_cast<size_t>(t)];
    double loc[4];
    for (int a = 0; a < 4; ++a) {
      const int fr = space.node_to_free[static_cast<size_t>(k[a])];
      loc[a] = fr >= 0 ? u.values[static_cast<size_t>(fr)] : 0.0;
    }
    const ElementGeometry g = element_geometry(mesh, t);
    const double sum = loc[0] + loc[1] + loc[2] + loc[3];
    const double sumsq = loc[0] * loc[0] + loc[1] * loc[1] + loc[2] * loc[2] + loc[3] * loc[3];
    const double mass_energy = g.volume / 20.0 * (sum * sum + sumsq);
    Vec3 grad{0, 0, 0};
    for (int a = 0; a < 4; ++a) grad = grad + g.grad[a] * loc[a];
    const double stiff_energy = g.volume * dot(grad, grad);
    const int s = sub[static_cast<size_t>(t)];
    l2sq[static_cast<size_t>(s)] += mass_energy;
    h1sq[static_cast<size_t>(s)] += stiff_energy;
  }

  NormReport rep;
  rep.sub_l2.resize(static_cast<size_t>(nsub));
  rep.sub_h1_semi.resize(static_cast<size_t>(nsub));
  rep.sub_h1_full.resize(static_cast<size_t>(nsub));
  double l2a = 0.0, h1a = 0.0;
  for (int s = 0; s < nsub; ++s) {
    rep.sub_l2[static_cast<size_t>(s)] = std::sqrt(std::max(0.0, l2sq[static_cast<size_t>(s)]));
    rep.sub_h1_semi[static_cast<size_t>(s)] = std::sqrt(std::max(0.0, h1sq[static_cast<size_t>(s)]));
    rep.sub_h1_full[static_cast<size_t>(s)] = std::sqrt(std::max(0.0, l2sq[static_cast<size_t>(s)] + h1sq[static_cast<size_t>(s)]));
    l2a += alpha[s] * l2sq[static_cast<size_t>(s)];
    h1a += alpha[s] * h1sq[static_cast<size_t>(s)];
  }
  rep.l2_alpha = std::sqrt(std::max(0.0, l2a));
  rep.h1_semi_alpha = std::sqrt(std::max(0.0, h1a));
  rep.h1_full_alpha = std::sqrt(std::max(0.0, l2a + h1a));
  return rep;
}

FEFunction weighted_l2_project(const FEFunction& u_fine, const SparseMatrix& p_free,
                               const SparseMatrix& m_fine, double rel_tol, SparseMatrix* g_out) {
  const SparseMatrix mp = m_fine.multiply(p_free);
  const SparseMatrix g = p_free.transpose().multiply(mp);
  const std::vector<double> rhs = mp.apply_transpose(u_fine.values);

  FEFunction c;
  c.level_index = u_fine.level_index; // caller rebinds to the coarse level index
  c.tag = SpaceTag::Coarse;
  cg_solve(g, rhs, c.values, {rel_tol, 0});
  if (g_out) *g_out = g;
  return c;
}

double projection_error_operator_norm(const SparseMatrix& p_free, const SparseMatrix& m_fine,
                                      const SparseMatrix& a_fine, double eig_rel_tol, double cg_rel_tol) {
  const SparseMatrix mp = m_fine.multiply(p_free);
  const SparseMatrix g = p_free.transpose().multiply(mp);
  const int n = m_fine.rows();

  // B = M (I - Q) with Q the M-orthogonal projection onto range(P); B is
  // symmetric positive semidefinite and vanishes on range(P).
  const FormApply apply_B = [&](const std::vector<double>& v) {
    std::vector<double> mv = m_fine.apply(v);
    std::vector<double> coarse;
    cg_solve(g, mp.apply_transpose(v), coarse, {cg_rel_tol, 0});
    const std::vector<double> mq = mp.apply(coarse);
    for (int i = 0; i < n; ++i) mv[static_cast<size_t>(i)] -= mq[static_cast<size_t>(i)];
    return mv;
  };
  const FormApply apply_A = [&](const std::vector<double>& v) { return a_fine.apply(v); };
  const FormSolve solve_A = [&](const std::vector<double>& v) {
    std::vector<double> x;
    cg_solve(a_fine, v, x, {cg_rel_tol, 0});
    return x;
  };

  const double lambda = pencil_max_eigenvalue(n, apply_B, apply_A, solve_A, deterministic_start(n), eig_rel_tol, 400);
  return std::sqrt(std::max(0.0, lambda));
}

} // namespace wproj
