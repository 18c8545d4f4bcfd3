#pragma once

#include <functional>
#include <vector>

#include "wproj/decomposition.hpp"
#include "wproj/mesh.hpp"
#include "wproj/sparse.hpp"

namespace wproj {

// P1 space with homogeneous Dirichlet conditions: boundary nodes eliminated.
struct FeSpace {
  const MeshLevel* mesh = nullptr;
  std::vector<int> node_to_free; // -1 for boundary nodes
  std::vector<int> free_to_node;

  static FeSpace h10(const MeshLevel& mesh);
  int num_free() const { return static_cast<int>(free_to_node.size()); }

  // Embeds a free-node vector into an all-node vector (zeros on the boundary).
  std::vector<double> to_all_nodes(const std::vector<double>& free_values) const;
  std::vector<double> from_all_nodes(const std::vector<double>& all_values) const;
};

enum class SpaceTag { Coarse, Fine };

struct FEFunction {
  int level_index = 0;
  std::vector<double> values; // indexed by free nodes
  SpaceTag tag = SpaceTag::Fine;
};

// Core P1 assembler over a tet subset with per-tet weights and an arbitrary
// node-to-dof map (-1 drops the node).
SparseMatrix assemble_p1(const MeshLevel& mesh, const std::vector<int>& tets,
                         const std::vector<double>& tet_weights, const std::vector<int>& node_to_dof,
                         int num_dofs, bool stiffness);

SparseMatrix assemble_mass_weighted(const MeshLevel& mesh, const FeSpace& space,
                                    const SubdomainDecomposition& dec, const CoefficientField& alpha);
SparseMatrix assemble_stiffness_weighted(const MeshLevel& mesh, const FeSpace& space,
                                         const SubdomainDecomposition& dec, const CoefficientField& alpha);

// Restrict an all-node prolongation to the free nodes of both levels.
SparseMatrix restrict_prolongation(const SparseMatrix& p_all_nodes, const FeSpace& coarse, const FeSpace& fine);

// Nodal interpolation at free nodes. With multiply_bubble the integrand is
// multiplied by prod_i 4 x_i (1 - x_i), which enforces a zero trace.
FEFunction interpolate(const std::function<double(const Vec3&)>& f, const FeSpace& space,
                       bool multiply_bubble = false);

struct NormReport {
  double l2_alpha = 0.0;
  double h1_semi_alpha = 0.0;
  double h1_full_alpha = 0.0;
  std::vector<double> sub_l2;      // unweighted, per subdomain
  std::vector<double> sub_h1_semi; // unweighted, per subdomain
  std::vector<double> sub_h1_full;
};

NormReport norms(const FEFunction& u, const FeSpace& space, const SubdomainDecomposition& dec,
                 const CoefficientField& alpha);

// Weighted L2 projection onto the coarse space: solves (P^T M P) c = P^T M u.
// G_out, when given, receives the coarse Gram matrix.
FEFunction weighted_l2_project(const FEFunction& u_fine, const SparseMatrix& p_free,
                               const SparseMatrix& m_fine, double rel_tol = 1e-10,
                               SparseMatrix* g_out = nullptr);

// sqrt of the largest eigenvalue of (I-Q)^T M (I-Q) v = lambda A v, i.e. the
// sharp constant sup_u ||(I-Q)u||_{L2_alpha} / |u|_{H1_alpha} over the fine space.
double projection_error_operator_norm(const SparseMatrix& p_free, const SparseMatrix& m_fine,
                                      const SparseMatrix& a_fine, double eig_rel_tol = 1e-4,
                                      double cg_rel_tol = 1e-11);

} // namespace wproj
