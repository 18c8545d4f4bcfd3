#pragma once

#include <vector>

#include "wproj/decomposition.hpp"
#include "wproj/mesh.hpp"
#include "wproj/sparse.hpp"

namespace wproj {

// One Lipschitz polyhedron G (a subdomain) with its local P1 machinery:
// local node numbering, boundary/interior split, unweighted stiffness blocks
// and the Robin operator A + (1/diam) M_boundary whose boundary Schur
// complement realizes the discrete H^{1/2} form.
struct PolyhedronRegion {
  const MeshLevel* mesh = nullptr;
  int sub = 0;
  std::vector<int> tets;            // global tet ids
  std::vector<int> nodes;           // global node ids, sorted
  std::vector<int> global_to_local; // -1 off region
  std::vector<int> boundary_local;  // local node -> boundary index (-1 interior)
  std::vector<int> boundary_nodes;  // boundary index -> local node
  std::vector<int> interior_local;  // local node -> interior index (-1 boundary)
  std::vector<int> interior_nodes;
  std::vector<FaceKey> boundary_tris; // global node ids
  double diameter = 0.0;

  SparseMatrix stiffness_full; // all local nodes, no boundary conditions
  SparseMatrix a_ii, a_ib;     // interior-interior, interior-boundary blocks
  SparseMatrix boundary_mass;  // surface P1 mass on boundary dofs
  SparseMatrix robin;          // stiffness_full + (1/diameter) * embedded boundary mass

  int num_local() const { return static_cast<int>(nodes.size()); }
  int num_boundary() const { return static_cast<int>(boundary_nodes.size()); }
  int num_interior() const { return static_cast<int>(interior_nodes.size()); }
};

PolyhedronRegion extract_region(const SubdomainDecomposition& dec, int level, int sub);

// Trace vector on the boundary nodes of one region.
struct TraceFunction {
  int sub = 0;
  std::vector<double> values; // indexed by region boundary index
};

// Energy-minimizing P1 extension of g: all local nodes, boundary = g.
std::vector<double> discrete_harmonic_extension(const PolyhedronRegion& region, const TraceFunction& g,
                                                double cg_rel_tol = 1e-11);

double extension_energy(const PolyhedronRegion& region, const std::vector<double>& local_values);

// ( |Hg|^2_{H1(G)} + (1/diam G) ||g||^2_{L2(boundary)} )^{1/2}
double h_half_norm(const PolyhedronRegion& region, const TraceFunction& g, double cg_rel_tol = 1e-11);

// Node sets of boundary subsets. Face subsets keep only nodes interior to the
// piece (every incident surface triangle belongs to the piece); edge subsets
// keep the chain closure including endpoints.
std::vector<int> face_interior_boundary_nodes(const PolyhedronRegion& region, const FacePiece& piece);
std::vector<int> edge_boundary_nodes(const PolyhedronRegion& region, const EdgeChain& chain);
std::vector<int> whole_boundary_nodes(const PolyhedronRegion& region);

// I_K^0: keep nodal values on the subset, zero the rest.
TraceFunction restrict_to(const TraceFunction& g, const std::vector<int>& subset_boundary_nodes);

struct CentroidSlicing {
  int axis = 0;                              // projection axis
  double slab_width = 0.0;                   // h
  std::vector<std::vector<int>> slices;      // tet ids per slab (partition of T^h(F))
  std::vector<int> picked_nodes;             // p_i, boundary index per slab
  std::vector<std::array<int, 3>> picked_tets; // K_i^j per slab, per derivative direction
};

// Slab partition of the elements with a face on F by centroid projection, the
// per-slab max-|v| nodes on F and the per-slab max-|d_j v_hat| elements.
CentroidSlicing centroid_slicing(const PolyhedronRegion& region, const FacePiece& piece, const TraceFunction& v,
                                 double cg_rel_tol = 1e-11);

// sup_u ||I_E^0 u||_{H^{1/2}} / ||u||_{L2(E)} over traces supported anywhere.
double edge_restriction_ratio(const PolyhedronRegion& region, const std::vector<int>& edge_nodes,
                              const std::vector<EdgeKey>& edges, double eig_rel_tol = 1e-3);

// sup_u ||u||_{L2(E)} / ||u||_{H^{1/2}(boundary)}.
double edge_trace_ratio(const PolyhedronRegion& region, const std::vector<int>& edge_nodes,
                        const std::vector<EdgeKey>& edges, double eig_rel_tol = 1e-3);

// sup_u ||I_F^0 u||_{H^{1/2}} / ||u||_{H^{1/2}}.
double face_restriction_ratio(const PolyhedronRegion& region, const std::vector<int>& face_nodes,
                              double eig_rel_tol = 1e-3);

struct SlicingSample {
  double node_sum = 0.0;     // h * sum_i v(p_i)^2
  double gradient_sum = 0.0; // h^3 * max_j sum_i |d_j v_hat(c_K_i^j)|^2
  double h_half_sq = 0.0;    // ||v||^2_{H^{1/2}}
};

SlicingSample slicing_quantities(const PolyhedronRegion& region, const FacePiece& piece, const TraceFunction& v);

} // namespace wproj
