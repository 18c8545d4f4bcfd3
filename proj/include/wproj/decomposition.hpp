#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wproj/mesh.hpp"

namespace wproj {

using FaceKey = std::array<int, 3>; // sorted vertex ids
using EdgeKey = std::array<int, 2>; // sorted vertex ids

struct PerturbSpec {
  std::uint64_t seed = 0;
  int amplitude = 0;
};

// Axis-aligned box grid over the unit cube with optional merged cell groups.
struct BoxGridSpec {
  std::array<int, 3> grid{1, 1, 1};
  std::vector<std::vector<int>> merge_groups; // row-major cell ids; each group one subdomain
};

// Strictly positive weight per subdomain.
struct CoefficientField {
  std::vector<double> alpha;

  explicit CoefficientField(std::vector<double> a = {});
  double operator[](int sub) const { return alpha.at(static_cast<size_t>(sub)); }
  int size() const { return static_cast<int>(alpha.size()); }
  CoefficientField scaled(double c) const;
};

enum class InterfaceClass { Face, Edge, Vertex, Mixed, Empty };

std::string to_string(InterfaceClass c);

// Lipschitz acceptance: a face or edge component counts as a Lipschitz face
// or edge when its deviation from a plane or line stays below c0 * mesh_size.
constexpr double kLipschitzC0 = 2.0;

inline bool is_lipschitz(double delta, double mesh_size) {
  return delta <= kLipschitzC0 * mesh_size + 1e-12;
}

struct InterfaceGeometry {
  std::vector<FaceKey> shared_faces;
  std::vector<EdgeKey> shared_edges; // not on any shared face
  std::vector<int> shared_vertices;  // on neither faces nor edges
  InterfaceClass classification = InterfaceClass::Empty;
  std::vector<double> flatness_face;     // delta_F per connected face component
  std::vector<double> straightness_edge; // delta_E per connected edge component
};

// A connected flat patch of subdomain surface with a single neighbor label.
// sub_b >= 0: interface patch between subdomains; sub_b in [-6,-1]: outer
// boundary patch on cube side (-1 - sub_b).
struct FacePiece {
  int id = 0;
  int sub_a = 0;
  int sub_b = 0;
  std::vector<FaceKey> tris;
  Vec3 plane_normal{0, 0, 0};
  double plane_offset = 0.0;
  double delta_f = 0.0;
  std::vector<int> nodes; // closure nodes, sorted

  bool outer() const { return sub_b < 0; }
  bool involves(int sub) const { return sub_a == sub || sub_b == sub; }
};

// Maximal run of crease mesh edges with a fixed set of incident face pieces.
struct EdgeChain {
  int id = 0;
  std::vector<EdgeKey> edges;
  std::vector<int> nodes; // closure nodes, sorted
  std::vector<int> incident_pieces;
  std::array<int, 2> endpoints{-1, -1};
  double delta_e = 0.0;
};

struct VertexFeature {
  int node = -1;
  std::vector<int> subdomains; // subdomains for which the node is a corner
};

// Complete surface decomposition of all subdomains at one mesh level.
struct SurfaceTopology {
  int level = 0;
  std::vector<FacePiece> pieces;
  std::vector<EdgeChain> chains;
  std::vector<VertexFeature> vertices;
  std::map<std::pair<int, int>, InterfaceGeometry> interfaces; // (k, l) with k < l

  std::vector<std::vector<int>> pieces_of_sub;
  std::vector<std::vector<int>> chains_of_sub;   // chains that are edges of the subdomain
  std::vector<std::vector<int>> vertices_of_sub; // node ids that are corners of the subdomain

  const InterfaceGeometry* interface(int k, int l) const;
  bool chain_is_edge_of(int chain_id, int sub) const;
};

class SubdomainDecomposition {
public:
  static SubdomainDecomposition build(const MeshHierarchy& hierarchy, const BoxGridSpec& spec);

  int num_subdomains() const { return num_subdomains_; }
  double subdomain_diameter() const { return subdomain_diameter_; } // H
  double diameter_of(int sub) const;

  const MeshHierarchy& hierarchy() const { return *hierarchy_; }
  const std::vector<int>& tet_subdomains(int level) const;
  const std::vector<int>& base_tet_subdomains(int level) const;
  bool is_perturbed() const { return perturbed_; }

  // Tets of one subdomain at one level, ascending.
  std::vector<int> tets_of(int sub, int level) const;

  bool closure_adjacent(int k, int l, int level) const;
  bool face_adjacent(int k, int l, int level) const;

  // Maps cell ids of the generating grid to subdomain ids (unmerged cells map
  // to their own subdomain).
  const std::vector<int>& cell_to_subdomain() const { return cell_to_sub_; }
  const std::array<int, 3>& grid() const { return grid_; }

private:
  friend SubdomainDecomposition perturb_subdomain_boundary(const SubdomainDecomposition&, int, std::uint64_t, int);

  const MeshHierarchy* hierarchy_ = nullptr;
  int num_subdomains_ = 0;
  double subdomain_diameter_ = 0.0;
  std::array<int, 3> grid_{1, 1, 1};
  std::vector<int> cell_to_sub_;
  std::vector<std::vector<int>> sub_of_tet_;      // per level
  std::vector<std::vector<int>> base_sub_of_tet_; // unperturbed reference
  bool perturbed_ = false;
};

// Randomly reassigns tets within `amplitude` element layers of the original
// interfaces across them, keeping every subdomain connected and every node of
// the new interfaces within amplitude * mesh_size of the original interface
// plane. amplitude 0 returns an identical decomposition. Bit-reproducible for
// a fixed seed.
SubdomainDecomposition perturb_subdomain_boundary(const SubdomainDecomposition& dec, int level,
                                                  std::uint64_t seed, int amplitude);

// Surface decomposition into face pieces, edge chains, corner vertices and
// pairwise interface geometry at the given level. Perturbed decompositions
// inherit the piece structure of their unperturbed base.
SurfaceTopology analyze_surface(const SubdomainDecomposition& dec, int level);

} // namespace wproj
