#pragma once

#include <string>
#include <vector>

#include "wproj/decomposition.hpp"

namespace wproj {

// Upper intersection S_k: the part of the subdomain boundary touching
// neighbors with alpha_l >= alpha_k (l != k) or the outer boundary.
struct UpperIntersection {
  int sub = -1;
  std::vector<int> face_pieces;        // qualifying face pieces (interface and outer)
  std::vector<EdgeKey> contact_edges;  // degenerate qualifying contacts (no face)
  std::vector<int> contact_vertices;
  std::vector<FaceKey> faces;          // flattened fine facets
};

struct ThornyEdge {
  int chain_id = -1;
  std::vector<int> owners;     // S_E
  std::vector<int> star;       // S*_E: owners in whose upper intersection E is isolated
  std::vector<int> complement; // S^c_E = S_E \ S*_E
};

struct ThornyVertex {
  int node = -1;
  std::vector<int> owners; // S_V
  std::vector<int> star;   // S*_V
  std::vector<int> complement;
};

struct QuasiMonotoneVerdict {
  bool quasi_monotone = true;
  std::string witness; // first offending feature, empty when quasi-monotone
};

// Layers Sigma_1..Sigma_m: layer_of is 1-based.
struct MultilayerPartition {
  std::vector<std::vector<int>> layers;
  std::vector<int> layer_of;
  int m() const { return static_cast<int>(layers.size()); }
};

struct LayerNeighbor {
  int sub = -1;
  InterfaceClass contact = InterfaceClass::Empty;
};

// Lambda_k^j: lower-layer neighbors of subdomain k in layer j (closure adjacency).
struct LayerIndexSets {
  std::vector<std::vector<std::vector<LayerNeighbor>>> lambda; // [k][j-1]
};

struct StarSets {
  std::vector<int> star;       // S*
  std::vector<int> complement; // S^c_*
  std::vector<int> tilde_star; // vertex-only variant
};

struct DistributionReport {
  std::vector<ThornyVertex> thorny_vertices;
  std::vector<ThornyEdge> thorny_edges;
  QuasiMonotoneVerdict verdict;
  MultilayerPartition layers;
  LayerIndexSets lambda;
  StarSets stars;
};

UpperIntersection upper_intersection(const SurfaceTopology& topo, const CoefficientField& alpha, int k);

std::vector<ThornyEdge> detect_thorny_edges(const SurfaceTopology& topo, const CoefficientField& alpha);
std::vector<ThornyVertex> detect_thorny_vertices(const SurfaceTopology& topo, const CoefficientField& alpha);

QuasiMonotoneVerdict is_quasi_monotone(const SurfaceTopology& topo, const CoefficientField& alpha);

// Greedy layering: subdomains in descending alpha (ties by id) are placed in
// the smallest layer above every face-adjacent subdomain of strictly larger
// alpha that contains no face-adjacent subdomain. Within-layer edge or vertex
// contacts between equal-alpha subdomains are permitted.
MultilayerPartition multilayer_partition(const SurfaceTopology& topo, const CoefficientField& alpha);

// Machine check of the layer conditions: within-layer pairs share no face;
// face-adjacent cross-layer pairs are alpha-monotone.
bool layers_valid(const MultilayerPartition& layers, const SurfaceTopology& topo, const CoefficientField& alpha);

LayerIndexSets layer_index_sets(const MultilayerPartition& layers, const SurfaceTopology& topo);

StarSets classify_star_sets(const std::vector<ThornyVertex>& vertices, const std::vector<ThornyEdge>& edges,
                            int num_subdomains);

DistributionReport analyze_distribution(const SurfaceTopology& topo, const CoefficientField& alpha);

// Proposition check: for every thorny edge E, every r in S*_E, and every l in
// S_E sharing a face with Omega_r that contains E: l lies in S^c_E and
// alpha_l < alpha_r. Returns an empty string when it holds, else a diagnostic.
std::string check_star_face_proposition(const SurfaceTopology& topo, const CoefficientField& alpha,
                                        const std::vector<ThornyEdge>& edges);

} // namespace wproj
