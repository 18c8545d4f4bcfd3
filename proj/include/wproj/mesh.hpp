#pragma once

#include <array>
#include <string>
#include <vector>

#include "wproj/geometry.hpp"
#include "wproj/sparse.hpp"

namespace wproj {

using Tet = std::array<int, 4>;

// One level of a nested tetrahedral hierarchy on the unit cube.
// Vertex indices of level k are a prefix of level k+1.
struct MeshLevel {
  std::vector<Vec3> vertices;
  std::vector<Tet> tets;
  std::vector<char> vertex_on_boundary; // one flag per vertex
  double mesh_size = 0.0;               // 1 / (cells per axis)
  int level_index = 0;

  // Refinement bookkeeping (empty on level 0).
  int first_new_vertex = 0;                          // == vertex count of the parent level
  std::vector<std::array<int, 2>> new_vertex_parents; // parent-edge endpoints of each new vertex
  std::vector<int> parent_tet;                        // parent tet index of each tet

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_tets() const { return static_cast<int>(tets.size()); }

  std::vector<int> boundary_vertices() const;
  double tet_volume(int t) const;
  double total_volume() const;
  Vec3 tet_centroid(int t) const;
};

// Kuhn (6-tet) subdivision of an n x n x n cube grid; 6 n^3 tets, (n+1)^3 vertices.
MeshLevel build_coarse_mesh(int cells_per_axis);

// Uniform red refinement, 8 children per tet (Bey's ordering for the interior octahedron).
MeshLevel refine(const MeshLevel& mesh);

struct MeshHierarchy {
  std::vector<MeshLevel> levels;

  static MeshHierarchy build(int coarse_cells_per_axis, int refine_levels);

  const MeshLevel& operator[](int i) const { return levels.at(static_cast<size_t>(i)); }
  int size() const { return static_cast<int>(levels.size()); }

  // All-node prolongation from level `coarse` to level `fine` (composition of
  // per-level midpoint interpolation). Throws ConfigError unless coarse < fine.
  SparseMatrix prolongation_all_nodes(int coarse, int fine) const;
};

// Pointwise evaluation of the P1 function with the given all-node values.
// Walks the tets; intended for small meshes and test oracles.
double evaluate_p1(const MeshLevel& mesh, const std::vector<double>& all_node_values, const Vec3& p);

// Plain-text node / tet tables (one entity per line) for external visualization.
// Writes <prefix>.nodes.txt and <prefix>.tets.txt; the optional per-tet ids are
// appended as a last column of the tet table.
void export_mesh_tables(const MeshLevel& mesh, const std::string& prefix,
                        const std::vector<int>* tet_ids = nullptr);

} // namespace wproj
