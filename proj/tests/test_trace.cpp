#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <set>

#include "support/dense.hpp"
#include "wproj/decomposition.hpp"
#include "wproj/trace.hpp"

using namespace wproj;
using wproj::testing::DenseMatrix;

namespace {

struct Setup {
  std::unique_ptr<MeshHierarchy> hierarchy;
  std::unique_ptr<SubdomainDecomposition> dec;
  SurfaceTopology topo;
  PolyhedronRegion region;
};

Setup cube_setup(int n, int levels = 0, int analysis_level = -1) {
  Setup s;
  s.hierarchy = std::make_unique<MeshHierarchy>(MeshHierarchy::build(n, levels));
  s.dec = std::make_unique<SubdomainDecomposition>(SubdomainDecomposition::build(*s.hierarchy, BoxGridSpec{}));
  const int level = analysis_level < 0 ? levels : analysis_level;
  s.topo = analyze_surface(*s.dec, level);
  s.region = extract_region(*s.dec, level, 0);
  return s;
}

std::mt19937_64 rng(4242);
double unit() { return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0); }

TraceFunction random_trace(const PolyhedronRegion& region) {
  TraceFunction g;
  g.sub = region.sub;
  g.values.resize(static_cast<size_t>(region.num_boundary()));
  for (double& v : g.values) v = 2.0 * unit() - 1.0;
  return g;
}

const FacePiece& cube_side_piece(const Setup& s, int side) {
  for (const FacePiece& p : s.topo.pieces)
    if (p.sub_b == -1 - side) return p;
  throw std::logic_error("side piece not found");
}

const EdgeChain& cube_edge_chain(const Setup& s, const Vec3& a, const Vec3& b) {
  const MeshLevel& mesh = *s.region.mesh;
  for (const EdgeChain& c : s.topo.chains) {
    const Vec3 pa = mesh.vertices[static_cast<size_t>(c.endpoints[0])];
    const Vec3 pb = mesh.vertices[static_cast<size_t>(c.endpoints[1])];
    if ((norm(pa - a) < 1e-12 && norm(pb - b) < 1e-12) || (norm(pa - b) < 1e-12 && norm(pb - a) < 1e-12)) return c;
  }
  throw std::logic_error("edge chain not found");
}

Vec3 tet_value_gradient(const MeshLevel& mesh, const PolyhedronRegion& region, const std::vector<double>& local,
                        int t) {
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
    grad = grad + gs[a] * local[static_cast<size_t>(region.global_to_local[static_cast<size_t>(k[a])])];
  return grad;
}

} // namespace

TEST_CASE("region extraction on the unit cube") {
  Setup s = cube_setup(2);
  CHECK(s.region.num_local() == 27);
  CHECK(s.region.num_boundary() == 26);
  CHECK(s.region.num_interior() == 1);
  CHECK(s.region.diameter == doctest::Approx(std::sqrt(3.0)));
  CHECK(s.topo.pieces.size() == 6);
  CHECK(s.topo.chains.size() == 12);
  CHECK(s.topo.vertices.size() == 8);
}

TEST_CASE("discrete harmonic extension") {
  Setup s = cube_setup(2, 1);

  SUBCASE("constants extend to constants with zero energy") {
    TraceFunction g;
    g.sub = 0;
    g.values.assign(static_cast<size_t>(s.region.num_boundary()), 3.25);
    const std::vector<double> ext = discrete_harmonic_extension(s.region, g);
    for (double v : ext) CHECK(v == doctest::Approx(3.25).epsilon(1e-10));
    CHECK(extension_energy(s.region, ext) <= 1e-12); // rounding-noise floor

  }

  SUBCASE("traces of globally linear functions extend to that linear function") {
    const MeshLevel& mesh = *s.region.mesh;
    auto lin = [](const Vec3& p) { return 2.0 * p.x - 3.0 * p.y + 0.5 * p.z + 1.0; };
    TraceFunction g;
    g.sub = 0;
    g.values.resize(static_cast<size_t>(s.region.num_boundary()));
    for (int b = 0; b < s.region.num_boundary(); ++b) {
      const int node = s.region.nodes[static_cast<size_t>(s.region.boundary_nodes[static_cast<size_t>(b)])];
      g.values[static_cast<size_t>(b)] = lin(mesh.vertices[static_cast<size_t>(node)]);
    }
    const std::vector<double> ext = discrete_harmonic_extension(s.region, g, 1e-12);
    for (int i = 0; i < s.region.num_local(); ++i) {
      const Vec3& p = mesh.vertices[static_cast<size_t>(s.region.nodes[static_cast<size_t>(i)])];
      CHECK(ext[static_cast<size_t>(i)] == doctest::Approx(lin(p)).epsilon(1e-9));
    }
  }

  SUBCASE("energy minimality against 50 random extensions of the same trace") {
    const TraceFunction g = random_trace(s.region);
    const std::vector<double> ext = discrete_harmonic_extension(s.region, g, 1e-12);
    const double emin = extension_energy(s.region, ext);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> other = ext;
      for (int i : s.region.interior_nodes) other[static_cast<size_t>(i)] += 2.0 * unit() - 1.0;
      CHECK(extension_energy(s.region, other) >= emin - 1e-12);
    }
  }

  SUBCASE("linearity in the boundary data") {
    const TraceFunction g1 = random_trace(s.region), g2 = random_trace(s.region);
    TraceFunction combo;
    combo.sub = 0;
    combo.values.resize(g1.values.size());
    for (size_t i = 0; i < g1.values.size(); ++i) combo.values[i] = 2.0 * g1.values[i] - 0.5 * g2.values[i];
    const std::vector<double> e1 = discrete_harmonic_extension(s.region, g1, 1e-12);
    const std::vector<double> e2 = discrete_harmonic_extension(s.region, g2, 1e-12);
    const std::vector<double> ec = discrete_harmonic_extension(s.region, combo, 1e-12);
    for (size_t i = 0; i < ec.size(); ++i) CHECK(ec[i] == doctest::Approx(2.0 * e1[i] - 0.5 * e2[i]).epsilon(1e-8));
  }
}

TEST_CASE("h_half_norm") {
  Setup s = cube_setup(2);

  SUBCASE("zero and constant traces") {
    TraceFunction z;
    z.sub = 0;
    z.values.assign(static_cast<size_t>(s.region.num_boundary()), 0.0);
    CHECK(h_half_norm(s.region, z) == 0.0);

    TraceFunction c;
    c.sub = 0;
    c.values.assign(static_cast<size_t>(s.region.num_boundary()), 2.0);
    // Seminorm part vanishes; |c| sqrt(area / diam) remains.
    const double expected = 2.0 * std::sqrt(6.0 / std::sqrt(3.0));
    CHECK(h_half_norm(s.region, c) == doctest::Approx(expected).epsilon(1e-9));
  }

  SUBCASE("agrees with the dense Schur-complement oracle") {
    const DenseMatrix a_full = DenseMatrix::from_sparse(s.region.stiffness_full);
    std::vector<int> interior, boundary;
    for (int i : s.region.interior_nodes) interior.push_back(i);
    for (int i : s.region.boundary_nodes) boundary.push_back(i);
    const DenseMatrix schur = wproj::testing::schur_complement(a_full, interior, boundary);
    const DenseMatrix mass = DenseMatrix::from_sparse(s.region.boundary_mass);

    for (int trial = 0; trial < 5; ++trial) {
      const TraceFunction g = random_trace(s.region);
      const std::vector<double> sg = schur.apply(g.values);
      const std::vector<double> mg = mass.apply(g.values);
      const double oracle_sq = dot(g.values, sg) + dot(g.values, mg) / s.region.diameter;
      const double mine = h_half_norm(s.region, g, 1e-12);
      const double ratio = mine / std::sqrt(oracle_sq);
      CHECK(ratio >= 1.0 / 3.0);
      CHECK(ratio <= 3.0);
      CHECK(mine * mine == doctest::Approx(oracle_sq).epsilon(1e-8));
    }
  }

  SUBCASE("norm axioms on random traces") {
    const TraceFunction g1 = random_trace(s.region), g2 = random_trace(s.region);
    const double n1 = h_half_norm(s.region, g1, 1e-12);
    CHECK(n1 > 0.0);
    TraceFunction scaled = g1;
    for (double& v : scaled.values) v *= -2.5;
    CHECK(h_half_norm(s.region, scaled, 1e-12) == doctest::Approx(2.5 * n1).epsilon(1e-8));
    TraceFunction sum = g1;
    for (size_t i = 0; i < sum.values.size(); ++i) sum.values[i] += g2.values[i];
    CHECK(h_half_norm(s.region, sum, 1e-12) <= n1 + h_half_norm(s.region, g2, 1e-12) + 1e-9);
  }
}

TEST_CASE("restriction operators") {
  Setup s = cube_setup(4);
  const FacePiece& face = cube_side_piece(s, 4); // z = 0 side
  const std::vector<int> face_nodes = face_interior_boundary_nodes(s.region, face);
  CHECK(face_nodes.size() == 9); // (n-1)^2 interior nodes at n=4

  const EdgeChain& edge = cube_edge_chain(s, {0, 0, 0}, {1, 0, 0});
  const std::vector<int> edge_nodes = edge_boundary_nodes(s.region, edge);
  CHECK(edge_nodes.size() == 5); // n+1 nodes including endpoints

  SUBCASE("whole boundary subset is the identity") {
    const TraceFunction g = random_trace(s.region);
    const TraceFunction r = restrict_to(g, whole_boundary_nodes(s.region));
    CHECK(r.values == g.values);
  }

  SUBCASE("function supported off the subset restricts to zero") {
    TraceFunction g;
    g.sub = 0;
    g.values.assign(static_cast<size_t>(s.region.num_boundary()), 0.0);
    std::set<int> subset(edge_nodes.begin(), edge_nodes.end());
    for (int b = 0; b < s.region.num_boundary(); ++b)
      if (!subset.count(b)) g.values[static_cast<size_t>(b)] = 2.0 * unit() - 1.0;
    const TraceFunction r = restrict_to(g, edge_nodes);
    for (double v : r.values) CHECK(v == 0.0);
  }

  SUBCASE("linearity and idempotence are exact") {
    const TraceFunction g1 = random_trace(s.region), g2 = random_trace(s.region);
    TraceFunction combo;
    combo.sub = 0;
    combo.values.resize(g1.values.size());
    for (size_t i = 0; i < g1.values.size(); ++i) combo.values[i] = 3.0 * g1.values[i] + 2.0 * g2.values[i];
    const TraceFunction rc = restrict_to(combo, face_nodes);
    const TraceFunction r1 = restrict_to(g1, face_nodes);
    const TraceFunction r2 = restrict_to(g2, face_nodes);
    for (size_t i = 0; i < rc.values.size(); ++i) CHECK(rc.values[i] == 3.0 * r1.values[i] + 2.0 * r2.values[i]);
    const TraceFunction rr = restrict_to(rc, face_nodes);
    CHECK(rr.values == rc.values);
  }
}

TEST_CASE("centroid slicing") {
  Setup s = cube_setup(4);
  const FacePiece& face = cube_side_piece(s, 0); // x = 0 side
  const TraceFunction v = random_trace(s.region);
  const CentroidSlicing slicing = centroid_slicing(s.region, face, v);

  SUBCASE("slices partition the elements touching the face") {
    std::set<int> expected;
    std::set<FaceKey> tris(face.tris.begin(), face.tris.end());
    const MeshLevel& mesh = *s.region.mesh;
    for (int t : s.region.tets) {
      const Tet& k = mesh.tets[static_cast<size_t>(t)];
      const int lf[4][3] = {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};
      for (const auto& f : lf) {
        FaceKey key{k[f[0]], k[f[1]], k[f[2]]};
        std::sort(key.begin(), key.end());
        if (tris.count(key)) {
          expected.insert(t);
          break;
        }
      }
    }
    std::set<int> got;
    size_t total = 0;
    for (const auto& slab : slicing.slices) {
      CHECK_FALSE(slab.empty());
      total += slab.size();
      got.insert(slab.begin(), slab.end());
    }
    CHECK(got == expected);
    CHECK(total == got.size());
    CHECK(static_cast<int>(slicing.slices.size()) <=
          static_cast<int>(std::ceil(s.region.diameter / slicing.slab_width)) + 1);
  }

  SUBCASE("constant trace picks value one everywhere") {
    TraceFunction ones;
    ones.sub = 0;
    ones.values.assign(static_cast<size_t>(s.region.num_boundary()), 1.0);
    const CentroidSlicing sl = centroid_slicing(s.region, face, ones);
    for (int b : sl.picked_nodes) {
      REQUIRE(b >= 0);
      CHECK(ones.values[static_cast<size_t>(b)] == 1.0);
    }
  }

  SUBCASE("picks agree with an exhaustive max scan") {
    const std::vector<double> ext = discrete_harmonic_extension(s.region, v, 1e-12);
    const MeshLevel& mesh = *s.region.mesh;
    std::set<int> face_node_set(face.nodes.begin(), face.nodes.end());
    for (size_t i = 0; i < slicing.slices.size(); ++i) {
      double best = -1.0;
      for (int t : slicing.slices[i])
        for (int node : mesh.tets[static_cast<size_t>(t)]) {
          if (!face_node_set.count(node)) continue;
          const int b =
              s.region.boundary_local[static_cast<size_t>(s.region.global_to_local[static_cast<size_t>(node)])];
          if (b < 0) continue;
          best = std::max(best, v.values[static_cast<size_t>(b)] * v.values[static_cast<size_t>(b)]);
        }
      const int pb = slicing.picked_nodes[i];
      REQUIRE(pb >= 0);
      CHECK(v.values[static_cast<size_t>(pb)] * v.values[static_cast<size_t>(pb)] == doctest::Approx(best));

      for (int j = 0; j < 3; ++j) {
        double best_grad = -1.0;
        for (int t : slicing.slices[i]) {
          const Vec3 grad = tet_value_gradient(mesh, s.region, ext, t);
          best_grad = std::max(best_grad, grad[j] * grad[j]);
        }
        const int picked = slicing.picked_tets[i][static_cast<size_t>(j)];
        REQUIRE(picked >= 0);
        const Vec3 grad = tet_value_gradient(mesh, s.region, ext, picked);
        CHECK(grad[j] * grad[j] == doctest::Approx(best_grad));
      }
    }
  }
}

TEST_CASE("lemma ratio building blocks") {
  Setup s = cube_setup(4);
  const EdgeChain& edge = cube_edge_chain(s, {0, 0, 0}, {1, 0, 0});
  const std::vector<int> edge_nodes = edge_boundary_nodes(s.region, edge);

  SUBCASE("restriction ratio dominates every single-node candidate") {
    const double c1 = edge_restriction_ratio(s.region, edge_nodes, edge.edges, 1e-4);
    CHECK(c1 > 0.0);
    const MeshLevel& mesh = *s.region.mesh;
    std::map<int, int> idx;
    for (size_t i = 0; i < edge_nodes.size(); ++i) idx[edge_nodes[i]] = static_cast<int>(i);
    std::vector<Triplet> t;
    for (const EdgeKey& e : edge.edges) {
      const double len = norm(mesh.vertices[static_cast<size_t>(e[0])] - mesh.vertices[static_cast<size_t>(e[1])]);
      int dof[2];
      for (int i = 0; i < 2; ++i)
        dof[i] =
            idx.at(s.region.boundary_local[static_cast<size_t>(s.region.global_to_local[static_cast<size_t>(e[i])])]);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) t.push_back({dof[i], dof[j], len / 6.0 * (i == j ? 2.0 : 1.0)});
    }
    const SparseMatrix me =
        SparseMatrix::from_triplets(static_cast<int>(edge_nodes.size()), static_cast<int>(edge_nodes.size()), t);
    for (size_t j = 0; j < edge_nodes.size(); ++j) {
      TraceFunction u;
      u.sub = 0;
      u.values.assign(static_cast<size_t>(s.region.num_boundary()), 0.0);
      u.values[static_cast<size_t>(edge_nodes[j])] = 1.0;
      const double num = h_half_norm(s.region, u, 1e-12);
      std::vector<double> ue(edge_nodes.size(), 0.0);
      ue[j] = 1.0;
      const double den = std::sqrt(dot(ue, me.apply(ue)));
      CHECK(num / den <= c1 * 1.05 + 1e-9);
    }
  }

  SUBCASE("face ratio is at least one up to iteration slack") {
    const FacePiece& face = cube_side_piece(s, 0);
    const double r = face_restriction_ratio(s.region, face_interior_boundary_nodes(s.region, face), 1e-3);
    CHECK(r >= 0.5);
  }

  SUBCASE("slicing quantities vanish for zero traces and stay bounded for constants") {
    const FacePiece& face = cube_side_piece(s, 0);
    TraceFunction z;
    z.sub = 0;
    z.values.assign(static_cast<size_t>(s.region.num_boundary()), 0.0);
    const SlicingSample sz = slicing_quantities(s.region, face, z);
    CHECK(sz.node_sum == 0.0);
    CHECK(sz.gradient_sum == 0.0);

    TraceFunction c;
    c.sub = 0;
    c.values.assign(static_cast<size_t>(s.region.num_boundary()), 2.0);
    const SlicingSample sc = slicing_quantities(s.region, face, c);
    // h N c^2 is about c^2 * extent; the norm term dominates it.
    CHECK(sc.node_sum <= 4.0 * s.region.diameter + 1e-9);
    CHECK(sc.node_sum <= sc.h_half_sq);
    CHECK(sc.gradient_sum <= 1e-16);
  }
}

TEST_CASE("perturbed face raises the measured face-lemma constant") {
  auto run = [](bool perturbed) {
    auto hierarchy = std::make_unique<MeshHierarchy>(MeshHierarchy::build(2, 2));
    BoxGridSpec spec;
    spec.grid = {1, 1, 2};
    auto dec = std::make_unique<SubdomainDecomposition>(SubdomainDecomposition::build(*hierarchy, spec));
    if (perturbed) *dec = perturb_subdomain_boundary(*dec, 2, 2024, 1);
    const SurfaceTopology topo = analyze_surface(*dec, 2);
    const PolyhedronRegion region = extract_region(*dec, 2, 0);
    for (const FacePiece& p : topo.pieces)
      if (p.sub_a == 0 && p.sub_b == 1)
        return face_restriction_ratio(region, face_interior_boundary_nodes(region, p), 1e-3);
    throw std::logic_error("interface piece not found");
  };
  const double flat = run(false);
  const double pert = run(true);
  CHECK(pert > flat);
}
