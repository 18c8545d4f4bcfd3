#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <memory>
#include <set>

#include "support/thorny_oracle.hpp"
#include "wproj/coeff_analysis.hpp"
#include "wproj/decomposition.hpp"
#include "wproj/errors.hpp"

using namespace wproj;

namespace {

// The decomposition points at its hierarchy, so both live on the heap.
struct Setup {
  std::unique_ptr<MeshHierarchy> hierarchy;
  std::unique_ptr<SubdomainDecomposition> dec;
  SurfaceTopology topo;
};

Setup make_setup(int n, std::array<int, 3> grid, std::vector<std::vector<int>> merges = {}) {
  Setup s;
  s.hierarchy = std::make_unique<MeshHierarchy>(MeshHierarchy::build(n, 0));
  BoxGridSpec spec;
  spec.grid = grid;
  spec.merge_groups = std::move(merges);
  s.dec = std::make_unique<SubdomainDecomposition>(SubdomainDecomposition::build(*s.hierarchy, spec));
  return s;
}

} // namespace

TEST_CASE("upper intersections") {
  SUBCASE("interior subdomain with the strictly largest alpha has an empty upper intersection") {
    MeshHierarchy h = MeshHierarchy::build(3, 0);
    BoxGridSpec spec;
    spec.grid = {3, 3, 3};
    const auto dec = SubdomainDecomposition::build(h, spec);
    const SurfaceTopology topo = analyze_surface(dec, 0);
    std::vector<double> a(27, 1.0);
    a[13] = 10.0; // center cell
    const UpperIntersection up = upper_intersection(topo, CoefficientField(a), 13);
    CHECK(up.face_pieces.empty());
    CHECK(up.contact_edges.empty());
    CHECK(up.contact_vertices.empty());
    CHECK(up.faces.empty());
  }

  SUBCASE("two stacked boxes: the low box sees the shared face plus its outer boundary") {
    MeshHierarchy h = MeshHierarchy::build(2, 0);
    BoxGridSpec spec;
    spec.grid = {1, 1, 2};
    const auto dec = SubdomainDecomposition::build(h, spec);
    const SurfaceTopology topo = analyze_surface(dec, 0);
    const CoefficientField alpha({1.0, 10.0});
    const UpperIntersection up = upper_intersection(topo, alpha, 0);
    bool has_interface = false, has_outer = false;
    for (int pid : up.face_pieces) {
      const FacePiece& p = topo.pieces[static_cast<size_t>(pid)];
      if (p.outer())
        has_outer = true;
      else
        has_interface = true;
    }
    CHECK(has_interface);
    CHECK(has_outer);

    // The high box sees only its own outer boundary.
    const UpperIntersection up_high = upper_intersection(topo, alpha, 1);
    for (int pid : up_high.face_pieces) CHECK(topo.pieces[static_cast<size_t>(pid)].outer());
  }

  SUBCASE("checkerboard columns: a high box sees the central edge as a bare contact") {
    Setup s = make_setup(4, {2, 2, 1});
    s.topo = analyze_surface(*s.dec, 0);
    const CoefficientField alpha({1.0, 1e-4, 1e-4, 1.0});
    const UpperIntersection up = upper_intersection(s.topo, alpha, 0);
    for (int pid : up.face_pieces) CHECK(s.topo.pieces[static_cast<size_t>(pid)].outer());
    CHECK(up.contact_edges.size() == 4); // central line at n=4
  }

  SUBCASE("monotone in alpha_k: lowering alpha never removes facets") {
    Setup s = make_setup(2, {2, 2, 2});
    s.topo = analyze_surface(*s.dec, 0);
    std::vector<double> a{3.0, 1.0, 5.0, 2.0, 4.0, 1.5, 2.5, 3.5};
    const UpperIntersection before = upper_intersection(s.topo, CoefficientField(a), 3);
    a[3] = 0.5;
    const UpperIntersection after = upper_intersection(s.topo, CoefficientField(a), 3);
    for (int pid : before.face_pieces)
      CHECK(std::find(after.face_pieces.begin(), after.face_pieces.end(), pid) != after.face_pieces.end());
    CHECK(after.face_pieces.size() >= before.face_pieces.size());
  }
}

TEST_CASE("thorny edge detection") {
  SUBCASE("quasi-monotone stack has no thorny features") {
    Setup s = make_setup(4, {1, 1, 4});
    s.topo = analyze_surface(*s.dec, 0);
    const CoefficientField alpha({1.0, 1e-2, 1e-4, 1e-6});
    CHECK(detect_thorny_edges(s.topo, alpha).empty());
    CHECK(detect_thorny_vertices(s.topo, alpha).empty());
    CHECK(is_quasi_monotone(s.topo, alpha).quasi_monotone);
  }

  SUBCASE("checkerboard columns produce exactly one thorny edge, no thorny vertex") {
    Setup s = make_setup(4, {2, 2, 1});
    s.topo = analyze_surface(*s.dec, 0);
    const CoefficientField alpha({1.0, 1e-4, 1e-4, 1.0});
    const auto edges = detect_thorny_edges(s.topo, alpha);
    REQUIRE(edges.size() == 1);
    CHECK(edges.front().star == std::vector<int>{0, 3});
    CHECK(edges.front().complement == std::vector<int>{1, 2});
    CHECK(detect_thorny_vertices(s.topo, alpha).empty());
    const QuasiMonotoneVerdict v = is_quasi_monotone(s.topo, alpha);
    CHECK_FALSE(v.quasi_monotone);
    CHECK(v.witness.find("thorny edge") != std::string::npos);
  }

  SUBCASE("single subdomain has no features to be thorny") {
    Setup s = make_setup(2, {1, 1, 1});
    s.topo = analyze_surface(*s.dec, 0);
    CHECK(detect_thorny_edges(s.topo, CoefficientField({1.0})).empty());
    CHECK(detect_thorny_vertices(s.topo, CoefficientField({1.0})).empty());
  }
}

TEST_CASE("thorny vertex detection") {
  SUBCASE("octant diagonal pair meets at a thorny center vertex") {
    Setup s = make_setup(2, {2, 2, 2});
    s.topo = analyze_surface(*s.dec, 0);
    std::vector<double> a(8, 1e-4);
    a[0] = 1.0;
    a[7] = 1.0;
    const auto vertices = detect_thorny_vertices(s.topo, CoefficientField(a));
    REQUIRE(vertices.size() == 1);
    const Vec3& pt = (*s.hierarchy)[0].vertices[static_cast<size_t>(vertices.front().node)];
    CHECK(norm(pt - Vec3{0.5, 0.5, 0.5}) < 1e-12);
    CHECK(vertices.front().star == std::vector<int>{0, 7});
  }

  SUBCASE("monotone column of boxes has none") {
    Setup s = make_setup(4, {1, 1, 4});
    s.topo = analyze_surface(*s.dec, 0);
    CHECK(detect_thorny_vertices(s.topo, CoefficientField({8.0, 4.0, 2.0, 1.0})).empty());
  }

  SUBCASE("constant alpha: every vertex lies in a face of the upper intersection") {
    Setup s = make_setup(2, {2, 2, 2});
    s.topo = analyze_surface(*s.dec, 0);
    CHECK(detect_thorny_vertices(s.topo, CoefficientField(std::vector<double>(8, 2.0))).empty());
    CHECK(detect_thorny_edges(s.topo, CoefficientField(std::vector<double>(8, 2.0))).empty());
  }
}

TEST_CASE("multilayer partition") {
  SUBCASE("one subdomain: a single layer") {
    Setup s = make_setup(2, {1, 1, 1});
    s.topo = analyze_surface(*s.dec, 0);
    const MultilayerPartition part = multilayer_partition(s.topo, CoefficientField({1.0}));
    CHECK(part.m() == 1);
    CHECK(part.layer_of[0] == 1);
  }

  SUBCASE("two adjacent boxes, alpha (10, 1): high then low") {
    Setup s = make_setup(2, {1, 1, 2});
    s.topo = analyze_surface(*s.dec, 0);
    const MultilayerPartition part = multilayer_partition(s.topo, CoefficientField({10.0, 1.0}));
    REQUIRE(part.m() == 2);
    CHECK(part.layers[0] == std::vector<int>{0});
    CHECK(part.layers[1] == std::vector<int>{1});
    CHECK(layers_valid(part, s.topo, CoefficientField({10.0, 1.0})));
  }

  SUBCASE("equal-alpha 2x2 checkerboard splits into two layers by diagonal parity") {
    Setup s = make_setup(2, {2, 2, 1});
    s.topo = analyze_surface(*s.dec, 0);
    const CoefficientField alpha(std::vector<double>(4, 1.0));
    const MultilayerPartition part = multilayer_partition(s.topo, alpha);
    REQUIRE(part.m() == 2);
    CHECK(part.layers[0] == std::vector<int>{0, 3});
    CHECK(part.layers[1] == std::vector<int>{1, 2});
    CHECK(layers_valid(part, s.topo, alpha));
  }
}

TEST_CASE("layer index sets") {
  SUBCASE("two stacked boxes: the low box sees the high one across a face") {
    Setup s = make_setup(2, {1, 1, 2});
    s.topo = analyze_surface(*s.dec, 0);
    const CoefficientField alpha({10.0, 1.0});
    const MultilayerPartition part = multilayer_partition(s.topo, alpha);
    const LayerIndexSets sets = layer_index_sets(part, s.topo);
    REQUIRE(sets.lambda[1].size() == 1);
    REQUIRE(sets.lambda[1][0].size() == 1);
    CHECK(sets.lambda[1][0][0].sub == 0);
    CHECK(sets.lambda[1][0][0].contact == InterfaceClass::Face);
    CHECK(sets.lambda[0].empty()); // layer-1 subdomain has no lower layers
  }

  SUBCASE("octants carry face and edge/vertex contact tags") {
    Setup s = make_setup(2, {2, 2, 2});
    s.topo = analyze_surface(*s.dec, 0);
    std::vector<double> a(8, 1e-3);
    a[0] = 1.0;
    a[7] = 1.0;
    const CoefficientField alpha(a);
    const MultilayerPartition part = multilayer_partition(s.topo, alpha);
    CHECK(layers_valid(part, s.topo, alpha));
    std::set<InterfaceClass> seen;
    const LayerIndexSets sets = layer_index_sets(part, s.topo);
    for (int k = 0; k < 8; ++k)
      for (const auto& layer : sets.lambda[static_cast<size_t>(k)])
        for (const LayerNeighbor& nb : layer) seen.insert(nb.contact);
    CHECK(seen.count(InterfaceClass::Face));
    CHECK((seen.count(InterfaceClass::Edge) || seen.count(InterfaceClass::Vertex)));
  }
}

TEST_CASE("star sets") {
  SUBCASE("no thorny features: star empty, complement everything") {
    const StarSets s = classify_star_sets({}, {}, 4);
    CHECK(s.star.empty());
    CHECK(s.complement == std::vector<int>{0, 1, 2, 3});
    CHECK(s.tilde_star.empty());
  }

  SUBCASE("checkerboard columns: star is the high pair, tilde star empty") {
    Setup s = make_setup(4, {2, 2, 1});
    s.topo = analyze_surface(*s.dec, 0);
    const CoefficientField alpha({1.0, 1e-4, 1e-4, 1.0});
    const StarSets stars =
        classify_star_sets(detect_thorny_vertices(s.topo, alpha), detect_thorny_edges(s.topo, alpha), 4);
    CHECK(stars.star == std::vector<int>{0, 3});
    CHECK(stars.complement == std::vector<int>{1, 2});
    CHECK(stars.tilde_star.empty());
  }

  SUBCASE("octant vertex: tilde star equals star equals the diagonal pair") {
    Setup s = make_setup(2, {2, 2, 2});
    s.topo = analyze_surface(*s.dec, 0);
    std::vector<double> a(8, 1e-4);
    a[0] = a[7] = 1.0;
    const CoefficientField alpha(a);
    const StarSets stars =
        classify_star_sets(detect_thorny_vertices(s.topo, alpha), detect_thorny_edges(s.topo, alpha), 8);
    CHECK(stars.star == std::vector<int>{0, 7});
    CHECK(stars.tilde_star == std::vector<int>{0, 7});
  }
}

TEST_CASE("detectors agree with the exhaustive brute-force oracle (two-level patterns)") {
  Setup s = make_setup(2, {2, 2, 2});
  s.topo = analyze_surface(*s.dec, 0);
  const testing::RawSurface raw = testing::build_raw_surface(*s.dec, 0);

  for (int pattern = 0; pattern < 256; ++pattern) {
    std::vector<double> a(8);
    for (int k = 0; k < 8; ++k) a[static_cast<size_t>(k)] = (pattern >> k) & 1 ? 1.0 : 1e-5;
    const CoefficientField alpha(a);

    const auto edges = detect_thorny_edges(s.topo, alpha);
    const auto vertices = detect_thorny_vertices(s.topo, alpha);
    const testing::OracleFindings oracle = testing::oracle_thorny(raw, s.topo, a);
    CHECK(testing::same_edge_findings(edges, oracle.edges));
    CHECK(testing::same_vertex_findings(vertices, oracle.vertices));

    CHECK(check_star_face_proposition(s.topo, alpha, edges).empty());
    const MultilayerPartition part = multilayer_partition(s.topo, alpha);
    CHECK(layers_valid(part, s.topo, alpha));
    CHECK(testing::oracle_layers_match(s.topo, alpha, part));
  }
}

TEST_CASE("monotone rescaling of alpha leaves the analysis unchanged") {
  Setup s = make_setup(2, {2, 2, 2});
  s.topo = analyze_surface(*s.dec, 0);
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(8);
    for (double& x : a) x = std::pow(10.0, -6.0 * (static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0)));
    // Strictly increasing map x -> x^3 preserves order and equalities.
    std::vector<double> b(8);
    for (int i = 0; i < 8; ++i)
      b[static_cast<size_t>(i)] = a[static_cast<size_t>(i)] * a[static_cast<size_t>(i)] * a[static_cast<size_t>(i)];

    const DistributionReport ra = analyze_distribution(s.topo, CoefficientField(a));
    const DistributionReport rb = analyze_distribution(s.topo, CoefficientField(b));
    CHECK(ra.verdict.quasi_monotone == rb.verdict.quasi_monotone);
    CHECK(testing::same_edge_findings(ra.thorny_edges, rb.thorny_edges));
    CHECK(testing::same_vertex_findings(ra.thorny_vertices, rb.thorny_vertices));
    CHECK(ra.stars.star == rb.stars.star);
    CHECK(ra.stars.tilde_star == rb.stars.tilde_star);
    CHECK(ra.layers.layers == rb.layers.layers);
    CHECK(layers_valid(rb.layers, s.topo, CoefficientField(b)));
  }
}

TEST_CASE("quasi-monotone L: merged subdomain produces no thorny features") {
  Setup s = make_setup(2, {2, 2, 1}, {{0, 1, 2}});
  s.topo = analyze_surface(*s.dec, 0);
  CHECK(s.dec->num_subdomains() == 2);
  const CoefficientField alpha({1.0, 1e-4});
  CHECK(is_quasi_monotone(s.topo, alpha).quasi_monotone);
  // Mirrored weights stay quasi-monotone: the L-to-box interface is a pair of
  // faces, each containing the reentrant edge in its closure.
  CHECK(is_quasi_monotone(s.topo, CoefficientField({1e-4, 1.0})).quasi_monotone);
}
