#include "wproj/coeff_analysis.hpp"

#include <algorithm>
#include <cmath>

#include "wproj/errors.hpp"

namespace wproj {

namespace {

bool piece_qualifies(const FacePiece& p, const CoefficientField& alpha, int k) {
  if (!p.involves(k)) return false;
  if (p.outer()) return true;
  const int other = p.sub_a == k ? p.sub_b : p.sub_a;
  return alpha[other] >= alpha[k];
}

bool contains_sorted(const std::vector<int>& v, int x) { return std::binary_search(v.begin(), v.end(), x); }

bool edge_in_sorted(const std::vector<EdgeKey>& v, const EdgeKey& e) {
  return std::binary_search(v.begin(), v.end(), e);
}

// Chain containment in S_k. Chains group mesh edges with identical incident
// pieces, so containment is uniform along the chain.
struct ChainStatus {
  bool in_upper = false;      // E lies in S_k
  bool in_face = false;       // E lies in the closure of a single face of S_k
};

ChainStatus chain_status(const SurfaceTopology& topo, const CoefficientField& alpha, const EdgeChain& chain, int k) {
  ChainStatus st;
  for (int pid : chain.incident_pieces) {
    const FacePiece& p = topo.pieces[static_cast<size_t>(pid)];
    if (piece_qualifies(p, alpha, k)) {
      st.in_face = true;
      st.in_upper = true;
      return st;
    }
  }
  // Degenerate contact: the chain may coincide with shared edges of a
  // qualifying pair (k, l) that has no face there.
  const EdgeKey& probe = chain.edges.front();
  for (int l = 0; l < alpha.size(); ++l) {
    if (l == k || alpha[l] < alpha[k]) continue;
    const InterfaceGeometry* geo = topo.interface(k, l);
    if (geo && edge_in_sorted(geo->shared_edges, probe)) {
      st.in_upper = true;
      return st;
    }
  }
  return st;
}

} // namespace

UpperIntersection upper_intersection(const SurfaceTopology& topo, const CoefficientField& alpha, int k) {
  UpperIntersection up;
  up.sub = k;
  for (int pid : topo.pieces_of_sub.at(static_cast<size_t>(k))) {
    const FacePiece& p = topo.pieces[static_cast<size_t>(pid)];
    if (!piece_qualifies(p, alpha, k)) continue;
    up.face_pieces.push_back(pid);
    up.faces.insert(up.faces.end(), p.tris.begin(), p.tris.end());
  }
  for (int l = 0; l < alpha.size(); ++l) {
    if (l == k || alpha[l] < alpha[k]) continue;
    const InterfaceGeometry* geo = topo.interface(k, l);
    if (!geo) continue;
    up.contact_edges.insert(up.contact_edges.end(), geo->shared_edges.begin(), geo->shared_edges.end());
    up.contact_vertices.insert(up.contact_vertices.end(), geo->shared_vertices.begin(), geo->shared_vertices.end());
  }
  std::sort(up.contact_edges.begin(), up.contact_edges.end());
  std::sort(up.contact_vertices.begin(), up.contact_vertices.end());
  return up;
}

std::vector<ThornyEdge> detect_thorny_edges(const SurfaceTopology& topo, const CoefficientField& alpha) {
  std::vector<ThornyEdge> out;
  for (const EdgeChain& chain : topo.chains) {
    ThornyEdge te;
    te.chain_id = chain.id;
    for (int k = 0; k < alpha.size(); ++k) {
      if (!topo.chain_is_edge_of(chain.id, k)) continue;
      te.owners.push_back(k);
      const ChainStatus st = chain_status(topo, alpha, chain, k);
      if (st.in_upper && !st.in_face) te.star.push_back(k);
    }
    if (te.star.empty()) continue;
    for (int k : te.owners)
      if (!contains_sorted(te.star, k)) te.complement.push_back(k);
    out.push_back(std::move(te));
  }
  return out;
}

std::vector<ThornyVertex> detect_thorny_vertices(const SurfaceTopology& topo, const CoefficientField& alpha) {
  std::vector<ThornyVertex> out;
  for (const VertexFeature& vf : topo.vertices) {
    ThornyVertex tv;
    tv.node = vf.node;
    tv.owners = vf.subdomains;
    for (int k : vf.subdomains) {
      bool in_face = false, in_edge = false, in_upper = false;
      for (int pid : topo.pieces_of_sub.at(static_cast<size_t>(k))) {
        const FacePiece& p = topo.pieces[static_cast<size_t>(pid)];
        if (piece_qualifies(p, alpha, k) && contains_sorted(p.nodes, vf.node)) {
          in_face = true;
          break;
        }
      }
      if (!in_face) {
        for (int l = 0; l < alpha.size() && !in_edge; ++l) {
          if (l == k || alpha[l] < alpha[k]) continue;
          const InterfaceGeometry* geo = topo.interface(k, l);
          if (!geo) continue;
          for (const EdgeKey& e : geo->shared_edges)
            if (e[0] == vf.node || e[1] == vf.node) {
              in_edge = true;
              break;
            }
          if (!in_upper && !geo->shared_vertices.empty() &&
              std::find(geo->shared_vertices.begin(), geo->shared_vertices.end(), vf.node) != geo->shared_vertices.end())
            in_upper = true;
        }
      }
      in_upper = in_upper || in_face || in_edge;
      if (in_upper && !in_face && !in_edge) tv.star.push_back(k);
    }
    if (tv.star.empty()) continue;
    for (int k : tv.owners)
      if (!contains_sorted(tv.star, k)) tv.complement.push_back(k);
    out.push_back(std::move(tv));
  }
  return out;
}

QuasiMonotoneVerdict is_quasi_monotone(const SurfaceTopology& topo, const CoefficientField& alpha) {
  QuasiMonotoneVerdict v;
  const auto edges = detect_thorny_edges(topo, alpha);
  if (!edges.empty()) {
    v.quasi_monotone = false;
    v.witness = "thorny edge (chain " + std::to_string(edges.front().chain_id) + ", witness subdomain " +
                std::to_string(edges.front().star.front()) + ")";
    return v;
  }
  const auto vertices = detect_thorny_vertices(topo, alpha);
  if (!vertices.empty()) {
    v.quasi_monotone = false;
    v.witness = "thorny vertex (node " + std::to_string(vertices.front().node) + ", witness subdomain " +
                std::to_string(vertices.front().star.front()) + ")";
  }
  return v;
}

namespace {

std::vector<std::vector<char>> adjacency_tables(const SurfaceTopology& topo, int nsub, bool face_only) {
  std::vector<std::vector<char>> adj(static_cast<size_t>(nsub), std::vector<char>(static_cast<size_t>(nsub), 0));
  for (const auto& [pr, geo] : topo.interfaces) {
    const bool any = geo.classification != InterfaceClass::Empty;
    const bool hit = face_only ? !geo.shared_faces.empty() : any;
    if (hit) {
      adj[static_cast<size_t>(pr.first)][static_cast<size_t>(pr.second)] = 1;
      adj[static_cast<size_t>(pr.second)][static_cast<size_t>(pr.first)] = 1;
    }
  }
  return adj;
}

} // namespace

MultilayerPartition multilayer_partition(const SurfaceTopology& topo, const CoefficientField& alpha) {
  const int nsub = alpha.size();
  const auto face_adj = adjacency_tables(topo, nsub, true);

  std::vector<int> order(static_cast<size_t>(nsub));
  for (int i = 0; i < nsub; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return alpha[a] != alpha[b] ? alpha[a] > alpha[b] : a < b;
  });

  MultilayerPartition part;
  part.layer_of.assign(static_cast<size_t>(nsub), 0);
  for (int k : order) {
    int lowest = 1;
    for (int l = 0; l < nsub; ++l)
      if (part.layer_of[static_cast<size_t>(l)] > 0 && face_adj[static_cast<size_t>(k)][static_cast<size_t>(l)] &&
          alpha[l] > alpha[k])
        lowest = std::max(lowest, part.layer_of[static_cast<size_t>(l)] + 1);
    int chosen = lowest;
    for (;; ++chosen) {
      bool blocked = false;
      if (chosen <= static_cast<int>(part.layers.size()))
        for (int l : part.layers[static_cast<size_t>(chosen - 1)])
          if (face_adj[static_cast<size_t>(k)][static_cast<size_t>(l)]) {
            blocked = true;
            break;
          }
      if (!blocked) break;
    }
    if (chosen > static_cast<int>(part.layers.size())) part.layers.resize(static_cast<size_t>(chosen));
    part.layers[static_cast<size_t>(chosen - 1)].push_back(k);
    part.layer_of[static_cast<size_t>(k)] = chosen;
  }
  for (auto& layer : part.layers) std::sort(layer.begin(), layer.end());
  return part;
}

bool layers_valid(const MultilayerPartition& layers, const SurfaceTopology& topo, const CoefficientField& alpha) {
  const int nsub = alpha.size();
  const auto face_adj = adjacency_tables(topo, nsub, true);
  for (const auto& layer : layers.layers)
    for (size_t a = 0; a < layer.size(); ++a)
      for (size_t b = a + 1; b < layer.size(); ++b)
        if (face_adj[static_cast<size_t>(layer[a])][static_cast<size_t>(layer[b])]) return false;
  for (int k = 0; k < nsub; ++k)
    for (int l = 0; l < nsub; ++l)
      if (face_adj[static_cast<size_t>(k)][static_cast<size_t>(l)] &&
          layers.layer_of[static_cast<size_t>(k)] < layers.layer_of[static_cast<size_t>(l)] && alpha[k] < alpha[l])
        return false;
  return true;
}

LayerIndexSets layer_index_sets(const MultilayerPartition& layers, const SurfaceTopology& topo) {
  const int nsub = static_cast<int>(layers.layer_of.size());
  LayerIndexSets out;
  out.lambda.assign(static_cast<size_t>(nsub), {});
  for (int k = 0; k < nsub; ++k) {
    const int nk = layers.layer_of[static_cast<size_t>(k)];
    out.lambda[static_cast<size_t>(k)].assign(static_cast<size_t>(std::max(0, nk - 1)), {});
    for (int l = 0; l < nsub; ++l) {
      if (l == k) continue;
      const int nl = layers.layer_of[static_cast<size_t>(l)];
      if (nl >= nk) continue;
      const InterfaceGeometry* geo = topo.interface(k, l);
      if (!geo || geo->classification == InterfaceClass::Empty) continue;
      out.lambda[static_cast<size_t>(k)][static_cast<size_t>(nl - 1)].push_back({l, geo->classification});
    }
  }
  return out;
}

StarSets classify_star_sets(const std::vector<ThornyVertex>& vertices, const std::vector<ThornyEdge>& edges,
                            int num_subdomains) {
  std::vector<char> in_star(static_cast<size_t>(num_subdomains), 0);
  std::vector<char> in_tilde(static_cast<size_t>(num_subdomains), 0);
  for (const ThornyVertex& tv : vertices)
    for (int k : tv.star) {
      in_star[static_cast<size_t>(k)] = 1;
      in_tilde[static_cast<size_t>(k)] = 1;
    }
  for (const ThornyEdge& te : edges)
    for (int k : te.star) in_star[static_cast<size_t>(k)] = 1;

  StarSets s;
  for (int k = 0; k < num_subdomains; ++k) {
    if (in_star[static_cast<size_t>(k)])
      s.star.push_back(k);
    else
      s.complement.push_back(k);
    if (in_tilde[static_cast<size_t>(k)]) s.tilde_star.push_back(k);
  }
  return s;
}

DistributionReport analyze_distribution(const SurfaceTopology& topo, const CoefficientField& alpha) {
  DistributionReport rep;
  rep.thorny_edges = detect_thorny_edges(topo, alpha);
  rep.thorny_vertices = detect_thorny_vertices(topo, alpha);
  if (!rep.thorny_edges.empty()) {
    rep.verdict.quasi_monotone = false;
    rep.verdict.witness = "thorny edge (chain " + std::to_string(rep.thorny_edges.front().chain_id) + ")";
  } else if (!rep.thorny_vertices.empty()) {
    rep.verdict.quasi_monotone = false;
    rep.verdict.witness = "thorny vertex (node " + std::to_string(rep.thorny_vertices.front().node) + ")";
  }
  rep.layers = multilayer_partition(topo, alpha);
  rep.lambda = layer_index_sets(rep.layers, topo);
  rep.stars = classify_star_sets(rep.thorny_vertices, rep.thorny_edges, alpha.size());
  return rep;
}

std::string check_star_face_proposition(const SurfaceTopology& topo, const CoefficientField& alpha,
                                        const std::vector<ThornyEdge>& edges) {
  for (const ThornyEdge& te : edges) {
    const EdgeChain& chain = topo.chains[static_cast<size_t>(te.chain_id)];
    for (int r : te.star)
      for (int l : te.owners) {
        if (l == r) continue;
        bool shares_face_with_E = false;
        for (int pid : chain.incident_pieces) {
          const FacePiece& p = topo.pieces[static_cast<size_t>(pid)];
          if (!p.outer() && ((p.sub_a == r && p.sub_b == l) || (p.sub_a == l && p.sub_b == r))) {
            shares_face_with_E = true;
            break;
          }
        }
        if (!shares_face_with_E) continue;
        if (contains_sorted(te.star, l))
          return "chain " + std::to_string(te.chain_id) + ": subdomain " + std::to_string(l) +
                 " shares a face with star member " + std::to_string(r) + " but is itself in the star";
        if (!(alpha[l] < alpha[r]))
          return "chain " + std::to_string(te.chain_id) + ": face neighbor " + std::to_string(l) +
                 " of star member " + std::to_string(r) + " has alpha_l >= alpha_r";
      }
  }
  return {};
}

} // namespace wproj
