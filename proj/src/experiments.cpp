#include "wproj/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "wproj/errors.hpp"

namespace wproj {

namespace {

using ordered_json = nlohmann::ordered_json;

double smoothstep(double t) {
  t = std::min(1.0, std::max(0.0, t));
  return t * t * (3.0 - 2.0 * t);
}

std::function<double(const Vec3&)> test_function(const std::string& id) {
  if (id == "sine")
    return [](const Vec3& p) { return std::sin(M_PI * p.x) * std::sin(M_PI * p.y) * std::sin(M_PI * p.z); };
  if (id == "bubble_exp")
    return [](const Vec3& p) {
      return 64.0 * p.x * (1.0 - p.x) * p.y * (1.0 - p.y) * p.z * (1.0 - p.z) * std::exp(p.x + p.y + p.z);
    };
  if (id == "edge_spin")
    // Concentrated around the central vertical line: opposite signs in the
    // two diagonal quadrants x,y < 1/2 and x,y >= 1/2, the angular transition
    // routed through the off-diagonal quadrants, plus smooth high-energy
    // ballast bubbles inside the off-diagonal quadrants. Exposes the
    // checkerboard obstruction that smooth inputs cannot see.
    return [](const Vec3& p) {
      const double dx = p.x - 0.5, dy = p.y - 0.5;
      const double rho = std::sqrt(dx * dx + dy * dy);
      const double rho0 = 0.4;
      double core = 0.0;
      if (rho < rho0) {
        const double radial = smoothstep((rho0 - rho) / rho0);
        const double theta = std::atan2(dy, dx); // quadrant x,y >= 1/2: (0, pi/2); x,y < 1/2: (-pi, -pi/2)
        const double q = M_PI / 2.0;
        const double margin = 0.35; // flat fraction of each transition quadrant
        double g;
        if (theta >= 0.0 && theta <= q)
          g = 1.0;
        else if (theta <= -q)
          g = -1.0;
        else if (theta > -q && theta < 0.0)
          g = -1.0 + 2.0 * smoothstep((theta / q + 1.0 - margin) / (1.0 - 2.0 * margin));
        else
          g = 1.0 - 2.0 * smoothstep(((theta - q) / q - margin) / (1.0 - 2.0 * margin));
        core = radial * g;
      }
      auto bubble = [](double s, double t) { // smoothest bubble on [0, 1/2]^2
        return std::sin(2.0 * M_PI * s) * std::sin(2.0 * M_PI * t);
      };
      double ballast = 0.0;
      if (p.x >= 0.5 && p.y < 0.5) ballast = bubble(p.x - 0.5, p.y);
      if (p.x < 0.5 && p.y >= 0.5) ballast = -bubble(p.x, p.y - 0.5);
      return (core + 9.0 * ballast) * std::sin(M_PI * p.z);
    };
  throw ConfigError("unknown test function '" + id + "'");
}

template <typename Fn>
void parallel_for(int cells, Fn&& body) {
  const int workers = worker_count(cells);
  if (workers <= 1) {
    for (int i = 0; i < cells; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= cells) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

char* format_double(char* buf, size_t n, double v) {
  std::snprintf(buf, n, "%.17g", v);
  return buf;
}

} // namespace

int worker_count(int cells) {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap <= 0) cap = 1;
  if (const char* env = std::getenv("WPROJ_THREADS")) {
    const int requested = std::atoi(env);
    if (requested > 0) cap = requested;
  }
  return std::max(1, std::min(cap, cells));
}

DistributionSpec make_distribution(const std::string& kind, double eps) {
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  DistributionSpec spec;
  spec.name = kind;
  if (kind == "monotone_stack") {
    spec.boxes.grid = {1, 1, 4};
    spec.alpha_cells = {1.0, std::pow(eps, 1.0 / 3.0), std::pow(eps, 2.0 / 3.0), eps};
  } else if (kind == "checkerboard_columns") {
    spec.boxes.grid = {2, 2, 1};
    spec.alpha_cells = {1.0, eps, eps, 1.0};
  } else if (kind == "octant_vertex") {
    spec.boxes.grid = {2, 2, 2};
    spec.alpha_cells = {1.0, eps, eps, eps, eps, eps, eps, 1.0};
  } else if (kind == "quasi_monotone_L") {
    spec.boxes.grid = {2, 2, 1};
    spec.boxes.merge_groups = {{0, 1, 2}};
    spec.alpha_cells = {1.0, 1.0, 1.0, eps};
  } else {
    throw ConfigError("unknown distribution kind '" + kind + "'");
  }
  return spec;
}

int ExperimentConfig::effective_surrogate() const {
  if (surrogate_level >= 0) return surrogate_level;
  return std::min(refine_levels, fine_level + 2);
}

std::vector<int> ExperimentConfig::effective_d_levels() const {
  return d_levels.empty() ? std::vector<int>{coarse_level} : d_levels;
}

namespace {

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    if (j.contains("distribution")) cfg.distribution = j["distribution"].get<std::string>();
    if (j.contains("coarse_n")) cfg.coarse_n = j["coarse_n"].get<int>();
    if (j.contains("refine_levels")) cfg.refine_levels = j["refine_levels"].get<int>();
    if (j.contains("coarse_level")) cfg.coarse_level = j["coarse_level"].get<int>();
    if (j.contains("fine_level")) cfg.fine_level = j["fine_level"].get<int>();
    if (j.contains("surrogate_level")) cfg.surrogate_level = j["surrogate_level"].get<int>();
    if (j.contains("d_levels")) cfg.d_levels = j["d_levels"].get<std::vector<int>>();
    if (j.contains("eps")) cfg.eps_list = j["eps"].get<std::vector<double>>();
    if (j.contains("test_function")) cfg.test_function = j["test_function"].get<std::string>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("solver_rel_tol")) cfg.solver_rel_tol = j["solver_rel_tol"].get<double>();
    if (j.contains("eig_rel_tol")) cfg.eig_rel_tol = j["eig_rel_tol"].get<double>();
    if (j.contains("perturb")) {
      PerturbSpec p;
      p.seed = j["perturb"].value("seed", 0ull);
      p.amplitude = j["perturb"].value("amplitude", 0);
      cfg.perturb = p;
    }
    if (j.contains("grid")) {
      BoxGridSpec boxes;
      const auto g = j["grid"].get<std::vector<int>>();
      if (g.size() != 3) throw ConfigError("grid must have three entries");
      boxes.grid = {g[0], g[1], g[2]};
      if (j.contains("merge")) boxes.merge_groups = j["merge"].get<std::vector<std::vector<int>>>();
      cfg.custom_boxes = boxes;
      if (j.contains("alpha")) cfg.custom_alpha_cells = j["alpha"].get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  if (cfg.coarse_n < 1) throw ConfigError("coarse_n must be >= 1");
  if (cfg.refine_levels < 0) throw ConfigError("refine_levels must be >= 0");
  if (cfg.fine_level > cfg.refine_levels || cfg.coarse_level > cfg.fine_level)
    throw ConfigError("levels must satisfy coarse <= fine <= refine_levels");
  if (cfg.effective_surrogate() < cfg.fine_level) throw ConfigError("surrogate level must be >= fine level");
  for (double e : cfg.eps_list)
    if (!(e > 0.0)) throw ConfigError("eps entries must be positive");
  return cfg;
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse failure: ") + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ExperimentRunner::ExperimentRunner(const ExperimentConfig& cfg) : cfg_(cfg) {
  if (cfg_.distribution == "custom") {
    if (!cfg_.custom_boxes) throw ConfigError("custom distribution requires a grid");
    spec_.name = "custom";
    spec_.boxes = *cfg_.custom_boxes;
    spec_.alpha_cells = cfg_.custom_alpha_cells;
  } else {
    spec_ = make_distribution(cfg_.distribution, cfg_.eps_list.empty() ? 1.0 : cfg_.eps_list.front());
  }
  hierarchy_ = std::make_unique<MeshHierarchy>(MeshHierarchy::build(cfg_.coarse_n, cfg_.refine_levels));
  dec_ = std::make_unique<SubdomainDecomposition>(SubdomainDecomposition::build(*hierarchy_, spec_.boxes));
  if (cfg_.perturb && cfg_.perturb->amplitude > 0)
    *dec_ = perturb_subdomain_boundary(*dec_, cfg_.fine_level, cfg_.perturb->seed, cfg_.perturb->amplitude);
  topo_ = analyze_surface(*dec_, 0);
}

CoefficientField ExperimentRunner::coefficients(double eps) const {
  std::vector<double> cells;
  if (cfg_.distribution == "custom") {
    cells = cfg_.custom_alpha_cells;
    if (cells.empty()) throw ConfigError("custom distribution requires per-cell alpha");
  } else {
    cells = make_distribution(cfg_.distribution, eps).alpha_cells;
  }
  const auto& c2s = dec_->cell_to_subdomain();
  if (cells.size() != c2s.size()) throw ConfigError("alpha list does not match the grid");
  std::vector<double> alpha(static_cast<size_t>(dec_->num_subdomains()), -1.0);
  for (size_t c = 0; c < cells.size(); ++c) {
    double& a = alpha[static_cast<size_t>(c2s[c])];
    if (a < 0.0)
      a = cells[c];
    else if (a != cells[c])
      throw ConfigError("merged cells carry different alpha values");
  }
  return CoefficientField(alpha);
}

FEFunction ExperimentRunner::surrogate_input() const {
  const int s_level = cfg_.effective_surrogate();
  const FeSpace space = FeSpace::h10((*hierarchy_)[s_level]);
  return interpolate(test_function(cfg_.test_function), space);
}

ConvergenceRecord ExperimentRunner::projection_cell(double eps, int d_level) const {
  const int s_level = cfg_.effective_surrogate();
  if (d_level >= s_level) throw ConfigError("projection cell needs d_level < surrogate level");
  const MeshHierarchy& hier = *hierarchy_;
  const CoefficientField alpha = coefficients(eps);

  const FeSpace coarse = FeSpace::h10(hier[d_level]);
  const FeSpace fine = FeSpace::h10(hier[s_level]);
  const SparseMatrix p_free = restrict_prolongation(hier.prolongation_all_nodes(d_level, s_level), coarse, fine);
  const SparseMatrix m_fine = assemble_mass_weighted(hier[s_level], fine, *dec_, alpha);

  const FEFunction u = interpolate(test_function(cfg_.test_function), fine);
  FEFunction qu = weighted_l2_project(u, p_free, m_fine, cfg_.solver_rel_tol);
  qu.level_index = d_level;

  std::vector<double> diff = p_free.apply(qu.values);
  for (size_t i = 0; i < diff.size(); ++i) diff[i] = u.values[i] - diff[i];
  const double error = std::sqrt(std::max(0.0, dot(diff, m_fine.apply(diff))));

  const NormReport nr = norms(u, fine, *dec_, alpha);
  const StarSets stars = classify_star_sets(detect_thorny_vertices(topo_, alpha), detect_thorny_edges(topo_, alpha),
                                            dec_->num_subdomains());

  ConvergenceRecord rec;
  rec.distribution = spec_.name;
  rec.eps = eps;
  rec.d = hier[d_level].mesh_size;
  rec.h = hier[s_level].mesh_size;
  rec.error = error;
  rec.seminorm = nr.h1_semi_alpha;

  auto split = [&](const std::vector<int>& star_set, double& full_star, double& semi_nonstar) {
    full_star = 0.0;
    semi_nonstar = 0.0;
    std::vector<char> in_star(static_cast<size_t>(dec_->num_subdomains()), 0);
    for (int k : star_set) in_star[static_cast<size_t>(k)] = 1;
    for (int k = 0; k < dec_->num_subdomains(); ++k) {
      const double full_sq = nr.sub_h1_full[static_cast<size_t>(k)] * nr.sub_h1_full[static_cast<size_t>(k)];
      const double semi_sq = nr.sub_h1_semi[static_cast<size_t>(k)] * nr.sub_h1_semi[static_cast<size_t>(k)];
      if (in_star[static_cast<size_t>(k)])
        full_star += alpha[k] * full_sq;
      else
        semi_nonstar += alpha[k] * semi_sq;
    }
  };
  split(stars.star, rec.fullnorm_star, rec.seminorm_nonstar);
  split(stars.tilde_star, rec.fullnorm_tilde, rec.seminorm_nontilde);

  const double H = dec_->subdomain_diameter();
  rec.log_H_d = std::log(H / rec.d);
  rec.log_H_h = std::log(H / rec.h);

  if (rec.seminorm > 0.0) {
    rec.ratio_thm1 = rec.error / (rec.d * rec.seminorm);
    if (rec.log_H_d > 0.0 && rec.log_H_h > 0.0)
      rec.ratio_thm2 = rec.error / (rec.d * std::sqrt(rec.log_H_d * rec.log_H_h) * rec.seminorm);
  }
  {
    const double den3 = rec.d * rec.d * (rec.log_H_d * rec.fullnorm_star + rec.seminorm_nonstar);
    if (den3 > 0.0) rec.ratio_thm3 = rec.error * rec.error / den3;
    const double den4 =
        rec.d * rec.d * rec.log_H_d * rec.log_H_h * (rec.fullnorm_tilde + rec.seminorm_nontilde);
    if (den4 > 0.0) rec.ratio_thm4 = rec.error * rec.error / den4;
  }
  return rec;
}

ConvergenceRecord ExperimentRunner::opnorm_cell(double eps) const {
  const MeshHierarchy& hier = *hierarchy_;
  const CoefficientField alpha = coefficients(eps);
  const int c = cfg_.coarse_level, f = cfg_.fine_level;

  ConvergenceRecord rec;
  rec.distribution = spec_.name;
  rec.eps = eps;
  rec.d = hier[c].mesh_size;
  rec.h = hier[f].mesh_size;
  const double H = dec_->subdomain_diameter();
  rec.log_H_d = std::log(H / rec.d);
  rec.log_H_h = std::log(H / rec.h);
  rec.error = std::numeric_limits<double>::quiet_NaN();
  rec.seminorm = std::numeric_limits<double>::quiet_NaN();
  rec.fullnorm_star = std::numeric_limits<double>::quiet_NaN();
  rec.seminorm_nonstar = std::numeric_limits<double>::quiet_NaN();
  rec.fullnorm_tilde = std::numeric_limits<double>::quiet_NaN();
  rec.seminorm_nontilde = std::numeric_limits<double>::quiet_NaN();

  if (c == f) {
    rec.opnorm = 0.0;
    return rec;
  }
  const FeSpace coarse = FeSpace::h10(hier[c]);
  const FeSpace fine = FeSpace::h10(hier[f]);
  const SparseMatrix p_free = restrict_prolongation(hier.prolongation_all_nodes(c, f), coarse, fine);
  const SparseMatrix m_fine = assemble_mass_weighted(hier[f], fine, *dec_, alpha);
  const SparseMatrix a_fine = assemble_stiffness_weighted(hier[f], fine, *dec_, alpha);
  rec.opnorm = projection_error_operator_norm(p_free, m_fine, a_fine, cfg_.eig_rel_tol);
  return rec;
}

AuxiliaryResult ExperimentRunner::auxiliary_cell(double eps, int d_level) const {
  const CoefficientField alpha = coefficients(eps);
  const MultilayerPartition layers = multilayer_partition(topo_, alpha);
  const FEFunction u = surrogate_input();
  return build_auxiliary_function(*hierarchy_, *dec_, alpha, layers, u, d_level, cfg_.effective_surrogate(),
                                  cfg_.solver_rel_tol);
}

SweepResult ExperimentRunner::jump_sweep() const {
  const std::vector<int> d_levels = cfg_.effective_d_levels();
  const int ne = static_cast<int>(cfg_.eps_list.size());
  const int cells = ne * static_cast<int>(d_levels.size());

  SweepResult out;
  out.records.resize(static_cast<size_t>(cells));
  parallel_for(cells, [&](int i) {
    const int di = i / ne, ei = i % ne;
    out.records[static_cast<size_t>(i)] = projection_cell(cfg_.eps_list[static_cast<size_t>(ei)], d_levels[static_cast<size_t>(di)]);
  });

  for (size_t di = 0; di < d_levels.size(); ++di) {
    SweepVerdict v;
    v.d_level = d_levels[di];
    std::vector<double> log_eps, log_ratio;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int ei = 0; ei < ne; ++ei) {
      const ConvergenceRecord& r = out.records[di * static_cast<size_t>(ne) + static_cast<size_t>(ei)];
      if (!std::isfinite(r.ratio_thm1) || r.ratio_thm1 <= 0.0) continue;
      lo = std::min(lo, r.ratio_thm1);
      hi = std::max(hi, r.ratio_thm1);
      log_eps.push_back(std::log(r.eps));
      log_ratio.push_back(std::log(r.ratio_thm1));
    }
    v.max_over_min = (lo > 0.0 && std::isfinite(lo)) ? hi / lo : 0.0;
    v.verdict = (v.max_over_min > 0.0 && v.max_over_min <= 4.0) ? "uniform" : "growing";
    const LineFit fit = fit_line(log_eps, log_ratio);
    v.fitted_exponent = fit.slope;
    out.verdicts.push_back(v);
  }
  return out;
}

std::vector<ConvergenceRecord> ExperimentRunner::opnorm_sweep() const {
  std::vector<ConvergenceRecord> records(cfg_.eps_list.size());
  parallel_for(static_cast<int>(cfg_.eps_list.size()),
               [&](int i) { records[static_cast<size_t>(i)] = opnorm_cell(cfg_.eps_list[static_cast<size_t>(i)]); });
  return records;
}

DistributionReport ExperimentRunner::analyze(double eps) const {
  return analyze_distribution(topo_, coefficients(eps));
}

AuxiliaryResult build_auxiliary_function(const MeshHierarchy& hierarchy, const SubdomainDecomposition& dec,
                                         const CoefficientField& alpha, const MultilayerPartition& layers,
                                         const FEFunction& u_surrogate, int d_level, int s_level, double rel_tol) {
  const MeshLevel& cmesh = hierarchy[d_level];
  const MeshLevel& smesh = hierarchy[s_level];
  const FeSpace coarse = FeSpace::h10(cmesh);
  const FeSpace fine = FeSpace::h10(smesh);
  const SparseMatrix p_free = restrict_prolongation(hierarchy.prolongation_all_nodes(d_level, s_level), coarse, fine);
  const int nsub = dec.num_subdomains();

  // Local L2 projections u_{d,k}: coarse Gram on the subdomain's coarse tets
  // against moments of u over the subdomain.
  std::vector<std::vector<int>> sub_dofs(static_cast<size_t>(nsub));     // coarse free dofs per sub
  std::vector<std::vector<double>> sub_proj(static_cast<size_t>(nsub));  // solved coefficients
  for (int k = 0; k < nsub; ++k) {
    const std::vector<int> ctets = dec.tets_of(k, d_level);
    std::vector<int> node_to_dof(static_cast<size_t>(cmesh.num_vertices()), -1);
    std::vector<int>& dofs = sub_dofs[static_cast<size_t>(k)];
    for (int t : ctets)
      for (int v : cmesh.tets[static_cast<size_t>(t)]) {
        const int fr = coarse.node_to_free[static_cast<size_t>(v)];
        if (fr >= 0 && node_to_dof[static_cast<size_t>(v)] < 0) {
          node_to_dof[static_cast<size_t>(v)] = static_cast<int>(dofs.size());
          dofs.push_back(fr);
        }
      }
    if (dofs.empty()) continue;

    std::vector<double> ones(ctets.size(), 1.0);
    const SparseMatrix gram = assemble_p1(cmesh, ctets, ones, node_to_dof, static_cast<int>(dofs.size()), false);

    const std::vector<int> stets = dec.tets_of(k, s_level);
    std::vector<double> sones(stets.size(), 1.0);
    const SparseMatrix m_s_k = assemble_p1(smesh, stets, sones, fine.node_to_free, fine.num_free(), false);
    const std::vector<double> b_full = p_free.apply_transpose(m_s_k.apply(u_surrogate.values));
    std::vector<double> rhs(dofs.size());
    for (size_t i = 0; i < dofs.size(); ++i) rhs[i] = b_full[static_cast<size_t>(dofs[i])];

    cg_solve(gram, rhs, sub_proj[static_cast<size_t>(k)], {rel_tol, 0});
  }

  // Node ownership: every coarse free node takes the projection of the
  // lowest-layer (ties: lowest id) subdomain whose closure contains it.
  AuxiliaryResult res;
  res.u_d.level_index = d_level;
  res.u_d.tag = SpaceTag::Coarse;
  res.u_d.values.assign(static_cast<size_t>(coarse.num_free()), 0.0);
  res.provenance_owner.assign(static_cast<size_t>(coarse.num_free()), -1);
  res.provenance_own.assign(static_cast<size_t>(coarse.num_free()), 0);

  std::vector<std::vector<int>> owners(static_cast<size_t>(coarse.num_free()));
  for (int k = 0; k < nsub; ++k)
    for (int dof : sub_dofs[static_cast<size_t>(k)]) owners[static_cast<size_t>(dof)].push_back(k);
  for (int fr = 0; fr < coarse.num_free(); ++fr) {
    const auto& cands = owners[static_cast<size_t>(fr)];
    if (cands.empty()) throw std::logic_error("free coarse node owned by no subdomain");
    int best = cands.front();
    for (int k : cands)
      if (layers.layer_of[static_cast<size_t>(k)] < layers.layer_of[static_cast<size_t>(best)] ||
          (layers.layer_of[static_cast<size_t>(k)] == layers.layer_of[static_cast<size_t>(best)] && k < best))
        best = k;
    const auto& dofs = sub_dofs[static_cast<size_t>(best)];
    const auto it = std::find(dofs.begin(), dofs.end(), fr);
    res.u_d.values[static_cast<size_t>(fr)] = sub_proj[static_cast<size_t>(best)][static_cast<size_t>(it - dofs.begin())];
    res.provenance_owner[static_cast<size_t>(fr)] = best;
    res.provenance_own[static_cast<size_t>(fr)] = cands.size() == 1 ? 1 : 0;
  }

  // Diagnostic ||u - u_d||_{L2_alpha} on the surrogate level.
  const SparseMatrix m_fine = assemble_mass_weighted(smesh, fine, dec, alpha);
  std::vector<double> diff = p_free.apply(res.u_d.values);
  for (size_t i = 0; i < diff.size(); ++i) diff[i] = u_surrogate.values[i] - diff[i];
  res.err_l2_alpha = std::sqrt(std::max(0.0, dot(diff, m_fine.apply(diff))));

  const NormReport nr = norms(u_surrogate, fine, dec, alpha);
  const double d = cmesh.mesh_size;
  if (nr.h1_semi_alpha > 0.0)
    res.ratio = res.err_l2_alpha * res.err_l2_alpha / (d * d * nr.h1_semi_alpha * nr.h1_semi_alpha);
  return res;
}

namespace {

void append_csv_field(std::string& out, double v) {
  if (std::isfinite(v)) {
    char buf[40];
    out += format_double(buf, sizeof(buf), v);
  }
}

} // namespace

std::string records_to_csv(const std::vector<ConvergenceRecord>& records) {
  if (records.empty()) throw ConfigError("no records to emit");
  std::string out = "distribution,eps,d,h,error,seminorm,fullnorm_star,ratio_thm1,ratio_thm2,ratio_thm3,ratio_thm4,opnorm\n";
  for (const ConvergenceRecord& r : records) {
    out += r.distribution;
    const double fields[] = {r.eps, r.d, r.h, r.error, r.seminorm, r.fullnorm_star,
                             r.ratio_thm1, r.ratio_thm2, r.ratio_thm3, r.ratio_thm4, r.opnorm};
    for (double f : fields) {
      out += ',';
      append_csv_field(out, f);
    }
    out += '\n';
  }
  return out;
}

namespace {

ordered_json record_to_json_obj(const ConvergenceRecord& r) {
  auto num = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
  ordered_json o;
  o["distribution"] = r.distribution;
  o["eps"] = num(r.eps);
  o["d"] = num(r.d);
  o["h"] = num(r.h);
  o["error"] = num(r.error);
  o["seminorm"] = num(r.seminorm);
  o["fullnorm_star"] = num(r.fullnorm_star);
  o["ratio_thm1"] = num(r.ratio_thm1);
  o["ratio_thm2"] = num(r.ratio_thm2);
  o["ratio_thm3"] = num(r.ratio_thm3);
  o["ratio_thm4"] = num(r.ratio_thm4);
  o["opnorm"] = num(r.opnorm);
  return o;
}

} // namespace

std::string records_to_json(const std::vector<ConvergenceRecord>& records) {
  if (records.empty()) throw ConfigError("no records to emit");
  ordered_json arr = ordered_json::array();
  for (const ConvergenceRecord& r : records) arr.push_back(record_to_json_obj(r));
  return arr.dump(2) + "\n";
}

std::vector<ConvergenceRecord> parse_records_json(const std::string& text) {
  ordered_json arr;
  try {
    arr = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("record parse failure: ") + e.what());
  }
  std::vector<ConvergenceRecord> out;
  auto num = [](const ordered_json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  for (const auto& o : arr) {
    ConvergenceRecord r;
    r.distribution = o.at("distribution").get<std::string>();
    r.eps = num(o.at("eps"));
    r.d = num(o.at("d"));
    r.h = num(o.at("h"));
    r.error = num(o.at("error"));
    r.seminorm = num(o.at("seminorm"));
    r.fullnorm_star = num(o.at("fullnorm_star"));
    r.ratio_thm1 = num(o.at("ratio_thm1"));
    r.ratio_thm2 = num(o.at("ratio_thm2"));
    r.ratio_thm3 = num(o.at("ratio_thm3"));
    r.ratio_thm4 = num(o.at("ratio_thm4"));
    r.opnorm = num(o.at("opnorm"));
    out.push_back(std::move(r));
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << content;
  if (!out) throw std::runtime_error("write failure on " + path);
}

std::string distribution_report_to_json(const DistributionReport& report) {
  ordered_json o;
  o["quasi_monotone"] = report.verdict.quasi_monotone;
  o["witness"] = report.verdict.witness;
  {
    ordered_json arr = ordered_json::array();
    for (const ThornyVertex& tv : report.thorny_vertices) {
      ordered_json v;
      v["node"] = tv.node;
      v["owners"] = tv.owners;
      v["star"] = tv.star;
      v["complement"] = tv.complement;
      arr.push_back(v);
    }
    o["thorny_vertices"] = arr;
  }
  {
    ordered_json arr = ordered_json::array();
    for (const ThornyEdge& te : report.thorny_edges) {
      ordered_json v;
      v["chain"] = te.chain_id;
      v["owners"] = te.owners;
      v["star"] = te.star;
      v["complement"] = te.complement;
      arr.push_back(v);
    }
    o["thorny_edges"] = arr;
  }
  o["num_layers"] = report.layers.m();
  o["layers"] = report.layers.layers;
  o["star_set"] = report.stars.star;
  o["complement_set"] = report.stars.complement;
  o["tilde_star_set"] = report.stars.tilde_star;
  return o.dump(2) + "\n";
}

std::string distribution_report_summary(const DistributionReport& report, const CoefficientField& alpha) {
  std::ostringstream os;
  os << "subdomains: " << alpha.size() << "\n";
  os << "quasi-monotone: " << (report.verdict.quasi_monotone ? "yes" : "no");
  if (!report.verdict.quasi_monotone) os << "  [" << report.verdict.witness << "]";
  os << "\n";
  os << "thorny edges: " << report.thorny_edges.size() << ", thorny vertices: " << report.thorny_vertices.size()
     << "\n";
  os << "layers (m = " << report.layers.m() << "):";
  for (int l = 0; l < report.layers.m(); ++l) {
    os << "  Sigma_" << (l + 1) << " = {";
    const auto& layer = report.layers.layers[static_cast<size_t>(l)];
    for (size_t i = 0; i < layer.size(); ++i) os << (i ? "," : "") << layer[i];
    os << "}";
  }
  os << "\n";
  os << "star set size: " << report.stars.star.size() << ", tilde star size: " << report.stars.tilde_star.size()
     << "\n";
  return os.str();
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  const size_t n = x.size();
  if (n < 2) return f;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) return f;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  double res = 0, mag = 0;
  for (size_t i = 0; i < n; ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    res += e * e;
    mag += y[i] * y[i];
  }
  f.rel_residual = mag > 0 ? std::sqrt(res / mag) : 0.0;
  return f;
}

LineFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  double sxx = 0, sxy = 0, mag = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    mag += y[i] * y[i];
  }
  if (sxx == 0.0) return f;
  f.slope = sxy / sxx;
  double res = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - f.slope * x[i];
    res += e * e;
  }
  f.rel_residual = mag > 0 ? std::sqrt(res / mag) : 0.0;
  return f;
}

LemmaTable run_lemma(const std::string& kind, int levels, std::uint64_t seed, int base_n, double eig_rel_tol,
                     int slicing_samples) {
  if (levels < 1) throw ConfigError("lemma sweep needs at least one level");
  const MeshHierarchy hier = MeshHierarchy::build(base_n, levels - 1);
  BoxGridSpec whole;
  const SubdomainDecomposition dec = SubdomainDecomposition::build(hier, whole);

  LemmaTable table;
  table.kind = kind;
  std::vector<double> xs, ys;
  for (int li = 0; li < levels; ++li) {
    const PolyhedronRegion region = extract_region(dec, li, 0);
    const SurfaceTopology topo = analyze_surface(dec, li);
    const MeshLevel& mesh = hier[li];

    // Fixed features of the cube: the edge from (0,0,0) to (1,0,0) and the
    // face on the x = 0 side.
    const EdgeChain* edge = nullptr;
    for (const EdgeChain& c : topo.chains) {
      const Vec3 a = mesh.vertices[static_cast<size_t>(c.endpoints[0])];
      const Vec3 b = mesh.vertices[static_cast<size_t>(c.endpoints[1])];
      const bool fwd = norm(a - Vec3{0, 0, 0}) < 1e-12 && norm(b - Vec3{1, 0, 0}) < 1e-12;
      const bool rev = norm(b - Vec3{0, 0, 0}) < 1e-12 && norm(a - Vec3{1, 0, 0}) < 1e-12;
      if (fwd || rev) {
        edge = &c;
        break;
      }
    }
    const FacePiece* face = nullptr;
    for (const FacePiece& p : topo.pieces)
      if (p.sub_b == -1) {
        face = &p;
        break;
      }
    if (!edge || !face) throw std::logic_error("cube features not found");
    if (!is_lipschitz(edge->delta_e, mesh.mesh_size) || !is_lipschitz(face->delta_f, mesh.mesh_size))
      throw ConfigError("lemma sweep: selected feature is not a Lipschitz edge/face");

    LemmaRow row;
    row.h = mesh.mesh_size;
    row.log_H_h = std::log(region.diameter / mesh.mesh_size);

    if (kind == "edge") {
      row.ratio = edge_trace_ratio(region, edge_boundary_nodes(region, *edge), edge->edges, eig_rel_tol);
    } else if (kind == "edge_restriction") {
      row.ratio = edge_restriction_ratio(region, edge_boundary_nodes(region, *edge), edge->edges, eig_rel_tol);
    } else if (kind == "face") {
      row.ratio = face_restriction_ratio(region, face_interior_boundary_nodes(region, *face), eig_rel_tol);
    } else if (kind == "slicing") {
      std::mt19937_64 rng(seed);
      double worst = 0.0;
      for (int s = 0; s < slicing_samples; ++s) {
        TraceFunction v;
        v.sub = 0;
        v.values.resize(static_cast<size_t>(region.num_boundary()));
        for (double& val : v.values)
          val = 2.0 * (static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0)) - 1.0;
        const SlicingSample sample = slicing_quantities(region, *face, v);
        if (sample.h_half_sq > 0.0)
          worst = std::max(worst, std::max(sample.node_sum, sample.gradient_sum) / (row.log_H_h * sample.h_half_sq));
      }
      row.ratio = worst;
    } else {
      throw ConfigError("unknown lemma kind '" + kind + "' (edge, edge_restriction, face, slicing)");
    }
    table.rows.push_back(row);
    xs.push_back(row.log_H_h);
    ys.push_back(row.ratio);
  }
  const LineFit fit = fit_line(xs, ys);
  table.fit_slope = fit.slope;
  table.fit_intercept = fit.intercept;
  table.rel_residual = fit.rel_residual;
  return table;
}

std::string lemma_to_csv(const LemmaTable& table) {
  std::string out = "h,log_H_over_h,ratio,fit_slope\n";
  char buf[40];
  for (const LemmaRow& r : table.rows) {
    out += format_double(buf, sizeof(buf), r.h);
    out += ',';
    out += format_double(buf, sizeof(buf), r.log_H_h);
    out += ',';
    out += format_double(buf, sizeof(buf), r.ratio);
    out += ',';
    out += format_double(buf, sizeof(buf), table.fit_slope);
    out += '\n';
  }
  return out;
}

} // namespace wproj
