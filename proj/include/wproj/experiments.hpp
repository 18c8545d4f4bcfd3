#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wproj/coeff_analysis.hpp"
#include "wproj/decomposition.hpp"
#include "wproj/fem.hpp"
#include "wproj/trace.hpp"

namespace wproj {

struct DistributionSpec {
  std::string name;
  BoxGridSpec boxes;
  std::vector<double> alpha_cells; // row-major, one per grid cell
};

// Named jump patterns: monotone_stack (quasi-monotone, alpha decreasing along
// z), checkerboard_columns (thorny edge), octant_vertex (thorny vertex),
// quasi_monotone_L (merged L plus neighbor).
DistributionSpec make_distribution(const std::string& kind, double eps);

struct ExperimentConfig {
  std::string distribution = "monotone_stack";
  int coarse_n = 4;
  int refine_levels = 2;
  int coarse_level = 0;
  int fine_level = 1;
  int surrogate_level = -1; // -1: fine_level + 2, capped at refine_levels
  std::vector<int> d_levels;
  std::vector<double> eps_list{1.0};
  std::string test_function = "sine";
  std::uint64_t seed = 1234;
  double solver_rel_tol = 1e-10;
  double eig_rel_tol = 1e-4;
  std::optional<PerturbSpec> perturb;
  std::optional<BoxGridSpec> custom_boxes; // distribution == "custom"
  std::vector<double> custom_alpha_cells;

  int effective_surrogate() const;
  std::vector<int> effective_d_levels() const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);

struct ConvergenceRecord {
  std::string distribution;
  double eps = 0.0, d = 0.0, h = 0.0;
  double error = 0.0;
  double seminorm = 0.0;
  double fullnorm_star = 0.0;    // sum_{S*} alpha_k ||u||^2_{H1(Omega_k)}
  double seminorm_nonstar = 0.0; // sum_{k not in S*} alpha_k |u|^2_{H1(Omega_k)}
  double fullnorm_tilde = 0.0;
  double seminorm_nontilde = 0.0;
  double log_H_d = 0.0, log_H_h = 0.0;
  double ratio_thm1 = std::numeric_limits<double>::quiet_NaN();
  double ratio_thm2 = std::numeric_limits<double>::quiet_NaN();
  double ratio_thm3 = std::numeric_limits<double>::quiet_NaN();
  double ratio_thm4 = std::numeric_limits<double>::quiet_NaN();
  double opnorm = std::numeric_limits<double>::quiet_NaN();
};

struct SweepVerdict {
  int d_level = 0;
  std::string verdict; // "uniform" or "growing"
  double max_over_min = 0.0;
  double fitted_exponent = 0.0; // slope of log ratio vs log eps
};

struct SweepResult {
  std::vector<ConvergenceRecord> records;
  std::vector<SweepVerdict> verdicts;
};

struct AuxiliaryResult {
  FEFunction u_d; // coarse level
  std::vector<int> provenance_owner;
  std::vector<char> provenance_own; // 1: interior own-projection rule
  double err_l2_alpha = 0.0;
  double ratio = 0.0; // err^2 / (d^2 |u|^2_{H1_alpha})
};

// Shared immutable context: hierarchy + decomposition + surface topology.
// Per-cell runs differ only in the coefficient values and levels, so const
// methods are safe to call concurrently.
class ExperimentRunner {
public:
  explicit ExperimentRunner(const ExperimentConfig& cfg);

  const ExperimentConfig& config() const { return cfg_; }
  const MeshHierarchy& hierarchy() const { return *hierarchy_; }
  const SubdomainDecomposition& decomposition() const { return *dec_; }
  const SurfaceTopology& topology() const { return topo_; }

  CoefficientField coefficients(double eps) const;
  FEFunction surrogate_input() const;

  ConvergenceRecord projection_cell(double eps, int d_level) const;
  ConvergenceRecord opnorm_cell(double eps) const;
  AuxiliaryResult auxiliary_cell(double eps, int d_level) const;

  SweepResult jump_sweep() const;                     // eps x d_levels, parallel
  std::vector<ConvergenceRecord> opnorm_sweep() const; // eps list, parallel

  DistributionReport analyze(double eps) const;

private:
  ExperimentConfig cfg_;
  DistributionSpec spec_;
  std::unique_ptr<MeshHierarchy> hierarchy_;
  std::unique_ptr<SubdomainDecomposition> dec_;
  SurfaceTopology topo_; // at level 0; subdomain-level features only
};

AuxiliaryResult build_auxiliary_function(const MeshHierarchy& hierarchy, const SubdomainDecomposition& dec,
                                         const CoefficientField& alpha, const MultilayerPartition& layers,
                                         const FEFunction& u_surrogate, int d_level, int s_level,
                                         double rel_tol = 1e-10);

// Report emission: fixed column order, %.17g floats, NaN as empty field.
std::string records_to_csv(const std::vector<ConvergenceRecord>& records);
std::string records_to_json(const std::vector<ConvergenceRecord>& records);
std::vector<ConvergenceRecord> parse_records_json(const std::string& text);
void write_text_file(const std::string& path, const std::string& content);

std::string distribution_report_to_json(const DistributionReport& report);
std::string distribution_report_summary(const DistributionReport& report, const CoefficientField& alpha);

// Trace-lemma sweeps on the unit cube (kinds: edge, edge_restriction, face,
// slicing); level i uses n = base_n * 2^i cells per axis.
struct LemmaRow {
  double h = 0.0;
  double log_H_h = 0.0;
  double ratio = 0.0;
};

struct LemmaTable {
  std::string kind;
  std::vector<LemmaRow> rows;
  double fit_slope = 0.0;
  double fit_intercept = 0.0;
  double rel_residual = 0.0; // RMS residual / RMS value
};

LemmaTable run_lemma(const std::string& kind, int levels, std::uint64_t seed, int base_n = 4,
                     double eig_rel_tol = 1e-3, int slicing_samples = 20);
std::string lemma_to_csv(const LemmaTable& table);

// Least-squares fit y ~ intercept + slope x; rel_residual = RMS(res)/RMS(y).
struct LineFit {
  double slope = 0.0, intercept = 0.0, rel_residual = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);
LineFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y);

// Worker cap: WPROJ_THREADS when set, else hardware concurrency.
int worker_count(int cells);

} // namespace wproj
