#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "wproj/errors.hpp"
#include "wproj/experiments.hpp"

namespace {

void emit_records(const std::vector<wproj::ConvergenceRecord>& records, const std::string& out,
                  const std::string& format) {
  const std::string text = format == "json" ? wproj::records_to_json(records) : wproj::records_to_csv(records);
  if (out.empty())
    std::cout << text;
  else
    wproj::write_text_file(out, text);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"wproj: weighted L2 projections under jump coefficients"};
  app.require_subcommand(1);

  std::string config_path, out_path, format = "csv";

  auto* analyze = app.add_subcommand("analyze", "classify a coefficient distribution (thorny features, layers)");
  analyze->add_option("--config", config_path, "experiment config (JSON)")->required();
  analyze->add_option("--out", out_path, "report JSON path (default distribution_report.json)");

  auto* project = app.add_subcommand("project", "projection error records for each eps and d level");
  project->add_option("--config", config_path)->required();
  project->add_option("--out", out_path, "output path (stdout when omitted)");
  project->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));

  auto* convergence = app.add_subcommand("convergence", "jump sweep with uniformity verdicts");
  convergence->add_option("--config", config_path)->required();
  convergence->add_option("--out", out_path, "CSV output path")->required();
  convergence->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));

  auto* opnorm = app.add_subcommand("opnorm", "operator-norm sweep sup_u ||(I-Q)u|| / |u|_H1");
  opnorm->add_option("--config", config_path)->required();
  opnorm->add_option("--out", out_path, "CSV output path")->required();
  opnorm->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));

  std::string lemma_kind = "edge";
  int lemma_levels = 4, lemma_base_n = 4, lemma_samples = 20;
  std::uint64_t lemma_seed = 1234;
  auto* lemma = app.add_subcommand("lemma", "trace-lemma ratio sweeps on the unit cube");
  lemma->add_option("--kind", lemma_kind)->check(CLI::IsMember({"edge", "edge_restriction", "face", "slicing"}));
  lemma->add_option("--levels", lemma_levels, "number of mesh levels (n = 4,8,16,...)");
  lemma->add_option("--seed", lemma_seed);
  lemma->add_option("--base-n", lemma_base_n);
  lemma->add_option("--samples", lemma_samples, "random samples for the slicing kind");
  lemma->add_option("--out", out_path, "CSV output path");

  int export_level = 0;
  auto* exporter = app.add_subcommand("export-mesh", "plain-text node/tet tables with subdomain ids");
  exporter->add_option("--config", config_path)->required();
  exporter->add_option("--level", export_level);
  exporter->add_option("--out", out_path, "output path prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*analyze) {
      const wproj::ExperimentConfig cfg = wproj::load_config(config_path);
      const wproj::ExperimentRunner runner(cfg);
      const double eps = cfg.eps_list.front();
      const wproj::DistributionReport report = runner.analyze(eps);
      const std::string json = wproj::distribution_report_to_json(report);
      wproj::write_text_file(out_path.empty() ? "distribution_report.json" : out_path, json);
      std::cout << wproj::distribution_report_summary(report, runner.coefficients(eps));
    } else if (*project) {
      const wproj::ExperimentConfig cfg = wproj::load_config(config_path);
      const wproj::ExperimentRunner runner(cfg);
      std::vector<wproj::ConvergenceRecord> records;
      for (int d : cfg.effective_d_levels())
        for (double eps : cfg.eps_list) records.push_back(runner.projection_cell(eps, d));
      emit_records(records, out_path, format);
    } else if (*convergence) {
      const wproj::ExperimentConfig cfg = wproj::load_config(config_path);
      const wproj::ExperimentRunner runner(cfg);
      const wproj::SweepResult sweep = runner.jump_sweep();
      emit_records(sweep.records, out_path, format);
      for (const wproj::SweepVerdict& v : sweep.verdicts)
        std::printf("d_level %d: %s (max/min %.3g, fitted exponent %.3g)\n", v.d_level, v.verdict.c_str(),
                    v.max_over_min, v.fitted_exponent);
    } else if (*opnorm) {
      const wproj::ExperimentConfig cfg = wproj::load_config(config_path);
      const wproj::ExperimentRunner runner(cfg);
      emit_records(runner.opnorm_sweep(), out_path, format);
    } else if (*lemma) {
      const wproj::LemmaTable table =
          wproj::run_lemma(lemma_kind, lemma_levels, lemma_seed, lemma_base_n, 1e-3, lemma_samples);
      const std::string csv = wproj::lemma_to_csv(table);
      if (out_path.empty())
        std::cout << csv;
      else
        wproj::write_text_file(out_path, csv);
      std::printf("fit: ratio ~ %.4g + %.4g * log(H/h), rel residual %.3g\n", table.fit_intercept, table.fit_slope,
                  table.rel_residual);
    } else if (*exporter) {
      const wproj::ExperimentConfig cfg = wproj::load_config(config_path);
      const wproj::ExperimentRunner runner(cfg);
      if (export_level < 0 || export_level >= runner.hierarchy().size())
        throw wproj::ConfigError("export level out of range");
      wproj::export_mesh_tables(runner.hierarchy()[export_level], out_path,
                                &runner.decomposition().tet_subdomains(export_level));
    }
  } catch (const wproj::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const wproj::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
