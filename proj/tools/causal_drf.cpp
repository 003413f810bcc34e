// causal-drf command-line interface: fit, witness, test and simulate.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "causal_drf/causal_drf.hpp"

namespace {

using namespace causal_drf;
using io::json;

constexpr int kExitReject = 3;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path + " is not valid JSON: " + e.what());
  }
}

Eigen::VectorXd parse_point(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    const auto v = io::detail::parse_double(io::detail::trim(field));
    if (!v) throw InvalidConfig("cannot parse query coordinate '" + field + "'");
    values.push_back(*v);
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// Headerless CSV of grid points, one row per point.
Eigen::MatrixXd read_grid(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open grid file " + path);
  std::vector<double> values;
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (io::detail::trim(line).empty()) continue;
    const auto fields = io::detail::split_fields(line);
    if (static_cast<int>(fields.size()) != dim) throw DimensionMismatch("grid rows must have the outcome dimension");
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const auto v = io::detail::parse_double(io::detail::trim(fields[k]));
      if (!v) throw ParseError(static_cast<std::size_t>(rows + 1), "y_" + std::to_string(k + 1), "unparseable grid value");
      values.push_back(*v);
    }
    ++rows;
  }
  Eigen::MatrixXd grid(rows, dim);
  for (int g = 0; g < rows; ++g)
    for (int k = 0; k < dim; ++k) grid(g, k) = values[static_cast<std::size_t>(g * dim + k)];
  return grid;
}

// Maps a grid given in original outcome units into the model's space.
Eigen::MatrixXd standardize_grid(Eigen::MatrixXd grid, const std::optional<io::Standardization>& s) {
  if (!s) return grid;
  for (Eigen::Index k = 0; k < grid.cols(); ++k)
    grid.col(k) = (grid.col(k).array() - s->mean[static_cast<std::size_t>(k)]) / s->sd[static_cast<std::size_t>(k)];
  return grid;
}

struct ConfigOverrides {
  std::optional<int> trees, groups, kappa, features;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--trees", trees, "Number of trees N");
    cmd->add_option("--groups", groups, "Number of half-sample groups B");
    cmd->add_option("--kappa", kappa, "Minimum rows per arm in a leaf");
    cmd->add_option("--fourier-features", features, "Fourier features per split");
    cmd->add_option("--seed", seed, "Master seed");
  }

  void apply(ForestConfig& c) const {
    if (trees) c.num_trees = *trees;
    if (groups) c.num_groups = *groups;
    if (kappa) c.min_leaf_per_arm = *kappa;
    if (features) c.fourier_features = *features;
    if (seed) c.seed = *seed;
    if (mode) c.split_mode = split_mode_from_string(*mode);
  }
};

unsigned thread_cap(std::optional<unsigned> flag) { return flag ? *flag : default_thread_count(); }

int run_fit(const std::string& data_path, const std::string& schema_path, const std::string& config_path,
            const std::string& out_path, const ConfigOverrides& overrides, std::optional<unsigned> threads) {
  const io::DataSchema schema = io::schema_from_json(read_json_file(schema_path));
  io::LoadedData loaded = io::load_csv(data_path, schema);
  ForestConfig config;
  if (!config_path.empty()) config = io::config_from_json(read_json_file(config_path));
  overrides.apply(config);
  const auto model = fit(std::make_shared<const Dataset>(std::move(loaded.data)), config, std::nullopt,
                         thread_cap(threads));
  io::save_model(out_path, model, loaded.covariate_names, loaded.outcome_names, loaded.standardization);
  std::cerr << "fitted " << model.num_trees() << " trees in " << model.num_groups() << " groups; bandwidth "
            << io::format_double(model.kernel().bandwidth) << '\n';
  return 0;
}

int run_witness(const std::string& model_path, const std::string& point, double alpha, int grid_size,
                const std::string& grid_path, const std::string& out_path) {
  const io::ModelFile mf = io::load_model(model_path);
  const Eigen::VectorXd x = parse_point(point);
  const Eigen::MatrixXd grid = grid_path.empty()
                                   ? default_grid(mf.model.outcomes(), grid_size)
                                   : standardize_grid(read_grid(grid_path, mf.model.kernel().outcome_dim),
                                                      mf.standardization);
  const WitnessAnalysis a = analyze_witness(mf.model, x, grid, alpha);
  std::ofstream out(out_path);
  if (!out) throw Error("cannot write " + out_path);
  io::write_band_csv(out, a.band, a.test, mf.standardization);
  return 0;
}

int run_test(const std::string& model_path, const std::string& point, double alpha) {
  const io::ModelFile mf = io::load_model(model_path);
  const TestResult t = h0_test(mf.model, parse_point(point), alpha);
  std::cout << io::to_json(t).dump(2) << '\n';
  return t.reject ? kExitReject : 0;
}

int run_simulate(const std::string& regime, int n, std::optional<int> sims, const std::string& method,
                 std::uint64_t seed, bool paper_scale, const ConfigOverrides& overrides,
                 std::optional<unsigned> threads, const std::string& out_path) {
  ForestConfig config = paper_scale ? sim::paper_scale_config() : sim::desk_config();
  overrides.apply(config);
  const int n_sims = sims ? *sims : (paper_scale ? 500 : 100);
  const auto report = sim::run_study(sim::regime_from_string(regime), n, n_sims, sim::method_from_string(method),
                                     config, seed, thread_cap(threads));
  {
    std::ofstream out(out_path);
    if (!out) throw Error("cannot write " + out_path);
    io::write_study_csv_header(out);
    io::write_study_csv_row(out, report);
  }
  json meta = io::study_metadata(report, config);
  meta.erase("runtime_seconds");
  std::ofstream(out_path + ".json") << meta.dump(2) << '\n';
  std::cerr << "regime " << regime << " n=" << n << " sims=" << n_sims << ": mae "
            << io::format_double(report.mae_mean) << ", coverage " << io::format_double(report.coverage_rate)
            << ", rejection " << io::format_double(report.rejection_rate) << " (" << report.runtime_seconds
            << " s)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal distributional random forest"};
  app.require_subcommand(1);
  std::optional<unsigned> threads;
  app.add_option("--threads", threads, "Worker threads (default: CAUSAL_DRF_THREADS or hardware concurrency)");

  std::string data_path, schema_path, config_path, out_path;
  ConfigOverrides fit_overrides;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a forest on a CSV data set");
  fit_cmd->add_option("--data", data_path, "Training CSV")->required();
  fit_cmd->add_option("--schema", schema_path, "Schema JSON")->required();
  fit_cmd->add_option("--config", config_path, "Forest configuration JSON");
  fit_cmd->add_option("--out", out_path, "Model JSON output")->required();
  fit_cmd->add_option("--mode", fit_overrides.mode, "Split criterion: causal or plain");
  fit_overrides.add_to(fit_cmd);

  std::string model_path, point, grid_path;
  double alpha = 0.05;
  int grid_size = 201;
  auto* witness_cmd = app.add_subcommand("witness", "Witness estimate and simultaneous band on a grid");
  witness_cmd->add_option("--model", model_path, "Model JSON")->required();
  witness_cmd->add_option("--point", point, "Query covariates x1,...,xp")->required();
  witness_cmd->add_option("--alpha", alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
  witness_cmd->add_option("--grid-size", grid_size, "Grid points over the outcome range")->check(CLI::Range(2, 1000000));
  witness_cmd->add_option("--grid", grid_path, "Headerless CSV of grid points (required when d > 1)");
  witness_cmd->add_option("--out", out_path, "Band CSV output")->required();

  auto* test_cmd = app.add_subcommand("test", "Half-sample test of equal conditional distributions");
  test_cmd->add_option("--model", model_path, "Model JSON")->required();
  test_cmd->add_option("--point", point, "Query covariates x1,...,xp")->required();
  test_cmd->add_option("--alpha", alpha, "Significance level")->check(CLI::Range(0.0, 1.0));

  std::string regime, method = "causal";
  int n = 1000;
  std::optional<int> sims;
  std::uint64_t seed = 1;
  bool paper_scale = false;
  ConfigOverrides sim_overrides;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo benchmark study");
  sim_cmd->add_option("--regime", regime, "1..4 or m1..m4")->required();
  sim_cmd->add_option("--n", n, "Training sample size")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--sims", sims, "Number of replications")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--method", method, "causal or two-drf");
  sim_cmd->add_option("--seed", seed, "Master seed");
  sim_cmd->add_flag("--paper-scale", paper_scale, "500 replications with N=2500, B=50");
  sim_cmd->add_option("--trees", sim_overrides.trees, "Number of trees N");
  sim_cmd->add_option("--groups", sim_overrides.groups, "Number of half-sample groups B");
  sim_cmd->add_option("--kappa", sim_overrides.kappa, "Minimum rows per arm in a leaf");
  sim_cmd->add_option("--out", out_path, "Study CSV output")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit_cmd) return run_fit(data_path, schema_path, config_path, out_path, fit_overrides, threads);
    if (*witness_cmd) return run_witness(model_path, point, alpha, grid_size, grid_path, out_path);
    if (*test_cmd) return run_test(model_path, point, alpha);
    if (*sim_cmd)
      return run_simulate(regime, n, sims, method, seed, paper_scale, sim_overrides, threads, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
