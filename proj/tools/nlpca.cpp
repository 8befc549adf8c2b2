// Command-line front end: synthetic data generation, inverse model training,
// validation sweeps, model selection and curve export.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
// On failure a machine-readable JSON object {"error": ..., "type": ...} is
// printed to stdout; the human-readable message goes to stderr.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <nlpca/datagen.hpp>
#include <nlpca/dataset.hpp>
#include <nlpca/errors.hpp>
#include <nlpca/model.hpp>
#include <nlpca/presets.hpp>
#include <nlpca/validation.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string out_dir() {
  const char* dir = std::getenv("NLPCA_OUT_DIR");
  return dir && *dir ? dir : ".";
}

std::string default_path(const std::string& name) {
  return (fs::path(out_dir()) / name).string();
}

std::vector<int> parse_layers(const std::string& s) {
  std::vector<int> sizes;
  std::string field;
  std::stringstream ss(s);
  while (std::getline(ss, field, '-')) {
    try {
      sizes.push_back(std::stoi(field));
    } catch (const std::exception&) {
      throw nlpca::ContractError("bad layer spec '" + s +
                                 "' (expected e.g. 1-10-3)");
    }
  }
  if (sizes.size() < 2)
    throw nlpca::ContractError("layer spec needs at least two sizes");
  return sizes;
}

int cmd_generate(const std::string& family, int n, double sigma,
                 std::uint64_t seed, std::optional<double> t_min,
                 std::optional<double> t_max, const std::string& out,
                 const std::string& factors_out, bool mask_one,
                 std::uint64_t mask_seed, const std::string& mask_out) {
  nlpca::GeneratorConfig cfg = nlpca::GeneratorConfig::for_family(
      nlpca::family_from_name(family), n, sigma, seed);
  if (t_min) cfg.t_range[0] = *t_min;
  if (t_max) cfg.t_range[1] = *t_max;
  nlpca::GeneratedData gen = nlpca::generate(cfg);

  if (mask_one) {
    const nlpca::MaskedDataset masked = nlpca::mask_one_of_d(gen.data, mask_seed);
    nlpca::save_csv(masked, out,
                    mask_out.empty() ? out + ".mask.csv" : mask_out);
  } else {
    nlpca::save_csv(gen.data, out);
  }

  if (!factors_out.empty()) {
    if (gen.factors.empty())
      throw nlpca::ContractError("family '" + family +
                                 "' has no generating factors");
    std::ofstream f(factors_out);
    if (!f) throw nlpca::DataError("cannot open for writing: " + factors_out);
    f << "t\n";
    for (double t : gen.factors) f << nlpca::detail::format_double(t) << "\n";
  }

  json summary = {{"command", "generate"},
                  {"family", family},
                  {"n_samples", n},
                  {"out", out}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& mask_path,
              const std::string& layers, double nu, int iters,
              std::uint64_t seed, double init_scale,
              const std::string& score_init, bool no_score_decay,
              bool normalize, const std::string& model_out) {
  nlpca::MaskedDataset data = nlpca::load_csv(
      data_path, mask_path.empty()
                     ? std::nullopt
                     : std::optional<std::string>(mask_path));

  std::optional<nlpca::Normalization> norm;
  if (normalize) {
    nlpca::Normalization nz;
    nz.mean.resize(data.dim());
    nz.scale.resize(data.dim());
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
      double sum = 0.0, sum2 = 0.0;
      Eigen::Index count = 0;
      for (Eigen::Index i = 0; i < data.n_samples(); ++i)
        if (data.mask(i, j)) {
          sum += data.values(i, j);
          sum2 += data.values(i, j) * data.values(i, j);
          ++count;
        }
      if (count == 0) throw nlpca::DataError("column with no observed entries");
      const double mean = sum / count;
      const double var = sum2 / count - mean * mean;
      nz.mean[j] = mean;
      nz.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
      for (Eigen::Index i = 0; i < data.n_samples(); ++i)
        if (data.mask(i, j))
          data.values(i, j) = (data.values(i, j) - mean) / nz.scale[j];
    }
    norm = std::move(nz);
  }

  nlpca::TrainConfig cfg;
  cfg.layer_sizes = parse_layers(layers);
  cfg.nu = nu;
  cfg.cg.max_iterations = iters;
  cfg.cg.gradient_tolerance = 1e-9;
  cfg.init_seed = seed;
  cfg.init_scale = init_scale;
  cfg.score_init =
      score_init == "zeros" ? nlpca::ScoreInit::zeros : nlpca::ScoreInit::random;
  cfg.decay_scores = !no_score_decay;

  const nlpca::InverseModel model = nlpca::train(data, cfg);
  nlpca::save_checkpoint(model, model_out, norm);

  json line = {{"reconstruction", model.final_loss.reconstruction},
               {"decay_penalty", model.final_loss.decay_penalty},
               {"total", model.final_loss.total},
               {"model_out", model_out}};
  std::cout << line.dump() << "\n";
  return 0;
}

int cmd_sweep(const std::string& preset_name, const std::string& config_path,
              const std::vector<double>& nu_override, int restarts,
              std::optional<std::uint64_t> seed, int workers, bool paper_scale,
              std::string out_prefix, bool dump_config) {
  nlpca::SweepConfig cfg;
  std::string stem = "sweep";
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw nlpca::DataError("cannot open: " + config_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw nlpca::DataError(config_path + ": invalid JSON: " + e.what());
    }
    try {
      cfg = nlpca::sweep_config_from_json(j);
    } catch (const json::exception& e) {
      throw nlpca::DataError(config_path + ": malformed sweep config: " +
                             e.what());
    }
    stem = fs::path(config_path).stem().string();
  } else if (!preset_name.empty()) {
    cfg = nlpca::preset(preset_name, paper_scale).sweep;
    stem = preset_name;
  } else {
    throw nlpca::ContractError("sweep needs a preset name or --config");
  }

  if (!nu_override.empty()) cfg.nu_grid = nu_override;
  if (restarts > 0) cfg.n_restarts = restarts;
  if (seed) cfg.base_seed = *seed;
  if (workers > 0) cfg.workers = workers;

  if (dump_config) {
    std::cout << nlpca::sweep_config_to_json(cfg).dump(2) << "\n";
    return 0;
  }

  if (out_prefix.empty()) out_prefix = default_path(stem + "_report");
  const nlpca::SweepReport report = nlpca::run_sweep(cfg);
  nlpca::save_sweep_report(report, out_prefix + ".json", out_prefix + ".csv");

  json summary = {{"report_json", out_prefix + ".json"},
                  {"report_csv", out_prefix + ".csv"},
                  {"failed_cells", report.failed_cells},
                  {"chosen_nu", nlpca::select_model(report)}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_select(const std::string& report_path) {
  const nlpca::SweepReport report = nlpca::load_sweep_report(report_path);
  const double nu = nlpca::select_model(report);
  double median_missing = 0.0;
  for (const auto& m : report.medians)
    if (m.nu == nu) median_missing = m.median_missing;
  json out = {{"chosen_nu", nu}, {"median_missing_error", median_missing}};
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_curve(const std::string& model_path, int n_grid,
              const std::string& out) {
  if (n_grid < 2) throw nlpca::ContractError("--n-grid must be >= 2");
  const nlpca::LoadedCheckpoint loaded = nlpca::load_checkpoint(model_path);
  const nlpca::InverseModel& model = loaded.model;
  if (model.params.latent_dim() != 1)
    throw nlpca::ContractError(
        "curve export requires a one-dimensional component");
  if (model.scores.z.rows() == 0)
    throw nlpca::DataError("checkpoint has no training scores");

  const double zmin = model.scores.z.minCoeff();
  const double zmax = model.scores.z.maxCoeff();
  const double pad = 0.05 * (zmax - zmin);
  const double lo = zmin - pad, hi = zmax + pad;

  std::ofstream f(out);
  if (!f) throw nlpca::DataError("cannot open for writing: " + out);
  f << "z";
  for (int j = 0; j < model.params.data_dim(); ++j) f << ",x" << (j + 1);
  f << "\n";
  for (int i = 0; i < n_grid; ++i) {
    const double z = lo + (hi - lo) * i / (n_grid - 1);
    Eigen::VectorXd zv(1);
    zv << z;
    Eigen::VectorXd x = nlpca::forward(model.params, zv);
    if (loaded.normalization)
      x = (x.array() * loaded.normalization->scale.array() +
           loaded.normalization->mean.array())
              .matrix();
    f << nlpca::detail::format_double(z);
    for (Eigen::Index j = 0; j < x.size(); ++j)
      f << "," << nlpca::detail::format_double(x[j]);
    f << "\n";
  }
  if (!f) throw nlpca::DataError("write failed: " + out);

  json summary = {{"command", "curve"}, {"out", out}, {"n_grid", n_grid}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int fail(const std::string& type, int code, const std::string& what) {
  json err = {{"error", what}, {"type", type}};
  std::cout << err.dump() << "\n";
  std::cerr << "error: " << what << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverse nonlinear PCA with missing-data model validation"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset as CSV");
  std::string g_family;
  int g_n = 100;
  double g_sigma = 0.4;
  std::uint64_t g_seed = 0;
  std::optional<double> g_tmin, g_tmax;
  std::string g_out, g_factors, g_mask_out;
  bool g_mask = false;
  std::uint64_t g_mask_seed = 0;
  gen->add_option("family", g_family, "helix, quadratic or gauss2d")->required();
  gen->add_option("--n", g_n, "number of samples");
  gen->add_option("--sigma", g_sigma, "noise standard deviation");
  gen->add_option("--seed", g_seed, "generator seed");
  gen->add_option("--t-min", g_tmin, "factor range lower bound");
  gen->add_option("--t-max", g_tmax, "factor range upper bound");
  gen->add_option("--out", g_out, "output CSV path");
  gen->add_option("--factors-out", g_factors, "write generating factors t");
  gen->add_flag("--mask-one-of-d", g_mask,
                "remove one random entry per sample; writes a mask sidecar");
  gen->add_option("--mask-seed", g_mask_seed, "seed for the mask");
  gen->add_option("--mask-out", g_mask_out,
                  "mask sidecar path (default <out>.mask.csv)");

  // train
  auto* tr = app.add_subcommand("train", "Fit an inverse model to a CSV dataset");
  std::string t_data, t_mask, t_layers = "1-10-3", t_model_out, t_score_init = "random";
  double t_nu = 1e-3, t_init_scale = 0.1;
  int t_iters = 5000;
  std::uint64_t t_seed = 0;
  bool t_no_score_decay = false, t_normalize = false;
  tr->add_option("--data", t_data, "training data CSV")->required();
  tr->add_option("--mask", t_mask, "observed/missing mask CSV");
  tr->add_option("--layers", t_layers, "layer sizes, latent first (e.g. 1-10-3)");
  tr->add_option("--nu", t_nu, "weight-decay coefficient");
  tr->add_option("--iters", t_iters, "CG iteration budget");
  tr->add_option("--seed", t_seed, "initialization seed");
  tr->add_option("--init-scale", t_init_scale, "uniform weight init half-range");
  tr->add_option("--score-init", t_score_init, "random or zeros");
  tr->add_flag("--no-score-decay", t_no_score_decay,
               "do not apply the decay penalty to the latent scores");
  tr->add_flag("--normalize", t_normalize,
               "z-score each column before training");
  tr->add_option("--model-out", t_model_out, "checkpoint path");

  // sweep
  auto* sw = app.add_subcommand(
      "sweep", "Run a nu grid sweep with both validation strategies");
  std::string s_preset, s_config, s_out;
  std::vector<double> s_nu;
  int s_restarts = 0, s_workers = 0;
  std::optional<std::uint64_t> s_seed;
  bool s_paper = false, s_dump = false;
  sw->add_option("preset", s_preset, "quadratic, helix or gauss2d");
  sw->add_option("--config", s_config, "explicit sweep config JSON");
  sw->add_option("--nu", s_nu, "override the nu grid with explicit values");
  sw->add_option("--restarts", s_restarts, "restarts per nu");
  sw->add_option("--seed", s_seed, "base seed");
  sw->add_option("--workers", s_workers, "worker threads (0 = all cores)");
  sw->add_flag("--paper-scale", s_paper,
               "full restart counts (100, or 500 for gauss2d)");
  sw->add_option("--out", s_out, "output prefix for .json/.csv");
  sw->add_flag("--dump-config", s_dump, "print the resolved config and exit");

  // select
  auto* se = app.add_subcommand("select", "Pick nu from a sweep report");
  std::string se_report;
  se->add_option("report", se_report, "sweep report JSON")->required();

  // curve
  auto* cu = app.add_subcommand("curve", "Export the trained component curve");
  std::string c_model, c_out;
  int c_grid = 200;
  cu->add_option("--model", c_model, "checkpoint path")->required();
  cu->add_option("--n-grid", c_grid, "number of curve samples");
  cu->add_option("--out", c_out, "output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      if (g_out.empty()) g_out = default_path(g_family + ".csv");
      return cmd_generate(g_family, g_n, g_sigma, g_seed, g_tmin, g_tmax, g_out,
                          g_factors, g_mask, g_mask_seed, g_mask_out);
    }
    if (tr->parsed()) {
      if (t_model_out.empty()) t_model_out = default_path("model.json");
      return cmd_train(t_data, t_mask, t_layers, t_nu, t_iters, t_seed,
                       t_init_scale, t_score_init, t_no_score_decay,
                       t_normalize, t_model_out);
    }
    if (sw->parsed())
      return cmd_sweep(s_preset, s_config, s_nu, s_restarts, s_seed, s_workers,
                       s_paper, s_out, s_dump);
    if (se->parsed()) return cmd_select(se_report);
    if (cu->parsed()) {
      if (c_out.empty()) c_out = default_path("curve.csv");
      return cmd_curve(c_model, c_grid, c_out);
    }
  } catch (const nlpca::ContractError& e) {
    return fail("usage", 2, e.what());
  } catch (const nlpca::NumericError& e) {
    return fail("numeric", 4, e.what());
  } catch (const nlpca::DataError& e) {
    return fail("data", 3, e.what());
  } catch (const nlpca::Error& e) {
    return fail("data", 3, e.what());
  } catch (const std::exception& e) {
    return fail("data", 3, e.what());
  }
  return 2;
}
