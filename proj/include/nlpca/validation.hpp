#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nlpca/datagen.hpp"
#include "nlpca/dataset.hpp"
#include "nlpca/errors.hpp"
#include "nlpca/model.hpp"

namespace nlpca {

namespace detail {

// Runs fn(0..n-1) on up to `workers` threads. Work items only write to their
// own output slot, so results are identical for any worker count.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  const std::size_t n_threads =
      std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t)
    pool.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
        fn(i);
    });
  for (auto& th : pool) th.join();
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ContractError("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace detail

/// Mean projection distance of a fully observed test set: every sample is
/// projected onto the model curve and the per-entry mean squared distances
/// are averaged. This is the standard test-set validation error.
inline double test_set_error(const InverseModel& model,
                             const MaskedDataset& test,
                             const CgConfig& cg = default_infer_cg(),
                             int n_starts = 10, std::uint64_t seed = 0) {
  if (test.n_samples() == 0) throw ContractError("empty test set");
  if (!test.fully_observed())
    throw ContractError("test set for test_set_error must be fully observed");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < test.n_samples(); ++i) {
    const ProjectResult r = project(model, test.values.row(i).transpose(), cg,
                                    n_starts, seed_mix(seed, i));
    sum += r.distance;
  }
  return sum / static_cast<double>(test.n_samples());
}

/// Mean squared estimation error over all artificially removed entries: each
/// incomplete sample is completed from its observed entries and the estimates
/// are scored against the retained ground truth.
inline double missing_data_error(const InverseModel& model,
                                 const MaskedDataset& incomplete,
                                 const CgConfig& cg = default_infer_cg(),
                                 int n_starts = 10, std::uint64_t seed = 0) {
  if (incomplete.n_samples() == 0) throw ContractError("empty validation set");
  if (!incomplete.ground_truth)
    throw ContractError("missing_data_error needs ground truth values");
  double sum = 0.0;
  std::size_t n_removed = 0;
  for (Eigen::Index i = 0; i < incomplete.n_samples(); ++i) {
    const auto observed = incomplete.mask.row(i).transpose().eval();
    if (!observed.any() || observed.all())
      throw ContractError(
          "missing_data_error needs >= 1 observed and >= 1 missing entry per "
          "sample");
    const Eigen::VectorXd est =
        estimate_missing(model, incomplete.values.row(i).transpose(), observed,
                         cg, n_starts, seed_mix(seed, i));
    for (Eigen::Index j = 0; j < incomplete.dim(); ++j)
      if (!observed(j)) {
        const double r = est(j) - (*incomplete.ground_truth)(i, j);
        sum += r * r;
        ++n_removed;
      }
  }
  return sum / static_cast<double>(n_removed);
}

enum class DataMode {
  fresh_per_restart,  // regenerate train and validation data every restart
  fixed               // one dataset, restarts differ only in initialization
};

/// Grid-sweep recipe: which nu values, how many restarts, which data, and how
/// the validators are run. Seeds for restart r derive from base_seed + r, so
/// data and initialization are shared across nu at equal restart index.
struct SweepConfig {
  std::vector<double> nu_grid;
  int n_restarts = 11;
  GeneratorConfig train_data;
  GeneratorConfig validation_data;
  int mask_per_sample = 1;  // entries removed per validation sample
  DataMode data_mode = DataMode::fresh_per_restart;
  TrainConfig train_template;  // nu and init_seed overridden per cell
  CgConfig infer_cg = default_infer_cg();
  int infer_n_starts = 10;
  std::uint64_t base_seed = 0;
  int workers = 0;  // 0 = hardware concurrency
  // Error convention tag recorded in reports: reconstruction and validation
  // errors are means over scalar entries, not per-sample sums.
  static constexpr const char* kErrorConvention = "per-entry mean";

  void validate() const {
    if (nu_grid.empty()) throw ContractError("nu_grid must be nonempty");
    for (double nu : nu_grid)
      if (nu < 0.0) throw ContractError("nu values must be nonnegative");
    if (n_restarts < 1) throw ContractError("n_restarts must be >= 1");
    if (mask_per_sample < 1)
      throw ContractError("mask_per_sample must be >= 1");
    if (infer_n_starts < 0)
      throw ContractError("infer_n_starts must be >= 0");
    train_data.validate();
    validation_data.validate();
    train_template.validate();
    infer_cg.validate();
  }
};

struct SweepCell {
  int nu_index = 0;
  int restart = 0;
  std::uint64_t restart_seed = 0;
  bool ok = false;
  std::string error;  // failure reason when !ok
  double train_error = 0.0;
  double test_error = 0.0;
  double missing_error = 0.0;
  double weight_norm_sq = 0.0;
};

struct NuSummary {
  double nu = 0.0;
  double median_train = 0.0;
  double median_test = 0.0;
  double median_missing = 0.0;
  int failures = 0;
};

struct SweepReport {
  SweepConfig config;
  std::vector<SweepCell> cells;  // nu-major, restart-minor order
  std::vector<NuSummary> medians;
  int failed_cells = 0;
};

namespace detail {

struct CellSeeds {
  std::uint64_t train_data, val_data, mask, init, test_eval, missing_eval;
};

inline CellSeeds cell_seeds(const SweepConfig& cfg, int restart) {
  const std::uint64_t restart_seed = cfg.base_seed + restart;
  const std::uint64_t data_base =
      cfg.data_mode == DataMode::fresh_per_restart ? restart_seed
                                                   : cfg.base_seed;
  CellSeeds s;
  s.train_data = seed_mix(data_base, 1);
  s.val_data = seed_mix(data_base, 2);
  s.mask = seed_mix(data_base, 3);
  s.init = seed_mix(restart_seed, 4);
  s.test_eval = seed_mix(restart_seed, 5);
  s.missing_eval = seed_mix(restart_seed, 6);
  return s;
}

}  // namespace detail

/// Runs the full grid: for every (nu, restart) cell, train a model and score
/// it with both validators on the same validation samples (complete for the
/// test-set error, masked for the missing-data error). Cells are independent
/// jobs; failures are recorded and excluded from the medians.
inline SweepReport run_sweep(const SweepConfig& config) {
  config.validate();

  SweepReport report;
  report.config = config;
  const std::size_t n_nu = config.nu_grid.size();
  const auto n_restarts = static_cast<std::size_t>(config.n_restarts);
  report.cells.resize(n_nu * n_restarts);

  int workers = config.workers;
  if (workers <= 0)
    workers = std::max(1u, std::thread::hardware_concurrency());

  detail::parallel_for(
      report.cells.size(), workers, [&](std::size_t idx) {
        const int nu_index = static_cast<int>(idx / n_restarts);
        const int restart = static_cast<int>(idx % n_restarts);
        SweepCell& cell = report.cells[idx];
        cell.nu_index = nu_index;
        cell.restart = restart;
        cell.restart_seed = config.base_seed + restart;
        try {
          const auto seeds = detail::cell_seeds(config, restart);
          GeneratorConfig train_cfg = config.train_data;
          train_cfg.seed = seeds.train_data;
          GeneratorConfig val_cfg = config.validation_data;
          val_cfg.seed = seeds.val_data;

          const MaskedDataset train_set = generate(train_cfg).data;
          const MaskedDataset val_full = generate(val_cfg).data;
          const MaskedDataset val_masked = mask_random_entries(
              val_full, config.mask_per_sample, seeds.mask);

          TrainConfig tc = config.train_template;
          tc.nu = config.nu_grid[nu_index];
          tc.init_seed = seeds.init;

          const InverseModel model = train(train_set, tc);
          cell.train_error = model.final_loss.reconstruction;
          cell.weight_norm_sq = weight_sum_squares(model.params);
          cell.test_error =
              test_set_error(model, val_full, config.infer_cg,
                             config.infer_n_starts, seeds.test_eval);
          cell.missing_error =
              missing_data_error(model, val_masked, config.infer_cg,
                                 config.infer_n_starts, seeds.missing_eval);
          cell.ok = true;
        } catch (const std::exception& e) {
          cell.ok = false;
          cell.error = e.what();
        }
      });

  report.medians.reserve(n_nu);
  for (std::size_t i = 0; i < n_nu; ++i) {
    NuSummary s;
    s.nu = config.nu_grid[i];
    std::vector<double> tr, te, mi;
    for (std::size_t r = 0; r < n_restarts; ++r) {
      const SweepCell& c = report.cells[i * n_restarts + r];
      if (!c.ok) {
        ++s.failures;
        ++report.failed_cells;
        continue;
      }
      tr.push_back(c.train_error);
      te.push_back(c.test_error);
      mi.push_back(c.missing_error);
    }
    if (!tr.empty()) {
      s.median_train = detail::median(tr);
      s.median_test = detail::median(te);
      s.median_missing = detail::median(mi);
    }
    report.medians.push_back(s);
  }
  return report;
}

/// The nu with the lowest median missing-data estimation error; ties break
/// toward the larger nu (stronger regularization). Medians within a relative
/// 1e-6 of the minimum count as tied: strongly penalized models collapse to
/// the same constant solution and their errors differ only by evaluation
/// rounding noise, which must not decide the selection.
inline double select_model(const SweepReport& report) {
  if (report.medians.empty()) throw ContractError("empty report");
  double min_err = std::numeric_limits<double>::infinity();
  for (const auto& s : report.medians) {
    const int n_ok = report.config.n_restarts - s.failures;
    if (n_ok < 1)
      throw ContractError("no successful run for nu = " + std::to_string(s.nu));
    min_err = std::min(min_err, s.median_missing);
  }
  constexpr double kTieRel = 1e-6;
  const double cutoff = min_err + kTieRel * std::abs(min_err);
  bool found = false;
  double best_nu = 0.0;
  for (const auto& s : report.medians)
    if (s.median_missing <= cutoff && (!found || s.nu > best_nu)) {
      found = true;
      best_nu = s.nu;
    }
  return best_nu;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json generator_to_json(const GeneratorConfig& g) {
  return {{"family", family_name(g.family)},
          {"n_samples", g.n_samples},
          {"noise_sigma", g.noise_sigma},
          {"t_range", {g.t_range[0], g.t_range[1]}},
          {"seed", g.seed}};
}

inline GeneratorConfig generator_from_json(const nlohmann::json& j) {
  GeneratorConfig g;
  g.family = family_from_name(j.at("family").get<std::string>());
  g.n_samples = j.at("n_samples").get<int>();
  g.noise_sigma = j.at("noise_sigma").get<double>();
  g.t_range = {j.at("t_range")[0].get<double>(), j.at("t_range")[1].get<double>()};
  g.seed = j.at("seed").get<std::uint64_t>();
  return g;
}

inline nlohmann::json train_template_to_json(const TrainConfig& t) {
  return {{"layer_sizes", t.layer_sizes},
          {"nu", t.nu},
          {"cg", cg_to_json(t.cg)},
          {"init_seed", t.init_seed},
          {"init_scale", t.init_scale},
          {"score_init", t.score_init == ScoreInit::random ? "random" : "zeros"},
          {"decay_scores", t.decay_scores}};
}

inline TrainConfig train_template_from_json(const nlohmann::json& j) {
  TrainConfig t;
  t.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  t.nu = j.at("nu").get<double>();
  t.cg = cg_from_json(j.at("cg"));
  t.init_seed = j.at("init_seed").get<std::uint64_t>();
  t.init_scale = j.at("init_scale").get<double>();
  t.score_init = j.at("score_init").get<std::string>() == "zeros"
                     ? ScoreInit::zeros
                     : ScoreInit::random;
  t.decay_scores = j.value("decay_scores", true);
  return t;
}

}  // namespace detail

inline nlohmann::json sweep_config_to_json(const SweepConfig& c) {
  return {{"nu_grid", c.nu_grid},
          {"n_restarts", c.n_restarts},
          {"train_data", detail::generator_to_json(c.train_data)},
          {"validation_data", detail::generator_to_json(c.validation_data)},
          {"mask_per_sample", c.mask_per_sample},
          {"data_mode", c.data_mode == DataMode::fresh_per_restart
                            ? "fresh_per_restart"
                            : "fixed"},
          {"train_template", detail::train_template_to_json(c.train_template)},
          {"infer_cg", detail::cg_to_json(c.infer_cg)},
          {"infer_n_starts", c.infer_n_starts},
          {"base_seed", c.base_seed},
          {"error_convention", SweepConfig::kErrorConvention}};
}

inline SweepConfig sweep_config_from_json(const nlohmann::json& j) {
  SweepConfig c;
  c.nu_grid = j.at("nu_grid").get<std::vector<double>>();
  c.n_restarts = j.at("n_restarts").get<int>();
  c.train_data = detail::generator_from_json(j.at("train_data"));
  c.validation_data = detail::generator_from_json(j.at("validation_data"));
  c.mask_per_sample = j.at("mask_per_sample").get<int>();
  c.data_mode = j.at("data_mode").get<std::string>() == "fixed"
                    ? DataMode::fixed
                    : DataMode::fresh_per_restart;
  c.train_template = detail::train_template_from_json(j.at("train_template"));
  c.infer_cg = detail::cg_from_json(j.at("infer_cg"));
  c.infer_n_starts = j.at("infer_n_starts").get<int>();
  c.base_seed = j.at("base_seed").get<std::uint64_t>();
  if (j.contains("workers")) c.workers = j.at("workers").get<int>();
  return c;
}

inline nlohmann::json sweep_report_to_json(const SweepReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json jc = {{"nu_index", c.nu_index},
                         {"nu", r.config.nu_grid[c.nu_index]},
                         {"restart", c.restart},
                         {"restart_seed", c.restart_seed},
                         {"ok", c.ok}};
    if (c.ok) {
      jc["train_error"] = c.train_error;
      jc["test_error"] = c.test_error;
      jc["missing_error"] = c.missing_error;
      jc["weight_norm_sq"] = c.weight_norm_sq;
    } else {
      jc["error"] = c.error;
    }
    cells.push_back(std::move(jc));
  }
  nlohmann::json medians = nlohmann::json::array();
  for (const auto& m : r.medians)
    medians.push_back({{"nu", m.nu},
                       {"median_train_error", m.median_train},
                       {"median_test_error", m.median_test},
                       {"median_missing_error", m.median_missing},
                       {"failures", m.failures}});
  return {{"format_version", 1},
          {"config", sweep_config_to_json(r.config)},
          {"cells", std::move(cells)},
          {"medians", std::move(medians)},
          {"failed_cells", r.failed_cells}};
}

inline SweepReport sweep_report_from_json(const nlohmann::json& j) {
  if (!j.contains("format_version") || j.at("format_version").get<int>() != 1)
    throw DataError("unsupported sweep report format version");
  SweepReport r;
  r.config = sweep_config_from_json(j.at("config"));
  for (const auto& jc : j.at("cells")) {
    SweepCell c;
    c.nu_index = jc.at("nu_index").get<int>();
    c.restart = jc.at("restart").get<int>();
    c.restart_seed = jc.at("restart_seed").get<std::uint64_t>();
    c.ok = jc.at("ok").get<bool>();
    if (c.ok) {
      c.train_error = jc.at("train_error").get<double>();
      c.test_error = jc.at("test_error").get<double>();
      c.missing_error = jc.at("missing_error").get<double>();
      c.weight_norm_sq = jc.at("weight_norm_sq").get<double>();
    } else {
      c.error = jc.value("error", "");
    }
    r.cells.push_back(std::move(c));
  }
  for (const auto& jm : j.at("medians")) {
    NuSummary m;
    m.nu = jm.at("nu").get<double>();
    m.median_train = jm.at("median_train_error").get<double>();
    m.median_test = jm.at("median_test_error").get<double>();
    m.median_missing = jm.at("median_missing_error").get<double>();
    m.failures = jm.at("failures").get<int>();
    r.medians.push_back(m);
  }
  r.failed_cells = j.at("failed_cells").get<int>();
  return r;
}

/// Tidy long-format CSV: one row per (nu, restart, metric) for plotting.
inline void sweep_report_to_csv(const SweepReport& r, std::ostream& out) {
  out << "nu,restart,metric,value\n";
  const auto write = [&](const SweepCell& c, const char* metric, double v) {
    out << detail::format_double(r.config.nu_grid[c.nu_index]) << ","
        << c.restart << "," << metric << "," << detail::format_double(v)
        << "\n";
  };
  for (const auto& c : r.cells) {
    if (!c.ok) continue;
    write(c, "train_error", c.train_error);
    write(c, "test_error", c.test_error);
    write(c, "missing_error", c.missing_error);
    write(c, "weight_norm_sq", c.weight_norm_sq);
  }
}

inline void save_sweep_report(const SweepReport& r, const std::string& json_path,
                              const std::optional<std::string>& csv_path = {}) {
  std::ofstream out(json_path);
  if (!out) throw DataError("cannot open for writing: " + json_path);
  out << sweep_report_to_json(r).dump(2) << "\n";
  if (!out) throw DataError("write failed: " + json_path);
  if (csv_path) {
    std::ofstream csv(*csv_path);
    if (!csv) throw DataError("cannot open for writing: " + *csv_path);
    sweep_report_to_csv(r, csv);
    if (!csv) throw DataError("write failed: " + *csv_path);
  }
}

inline SweepReport load_sweep_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid report JSON: " + e.what());
  }
  try {
    return sweep_report_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed report: " + e.what());
  }
}

}  // namespace nlpca
