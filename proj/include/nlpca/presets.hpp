#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nlpca/errors.hpp"
#include "nlpca/validation.hpp"

namespace nlpca {

/// Logarithmic grid from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, int points) {
  if (points < 2 || lo <= 0.0 || hi <= lo)
    throw ContractError("bad log grid bounds");
  std::vector<double> g(points);
  const double llo = std::log10(lo), lhi = std::log10(hi);
  for (int i = 0; i < points; ++i)
    g[i] = std::pow(10.0, llo + (lhi - llo) * i / (points - 1));
  return g;
}

struct ExperimentPreset {
  std::string name;
  SweepConfig sweep;
};

/// Bundled experiment setups. Desk-scale restart counts keep runtime small;
/// `paper_scale` restores the full restart counts (100 for the curve
/// experiments, 500 for the Gaussian one).
inline ExperimentPreset preset(const std::string& name,
                               bool paper_scale = false) {
  ExperimentPreset p;
  p.name = name;
  SweepConfig& s = p.sweep;
  s.nu_grid = log_grid(1e-5, 1.0, 11);
  s.n_restarts = paper_scale ? 100 : 11;
  s.base_seed = 0;

  CgConfig train_cg;
  train_cg.max_iterations = 5000;
  train_cg.gradient_tolerance = 1e-9;
  train_cg.restart_interval = 100;
  s.train_template.cg = train_cg;
  s.train_template.init_scale = 0.1;
  s.train_template.score_init = ScoreInit::random;

  if (name == "helix") {
    s.train_data = GeneratorConfig::for_family(Family::helix, 20, 0.4, 0);
    s.validation_data = GeneratorConfig::for_family(Family::helix, 1000, 0.4, 0);
    s.train_template.layer_sizes = {1, 10, 3};
    s.mask_per_sample = 1;  // one of the three dimensions rejected per sample
    s.data_mode = DataMode::fresh_per_restart;
  } else if (name == "quadratic") {
    s.train_data = GeneratorConfig::for_family(Family::quadratic, 10, 0.4, 0);
    s.validation_data =
        GeneratorConfig::for_family(Family::quadratic, 200, 0.4, 0);
    s.train_template.layer_sizes = {1, 8, 2};
    s.mask_per_sample = 1;
    s.data_mode = DataMode::fresh_per_restart;
  } else if (name == "gauss2d") {
    s.train_data = GeneratorConfig::for_family(Family::gauss2d, 30, 1.0, 0);
    s.validation_data =
        GeneratorConfig::for_family(Family::gauss2d, 1000, 1.0, 0);
    s.train_template.layer_sizes = {1, 4, 2};
    s.mask_per_sample = 1;  // one of two coordinates per sample
    s.data_mode = DataMode::fixed;
    if (paper_scale) s.n_restarts = 500;
  } else {
    throw ContractError("unknown preset '" + name +
                        "' (expected quadratic, helix or gauss2d)");
  }
  return p;
}

}  // namespace nlpca
