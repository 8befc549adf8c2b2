#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nlpca/dataset.hpp"
#include "nlpca/errors.hpp"
#include "nlpca/rng.hpp"

namespace nlpca {

enum class Family { helix, quadratic, gauss2d };

inline std::string family_name(Family f) {
  switch (f) {
    case Family::helix: return "helix";
    case Family::quadratic: return "quadratic";
    case Family::gauss2d: return "gauss2d";
  }
  throw ContractError("unknown family");
}

inline Family family_from_name(const std::string& name) {
  if (name == "helix") return Family::helix;
  if (name == "quadratic") return Family::quadratic;
  if (name == "gauss2d") return Family::gauss2d;
  throw ContractError("unknown data family '" + name + "'");
}

inline int family_dim(Family f) { return f == Family::helix ? 3 : 2; }

/// Recipe for one synthetic dataset. `t_range` applies to the curve families;
/// for gauss2d `noise_sigma` is the per-coordinate standard deviation of the
/// (0,0)-centered isotropic Gaussian.
struct GeneratorConfig {
  Family family = Family::helix;
  int n_samples = 0;
  double noise_sigma = 0.0;
  std::array<double, 2> t_range{-0.8, 0.8};  // quadratic default is [-0.7, 0.7]
  std::uint64_t seed = 0;

  static GeneratorConfig for_family(Family f, int n, double sigma,
                                    std::uint64_t seed) {
    GeneratorConfig c;
    c.family = f;
    c.n_samples = n;
    c.noise_sigma = sigma;
    c.seed = seed;
    if (f == Family::quadratic) c.t_range = {-0.7, 0.7};
    return c;
  }

  void validate() const {
    if (n_samples < 1) throw ContractError("n_samples must be >= 1");
    if (noise_sigma < 0.0) throw ContractError("noise_sigma must be >= 0");
    if (!(t_range[0] < t_range[1]))
      throw ContractError("t_range must be a nonempty interval");
  }
};

/// Point on the noise-free helix at angle factor t.
inline Eigen::Vector3d helix_point(double t) {
  const double pi = 3.14159265358979323846;
  return {std::sin(pi * t), std::cos(pi * t), t};
}

/// Point on the noise-free quadratic x2 = x1^2 at abscissa t.
inline Eigen::Vector2d quadratic_point(double t) { return {t, t * t}; }

struct GeneratedData {
  MaskedDataset data;            // fully observed
  std::vector<double> factors;   // generating t per sample; empty for gauss2d
};

/// Draws a dataset. Deterministic given the seed; for the curve families the
/// factors t are drawn first (one uniform each), then the noise sample by
/// sample, coordinate by coordinate.
inline GeneratedData generate(const GeneratorConfig& config) {
  config.validate();
  RandomStream rng(config.seed);
  const int n = config.n_samples;
  const int d = family_dim(config.family);

  GeneratedData out;
  out.data.values.resize(n, d);
  out.data.mask = Mask::Constant(n, d, true);

  switch (config.family) {
    case Family::helix:
    case Family::quadratic: {
      out.factors.resize(n);
      for (int i = 0; i < n; ++i)
        out.factors[i] = rng.uniform(config.t_range[0], config.t_range[1]);
      for (int i = 0; i < n; ++i) {
        if (config.family == Family::helix)
          out.data.values.row(i) = helix_point(out.factors[i]).transpose();
        else
          out.data.values.row(i) = quadratic_point(out.factors[i]).transpose();
        for (int j = 0; j < d; ++j)
          out.data.values(i, j) += config.noise_sigma * rng.normal();
      }
      break;
    }
    case Family::gauss2d: {
      const double sigma = config.noise_sigma;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
          out.data.values(i, j) = sigma * rng.normal();
      break;
    }
  }
  return out;
}

/// Marks exactly one uniformly chosen entry per row as missing. Values are
/// left untouched; the complete matrix is retained as ground truth.
inline MaskedDataset mask_one_of_d(const MaskedDataset& data,
                                   std::uint64_t seed) {
  if (data.dim() < 2)
    throw ContractError("mask_one_of_d requires dimension >= 2");
  MaskedDataset out = data;
  out.ground_truth = data.values;
  out.mask = Mask::Constant(data.n_samples(), data.dim(), true);
  RandomStream rng(seed);
  for (Eigen::Index i = 0; i < data.n_samples(); ++i)
    out.mask(i, static_cast<Eigen::Index>(
                    rng.below(static_cast<std::uint32_t>(data.dim())))) = false;
  return out;
}

/// Marks `per_row` distinct uniformly chosen entries per row as missing,
/// leaving at least one entry observed. per_row = 1 matches mask_one_of_d.
inline MaskedDataset mask_random_entries(const MaskedDataset& data, int per_row,
                                         std::uint64_t seed) {
  if (per_row < 1) throw ContractError("per_row must be >= 1");
  if (per_row >= data.dim())
    throw ContractError("per_row must leave at least one observed entry");
  if (per_row == 1) return mask_one_of_d(data, seed);

  MaskedDataset out = data;
  out.ground_truth = data.values;
  out.mask = Mask::Constant(data.n_samples(), data.dim(), true);
  RandomStream rng(seed);
  const int d = static_cast<int>(data.dim());
  std::vector<int> idx(d);
  for (Eigen::Index i = 0; i < data.n_samples(); ++i) {
    for (int j = 0; j < d; ++j) idx[j] = j;
    // Partial Fisher-Yates: the first per_row slots become the removals.
    for (int j = 0; j < per_row; ++j) {
      const int pick = j + static_cast<int>(rng.below(d - j));
      std::swap(idx[j], idx[pick]);
      out.mask(i, idx[j]) = false;
    }
  }
  return out;
}

/// Points of the reference quadratic (t, t^2) on a grid, for plotting and as
/// the "true generating curve" comparator.
inline Eigen::MatrixXd quadratic_truth(const std::vector<double>& t_grid) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(t_grid.size()), 2);
  for (std::size_t i = 0; i < t_grid.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) =
        quadratic_point(t_grid[i]).transpose();
  return out;
}

/// Squared projection distance (per-entry mean over the two coordinates) of a
/// point onto the analytic quadratic: dense grid search over t followed by a
/// few ternary-refinement rounds around the best node. The default domain is
/// the default generator range padded by 50% per side.
inline double quadratic_projection_distance(const Eigen::Vector2d& x,
                                            int grid_n = 10000,
                                            double t_lo = -1.05,
                                            double t_hi = 1.05) {
  if (grid_n < 2) throw ContractError("grid_n must be >= 2");
  const auto dist2 = [&](double t) {
    const double dx = x[0] - t;
    const double dy = x[1] - t * t;
    return 0.5 * (dx * dx + dy * dy);
  };
  double best_t = t_lo, best = dist2(t_lo);
  const double step = (t_hi - t_lo) / (grid_n - 1);
  for (int i = 1; i < grid_n; ++i) {
    const double t = t_lo + i * step;
    const double v = dist2(t);
    if (v < best) {
      best = v;
      best_t = t;
    }
  }
  // Ternary refinement inside the bracketing grid cell pair.
  double lo = best_t - step, hi = best_t + step;
  for (int r = 0; r < 200; ++r) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (dist2(m1) < dist2(m2))
      hi = m2;
    else
      lo = m1;
  }
  return std::min(best, dist2(0.5 * (lo + hi)));
}

}  // namespace nlpca
