#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nlpca/dataset.hpp"
#include "nlpca/errors.hpp"
#include "nlpca/network.hpp"
#include "nlpca/optimizer.hpp"
#include "nlpca/rng.hpp"

namespace nlpca {

enum class ScoreInit { random, zeros };

/// Everything needed to fit an inverse model to a dataset.
///
/// When `decay_scores` is set (the default), the training objective adds
/// nu * sum(z^2) on top of the reported loss. Free scores can otherwise dodge
/// the weight penalty entirely: scaling all scores up and the first weight
/// layer down preserves the reconstruction while shrinking the penalty, and
/// models ride that degenerate direction into distorted parameterizations.
/// Penalizing the scores pins the score scale and leaves the curve geometry
/// to the weights.
struct TrainConfig {
  std::vector<int> layer_sizes;  // latent dim first, data dim last
  double nu = 0.0;               // weight-decay coefficient
  CgConfig cg;
  std::uint64_t init_seed = 0;
  double init_scale = 0.1;  // weights drawn uniform in [-init_scale, +init_scale]
  ScoreInit score_init = ScoreInit::random;
  bool decay_scores = true;

  /// The full objective train() minimizes at a given point.
  double objective_value(const NetworkParams& params, const LatentScores& scores,
                         const MaskedDataset& data) const {
    double v = loss(params, scores, data, nu).total;
    if (decay_scores) v += nu * scores.z.squaredNorm();
    return v;
  }

  void validate() const {
    if (layer_sizes.size() < 2)
      throw ContractError("layer_sizes needs at least latent and data dims");
    for (int s : layer_sizes)
      if (s <= 0) throw ContractError("layer sizes must be positive");
    if (nu < 0.0) throw ContractError("nu must be nonnegative");
    if (init_scale <= 0.0) throw ContractError("init_scale must be positive");
    cg.validate();
  }
};

/// A trained generation network together with the latent score of every
/// training sample. The mapping data -> score is not part of the model; new
/// samples get scores by per-sample optimization (infer_scores).
struct InverseModel {
  NetworkParams params;
  LatentScores scores;
  TrainConfig train_config;
  LossBreakdown final_loss;
};

namespace detail {

// Flat parameter layout: weight matrices layer by layer in row-major order,
// then bias vectors layer by layer, then scores row by row. Checkpoints and
// the optimizer both rely on this order.
inline Eigen::Index flat_size(const std::vector<int>& sizes,
                              Eigen::Index n_samples) {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    n += static_cast<Eigen::Index>(sizes[l + 1]) * sizes[l] + sizes[l + 1];
  return n + n_samples * sizes.front();
}

inline void pack(const NetworkParams& params, const LatentScores& scores,
                 Eigen::VectorXd& flat) {
  Eigen::Index k = 0;
  for (const auto& w : params.weights)
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) flat[k++] = w(i, j);
  for (const auto& b : params.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) flat[k++] = b[i];
  for (Eigen::Index i = 0; i < scores.z.rows(); ++i)
    for (Eigen::Index j = 0; j < scores.z.cols(); ++j) flat[k++] = scores.z(i, j);
}

inline void unpack(const Eigen::VectorXd& flat, NetworkParams& params,
                   LatentScores& scores) {
  Eigen::Index k = 0;
  for (auto& w : params.weights)
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = flat[k++];
  for (auto& b : params.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = flat[k++];
  for (Eigen::Index i = 0; i < scores.z.rows(); ++i)
    for (Eigen::Index j = 0; j < scores.z.cols(); ++j) scores.z(i, j) = flat[k++];
}

inline void pack_gradient(const NetworkGradient& g, Eigen::VectorXd& flat) {
  Eigen::Index k = 0;
  for (const auto& w : g.weights)
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) flat[k++] = w(i, j);
  for (const auto& b : g.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) flat[k++] = b[i];
  for (Eigen::Index i = 0; i < g.scores.rows(); ++i)
    for (Eigen::Index j = 0; j < g.scores.cols(); ++j) flat[k++] = g.scores(i, j);
}

}  // namespace detail

/// Fits weights, biases and per-sample scores jointly by minimizing the
/// weight-decayed masked reconstruction error. Deterministic given the seed:
/// weights are drawn first (layer by layer, row-major), then scores.
inline InverseModel train(const MaskedDataset& data, const TrainConfig& config) {
  config.validate();
  data.validate();
  if (data.dim() != config.layer_sizes.back())
    throw ContractError("data dimension " + std::to_string(data.dim()) +
                        " does not match layer_sizes back " +
                        std::to_string(config.layer_sizes.back()));

  NetworkParams params = NetworkParams::zeros(config.layer_sizes);
  RandomStream rng(config.init_seed);
  for (auto& w : params.weights)
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        w(i, j) = rng.uniform(-config.init_scale, config.init_scale);

  LatentScores scores;
  scores.z.resize(data.n_samples(), params.latent_dim());
  if (config.score_init == ScoreInit::random) {
    for (Eigen::Index i = 0; i < scores.z.rows(); ++i)
      for (Eigen::Index j = 0; j < scores.z.cols(); ++j)
        scores.z(i, j) = 0.1 * rng.normal();
  } else {
    scores.z.setZero();
  }

  Eigen::VectorXd flat(detail::flat_size(config.layer_sizes, data.n_samples()));
  detail::pack(params, scores, flat);

  NetworkParams p_work = params;
  LatentScores s_work = scores;
  const double nu = config.nu;
  const double score_nu = config.decay_scores ? config.nu : 0.0;
  const auto objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd* grad) {
    detail::unpack(v, p_work, s_work);
    if (!grad)
      return loss(p_work, s_work, data, nu).total +
             score_nu * s_work.z.squaredNorm();
    auto [breakdown, g] = loss_and_gradient(p_work, s_work, data, nu);
    if (score_nu != 0.0) g.scores += 2.0 * score_nu * s_work.z;
    grad->resize(v.size());
    detail::pack_gradient(g, *grad);
    return breakdown.total + score_nu * s_work.z.squaredNorm();
  };

  const MinimizeResult result = minimize(objective, flat, config.cg);

  InverseModel model;
  model.params = std::move(p_work);
  model.scores = std::move(s_work);
  detail::unpack(result.argmin, model.params, model.scores);
  model.train_config = config;
  model.final_loss = loss(model.params, model.scores, data, nu);
  return model;
}

struct InferResult {
  Eigen::VectorXd z;
  double error = 0.0;  // mean squared error over the observed entries
};

inline CgConfig default_infer_cg() {
  CgConfig cfg;
  cfg.max_iterations = 100;
  cfg.gradient_tolerance = 1e-10;
  cfg.restart_interval = 50;
  return cfg;
}

/// Finds the latent vector whose reconstruction best matches the observed
/// entries of one sample, weights frozen. Runs `n_starts` random starts plus
/// one start at the training score whose reconstruction is nearest to the
/// sample, and returns the best result.
///
/// Random starts are jittered draws from the empirical training-score
/// distribution, which covers the data-supported arc of the curve at any
/// score scale; the optimization itself is unconstrained, so projections may
/// settle anywhere on the curve.
inline InferResult infer_scores(
    const InverseModel& model, const Eigen::VectorXd& sample,
    const Eigen::Array<bool, Eigen::Dynamic, 1>& observed,
    const CgConfig& cg = default_infer_cg(), int n_starts = 10,
    std::uint64_t seed = 0) {
  if (sample.size() != model.params.data_dim())
    throw ContractError("sample length does not match model data dimension");
  if (observed.size() != sample.size())
    throw ContractError("mask length does not match sample length");
  if (observed.count() == 0)
    throw ContractError("sample has no observed entries");
  if (n_starts < 0) throw ContractError("n_starts must be nonnegative");

  const int k = model.params.latent_dim();
  const Eigen::MatrixXd& train_z = model.scores.z;

  // Start 0: score of the training sample whose reconstruction is nearest.
  Eigen::VectorXd best_start = Eigen::VectorXd::Zero(k);
  if (train_z.rows() > 0) {
    const Eigen::MatrixXd recon = forward_batch(model.params, train_z);
    double best_err = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < recon.rows(); ++i) {
      double e = 0.0;
      for (Eigen::Index j = 0; j < sample.size(); ++j)
        if (observed(j)) {
          const double r = recon(i, j) - sample(j);
          e += r * r;
        }
      if (e < best_err) {
        best_err = e;
        best_start = train_z.row(i).transpose();
      }
    }
  }

  // Jitter scale for the random starts: a quarter of the score range per dim.
  Eigen::VectorXd jitter(k);
  for (int j = 0; j < k; ++j) {
    const double range =
        train_z.rows() ? train_z.col(j).maxCoeff() - train_z.col(j).minCoeff()
                       : 2.0;
    jitter[j] = range > 0.0 ? 0.25 * range : 1.0;
  }

  const auto objective = [&](const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
    return observed_error_and_grad_z(model.params, z, sample, observed, grad);
  };

  RandomStream rng(seed);
  InferResult best;
  best.error = std::numeric_limits<double>::infinity();
  for (int s = 0; s <= n_starts; ++s) {
    Eigen::VectorXd start(k);
    if (s == 0) {
      start = best_start;
    } else if (train_z.rows() > 0) {
      const Eigen::Index pick = static_cast<Eigen::Index>(
          rng.below(static_cast<std::uint32_t>(train_z.rows())));
      for (int j = 0; j < k; ++j)
        start[j] = train_z(pick, j) + rng.uniform(-jitter[j], jitter[j]);
    } else {
      for (int j = 0; j < k; ++j) start[j] = rng.uniform(-1.0, 1.0);
    }
    const MinimizeResult r = minimize(objective, start, cg);
    if (r.value < best.error) {
      best.error = r.value;
      best.z = r.argmin;
    }
  }
  return best;
}

/// Fills in the missing entries of a sample from its observed entries via
/// latent inference; observed entries pass through unchanged.
inline Eigen::VectorXd estimate_missing(
    const InverseModel& model, const Eigen::VectorXd& sample,
    const Eigen::Array<bool, Eigen::Dynamic, 1>& observed,
    const CgConfig& cg = default_infer_cg(), int n_starts = 10,
    std::uint64_t seed = 0) {
  if (observed.size() > 0 && observed.all())
    throw ContractError("nothing to estimate: sample is fully observed");
  const InferResult inferred =
      infer_scores(model, sample, observed, cg, n_starts, seed);
  const Eigen::VectorXd recon = forward(model.params, inferred.z);
  Eigen::VectorXd out = sample;
  for (Eigen::Index j = 0; j < out.size(); ++j)
    if (!observed(j)) out(j) = recon(j);
  return out;
}

struct ProjectResult {
  Eigen::VectorXd reconstruction;
  double distance = 0.0;  // mean squared deviation over all entries
};

/// Projects a fully observed sample onto the model curve: latent inference
/// with every entry observed. The distance is the per-entry mean of squared
/// deviations, the test-set validation primitive.
inline ProjectResult project(const InverseModel& model,
                             const Eigen::VectorXd& sample,
                             const CgConfig& cg = default_infer_cg(),
                             int n_starts = 10, std::uint64_t seed = 0) {
  const Eigen::Array<bool, Eigen::Dynamic, 1> all =
      Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(sample.size(), true);
  const InferResult inferred = infer_scores(model, sample, all, cg, n_starts, seed);
  ProjectResult r;
  r.reconstruction = forward(model.params, inferred.z);
  r.distance = inferred.error;
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

/// Optional affine per-column preprocessing recorded with a checkpoint, so
/// models trained on z-scored data can map back to original units.
struct Normalization {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

namespace detail {

inline nlohmann::json cg_to_json(const CgConfig& cg) {
  return {{"max_iterations", cg.max_iterations},
          {"gradient_tolerance", cg.gradient_tolerance},
          {"restart_interval", cg.restart_interval},
          {"line_search",
           {{"max_expansions", cg.line_search.max_expansions},
            {"shrink", cg.line_search.shrink},
            {"expand", cg.line_search.expand},
            {"sufficient_decrease", cg.line_search.sufficient_decrease}}}};
}

inline CgConfig cg_from_json(const nlohmann::json& j) {
  CgConfig cg;
  cg.max_iterations = j.at("max_iterations").get<int>();
  cg.gradient_tolerance = j.at("gradient_tolerance").get<double>();
  cg.restart_interval = j.at("restart_interval").get<int>();
  const auto& ls = j.at("line_search");
  cg.line_search.max_expansions = ls.at("max_expansions").get<int>();
  cg.line_search.shrink = ls.at("shrink").get<double>();
  cg.line_search.expand = ls.at("expand").get<double>();
  cg.line_search.sufficient_decrease = ls.at("sufficient_decrease").get<double>();
  return cg;
}

inline std::vector<double> row_major(const Eigen::MatrixXd& m) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v.push_back(m(i, j));
  return v;
}

}  // namespace detail

inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::json checkpoint_to_json(
    const InverseModel& model,
    const std::optional<Normalization>& normalization = {}) {
  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["layer_sizes"] = model.params.layer_sizes;
  nlohmann::json weights = nlohmann::json::array();
  for (const auto& w : model.params.weights)
    weights.push_back(detail::row_major(w));
  j["weights"] = std::move(weights);  // row-major per layer
  nlohmann::json biases = nlohmann::json::array();
  for (const auto& b : model.params.biases)
    biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  j["biases"] = std::move(biases);
  j["scores"] = detail::row_major(model.scores.z);  // row-major, n x k
  j["n_samples"] = model.scores.z.rows();
  j["train_config"] = {
      {"layer_sizes", model.train_config.layer_sizes},
      {"nu", model.train_config.nu},
      {"cg", detail::cg_to_json(model.train_config.cg)},
      {"init_seed", model.train_config.init_seed},
      {"init_scale", model.train_config.init_scale},
      {"score_init",
       model.train_config.score_init == ScoreInit::random ? "random" : "zeros"},
      {"decay_scores", model.train_config.decay_scores}};
  j["final_loss"] = {{"reconstruction", model.final_loss.reconstruction},
                     {"decay_penalty", model.final_loss.decay_penalty},
                     {"total", model.final_loss.total}};
  if (normalization) {
    j["normalization"] = {
        {"mean", std::vector<double>(normalization->mean.data(),
                                     normalization->mean.data() +
                                         normalization->mean.size())},
        {"scale", std::vector<double>(normalization->scale.data(),
                                      normalization->scale.data() +
                                          normalization->scale.size())}};
  }
  return j;
}

struct LoadedCheckpoint {
  InverseModel model;
  std::optional<Normalization> normalization;
};

inline LoadedCheckpoint checkpoint_from_json(const nlohmann::json& j) {
  if (!j.contains("format_version") ||
      j.at("format_version").get<int>() != kCheckpointFormatVersion)
    throw DataError("unsupported checkpoint format version");

  LoadedCheckpoint out;
  InverseModel& model = out.model;
  const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
  model.params = NetworkParams::zeros(sizes);
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (weights.size() != model.params.n_layers() ||
      biases.size() != model.params.n_layers())
    throw DataError("checkpoint layer count mismatch");
  for (std::size_t l = 0; l < model.params.n_layers(); ++l) {
    const auto wv = weights[l].get<std::vector<double>>();
    auto& w = model.params.weights[l];
    if (static_cast<Eigen::Index>(wv.size()) != w.size())
      throw DataError("checkpoint weight size mismatch in layer " +
                      std::to_string(l));
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index jj = 0; jj < w.cols(); ++jj) w(i, jj) = wv[k++];
    const auto bv = biases[l].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(bv.size()) != model.params.biases[l].size())
      throw DataError("checkpoint bias size mismatch in layer " +
                      std::to_string(l));
    for (Eigen::Index i = 0; i < model.params.biases[l].size(); ++i)
      model.params.biases[l][i] = bv[i];
  }

  const auto n = j.at("n_samples").get<Eigen::Index>();
  const auto sv = j.at("scores").get<std::vector<double>>();
  const int k_dim = sizes.front();
  if (static_cast<Eigen::Index>(sv.size()) != n * k_dim)
    throw DataError("checkpoint score size mismatch");
  model.scores.z.resize(n, k_dim);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (int jj = 0; jj < k_dim; ++jj) model.scores.z(i, jj) = sv[k++];

  const auto& tc = j.at("train_config");
  model.train_config.layer_sizes = tc.at("layer_sizes").get<std::vector<int>>();
  model.train_config.nu = tc.at("nu").get<double>();
  model.train_config.cg = detail::cg_from_json(tc.at("cg"));
  model.train_config.init_seed = tc.at("init_seed").get<std::uint64_t>();
  model.train_config.init_scale = tc.at("init_scale").get<double>();
  model.train_config.score_init =
      tc.at("score_init").get<std::string>() == "zeros" ? ScoreInit::zeros
                                                        : ScoreInit::random;
  model.train_config.decay_scores = tc.value("decay_scores", true);

  const auto& fl = j.at("final_loss");
  model.final_loss.reconstruction = fl.at("reconstruction").get<double>();
  model.final_loss.decay_penalty = fl.at("decay_penalty").get<double>();
  model.final_loss.total = fl.at("total").get<double>();

  if (j.contains("normalization")) {
    Normalization norm;
    const auto mv = j.at("normalization").at("mean").get<std::vector<double>>();
    const auto sv2 = j.at("normalization").at("scale").get<std::vector<double>>();
    norm.mean = Eigen::Map<const Eigen::VectorXd>(mv.data(), mv.size());
    norm.scale = Eigen::Map<const Eigen::VectorXd>(sv2.data(), sv2.size());
    out.normalization = std::move(norm);
  }

  model.params.validate();
  return out;
}

inline void save_checkpoint(const InverseModel& model, const std::string& path,
                            const std::optional<Normalization>& norm = {}) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << checkpoint_to_json(model, norm).dump(2) << "\n";
  if (!out) throw DataError("write failed: " + path);
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid checkpoint JSON: " + e.what());
  }
  try {
    return checkpoint_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace nlpca
