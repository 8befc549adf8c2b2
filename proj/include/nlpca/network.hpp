#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nlpca/dataset.hpp"
#include "nlpca/errors.hpp"

namespace nlpca {

/// Layered weights and biases of the generation network.
///
/// `layer_sizes` runs from the latent dimension k to the data dimension d,
/// e.g. {1, 10, 3}. Layer l maps layer_sizes[l] -> layer_sizes[l+1] with
/// weights[l] of shape layer_sizes[l+1] x layer_sizes[l] and a bias vector of
/// length layer_sizes[l+1]. Hidden layers apply tanh; the output layer is
/// affine.
struct NetworkParams {
  std::vector<int> layer_sizes;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  int latent_dim() const { return layer_sizes.front(); }
  int data_dim() const { return layer_sizes.back(); }
  std::size_t n_layers() const { return weights.size(); }

  static NetworkParams zeros(std::vector<int> sizes) {
    if (sizes.size() < 2)
      throw ContractError("layer_sizes needs at least latent and data dims");
    for (int s : sizes)
      if (s <= 0) throw ContractError("layer sizes must be positive");
    NetworkParams p;
    p.layer_sizes = std::move(sizes);
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
      p.weights.emplace_back(
          Eigen::MatrixXd::Zero(p.layer_sizes[l + 1], p.layer_sizes[l]));
      p.biases.emplace_back(Eigen::VectorXd::Zero(p.layer_sizes[l + 1]));
    }
    return p;
  }

  std::size_t weight_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
    return n;
  }

  std::size_t coefficient_count() const {
    std::size_t n = weight_count();
    for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
    return n;
  }

  void validate() const {
    if (layer_sizes.size() < 2)
      throw ContractError("layer_sizes needs at least latent and data dims");
    if (weights.size() + 1 != layer_sizes.size() ||
        biases.size() != weights.size())
      throw ContractError("layer count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != layer_sizes[l + 1] ||
          weights[l].cols() != layer_sizes[l])
        throw ContractError("weight matrix " + std::to_string(l) +
                            " has wrong shape");
      if (biases[l].size() != layer_sizes[l + 1])
        throw ContractError("bias vector " + std::to_string(l) +
                            " has wrong length");
      if (!weights[l].allFinite() || !biases[l].allFinite())
        throw ContractError("non-finite network coefficient in layer " +
                            std::to_string(l));
    }
  }
};

/// One latent coordinate vector per training sample (n_samples x k).
struct LatentScores {
  Eigen::MatrixXd z;
};

struct LossBreakdown {
  double reconstruction = 0.0;  // mean squared error over observed entries
  double decay_penalty = 0.0;   // nu * sum of squared weights
  double total = 0.0;
};

/// Gradient of LossBreakdown::total, same shapes as the inputs.
struct NetworkGradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::MatrixXd scores;
};

inline double weight_sum_squares(const NetworkParams& params) {
  double s = 0.0;
  for (const auto& w : params.weights) s += w.squaredNorm();
  return s;
}

/// Maps one latent vector through the network.
inline Eigen::VectorXd forward(const NetworkParams& params,
                               const Eigen::VectorXd& z) {
  if (z.size() != params.latent_dim())
    throw ContractError("latent vector length " + std::to_string(z.size()) +
                        " does not match latent dimension " +
                        std::to_string(params.latent_dim()));
  Eigen::VectorXd a = z;
  const std::size_t L = params.n_layers();
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::VectorXd pre = params.weights[l] * a + params.biases[l];
    if (l + 1 < L)
      a = pre.array().tanh().matrix();
    else
      a = std::move(pre);
  }
  return a;
}

/// Maps a batch of latent row-vectors (n x k) to outputs (n x d).
inline Eigen::MatrixXd forward_batch(const NetworkParams& params,
                                     const Eigen::MatrixXd& z_rows) {
  if (z_rows.cols() != params.latent_dim())
    throw ContractError("score column count does not match latent dimension");
  Eigen::MatrixXd a = z_rows;
  const std::size_t L = params.n_layers();
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd pre = a * params.weights[l].transpose();
    pre.rowwise() += params.biases[l].transpose();
    if (l + 1 < L)
      a = pre.array().tanh().matrix();
    else
      a = std::move(pre);
  }
  return a;
}

namespace detail {

inline void check_loss_args(const NetworkParams& params,
                            const LatentScores& scores,
                            const MaskedDataset& data, double nu) {
  if (scores.z.rows() != data.n_samples())
    throw ContractError("score row count does not match sample count");
  if (scores.z.cols() != params.latent_dim())
    throw ContractError("score column count does not match latent dimension");
  if (data.dim() != params.data_dim())
    throw ContractError("data dimension does not match network output");
  if (nu < 0.0) throw ContractError("nu must be nonnegative");
}

}  // namespace detail

/// Masked reconstruction error plus weight-decay penalty.
///
/// reconstruction is the mean over all observed scalar entries of the squared
/// residual; missing entries contribute nothing. decay_penalty is
/// nu * (sum of squared weight-matrix entries); biases are excluded so a
/// strong penalty can still shrink the network to a constant output.
inline LossBreakdown loss(const NetworkParams& params,
                          const LatentScores& scores, const MaskedDataset& data,
                          double nu) {
  detail::check_loss_args(params, scores, data, nu);
  const Eigen::Index n_obs = data.observed_count();
  if (n_obs == 0) throw Error("no observed entries");

  const Eigen::MatrixXd out = forward_batch(params, scores.z);
  double sq = 0.0;
  for (Eigen::Index i = 0; i < data.n_samples(); ++i)
    for (Eigen::Index j = 0; j < data.dim(); ++j)
      if (data.mask(i, j)) {
        const double r = out(i, j) - data.values(i, j);
        sq += r * r;
      }

  LossBreakdown b;
  b.reconstruction = sq / static_cast<double>(n_obs);
  b.decay_penalty = nu * weight_sum_squares(params);
  b.total = b.reconstruction + b.decay_penalty;
  return b;
}

/// Exact gradient of loss(...).total with respect to every weight, bias and
/// latent entry. Missing entries inject zero error signal.
inline std::pair<LossBreakdown, NetworkGradient> loss_and_gradient(
    const NetworkParams& params, const LatentScores& scores,
    const MaskedDataset& data, double nu) {
  detail::check_loss_args(params, scores, data, nu);
  const Eigen::Index n_obs = data.observed_count();
  if (n_obs == 0) throw Error("no observed entries");

  const std::size_t L = params.n_layers();
  // activations[l] is the input to layer l; activations[L] is the output.
  std::vector<Eigen::MatrixXd> activations(L + 1);
  activations[0] = scores.z;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd pre = activations[l] * params.weights[l].transpose();
    pre.rowwise() += params.biases[l].transpose();
    if (l + 1 < L)
      activations[l + 1] = pre.array().tanh().matrix();
    else
      activations[l + 1] = std::move(pre);
  }

  double sq = 0.0;
  Eigen::MatrixXd delta =
      Eigen::MatrixXd::Zero(data.n_samples(), data.dim());
  const double scale = 2.0 / static_cast<double>(n_obs);
  for (Eigen::Index i = 0; i < data.n_samples(); ++i)
    for (Eigen::Index j = 0; j < data.dim(); ++j)
      if (data.mask(i, j)) {
        const double r = activations[L](i, j) - data.values(i, j);
        sq += r * r;
        delta(i, j) = scale * r;
      }

  NetworkGradient g;
  g.weights.resize(L);
  g.biases.resize(L);
  // delta holds d(total)/d(pre-activation of layer l) on entry to step l.
  for (std::size_t l = L; l-- > 0;) {
    g.weights[l] = delta.transpose() * activations[l];
    g.weights[l].noalias() += 2.0 * nu * params.weights[l];
    g.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd back = delta * params.weights[l];
      // activations[l] = tanh(pre), so d tanh = 1 - activations^2.
      delta = (back.array() * (1.0 - activations[l].array().square())).matrix();
    } else {
      g.scores = delta * params.weights[0];
    }
  }

  LossBreakdown b;
  b.reconstruction = sq / static_cast<double>(n_obs);
  b.decay_penalty = nu * weight_sum_squares(params);
  b.total = b.reconstruction + b.decay_penalty;
  return {b, std::move(g)};
}

inline NetworkGradient gradient(const NetworkParams& params,
                                const LatentScores& scores,
                                const MaskedDataset& data, double nu) {
  return loss_and_gradient(params, scores, data, nu).second;
}

/// Mean squared error of one sample over its observed entries, as a function
/// of the latent vector only, with optional gradient. Weights are treated as
/// constants; no decay term. This is the per-sample inference objective.
inline double observed_error_and_grad_z(
    const NetworkParams& params, const Eigen::VectorXd& z,
    const Eigen::VectorXd& sample,
    const Eigen::Array<bool, Eigen::Dynamic, 1>& observed,
    Eigen::VectorXd* grad_z = nullptr) {
  if (sample.size() != params.data_dim() || observed.size() != sample.size())
    throw ContractError("sample/mask length does not match data dimension");
  const Eigen::Index n_obs = observed.count();
  if (n_obs == 0) throw ContractError("sample has no observed entries");

  const std::size_t L = params.n_layers();
  std::vector<Eigen::VectorXd> act(L + 1);
  act[0] = z;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::VectorXd pre = params.weights[l] * act[l] + params.biases[l];
    if (l + 1 < L)
      act[l + 1] = pre.array().tanh().matrix();
    else
      act[l + 1] = std::move(pre);
  }

  double sq = 0.0;
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(sample.size());
  const double scale = 2.0 / static_cast<double>(n_obs);
  for (Eigen::Index j = 0; j < sample.size(); ++j)
    if (observed(j)) {
      const double r = act[L](j) - sample(j);
      sq += r * r;
      delta(j) = scale * r;
    }

  if (grad_z) {
    for (std::size_t l = L; l-- > 1;) {
      Eigen::VectorXd back = params.weights[l].transpose() * delta;
      delta = (back.array() * (1.0 - act[l].array().square())).matrix();
    }
    *grad_z = params.weights[0].transpose() * delta;
  }
  return sq / static_cast<double>(n_obs);
}

}  // namespace nlpca
