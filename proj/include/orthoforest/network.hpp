#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "orthoforest/errors.hpp"
#include "orthoforest/linear.hpp"
#include "orthoforest/rng.hpp"

namespace orf {

enum class Activation { ReLU, Tanh };

inline std::string activation_name(Activation a) {
  return a == Activation::ReLU ? "relu" : "tanh";
}

inline Activation parse_activation(const std::string& s, const std::string& where) {
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  throw ConfigError(where + ": unknown activation '" + s + "'");
}

// Layout of a two-branch regression network.  Nonparametric inputs pass
// through the hidden stack; parametric inputs enter linearly at the top:
//
//   f(xn, xp) = intercept + top_hidden . h_L(xn) + top_param . xp
//
// A hidden stack is required whenever there are nonparametric inputs and
// forbidden when there are none (the model is then purely linear in xp).
struct NetArchitecture {
  int nonparam_dim = 0;
  int param_dim = 0;
  std::vector<int> hidden;
  Activation activation = Activation::ReLU;

  void validate() const {
    if (nonparam_dim < 0 || param_dim < 0) {
      throw ShapeError("network input dimensions must be non-negative");
    }
    if (nonparam_dim == 0 && param_dim == 0) {
      throw ShapeError("network needs at least one input column");
    }
    if (nonparam_dim > 0 && hidden.empty()) {
      throw ShapeError("nonparametric inputs require at least one hidden layer");
    }
    if (nonparam_dim == 0 && !hidden.empty()) {
      throw ShapeError("hidden layers require nonparametric inputs");
    }
    for (int h : hidden) {
      if (h < 1) throw ShapeError("hidden layer widths must be positive");
    }
  }
};

class TwoBranchNet {
 public:
  NetArchitecture arch;
  std::vector<MatrixXd> weights;  // weights[l]: hidden[l] x fan_in(l)
  std::vector<VectorXd> biases;
  VectorXd top_hidden;  // size hidden.back() (empty when no hidden stack)
  VectorXd top_param;   // size param_dim
  double intercept = 0.0;

  // Glorot-uniform weights, zero biases, drawn from the given stream.
  static TwoBranchNet initialize(const NetArchitecture& a, RandomStream rng) {
    a.validate();
    TwoBranchNet net;
    net.arch = a;
    int fan_in = a.nonparam_dim;
    for (std::size_t l = 0; l < a.hidden.size(); ++l) {
      const int fan_out = a.hidden[l];
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      MatrixXd w(fan_out, fan_in);
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        w.data()[i] = (2.0 * rng.next_double() - 1.0) * limit;
      }
      net.weights.push_back(std::move(w));
      net.biases.push_back(VectorXd::Zero(fan_out));
      fan_in = fan_out;
    }
    const int top_in = (a.hidden.empty() ? 0 : a.hidden.back()) + a.param_dim;
    const double limit = std::sqrt(6.0 / (top_in + 1));
    auto draw = [&rng, limit]() { return (2.0 * rng.next_double() - 1.0) * limit; };
    net.top_hidden.resize(a.hidden.empty() ? 0 : a.hidden.back());
    for (Eigen::Index i = 0; i < net.top_hidden.size(); ++i) net.top_hidden(i) = draw();
    net.top_param.resize(a.param_dim);
    for (Eigen::Index i = 0; i < net.top_param.size(); ++i) net.top_param(i) = draw();
    net.intercept = 0.0;
    return net;
  }

  int parameter_count() const {
    int count = 1;  // intercept
    for (std::size_t l = 0; l < weights.size(); ++l) {
      count += static_cast<int>(weights[l].size() + biases[l].size());
    }
    count += static_cast<int>(top_hidden.size() + top_param.size());
    return count;
  }

  // Batch forward pass; rows of xn/xp are observations.
  VectorXd forward(const MatrixXd& xn, const MatrixXd& xp) const {
    check_inputs(xn, xp);
    MatrixXd h = xn;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      h = ((h * weights[l].transpose()).rowwise() + biases[l].transpose()).eval();
      apply_activation(h);
    }
    VectorXd out = VectorXd::Constant(xn.rows(), intercept);
    if (top_hidden.size() > 0) out += h * top_hidden;
    if (top_param.size() > 0) out += xp * top_param;
    return out;
  }

  double forward_one(const VectorXd& xn, const VectorXd& xp) const {
    MatrixXd mn = xn.transpose();
    MatrixXd mp = xp.transpose();
    return forward(mn, mp)(0);
  }

  // Parameters as one vector, in a fixed order (per-layer weights then bias,
  // then top_hidden, top_param, intercept).
  VectorXd flatten() const {
    VectorXd theta(parameter_count());
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      theta.segment(at, weights[l].size()) =
          Eigen::Map<const VectorXd>(weights[l].data(), weights[l].size());
      at += weights[l].size();
      theta.segment(at, biases[l].size()) = biases[l];
      at += biases[l].size();
    }
    theta.segment(at, top_hidden.size()) = top_hidden;
    at += top_hidden.size();
    theta.segment(at, top_param.size()) = top_param;
    at += top_param.size();
    theta(at) = intercept;
    return theta;
  }

  void unflatten(const VectorXd& theta) {
    if (theta.size() != parameter_count()) {
      throw ShapeError("unflatten: expected " + std::to_string(parameter_count()) +
                       " parameters, got " + std::to_string(theta.size()));
    }
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Eigen::Map<VectorXd>(weights[l].data(), weights[l].size()) =
          theta.segment(at, weights[l].size());
      at += weights[l].size();
      biases[l] = theta.segment(at, biases[l].size());
      at += biases[l].size();
    }
    top_hidden = theta.segment(at, top_hidden.size());
    at += top_hidden.size();
    top_param = theta.segment(at, top_param.size());
    at += top_param.size();
    intercept = theta(at);
  }

  void apply_activation(MatrixXd& a) const {
    if (arch.activation == Activation::ReLU) {
      a = a.cwiseMax(0.0);
    } else {
      a = a.array().tanh();
    }
  }

 private:
  void check_inputs(const MatrixXd& xn, const MatrixXd& xp) const {
    if (xn.cols() != arch.nonparam_dim) {
      throw ShapeError("network expects " + std::to_string(arch.nonparam_dim) +
                       " nonparametric columns, got " + std::to_string(xn.cols()));
    }
    if (xp.cols() != arch.param_dim) {
      throw ShapeError("network expects " + std::to_string(arch.param_dim) +
                       " parametric columns, got " + std::to_string(xp.cols()));
    }
    if (xn.rows() != xp.rows()) throw ShapeError("network input row counts must match");
  }
};

// Penalized weighted squared-error loss over the given rows:
//
//   L = sum_i w_i (y_i - f(xn_i, xp_i))^2 + lambda * ||theta||^2
//
// where theta collects every parameter (weights, biases, top coefficients and
// intercept).
inline double weighted_loss(const TwoBranchNet& net, const MatrixXd& xn, const MatrixXd& xp,
                            const VectorXd& y, const VectorXd& w, double lambda) {
  const VectorXd pred = net.forward(xn, xp);
  const VectorXd r = y - pred;
  return w.dot(r.cwiseProduct(r)) + lambda * net.flatten().squaredNorm();
}

struct LossGrad {
  double loss = 0.0;
  VectorXd grad;
};

// Loss above plus its exact gradient with respect to the flattened parameters
// (reverse-mode).  For ReLU the derivative at exactly zero pre-activation is
// taken as zero.
inline LossGrad weighted_loss_and_grad(const TwoBranchNet& net, const MatrixXd& xn,
                                       const MatrixXd& xp, const VectorXd& y, const VectorXd& w,
                                       double lambda) {
  const Eigen::Index m = y.size();
  const std::size_t layers = net.weights.size();

  // Forward pass, keeping pre-activations for the backward sweep.
  std::vector<MatrixXd> pre(layers);   // A_l = H_{l-1} W_l^T + b_l
  std::vector<MatrixXd> post(layers);  // H_l = act(A_l)
  MatrixXd h = xn;
  for (std::size_t l = 0; l < layers; ++l) {
    pre[l] = (h * net.weights[l].transpose()).rowwise() + net.biases[l].transpose();
    post[l] = pre[l];
    net.apply_activation(post[l]);
    h = post[l];
  }
  VectorXd pred = VectorXd::Constant(m, net.intercept);
  if (net.top_hidden.size() > 0) pred += h * net.top_hidden;
  if (net.top_param.size() > 0) pred += xp * net.top_param;

  const VectorXd r = pred - y;
  LossGrad out;
  out.loss = w.dot(r.cwiseProduct(r));

  TwoBranchNet grad = net;  // same shapes; values overwritten below
  const VectorXd dpred = 2.0 * w.cwiseProduct(r);
  grad.intercept = dpred.sum();
  grad.top_param = xp.transpose() * dpred;
  if (layers > 0) {
    grad.top_hidden = post.back().transpose() * dpred;
    MatrixXd delta = dpred * net.top_hidden.transpose();  // m x h_L
    for (std::size_t l = layers; l-- > 0;) {
      if (net.arch.activation == Activation::ReLU) {
        delta = delta.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
      } else {
        delta = delta.cwiseProduct(
            (1.0 - post[l].array().square()).matrix());
      }
      const MatrixXd& below = l == 0 ? xn : post[l - 1];
      grad.weights[l] = delta.transpose() * below;
      grad.biases[l] = delta.colwise().sum();
      if (l > 0) delta = (delta * net.weights[l]).eval();
    }
  } else {
    grad.top_hidden.resize(0);
  }

  out.grad = grad.flatten();
  if (lambda != 0.0) {
    const VectorXd theta = net.flatten();
    out.loss += lambda * theta.squaredNorm();
    out.grad += 2.0 * lambda * theta;
  }
  return out;
}

// Mini-batch Adam training schedule.
struct TrainConfig {
  int epochs = 200;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double lr_decay = 1.0;  // multiplicative, per epoch
  double weight_decay = 1e-4;
  int patience = 10;
  double holdout_fraction = 0.1;  // 0 disables the holdout monitor
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("training epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("training batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(lr_decay > 0.0) || lr_decay > 1.0) throw ConfigError("lr_decay must be in (0, 1]");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (patience < 1) throw ConfigError("early-stop patience must be >= 1");
    if (holdout_fraction < 0.0 || holdout_fraction > 0.5) {
      throw ConfigError("holdout_fraction must be in [0, 0.5]");
    }
  }
};

// Fits a two-branch network by mini-batch Adam on the weighted squared-error
// objective with L2 penalty.  Weights are normalized to mean one internally,
// so the fit does not depend on their overall scale.  A held-out slice (the
// last `holdout_fraction` of a seeded shuffle) is monitored every epoch;
// training stops after `patience` epochs without improvement and the best
// snapshot is returned, so the held-out loss never ends worse than at
// initialization.  A non-finite monitored loss raises DivergenceError.
inline TwoBranchNet train_network(const MatrixXd& xn, const MatrixXd& xp, const VectorXd& y,
                                  const VectorXd& w, const NetArchitecture& arch,
                                  const TrainConfig& cfg) {
  arch.validate();
  cfg.validate();
  const Eigen::Index n = y.size();
  if (xn.rows() != n || xp.rows() != n || w.size() != n) {
    throw ShapeError("train_network: row counts of inputs, y and w must match");
  }
  if (n < 2) throw SizeError("train_network: need at least 2 rows");
  check_weights(w);
  const VectorXd wn = w * (static_cast<double>(n) / w.sum());

  RandomStream init_rng = derive_stream(cfg.seed, "net-init");
  RandomStream shuffle_rng = derive_stream(cfg.seed, "net-shuffle");
  RandomStream holdout_rng = derive_stream(cfg.seed, "net-holdout");

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  holdout_rng.shuffle(order);
  int n_holdout = 0;
  if (cfg.holdout_fraction > 0.0 && n >= 10) {
    n_holdout = std::max(1, static_cast<int>(cfg.holdout_fraction * static_cast<double>(n)));
  }
  std::vector<int> train_rows(order.begin(), order.end() - n_holdout);
  std::vector<int> monitor_rows =
      n_holdout > 0 ? std::vector<int>(order.end() - n_holdout, order.end()) : train_rows;
  const int n_train = static_cast<int>(train_rows.size());

  auto gather = [&](const std::vector<int>& rows, MatrixXd& gxn, MatrixXd& gxp, VectorXd& gy,
                    VectorXd& gw) {
    const int m = static_cast<int>(rows.size());
    gxn.resize(m, xn.cols());
    gxp.resize(m, xp.cols());
    gy.resize(m);
    gw.resize(m);
    for (int i = 0; i < m; ++i) {
      const int r = rows[static_cast<std::size_t>(i)];
      gxn.row(i) = xn.row(r);
      gxp.row(i) = xp.row(r);
      gy(i) = y(r);
      gw(i) = wn(r);
    }
  };
  MatrixXd mon_xn, mon_xp;
  VectorXd mon_y, mon_w;
  gather(monitor_rows, mon_xn, mon_xp, mon_y, mon_w);

  TwoBranchNet net = TwoBranchNet::initialize(arch, init_rng);
  VectorXd theta = net.flatten();

  auto monitor_loss = [&](const VectorXd& params) {
    net.unflatten(params);
    return weighted_loss(net, mon_xn, mon_xp, mon_y, mon_w, 0.0);
  };

  VectorXd best_theta = theta;
  double best_loss = monitor_loss(theta);
  if (!std::isfinite(best_loss)) throw DivergenceError("non-finite loss at initialization", 0);

  VectorXd adam_m = VectorXd::Zero(theta.size());
  VectorXd adam_v = VectorXd::Zero(theta.size());
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  int since_improve = 0;
  double lr = cfg.learning_rate;
  const double decay_scale = cfg.weight_decay / static_cast<double>(n_train);

  MatrixXd bxn, bxp;
  VectorXd by, bw;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(train_rows);
    for (int start = 0; start < n_train; start += cfg.batch_size) {
      const int stop = std::min(start + cfg.batch_size, n_train);
      std::vector<int> batch(train_rows.begin() + start, train_rows.begin() + stop);
      gather(batch, bxn, bxp, by, bw);
      // Scale so the batch estimates (1/n) * (data term + decay term).
      bw /= static_cast<double>(batch.size());
      net.unflatten(theta);
      LossGrad lg = weighted_loss_and_grad(net, bxn, bxp, by, bw, decay_scale);
      ++step;
      adam_m = beta1 * adam_m + (1.0 - beta1) * lg.grad;
      adam_v = beta2 * adam_v + (1.0 - beta2) * lg.grad.cwiseProduct(lg.grad).eval();
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      theta -= (lr / c1) * adam_m.cwiseQuotient(((adam_v / c2).cwiseSqrt().array() + eps).matrix());
    }
    lr *= cfg.lr_decay;

    const double loss = monitor_loss(theta);
    if (!std::isfinite(loss)) {
      throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch), epoch);
    }
    if (loss < best_loss) {
      best_loss = loss;
      best_theta = theta;
      since_improve = 0;
    } else if (++since_improve >= cfg.patience) {
      break;
    }
  }

  net.unflatten(best_theta);
  return net;
}

}  // namespace orf
