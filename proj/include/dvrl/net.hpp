#pragma once

// Minimal MLP machinery for DDPG: dense layers with rectifier hidden units,
// exact reverse-mode gradients, Adam, and Polyak target averaging. Batches
// are column-major: one sample per column.

#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace dvrl {

struct MlpGrads {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::MatrixXd input;  // gradient wrt the forward input
};

class Mlp {
 public:
  enum class Output { Tanh, Linear };

  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // a_0 = input, ..., a_L
    std::vector<Eigen::MatrixXd> pre;          // z_1, ..., z_L
  };

  Mlp() = default;

  static Mlp create(std::vector<int> layer_sizes, Output output,
                    std::mt19937_64& rng) {
    if (layer_sizes.size() < 2)
      throw std::invalid_argument("need at least input and output layers");
    Mlp net;
    net.sizes_ = std::move(layer_sizes);
    net.output_ = output;
    for (std::size_t l = 1; l < net.sizes_.size(); ++l) {
      const int fan_in = net.sizes_[l - 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      Eigen::MatrixXd w(net.sizes_[l], fan_in);
      for (int i = 0; i < w.rows(); ++i)
        for (int j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
      Eigen::VectorXd b(net.sizes_[l]);
      for (int i = 0; i < b.size(); ++i) b[i] = dist(rng);
      net.weights_.push_back(std::move(w));
      net.biases_.push_back(std::move(b));
    }
    return net;
  }

  const std::vector<int>& layer_sizes() const { return sizes_; }
  Output output_kind() const { return output_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::size_t layer_count() const { return weights_.size(); }
  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x,
                          Cache* cache = nullptr) const {
    if (x.rows() != input_dim())
      throw std::invalid_argument("mlp_forward: input dimension mismatch");
    if (!x.allFinite())
      throw std::invalid_argument("mlp_forward: non-finite input");
    if (cache) {
      cache->activations.assign(1, x);
      cache->pre.clear();
    }
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::MatrixXd z = (weights_[l] * a).colwise() + biases_[l];
      if (l + 1 < weights_.size()) {
        a = z.cwiseMax(0.0);
      } else if (output_ == Output::Tanh) {
        a = z.array().tanh().matrix();
      } else {
        a = z;
      }
      if (cache) {
        cache->pre.push_back(std::move(z));
        cache->activations.push_back(a);
      }
    }
    return a;
  }

  Eigen::VectorXd forward1(const Eigen::VectorXd& x) const {
    return forward(Eigen::MatrixXd(x));
  }

  // Gradients of a scalar loss given d(loss)/d(output). pre_out_grad, when
  // present, is added at the output pre-activation, for losses with a term
  // on the unsquashed output.
  MlpGrads backward(const Cache& cache, const Eigen::MatrixXd& out_grad,
                    const Eigen::MatrixXd* pre_out_grad = nullptr) const {
    const std::size_t nl = weights_.size();
    if (cache.pre.size() != nl)
      throw std::invalid_argument("mlp_backward: cache/layer mismatch");
    if (out_grad.rows() != output_dim() ||
        out_grad.cols() != cache.activations.back().cols())
      throw std::invalid_argument("mlp_backward: gradient shape mismatch");

    MlpGrads g;
    g.weights.resize(nl);
    g.biases.resize(nl);

    Eigen::MatrixXd dz;
    if (output_ == Output::Tanh) {
      const Eigen::MatrixXd& a = cache.activations.back();
      dz = out_grad.cwiseProduct(
          (1.0 - a.array().square()).matrix());
    } else {
      dz = out_grad;
    }
    if (pre_out_grad) dz += *pre_out_grad;

    for (std::size_t l = nl; l-- > 0;) {
      g.weights[l].noalias() = dz * cache.activations[l].transpose();
      g.biases[l] = dz.rowwise().sum();
      Eigen::MatrixXd da = weights_[l].transpose() * dz;
      if (l > 0) {
        dz = da.cwiseProduct(
            (cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
      } else {
        g.input = std::move(da);
      }
    }
    return g;
  }

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
  Output output_ = Output::Linear;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(const Mlp& net, double lr = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      mw_.push_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(),
                                          net.weights()[l].cols()));
      vw_.push_back(mw_.back());
      mb_.push_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
      vb_.push_back(mb_.back());
    }
  }

  int step_count() const { return t_; }
  double learning_rate() const { return lr_; }

  void step(Mlp& net, const MlpGrads& grads) {
    if (grads.weights.size() != mw_.size())
      throw std::invalid_argument("adam_step: shape mismatch");
    for (const auto& g : grads.weights)
      if (!g.allFinite())
        throw std::invalid_argument("adam_step: non-finite gradient");
    for (const auto& g : grads.biases)
      if (!g.allFinite())
        throw std::invalid_argument("adam_step: non-finite gradient");

    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t l = 0; l < mw_.size(); ++l) {
      update(net.weights()[l], grads.weights[l], mw_[l], vw_[l], bc1, bc2);
      update(net.biases()[l], grads.biases[l], mb_[l], vb_[l], bc1, bc2);
    }
  }

 private:
  template <typename P, typename G>
  void update(P& param, const G& grad, P& m, P& v, double bc1, double bc2) {
    m = beta1_ * m + (1.0 - beta1_) * grad;
    v = (beta2_ * v.array() + (1.0 - beta2_) * grad.array().square()).matrix();
    param.array() -=
        lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
  }

  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int t_ = 0;
  std::vector<Eigen::MatrixXd> mw_, vw_;
  std::vector<Eigen::VectorXd> mb_, vb_;
};

// target <- tau * target + (1 - tau) * source
inline void polyak_update(Mlp& target, const Mlp& source, double tau) {
  if (target.layer_sizes() != source.layer_sizes())
    throw std::invalid_argument("polyak_update: shape mismatch");
  for (std::size_t l = 0; l < target.layer_count(); ++l) {
    target.weights()[l] =
        tau * target.weights()[l] + (1.0 - tau) * source.weights()[l];
    target.biases()[l] =
        tau * target.biases()[l] + (1.0 - tau) * source.biases()[l];
  }
}

}  // namespace dvrl
