#ifndef LEARNSAM_MLP_HPP_
#define LEARNSAM_MLP_HPP_

#include <cmath>
#include <vector>

#include "learnsam/common.hpp"

namespace learnsam {

/// Fully connected network with tanh hidden layers and a linear output,
/// parameters held in one flat vector so trust-region updates and
/// finite-difference checks can treat the whole policy as a point in R^n.
/// Backpropagation is written out by hand; gradients are exact.
class Mlp {
 public:
  Mlp() = default;

  Mlp(int in, const std::vector<int>& hidden, int out) {
    dims_.push_back(in);
    for (int h : hidden) dims_.push_back(h);
    dims_.push_back(out);
    int count = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l)
      count += dims_[l + 1] * dims_[l] + dims_[l + 1];
    params_ = Vec::Zero(count);
  }

  int param_count() const { return static_cast<int>(params_.size()); }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  const std::vector<int>& dims() const { return dims_; }

  const Vec& params() const { return params_; }
  void set_params(const Vec& p) {
    if (p.size() != params_.size()) throw DimensionError("mlp parameter size");
    params_ = p;
  }

  /// Uniform Xavier init for hidden layers; the output layer starts at zero
  /// so fresh policies are uniform/centred and fresh value nets predict 0.
  void init(Rng& rng) {
    params_.setZero();
    int offset = 0;
    int layers = static_cast<int>(dims_.size()) - 1;
    for (int l = 0; l < layers; ++l) {
      int rows = dims_[l + 1], cols = dims_[l];
      if (l < layers - 1) {
        double a = std::sqrt(6.0 / (rows + cols));
        for (int i = 0; i < rows * cols; ++i)
          params_[offset + i] = rng.uniform(-a, a);
      }
      offset += rows * cols + rows;
    }
  }

  struct Trace {
    std::vector<Vec> act;  // act[0] = input, act[L] = output
  };

  Vec forward(const Vec& x) const {
    Trace tr;
    return forward(x, tr);
  }

  Vec forward(const Vec& x, Trace& tr) const {
    if (x.size() != dims_.front()) throw DimensionError("mlp input size");
    int layers = static_cast<int>(dims_.size()) - 1;
    tr.act.assign(layers + 1, Vec());
    tr.act[0] = x;
    int offset = 0;
    for (int l = 0; l < layers; ++l) {
      int rows = dims_[l + 1], cols = dims_[l];
      Eigen::Map<const Mat> w(params_.data() + offset, rows, cols);
      Eigen::Map<const Vec> b(params_.data() + offset + rows * cols, rows);
      Vec z = w * tr.act[l] + b;
      tr.act[l + 1] = (l == layers - 1) ? z : z.array().tanh().matrix();
      offset += rows * cols + rows;
    }
    return tr.act.back();
  }

  struct BatchTrace {
    std::vector<Mat> act;  // act[0] = inputs (dim x n), act[L] = outputs
  };

  /// Whole-batch forward pass: columns are samples.
  Mat forward_batch(const Mat& x, BatchTrace& tr) const {
    if (x.rows() != dims_.front()) throw DimensionError("mlp input size");
    int layers = static_cast<int>(dims_.size()) - 1;
    tr.act.assign(layers + 1, Mat());
    tr.act[0] = x;
    int offset = 0;
    for (int l = 0; l < layers; ++l) {
      int rows = dims_[l + 1], cols = dims_[l];
      Eigen::Map<const Mat> w(params_.data() + offset, rows, cols);
      Eigen::Map<const Vec> b(params_.data() + offset + rows * cols, rows);
      Mat z = (w * tr.act[l]).colwise() + b;
      tr.act[l + 1] = (l == layers - 1) ? z : z.array().tanh().matrix();
      offset += rows * cols + rows;
    }
    return tr.act.back();
  }

  Mat forward_batch(const Mat& x) const {
    BatchTrace tr;
    return forward_batch(x, tr);
  }

  /// Accumulates the sum over samples of d(dy_i . output_i)/d(params).
  void backward_batch(const BatchTrace& tr, const Mat& dy,
                      Eigen::Ref<Vec> grad) const {
    int layers = static_cast<int>(dims_.size()) - 1;
    Mat delta = dy;
    int offset = param_count();
    for (int l = layers - 1; l >= 0; --l) {
      int rows = dims_[l + 1], cols = dims_[l];
      offset -= rows * cols + rows;
      Eigen::Map<const Mat> w(params_.data() + offset, rows, cols);
      Eigen::Map<Mat> gw(grad.data() + offset, rows, cols);
      Eigen::Map<Vec> gb(grad.data() + offset + rows * cols, rows);
      gw.noalias() += delta * tr.act[l].transpose();
      gb += delta.rowwise().sum();
      if (l > 0) {
        Mat dx = w.transpose() * delta;
        delta = dx.cwiseProduct(
            (1.0 - tr.act[l].array().square()).matrix());
      }
    }
  }

  /// Accumulates d(dy . output)/d(params) into grad (which must already be
  /// sized param_count; contents are added to, enabling batch sums).
  void backward(const Trace& tr, const Vec& dy, Eigen::Ref<Vec> grad) const {
    int layers = static_cast<int>(dims_.size()) - 1;
    Vec delta = dy;
    int offset = param_count();
    for (int l = layers - 1; l >= 0; --l) {
      int rows = dims_[l + 1], cols = dims_[l];
      offset -= rows * cols + rows;
      Eigen::Map<const Mat> w(params_.data() + offset, rows, cols);
      Eigen::Map<Mat> gw(grad.data() + offset, rows, cols);
      Eigen::Map<Vec> gb(grad.data() + offset + rows * cols, rows);
      gw.noalias() += delta * tr.act[l].transpose();
      gb += delta;
      if (l > 0) {
        Vec dx = w.transpose() * delta;
        delta = dx.cwiseProduct(
            (1.0 - tr.act[l].array().square()).matrix());
      }
    }
  }

 private:
  std::vector<int> dims_;
  Vec params_;
};

/// Adam on a flat parameter vector; used for the supervised fits
/// (behaviour cloning, pre-train baseline).
class Adam {
 public:
  Adam(int n, double lr = 1e-2) : lr_(lr), m_(Vec::Zero(n)), v_(Vec::Zero(n)) {}

  void apply(Vec& params, const Vec& grad) {
    ++t_;
    m_ = beta1_ * m_ + (1 - beta1_) * grad;
    v_ = beta2_ * v_ + (1 - beta2_) * grad.cwiseProduct(grad);
    double bc1 = 1 - std::pow(beta1_, t_);
    double bc2 = 1 - std::pow(beta2_, t_);
    params -= (lr_ / bc1) * m_.cwiseQuotient(
        ((v_ / bc2).cwiseSqrt().array() + eps_).matrix());
  }

 private:
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int t_ = 0;
  Vec m_, v_;
};

}  // namespace learnsam

#endif  // LEARNSAM_MLP_HPP_
