#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "ilab/error.hpp"
#include "ilab/matrix.hpp"
#include "ilab/rng.hpp"

namespace ilab {

// input -> ReLU(W1 x + b1) -> W2 h + b2 = feature -> Wc z + bc = class logits.
//
// All parameters live in one flat vector so the optimiser and the gradient
// check can treat them uniformly; the accessors below carve it into blocks.
class ProjectionHead {
 public:
  ProjectionHead() = default;

  static ProjectionHead create(std::size_t input, std::size_t hidden, std::size_t feature,
                               std::size_t classes, Rng& rng) {
    if (input == 0 || hidden == 0 || classes == 0)
      throw Error(Errc::invalid_argument, "projection head: dimensions must be positive");
    if (feature < 2) throw Error(Errc::invalid_argument, "projection head: feature dim must be >= 2");
    ProjectionHead h;
    h.input_ = input;
    h.hidden_ = hidden;
    h.feature_ = feature;
    h.params_.assign(h.param_count_for(classes), 0.0);
    h.classes_ = classes;
    h.init_block(h.w1(), input, hidden, rng);
    h.init_block(h.w2(), hidden, feature, rng);
    h.init_block(h.wc(), feature, classes, rng);
    return h;
  }

  // Fresh classifier with a new class count; encoder weights untouched.
  void reset_classifier(std::size_t classes, Rng& rng) {
    if (classes == 0) throw Error(Errc::invalid_argument, "projection head: need >= 1 class");
    params_.resize(encoder_size());
    classes_ = classes;
    params_.resize(param_count_for(classes), 0.0);
    init_block(wc(), feature_, classes_, rng);
  }

  [[nodiscard]] std::size_t input_dim() const { return input_; }
  [[nodiscard]] std::size_t hidden_dim() const { return hidden_; }
  [[nodiscard]] std::size_t feature_dim() const { return feature_; }
  [[nodiscard]] std::size_t class_count() const { return classes_; }

  std::vector<double>& params() { return params_; }
  [[nodiscard]] const std::vector<double>& params() const { return params_; }

  std::span<double> w1() { return block(0, hidden_ * input_); }
  std::span<double> b1() { return block(off_b1(), hidden_); }
  std::span<double> w2() { return block(off_w2(), feature_ * hidden_); }
  std::span<double> b2() { return block(off_b2(), feature_); }
  std::span<double> wc() { return block(off_wc(), classes_ * feature_); }
  std::span<double> bc() { return block(off_bc(), classes_); }

  [[nodiscard]] bool finite() const {
    for (double p : params_)
      if (!std::isfinite(p)) return false;
    return true;
  }

  // Feature vectors (rows x feature_dim) for a batch of inputs.
  [[nodiscard]] Matrix features(const Matrix& x) const {
    check_input(x);
    Matrix z(x.rows(), feature_);
    std::vector<double> h(hidden_);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      hidden_forward(x.row(r), h);
      feature_forward(h, z.row(r));
    }
    return z;
  }

  // Mean softmax cross-entropy over the batch. When `grad` is non-null it is
  // resized to params().size() and filled with d(loss)/d(params).
  double loss(const Matrix& x, std::span<const std::size_t> labels, std::vector<double>* grad = nullptr) const {
    check_input(x);
    if (labels.size() != x.rows()) throw Error(Errc::invalid_argument, "projection head: label count mismatch");
    if (grad) grad->assign(params_.size(), 0.0);
    const double inv_b = 1.0 / static_cast<double>(std::max<std::size_t>(x.rows(), 1));
    std::vector<double> h_pre(hidden_), h(hidden_), z(feature_), logits(classes_), dz(feature_), dh(hidden_);
    double total = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const auto xr = x.row(r);
      const std::size_t y = labels[r];
      if (y >= classes_) throw Error(Errc::invalid_argument, "projection head: label out of range");
      for (std::size_t i = 0; i < hidden_; ++i) {
        double s = param(off_b1() + i);
        const double* w = params_.data() + i * input_;
        for (std::size_t j = 0; j < input_; ++j) s += w[j] * xr[j];
        h_pre[i] = s;
        h[i] = s > 0.0 ? s : 0.0;
      }
      feature_forward(h, z);
      double mx = -INFINITY;
      for (std::size_t c = 0; c < classes_; ++c) {
        double s = param(off_bc() + c);
        const double* w = params_.data() + off_wc() + c * feature_;
        for (std::size_t j = 0; j < feature_; ++j) s += w[j] * z[j];
        logits[c] = s;
        mx = std::max(mx, s);
      }
      double sum = 0.0;
      for (double l : logits) sum += std::exp(l - mx);
      const double lse = mx + std::log(sum);
      total += lse - logits[y];
      if (!grad) continue;

      auto& g = *grad;
      std::fill(dz.begin(), dz.end(), 0.0);
      for (std::size_t c = 0; c < classes_; ++c) {
        const double d = (std::exp(logits[c] - lse) - (c == y ? 1.0 : 0.0)) * inv_b;
        g[off_bc() + c] += d;
        double* gw = g.data() + off_wc() + c * feature_;
        const double* w = params_.data() + off_wc() + c * feature_;
        for (std::size_t j = 0; j < feature_; ++j) {
          gw[j] += d * z[j];
          dz[j] += d * w[j];
        }
      }
      std::fill(dh.begin(), dh.end(), 0.0);
      for (std::size_t f = 0; f < feature_; ++f) {
        g[off_b2() + f] += dz[f];
        double* gw = g.data() + off_w2() + f * hidden_;
        const double* w = params_.data() + off_w2() + f * hidden_;
        for (std::size_t j = 0; j < hidden_; ++j) {
          gw[j] += dz[f] * h[j];
          dh[j] += dz[f] * w[j];
        }
      }
      for (std::size_t i = 0; i < hidden_; ++i) {
        if (h_pre[i] <= 0.0) continue;
        g[off_b1() + i] += dh[i];
        double* gw = g.data() + i * input_;
        for (std::size_t j = 0; j < input_; ++j) gw[j] += dh[i] * xr[j];
      }
    }
    return total * inv_b;
  }

  // Row-wise argmax of the classifier.
  [[nodiscard]] std::vector<std::size_t> predict(const Matrix& x) const {
    auto z = features(x);
    std::vector<std::size_t> out(x.rows(), 0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      double best = -INFINITY;
      for (std::size_t c = 0; c < classes_; ++c) {
        double s = param(off_bc() + c);
        const double* w = params_.data() + off_wc() + c * feature_;
        for (std::size_t j = 0; j < feature_; ++j) s += w[j] * z(r, j);
        if (s > best) {
          best = s;
          out[r] = c;
        }
      }
    }
    return out;
  }

  friend bool operator==(const ProjectionHead&, const ProjectionHead&) = default;

 private:
  [[nodiscard]] std::size_t off_b1() const { return hidden_ * input_; }
  [[nodiscard]] std::size_t off_w2() const { return off_b1() + hidden_; }
  [[nodiscard]] std::size_t off_b2() const { return off_w2() + feature_ * hidden_; }
  [[nodiscard]] std::size_t off_wc() const { return off_b2() + feature_; }
  [[nodiscard]] std::size_t off_bc() const { return off_wc() + classes_ * feature_; }
  [[nodiscard]] std::size_t encoder_size() const { return off_wc(); }
  [[nodiscard]] std::size_t param_count_for(std::size_t classes) const {
    return encoder_size() + classes * feature_ + classes;
  }

  [[nodiscard]] double param(std::size_t i) const { return params_[i]; }
  std::span<double> block(std::size_t off, std::size_t len) { return {params_.data() + off, len}; }

  void check_input(const Matrix& x) const {
    if (x.cols() != input_)
      throw Error(Errc::invalid_argument, "projection head: expected input dim " + std::to_string(input_) +
                                              ", got " + std::to_string(x.cols()));
  }

  void hidden_forward(std::span<const double> x, std::vector<double>& h) const {
    for (std::size_t i = 0; i < hidden_; ++i) {
      double s = param(off_b1() + i);
      const double* w = params_.data() + i * input_;
      for (std::size_t j = 0; j < input_; ++j) s += w[j] * x[j];
      h[i] = s > 0.0 ? s : 0.0;
    }
  }

  template <typename Out>
  void feature_forward(const std::vector<double>& h, Out&& z) const {
    for (std::size_t f = 0; f < feature_; ++f) {
      double s = param(off_b2() + f);
      const double* w = params_.data() + off_w2() + f * hidden_;
      for (std::size_t j = 0; j < hidden_; ++j) s += w[j] * h[j];
      z[f] = s;
    }
  }

  // Glorot-uniform weights; biases stay zero.
  static void init_block(std::span<double> w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : w) v = (2.0 * rng.uniform() - 1.0) * a;
  }

  std::size_t input_ = 0, hidden_ = 0, feature_ = 0, classes_ = 0;
  std::vector<double> params_;
};

struct TrainParams {
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::uint64_t rng_seed = 0;
};

struct TrainReport {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // full-data loss after each epoch

  [[nodiscard]] double final_loss() const { return epoch_loss.empty() ? initial_loss : epoch_loss.back(); }
};

// Plain mini-batch gradient descent on the cross-entropy loss. Throws
// Errc::divergence as soon as the loss or any parameter stops being finite.
inline TrainReport train_classifier(ProjectionHead& head, const Matrix& x, const std::vector<std::size_t>& labels,
                                    const TrainParams& tp) {
  if (x.rows() != labels.size()) throw Error(Errc::invalid_argument, "train: label count mismatch");
  if (x.rows() == 0) throw Error(Errc::invalid_argument, "train: no training rows");
  if (tp.batch_size == 0) throw Error(Errc::invalid_argument, "train: batch_size must be >= 1");
  TrainReport rep;
  if (tp.epochs == 0) {
    rep.initial_loss = head.loss(x, labels);
    return rep;
  }
  rep.initial_loss = head.loss(x, labels);
  if (!std::isfinite(rep.initial_loss)) throw Error(Errc::divergence, "divergence: initial loss is not finite");

  Rng rng(tp.rng_seed);
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;
  std::vector<std::size_t> batch_labels;
  for (std::size_t epoch = 0; epoch < tp.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += tp.batch_size) {
      const std::size_t end = std::min(order.size(), start + tp.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      Matrix xb = x.select_rows(idx);
      batch_labels.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) batch_labels[i] = labels[idx[i]];
      const double l = head.loss(xb, batch_labels, &grad);
      if (!std::isfinite(l))
        throw Error(Errc::divergence, "divergence: non-finite loss in epoch " + std::to_string(epoch));
      auto& p = head.params();
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= tp.learning_rate * grad[i];
      if (!head.finite())
        throw Error(Errc::divergence, "divergence: non-finite parameters in epoch " + std::to_string(epoch));
    }
    const double l = head.loss(x, labels);
    if (!std::isfinite(l))
      throw Error(Errc::divergence, "divergence: non-finite loss after epoch " + std::to_string(epoch));
    rep.epoch_loss.push_back(l);
  }
  return rep;
}

}  // namespace ilab
