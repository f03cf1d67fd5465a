#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bbr/dataset.hpp"
#include "bbr/rng.hpp"
#include "bbr/tensor.hpp"

namespace bbr {

/// Lower clip applied to probabilities before taking logs in the cross-entropy.
inline constexpr double kLogClip = 1e-12;

/// Numerically stable softmax. Throws InvalidInputError on non-finite logits.
std::vector<double> softmax(std::span<const double> logits);

/// Row-wise softmax of a (b x n) matrix.
Tensor softmax_rows(const Tensor& logits);

/// -sum_i target_i * log(max(pred_i, kLogClip)).
double cross_entropy_soft(std::span<const double> target, std::span<const double> pred);

/// Sum over rows of cross_entropy_soft(targets.row(i), probs.row(i)).
double batch_cross_entropy(const Tensor& targets, const Tensor& probs);

enum class Activation { kIdentity, kRelu };

struct Dense {
  Tensor weight;  // in x out
  Tensor bias;    // out
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

/// Fully connected network: ReLU on hidden layers, identity on the last one.
class Mlp {
 public:
  /// Intermediate values kept by a training forward pass.
  struct Trace {
    std::vector<Tensor> inputs;  // input of each layer
    std::vector<Tensor> pre;     // pre-activation of each layer
  };

  Mlp() = default;
  /// widths = {input, hidden..., output}; weights ~ N(0, 1/fan_in), zero biases.
  Mlp(const std::vector<std::size_t>& widths, Rng& rng);
  static Mlp zeros(const std::vector<std::size_t>& widths);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::vector<std::size_t> widths() const;

  Tensor forward(const Tensor& batch, Trace* trace = nullptr) const;

  /// Gradients of a loss with respect to every parameter (same order as
  /// parameters()), given dL/d(output) for the batch recorded in `trace`.
  /// When `d_input` is non-null it receives dL/d(input).
  std::vector<Tensor> backward(const Trace& trace, const Tensor& d_output,
                               Tensor* d_input = nullptr) const;

  /// layer0.weight, layer0.bias, layer1.weight, ...
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names(const std::string& prefix = {}) const;
  std::size_t parameter_count() const;

  std::vector<Dense>& layers() noexcept { return layers_; }
  const std::vector<Dense>& layers() const noexcept { return layers_; }

 private:
  std::vector<Dense> layers_;
};

/// Feed-forward classifier whose forward pass yields class probabilities.
class Classifier {
 public:
  Classifier() = default;
  Classifier(const std::vector<std::size_t>& widths, Rng& rng);
  explicit Classifier(Mlp net);

  std::size_t input_dim() const { return net_.input_dim(); }
  std::size_t num_classes() const { return net_.output_dim(); }

  Tensor logits(const Tensor& batch) const;
  /// (b x d) -> (b x n) probabilities.
  Tensor forward(const Tensor& batch) const;

  Mlp& net() noexcept { return net_; }
  const Mlp& net() const noexcept { return net_; }

 private:
  Mlp net_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Adam moments for one parameter list; shapes mirror the parameters.
class Adam {
 public:
  Adam() = default;
  Adam(const std::vector<const Tensor*>& params, AdamConfig config);

  /// Applies one update. Throws DivergenceError if any gradient is non-finite.
  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return steps_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t steps_ = 0;
};

/// One Adam step on the mean soft cross-entropy over the batch.
/// Returns the pre-update mean loss.
double train_step(Classifier& model, Adam& optimizer, const Tensor& batch,
                  const Tensor& soft_targets);

/// Mean soft cross-entropy and its parameter gradients, without updating.
double loss_and_gradients(const Classifier& model, const Tensor& batch, const Tensor& soft_targets,
                          std::vector<Tensor>& grads);

enum class CheckLoss {
  kSoftCrossEntropy,  // mean cross-entropy of softmax(logits) against the targets
  kSquaredError,      // 0.5 * mean squared distance between logits and targets
};

/// Compares analytic gradients against central differences on a seeded random
/// subset of `fraction` of the parameters (at least one). Returns the worst
/// relative error |a - f| / max(|a| + |f|, 1e-5 * max(1, |L|)), where L is the
/// unperturbed loss; the floor sits well above the rounding noise of the
/// central difference.
double gradient_check(const Classifier& model, const Tensor& batch, const Tensor& soft_targets,
                      double eps, CheckLoss loss = CheckLoss::kSoftCrossEntropy,
                      std::uint64_t seed = 0, double fraction = 0.05);

/// Generic form: `loss` must re-evaluate with the current parameter values.
double check_gradients(const std::vector<Tensor*>& params, const std::vector<Tensor>& analytic,
                       const std::function<double()>& loss, double eps, std::uint64_t seed,
                       double fraction);

/// Fraction of samples whose argmax prediction equals the label.
double accuracy(const Classifier& model, const LabeledDataset& data);

/// Argmax class per row of a probability (or logit) matrix.
std::vector<std::size_t> argmax_rows(const Tensor& scores);

}  // namespace bbr
