#include "bbr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bbr/error.hpp"

namespace bbr {

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw InvalidInputError("softmax of an empty vector");
  double top = logits[0];
  for (double v : logits) {
    if (!std::isfinite(v)) throw InvalidInputError("softmax: non-finite logit");
    top = std::max(top, v);
  }
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = Tensor::matrix(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto p = softmax(logits.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

double cross_entropy_soft(std::span<const double> target, std::span<const double> pred) {
  if (target.size() != pred.size()) {
    throw ShapeError("cross_entropy_soft: target has " + std::to_string(target.size()) +
                     " entries, prediction has " + std::to_string(pred.size()));
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] != 0.0) loss -= target[i] * std::log(std::max(pred[i], kLogClip));
  }
  return loss;
}

double batch_cross_entropy(const Tensor& targets, const Tensor& probs) {
  expect_matrix(probs, targets.rows(), targets.cols(), "batch_cross_entropy");
  double total = 0.0;
  for (std::size_t r = 0; r < targets.rows(); ++r) total += cross_entropy_soft(targets.row(r), probs.row(r));
  return total;
}

// ---------------------------------------------------------------------------
// Mlp

namespace {

void check_widths(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw InvalidInputError("network needs at least input and output widths");
  for (std::size_t w : widths) {
    if (w == 0) throw InvalidInputError("network widths must be positive");
  }
}

}  // namespace

Mlp::Mlp(const std::vector<std::size_t>& widths, Rng& rng) {
  check_widths(widths);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Dense layer;
    layer.weight = Tensor::matrix(widths[l], widths[l + 1]);
    layer.bias = Tensor({widths[l + 1]}, 0.0);
    layer.activation = (l + 2 == widths.size()) ? Activation::kIdentity : Activation::kRelu;
    std::normal_distribution<double> init(0.0, 1.0 / std::sqrt(static_cast<double>(widths[l])));
    for (double& w : layer.weight.data()) w = init(rng);
    layers_.push_back(std::move(layer));
  }
}

Mlp Mlp::zeros(const std::vector<std::size_t>& widths) {
  check_widths(widths);
  Mlp net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    net.layers_.push_back(Dense{Tensor::matrix(widths[l], widths[l + 1]),
                                Tensor({widths[l + 1]}, 0.0),
                                l + 2 == widths.size() ? Activation::kIdentity : Activation::kRelu});
  }
  return net;
}

std::size_t Mlp::input_dim() const {
  if (layers_.empty()) throw InvalidInputError("empty network");
  return layers_.front().in_dim();
}

std::size_t Mlp::output_dim() const {
  if (layers_.empty()) throw InvalidInputError("empty network");
  return layers_.back().out_dim();
}

std::vector<std::size_t> Mlp::widths() const {
  std::vector<std::size_t> w;
  if (layers_.empty()) return w;
  w.push_back(input_dim());
  for (const auto& layer : layers_) w.push_back(layer.out_dim());
  return w;
}

Tensor Mlp::forward(const Tensor& batch, Trace* trace) const {
  if (batch.rank() != 2 || batch.cols() != input_dim()) {
    throw ShapeError("network expects " + std::to_string(input_dim()) + " input columns, got " +
                     (batch.rank() == 2 ? std::to_string(batch.cols()) : std::string("non-matrix")));
  }
  if (trace) {
    trace->inputs.clear();
    trace->pre.clear();
  }
  Tensor x = batch;
  Tensor pre;
  for (const auto& layer : layers_) {
    affine(x, layer.weight, layer.bias, pre);
    if (trace) {
      trace->inputs.push_back(std::move(x));
      trace->pre.push_back(pre);
    }
    x = pre;
    if (layer.activation == Activation::kRelu) {
      for (double& v : x.data()) v = v > 0.0 ? v : 0.0;
    }
  }
  return x;
}

std::vector<Tensor> Mlp::backward(const Trace& trace, const Tensor& d_output, Tensor* d_input) const {
  if (trace.inputs.size() != layers_.size()) throw InvalidInputError("backward: trace does not match network");
  const std::size_t n = d_output.rows();
  std::vector<Tensor> grads(2 * layers_.size());
  Tensor delta = d_output;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Dense& layer = layers_[l];
    const Tensor& input = trace.inputs[l];
    const std::size_t in = layer.in_dim();
    const std::size_t out = layer.out_dim();
    expect_matrix(delta, n, out, "backward");
    if (layer.activation == Activation::kRelu) {
      const auto pre = trace.pre[l].data();
      auto d = delta.data();
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(pre[i] > 0.0)) d[i] = 0.0;
      }
    }
    Tensor dw = Tensor::matrix(in, out);
    Tensor db({out}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto di = delta.row(i);
      const auto xi = input.row(i);
      for (std::size_t j = 0; j < out; ++j) db[j] += di[j];
      for (std::size_t k = 0; k < in; ++k) {
        const double a = xi[k];
        if (a == 0.0) continue;
        auto dwk = dw.row(k);
        for (std::size_t j = 0; j < out; ++j) dwk[j] += a * di[j];
      }
    }
    if (l > 0 || d_input) {
      Tensor prev = Tensor::matrix(n, in);
      for (std::size_t i = 0; i < n; ++i) {
        const auto di = delta.row(i);
        auto pi = prev.row(i);
        for (std::size_t k = 0; k < in; ++k) {
          const auto wk = layer.weight.row(k);
          double s = 0.0;
          for (std::size_t j = 0; j < out; ++j) s += wk[j] * di[j];
          pi[k] = s;
        }
      }
      delta = std::move(prev);
    }
    grads[2 * l] = std::move(dw);
    grads[2 * l + 1] = std::move(db);
  }
  if (d_input) *d_input = std::move(delta);
  return grads;
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> p;
  for (auto& layer : layers_) {
    p.push_back(&layer.weight);
    p.push_back(&layer.bias);
  }
  return p;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> p;
  for (const auto& layer : layers_) {
    p.push_back(&layer.weight);
    p.push_back(&layer.bias);
  }
  return p;
}

std::vector<std::string> Mlp::parameter_names(const std::string& prefix) const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    names.push_back(prefix + "layer" + std::to_string(l) + ".weight");
    names.push_back(prefix + "layer" + std::to_string(l) + ".bias");
  }
  return names;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

// ---------------------------------------------------------------------------
// Classifier

Classifier::Classifier(const std::vector<std::size_t>& widths, Rng& rng) : net_(widths, rng) {}

Classifier::Classifier(Mlp net) : net_(std::move(net)) {
  if (net_.layers().empty()) throw InvalidInputError("classifier needs at least one layer");
  for (std::size_t l = 1; l < net_.layers().size(); ++l) {
    if (net_.layers()[l].in_dim() != net_.layers()[l - 1].out_dim()) {
      throw ShapeError("layer " + std::to_string(l) + " does not chain onto its predecessor");
    }
  }
}

Tensor Classifier::logits(const Tensor& batch) const { return net_.forward(batch); }

Tensor Classifier::forward(const Tensor& batch) const { return softmax_rows(net_.forward(batch)); }

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(const std::vector<const Tensor*>& params, AdamConfig config) : config_(config) {
  for (const Tensor* p : params) {
    m_.emplace_back(p->shape(), 0.0);
    v_.emplace_back(p->shape(), 0.0);
  }
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != m_[i].shape() || params[i]->shape() != m_[i].shape()) {
      throw ShapeError("gradient shape does not match optimizer state");
    }
    if (!grads[i].all_finite()) throw DivergenceError("non-finite gradient", steps_ + 1);
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto p = params[i]->data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double update = config_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.epsilon);
      if (update != 0.0) p[j] -= update;
    }
  }
}

// ---------------------------------------------------------------------------
// Training

double loss_and_gradients(const Classifier& model, const Tensor& batch, const Tensor& soft_targets,
                          std::vector<Tensor>& grads) {
  const std::size_t b = batch.rows();
  if (b == 0) throw InvalidInputError("empty training batch");
  expect_matrix(soft_targets, b, model.num_classes(), "soft targets");
  Mlp::Trace trace;
  const Tensor logits = model.net().forward(batch, &trace);
  if (!logits.all_finite()) throw DivergenceError("non-finite logits", 0);
  const Tensor probs = softmax_rows(logits);
  const double loss = batch_cross_entropy(soft_targets, probs) / static_cast<double>(b);
  Tensor d_logits = Tensor::matrix(b, model.num_classes());
  for (std::size_t i = 0; i < b; ++i) {
    const auto t = soft_targets.row(i);
    const auto p = probs.row(i);
    auto d = d_logits.row(i);
    const double mass = std::accumulate(t.begin(), t.end(), 0.0);
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = (mass * p[j] - t[j]) / static_cast<double>(b);
  }
  grads = model.net().backward(trace, d_logits);
  return loss;
}

double train_step(Classifier& model, Adam& optimizer, const Tensor& batch, const Tensor& soft_targets) {
  std::vector<Tensor> grads;
  double loss = 0.0;
  try {
    loss = loss_and_gradients(model, batch, soft_targets, grads);
  } catch (const DivergenceError&) {
    throw DivergenceError("non-finite logits", optimizer.steps() + 1);
  }
  if (!std::isfinite(loss)) throw DivergenceError("non-finite loss", optimizer.steps() + 1);
  optimizer.step(model.net().parameters(), grads);
  return loss;
}

// ---------------------------------------------------------------------------
// Gradient verification

double check_gradients(const std::vector<Tensor*>& params, const std::vector<Tensor>& analytic,
                       const std::function<double()>& loss, double eps, std::uint64_t seed,
                       double fraction) {
  if (!(eps > 0.0)) throw InvalidInputError("gradient_check: eps must be positive");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidInputError("gradient_check: fraction must be in (0, 1]");
  if (params.size() != analytic.size()) throw ShapeError("gradient_check: gradient list mismatch");

  std::vector<std::pair<std::size_t, std::size_t>> slots;
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (analytic[t].size() != params[t]->size()) throw ShapeError("gradient_check: gradient shape mismatch");
    for (std::size_t j = 0; j < params[t]->size(); ++j) slots.emplace_back(t, j);
  }
  if (slots.empty()) return 0.0;
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(slots.size()))));
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, slots.size() - 1);
    std::swap(slots[i], slots[pick(rng)]);
  }

  const double floor = 1e-5 * std::max(1.0, std::abs(loss()));
  double worst = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto [t, j] = slots[i];
    double& value = (*params[t])[j];
    const double saved = value;
    value = saved + eps;
    const double up = loss();
    value = saved - eps;
    const double down = loss();
    value = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double exact = analytic[t][j];
    const double rel = std::abs(exact - numeric) / std::max(std::abs(exact) + std::abs(numeric), floor);
    worst = std::max(worst, rel);
  }
  return worst;
}

double gradient_check(const Classifier& model, const Tensor& batch, const Tensor& soft_targets,
                      double eps, CheckLoss loss, std::uint64_t seed, double fraction) {
  if (!(eps > 0.0)) throw InvalidInputError("gradient_check: eps must be positive");
  Classifier probe = model;
  std::vector<Tensor> grads;
  std::function<double()> evaluate;
  const std::size_t b = batch.rows();
  if (loss == CheckLoss::kSoftCrossEntropy) {
    loss_and_gradients(probe, batch, soft_targets, grads);
    evaluate = [&] {
      return batch_cross_entropy(soft_targets, probe.forward(batch)) / static_cast<double>(b);
    };
  } else {
    expect_matrix(soft_targets, b, model.num_classes(), "targets");
    Mlp::Trace trace;
    const Tensor out = probe.net().forward(batch, &trace);
    Tensor diff = out;
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = (out[i] - soft_targets[i]) / static_cast<double>(b);
    grads = probe.net().backward(trace, diff);
    evaluate = [&] {
      const Tensor o = probe.net().forward(batch);
      double s = 0.0;
      for (std::size_t i = 0; i < o.size(); ++i) s += (o[i] - soft_targets[i]) * (o[i] - soft_targets[i]);
      return 0.5 * s / static_cast<double>(b);
    };
  }
  return check_gradients(probe.net().parameters(), grads, evaluate, eps, seed, fraction);
}

// ---------------------------------------------------------------------------
// Metrics

std::vector<std::size_t> argmax_rows(const Tensor& scores) {
  std::vector<std::size_t> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) out[r] = argmax(scores.row(r));
  return out;
}

double accuracy(const Classifier& model, const LabeledDataset& data) {
  if (data.size() == 0) throw InvalidInputError("accuracy of an empty dataset");
  const auto predicted = argmax_rows(model.forward(data.images));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace bbr
