#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "bbr/generator.hpp"
#include "bbr/nn.hpp"
#include "bbr/tensor.hpp"
#include "bbr/vae.hpp"

namespace bbr::test {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("bbr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.data()) v = u(rng);
  return t;
}

/// Rows drawn uniformly from the probability simplex.
inline Tensor random_simplex(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> e(1.0);
  Tensor t = Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += t(r, c) = e(rng);
    for (std::size_t c = 0; c < cols; ++c) t(r, c) /= s;
  }
  return t;
}

/// Classifier with a single linear layer set from explicit weights.
inline Classifier linear_classifier(const Tensor& weight, const Tensor& bias) {
  Mlp net = Mlp::zeros({weight.rows(), weight.cols()});
  net.layers()[0].weight = weight;
  net.layers()[0].bias = bias;
  return Classifier(std::move(net));
}

/// decode = identity on the latent.
class IdentityGenerator : public Generator {
 public:
  explicit IdentityGenerator(std::size_t dim) : dim_(dim) {}
  std::size_t latent_dim() const override { return dim_; }
  std::size_t output_dim() const override { return dim_; }
  Tensor decode_batch(const Tensor& latents) const override { return latents; }

 private:
  std::size_t dim_;
};

/// Oracle teacher whose output is one-hot(target) for every input: a zero
/// linear layer with a large bias on `target`.
inline Classifier constant_classifier(std::size_t input_dim, std::size_t classes, std::size_t target,
                                      double margin = 100.0) {
  Tensor bias = Tensor::vector(std::vector<double>(classes, 0.0));
  bias[target] = margin;
  return linear_classifier(Tensor::matrix(input_dim, classes), bias);
}

/// Whether every hidden pre-activation of row r stays at least `margin` away
/// from the ReLU kink.
inline bool smooth_row(const Mlp& net, const Tensor& batch, std::size_t r, double margin) {
  Mlp::Trace trace;
  net.forward(batch.gather_rows(std::vector<std::size_t>{r}), &trace);
  for (std::size_t l = 0; l + 1 < trace.pre.size(); ++l) {
    for (double z : trace.pre[l].data()) {
      if (std::abs(z) < margin) return false;
    }
  }
  return true;
}

/// Rows on which central differences see a smooth loss.
inline Tensor kink_free_rows(const Mlp& net, const Tensor& batch, double margin = 1e-3) {
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    if (smooth_row(net, batch, r, margin)) keep.push_back(r);
  }
  return batch.gather_rows(keep);
}

/// Batch rows and matching reparameterization noise that keep both VAE
/// networks away from their ReLU kinks.
inline std::pair<Tensor, Tensor> kink_free_vae_rows(const Vae& vae, const Tensor& batch, std::uint64_t seed,
                                                    double margin = 1e-3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor noise = Tensor::matrix(batch.rows(), vae.latent_dim());
  for (double& e : noise.data()) e = normal(rng);
  const auto [mu, logvar] = vae.encode(batch);
  Tensor z = mu;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += std::exp(0.5 * logvar[i]) * noise[i];
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    if (smooth_row(vae.encoder(), batch, r, margin) && smooth_row(vae.decoder(), z, r, margin)) keep.push_back(r);
  }
  return {batch.gather_rows(keep), noise.gather_rows(keep)};
}

}  // namespace bbr::test
