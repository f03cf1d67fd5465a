#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bbr/dataset.hpp"
#include "bbr/generator.hpp"
#include "bbr/nn.hpp"

namespace bbr {

struct VaeConfig {
  std::size_t hidden = 64;
  std::size_t latent_dim = 8;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  AdamConfig adam;
  std::uint64_t seed = 0;

  friend bool operator==(const VaeConfig&, const VaeConfig&) = default;
};

/// KL(N(mu, exp(logvar)) || N(0, I)) = 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar).
double gaussian_kl(std::span<const double> mu, std::span<const double> logvar);

/// Gaussian-encoder, Bernoulli-decoder VAE. The encoder emits [mu | logvar]
/// (two heads of width L, stored as one output layer); the decoder emits pixel
/// logits and decode applies the sigmoid.
class Vae : public Generator {
 public:
  struct Loss {
    double reconstruction = 0.0;  // mean per-sample Bernoulli negative log-likelihood
    double kl = 0.0;              // mean per-sample KL term
    double total() const { return reconstruction + kl; }
  };

  Vae() = default;
  Vae(std::size_t input_dim, std::size_t hidden, std::size_t latent_dim, Rng& rng);
  Vae(Mlp encoder, Mlp decoder);

  std::size_t latent_dim() const override;
  std::size_t output_dim() const override;
  Tensor decode_batch(const Tensor& latents) const override;

  /// Posterior parameters for a (b x d) batch: mu and logvar, each (b x L).
  std::pair<Tensor, Tensor> encode(const Tensor& batch) const;
  /// decode(mu(x)).
  Tensor reconstruct(const Tensor& batch) const;

  /// Negative ELBO of `batch` using reparameterization noise `noise` (b x L).
  /// Fills `encoder_grads` / `decoder_grads` when non-null.
  Loss negative_elbo(const Tensor& batch, const Tensor& noise, std::vector<Tensor>* encoder_grads = nullptr,
                     std::vector<Tensor>* decoder_grads = nullptr) const;

  Mlp& encoder() noexcept { return encoder_; }
  Mlp& decoder() noexcept { return decoder_; }
  const Mlp& encoder() const noexcept { return encoder_; }
  const Mlp& decoder() const noexcept { return decoder_; }

 private:
  Mlp encoder_;
  Mlp decoder_;
};

/// Trains on a proxy dataset by minimizing the negative ELBO with Adam.
/// `epoch_losses` receives the mean per-sample negative ELBO of every epoch.
/// Throws InvalidInputError for non-proxy data, DivergenceError(epoch) on a
/// non-finite loss.
Vae vae_train(const LabeledDataset& proxy, const VaeConfig& config, std::vector<double>* epoch_losses = nullptr);

struct VaeGradientErrors {
  double encoder = 0.0;
  double decoder = 0.0;
};

/// Finite-difference check of negative_elbo gradients with fixed noise.
VaeGradientErrors vae_gradient_check(const Vae& vae, const Tensor& batch, double eps, std::uint64_t seed,
                                     double fraction = 0.05);
/// Same with explicit reparameterization noise (batch rows x latent_dim).
VaeGradientErrors vae_gradient_check(const Vae& vae, const Tensor& batch, const Tensor& noise, double eps,
                                     std::uint64_t seed, double fraction = 0.05);

void save_vae(const Vae& vae, const std::filesystem::path& path, std::map<std::string, std::string> fields = {});
Vae load_vae(const std::filesystem::path& path);

}  // namespace bbr
