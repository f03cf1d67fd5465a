#include "bbr/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bbr/checkpoint.hpp"
#include "bbr/error.hpp"

namespace bbr {
namespace {

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

// log(1 + exp(a)) without overflow.
double softplus(double a) { return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a))); }

}  // namespace

double gaussian_kl(std::span<const double> mu, std::span<const double> logvar) {
  if (mu.size() != logvar.size()) throw ShapeError("gaussian_kl: mu and logvar differ in length");
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    kl += 0.5 * (mu[i] * mu[i] + std::exp(logvar[i]) - 1.0 - logvar[i]);
  }
  return kl;
}

Vae::Vae(std::size_t input_dim, std::size_t hidden, std::size_t latent_dim, Rng& rng)
    : encoder_({input_dim, hidden, 2 * latent_dim}, rng), decoder_({latent_dim, hidden, input_dim}, rng) {}

Vae::Vae(Mlp encoder, Mlp decoder) : encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
  if (encoder_.output_dim() != 2 * decoder_.input_dim() || encoder_.input_dim() != decoder_.output_dim()) {
    throw ShapeError("encoder and decoder do not fit together");
  }
}

std::size_t Vae::latent_dim() const { return decoder_.input_dim(); }

std::size_t Vae::output_dim() const { return decoder_.output_dim(); }

Tensor Vae::decode_batch(const Tensor& latents) const {
  if (latents.rank() != 2 || latents.cols() != latent_dim()) {
    throw ShapeError("decode expects latents of length " + std::to_string(latent_dim()));
  }
  Tensor out = decoder_.forward(latents);
  for (double& v : out.data()) v = sigmoid(v);
  return out;
}

std::pair<Tensor, Tensor> Vae::encode(const Tensor& batch) const {
  const Tensor heads = encoder_.forward(batch);
  const std::size_t b = heads.rows();
  const std::size_t L = latent_dim();
  Tensor mu = Tensor::matrix(b, L);
  Tensor logvar = Tensor::matrix(b, L);
  for (std::size_t i = 0; i < b; ++i) {
    const auto h = heads.row(i);
    std::copy(h.begin(), h.begin() + static_cast<long>(L), mu.row(i).begin());
    std::copy(h.begin() + static_cast<long>(L), h.end(), logvar.row(i).begin());
  }
  return {std::move(mu), std::move(logvar)};
}

Tensor Vae::reconstruct(const Tensor& batch) const { return decode_batch(encode(batch).first); }

Vae::Loss Vae::negative_elbo(const Tensor& batch, const Tensor& noise, std::vector<Tensor>* encoder_grads,
                             std::vector<Tensor>* decoder_grads) const {
  const std::size_t b = batch.rows();
  const std::size_t d = output_dim();
  const std::size_t L = latent_dim();
  if (b == 0) throw InvalidInputError("negative_elbo of an empty batch");
  expect_matrix(noise, b, L, "reparameterization noise");
  const double inv_b = 1.0 / static_cast<double>(b);

  Mlp::Trace enc_trace;
  const Tensor heads = encoder_.forward(batch, &enc_trace);
  Tensor z = Tensor::matrix(b, L);
  Loss loss;
  for (std::size_t i = 0; i < b; ++i) {
    const auto h = heads.row(i);
    for (std::size_t j = 0; j < L; ++j) z(i, j) = h[j] + std::exp(0.5 * h[L + j]) * noise(i, j);
    loss.kl += gaussian_kl(h.first(L), h.subspan(L, L));
  }

  Mlp::Trace dec_trace;
  const Tensor logits = decoder_.forward(z, &dec_trace);
  Tensor d_logits = Tensor::matrix(b, d);
  for (std::size_t i = 0; i < b * d; ++i) {
    const double a = logits[i];
    const double x = batch[i];
    loss.reconstruction += softplus(a) - x * a;
    d_logits[i] = (sigmoid(a) - x) * inv_b;
  }
  loss.reconstruction *= inv_b;
  loss.kl *= inv_b;

  if (encoder_grads || decoder_grads) {
    Tensor d_z;
    auto dec = decoder_.backward(dec_trace, d_logits, &d_z);
    Tensor d_heads = Tensor::matrix(b, 2 * L);
    for (std::size_t i = 0; i < b; ++i) {
      const auto h = heads.row(i);
      for (std::size_t j = 0; j < L; ++j) {
        const double mu = h[j];
        const double lv = h[L + j];
        const double sd = std::exp(0.5 * lv);
        d_heads(i, j) = d_z(i, j) + mu * inv_b;
        d_heads(i, L + j) = d_z(i, j) * noise(i, j) * 0.5 * sd + 0.5 * (std::exp(lv) - 1.0) * inv_b;
      }
    }
    auto enc = encoder_.backward(enc_trace, d_heads);
    if (encoder_grads) *encoder_grads = std::move(enc);
    if (decoder_grads) *decoder_grads = std::move(dec);
  }
  return loss;
}

Vae vae_train(const LabeledDataset& proxy, const VaeConfig& config, std::vector<double>* epoch_losses) {
  if (proxy.role != DatasetRole::kProxy) throw InvalidInputError("the generator must be trained on proxy data");
  if (proxy.size() == 0) throw InvalidInputError("empty proxy dataset");
  if (config.batch_size == 0 || config.latent_dim == 0 || config.hidden == 0) {
    throw InvalidInputError("VAE batch size, latent and hidden widths must be positive");
  }
  Rng rng(config.seed);
  Vae vae(proxy.dim(), config.hidden, config.latent_dim, rng);
  Adam enc_opt(std::as_const(vae.encoder()).parameters(), config.adam);
  Adam dec_opt(std::as_const(vae.decoder()).parameters(), config.adam);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::size_t> order(proxy.size());
  std::iota(order.begin(), order.end(), 0);
  if (epoch_losses) epoch_losses->clear();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Tensor batch = proxy.images.gather_rows(rows);
      Tensor noise = Tensor::matrix(rows.size(), config.latent_dim);
      for (double& e : noise.data()) e = normal(rng);
      std::vector<Tensor> enc_grads;
      std::vector<Tensor> dec_grads;
      const Vae::Loss loss = vae.negative_elbo(batch, noise, &enc_grads, &dec_grads);
      if (!std::isfinite(loss.total())) throw DivergenceError("VAE loss is not finite", epoch);
      try {
        enc_opt.step(vae.encoder().parameters(), enc_grads);
        dec_opt.step(vae.decoder().parameters(), dec_grads);
      } catch (const DivergenceError&) {
        throw DivergenceError("VAE gradient is not finite", epoch);
      }
      total += loss.total() * static_cast<double>(rows.size());
    }
    if (epoch_losses) epoch_losses->push_back(total / static_cast<double>(proxy.size()));
  }
  return vae;
}

VaeGradientErrors vae_gradient_check(const Vae& vae, const Tensor& batch, double eps, std::uint64_t seed,
                                     double fraction) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor noise = Tensor::matrix(batch.rows(), vae.latent_dim());
  for (double& e : noise.data()) e = normal(rng);
  return vae_gradient_check(vae, batch, noise, eps, seed, fraction);
}

VaeGradientErrors vae_gradient_check(const Vae& vae, const Tensor& batch, const Tensor& noise, double eps,
                                     std::uint64_t seed, double fraction) {
  if (noise.rank() != 2 || noise.rows() != batch.rows() || noise.cols() != vae.latent_dim()) {
    throw ShapeError("vae_gradient_check: noise must be batch rows x latent_dim");
  }
  Vae probe = vae;
  std::vector<Tensor> enc_grads;
  std::vector<Tensor> dec_grads;
  probe.negative_elbo(batch, noise, &enc_grads, &dec_grads);
  const auto loss = [&] { return probe.negative_elbo(batch, noise).total(); };
  VaeGradientErrors errors;
  errors.encoder = check_gradients(probe.encoder().parameters(), enc_grads, loss, eps, seed, fraction);
  errors.decoder = check_gradients(probe.decoder().parameters(), dec_grads, loss, eps, seed + 1, fraction);
  return errors;
}

void save_vae(const Vae& vae, const std::filesystem::path& path, std::map<std::string, std::string> fields) {
  Checkpoint ckpt;
  ckpt.fields = std::move(fields);
  ckpt.fields["kind"] = "vae";
  ckpt.fields["latent_dim"] = std::to_string(vae.latent_dim());
  store_network(ckpt, vae.encoder(), "encoder.");
  store_network(ckpt, vae.decoder(), "decoder.");
  write_checkpoint(ckpt, path);
}

Vae load_vae(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (!ckpt.has_field("kind") || ckpt.field("kind") != "vae") throw FormatError(path.string() + " is not a VAE checkpoint");
  Vae vae;
  try {
    vae = Vae(load_network(ckpt, "encoder."), load_network(ckpt, "decoder."));
  } catch (const ShapeError& e) {
    throw FormatError(std::string("inconsistent VAE checkpoint: ") + e.what());
  }
  if (std::to_string(vae.latent_dim()) != ckpt.field("latent_dim")) {
    throw FormatError("VAE checkpoint latent_dim field disagrees with its decoder");
  }
  return vae;
}

}  // namespace bbr
