#include "bbr/generator.hpp"

#include "bbr/error.hpp"
#include "bbr/rng.hpp"

namespace bbr {

Tensor Generator::decode(const LatentVector& v) const {
  if (v.size() != latent_dim()) {
    throw ShapeError("latent vector has " + std::to_string(v.size()) + " components, generator expects " +
                     std::to_string(latent_dim()));
  }
  Tensor out = decode_batch(Tensor({1, v.size()}, v.values));
  return Tensor({output_dim()}, out.values());
}

std::vector<LatentVector> Generator::sample_prior(std::size_t count, std::uint64_t seed) const {
  if (count == 0) throw InvalidInputError("sample_prior: count must be at least 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<LatentVector> out(count);
  for (auto& v : out) {
    v.values.resize(latent_dim());
    for (double& x : v.values) x = normal(rng);
  }
  return out;
}

Tensor stack_latents(const std::vector<LatentVector>& latents) {
  if (latents.empty()) throw InvalidInputError("no latents to stack");
  const std::size_t dim = latents.front().size();
  Tensor out = Tensor::matrix(latents.size(), dim);
  for (std::size_t i = 0; i < latents.size(); ++i) {
    if (latents[i].size() != dim) throw ShapeError("latents differ in length");
    std::copy(latents[i].values.begin(), latents[i].values.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace bbr
