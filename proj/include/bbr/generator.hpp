#pragma once

#include <cstdint>
#include <vector>

#include "bbr/tensor.hpp"

namespace bbr {

/// A point in a generator's latent space.
struct LatentVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const LatentVector&, const LatentVector&) = default;
};

/// Maps latent vectors to samples. Implementations must be deterministic and
/// row-independent: decoding a row alone gives the same bits as decoding it
/// inside a larger batch.
class Generator {
 public:
  virtual ~Generator() = default;

  virtual std::size_t latent_dim() const = 0;
  virtual std::size_t output_dim() const = 0;

  /// (b x latent_dim) -> (b x output_dim).
  virtual Tensor decode_batch(const Tensor& latents) const = 0;

  /// Single latent -> Tensor[output_dim]. Throws ShapeError on a length mismatch.
  Tensor decode(const LatentVector& v) const;

  /// Standard-normal draws.
  std::vector<LatentVector> sample_prior(std::size_t count, std::uint64_t seed) const;
};

/// Stacks latents into a (count x L) matrix.
Tensor stack_latents(const std::vector<LatentVector>& latents);

}  // namespace bbr
