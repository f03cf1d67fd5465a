#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include "bbr/tensor.hpp"

namespace bbr {

class Classifier;

enum class ResponseMode {
  kProbabilities,  // full softmax output
  kTopLabel,       // one-hot at the argmax
};

/// Forward-only access to a teacher classifier. The wrapped model cannot be
/// reached through this interface; callers see probabilities and a count of
/// the samples they have submitted, nothing else.
class BlackBoxOracle {
 public:
  explicit BlackBoxOracle(const Classifier& teacher, ResponseMode mode = ResponseMode::kProbabilities);
  static BlackBoxOracle from_checkpoint(const std::filesystem::path& path,
                                        ResponseMode mode = ResponseMode::kProbabilities);

  BlackBoxOracle(BlackBoxOracle&&) noexcept;
  BlackBoxOracle& operator=(BlackBoxOracle&&) noexcept;
  BlackBoxOracle(const BlackBoxOracle&) = delete;
  BlackBoxOracle& operator=(const BlackBoxOracle&) = delete;
  ~BlackBoxOracle();

  /// (b x d) -> (b x n). Adds b to the call count. Safe to call concurrently.
  Tensor query(const Tensor& batch) const;

  /// Samples submitted so far.
  std::uint64_t call_count() const noexcept;
  ResponseMode mode() const noexcept;

  // Interface metadata a remote API would publish alongside its endpoint.
  std::size_t input_dim() const noexcept;
  std::size_t num_classes() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bbr
