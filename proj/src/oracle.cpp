#include "bbr/oracle.hpp"

#include <atomic>

#include "bbr/checkpoint.hpp"
#include "bbr/error.hpp"
#include "bbr/nn.hpp"

namespace bbr {

struct BlackBoxOracle::Impl {
  Classifier teacher;
  ResponseMode mode;
  std::atomic<std::uint64_t> calls{0};
};

BlackBoxOracle::BlackBoxOracle(const Classifier& teacher, ResponseMode mode)
    : impl_(std::make_unique<Impl>(teacher, mode)) {}

BlackBoxOracle BlackBoxOracle::from_checkpoint(const std::filesystem::path& path, ResponseMode mode) {
  return BlackBoxOracle(load_classifier(path), mode);
}

BlackBoxOracle::BlackBoxOracle(BlackBoxOracle&&) noexcept = default;
BlackBoxOracle& BlackBoxOracle::operator=(BlackBoxOracle&&) noexcept = default;
BlackBoxOracle::~BlackBoxOracle() = default;

Tensor BlackBoxOracle::query(const Tensor& batch) const {
  if (batch.rank() != 2 || batch.cols() != impl_->teacher.input_dim()) {
    throw ShapeError("oracle expects batches with " + std::to_string(impl_->teacher.input_dim()) + " columns");
  }
  Tensor probs = impl_->teacher.forward(batch);
  if (impl_->mode == ResponseMode::kTopLabel) {
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      auto row = probs.row(r);
      const std::size_t top = argmax(row);
      std::fill(row.begin(), row.end(), 0.0);
      row[top] = 1.0;
    }
  }
  impl_->calls.fetch_add(batch.rows(), std::memory_order_relaxed);
  return probs;
}

std::uint64_t BlackBoxOracle::call_count() const noexcept { return impl_->calls.load(std::memory_order_relaxed); }

ResponseMode BlackBoxOracle::mode() const noexcept { return impl_->mode; }

std::size_t BlackBoxOracle::input_dim() const noexcept { return impl_->teacher.input_dim(); }

std::size_t BlackBoxOracle::num_classes() const noexcept { return impl_->teacher.num_classes(); }

}  // namespace bbr
