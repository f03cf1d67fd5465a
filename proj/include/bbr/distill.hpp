#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bbr/dataset.hpp"
#include "bbr/evolution.hpp"
#include "bbr/generator.hpp"
#include "bbr/nn.hpp"
#include "bbr/oracle.hpp"

namespace bbr {

enum class DistillMode { kRipper, kKnockoff, kGenRandom };

std::string_view to_string(DistillMode mode);
DistillMode parse_distill_mode(std::string_view text);

/// How gen-random draws latents.
enum class LatentSampling {
  kPrior,    // standard normal
  kUniform,  // U(-uniform_bound, uniform_bound) per component
};

struct DistillConfig {
  DistillMode mode = DistillMode::kRipper;
  std::size_t epochs = 200;
  std::size_t steps_per_epoch = 1;
  std::size_t batch_size = 64;
  AdamConfig adam;
  /// Generate `bank_batches` batches once, then train on reshuffled rows of the bank.
  bool sample_bank = false;
  std::size_t bank_batches = 16;
  LatentSampling latent_sampling = LatentSampling::kPrior;
  double uniform_bound = 3.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// ceil(true_train_size / batch_size).
std::size_t steps_per_epoch_for(std::size_t true_train_size, std::size_t batch_size);

/// Held-out set used to score the student once per epoch. Teacher labels are
/// obtained once, up front; those queries are not part of any training budget.
struct Evaluation {
  const LabeledDataset* test = nullptr;
  std::vector<std::size_t> teacher_labels;
};

Evaluation make_evaluation(const BlackBoxOracle& oracle, const LabeledDataset& test);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;      // mean of per-step mean cross-entropy
  double accuracy = 0.0;  // student on the held-out set
  double agreement = 0.0; // student argmax == teacher argmax on the held-out set
  std::uint64_t oracle_samples = 0;  // cumulative training queries

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingReport {
  DistillMode mode = DistillMode::kRipper;
  std::vector<EpochRecord> epochs;

  std::uint64_t oracle_samples() const { return epochs.empty() ? 0 : epochs.back().oracle_samples; }
  const EpochRecord& final() const { return epochs.back(); }

  friend bool operator==(const TrainingReport&, const TrainingReport&) = default;
};

/// Trains on evolved batches: each step runs evolve_batch and fits the
/// student to the teacher's probabilities for the evolved samples.
TrainingReport distill_ripper(Classifier& student, const BlackBoxOracle& oracle, const Generator& gen,
                              const EvolutionConfig& evolution, const DistillConfig& config, const Evaluation& eval,
                              EvolutionTrace* trace = nullptr);

/// Trains on proxy mini-batches labelled by the teacher.
TrainingReport distill_knockoff(Classifier& student, const BlackBoxOracle& oracle, const LabeledDataset& proxy,
                                const DistillConfig& config, const Evaluation& eval);

/// Trains on decoded random latents labelled by the teacher (no search).
TrainingReport distill_gen_random(Classifier& student, const BlackBoxOracle& oracle, const Generator& gen,
                                  const DistillConfig& config, const Evaluation& eval);

/// Fraction of samples where the student's argmax equals the oracle's argmax.
double agreement(const Classifier& student, const BlackBoxOracle& oracle, const LabeledDataset& data);
double agreement(const Classifier& student, std::span<const std::size_t> teacher_labels,
                 const LabeledDataset& data);

/// Eq.-3 batch loss: sum over rows of the soft cross-entropy.
double distillation_loss(const Tensor& teacher_probs, const Tensor& student_probs);

void write_report_csv(const TrainingReport& report, const std::filesystem::path& path);

}  // namespace bbr
