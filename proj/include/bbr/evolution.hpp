#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "bbr/generator.hpp"
#include "bbr/oracle.hpp"
#include "bbr/rng.hpp"
#include "bbr/tensor.hpp"

namespace bbr {

struct EvolutionConfig {
  std::size_t population_size = 30;  // K
  std::size_t elite_size = 10;       // k
  double latent_bound = 3.0;         // u: initial population ~ U(-u, u)
  double threshold = 0.02;           // t: stop once the best fitness drops below it
  std::size_t max_generations = 10;
  double mutation_std = 1.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless 1 <= k < K, u > 0, t > 0 and mutation_std > 0.
  void validate() const;

  friend bool operator==(const EvolutionConfig&, const EvolutionConfig&) = default;
};

struct Member {
  LatentVector latent;
  double fitness = 0.0;
};

struct Population {
  std::vector<Member> members;
  std::size_t generation = 0;

  /// Index of the fittest member; ties go to the earlier member.
  std::size_t best() const;
};

struct EvolutionResult {
  Tensor sample;               // decoded best latent
  LatentVector best_latent;
  double final_fitness = 0.0;
  std::size_t generations = 0;
  std::uint64_t oracle_samples = 0;
  /// Best fitness after initialization and after every generation (generations + 1 entries).
  std::vector<double> best_fitness_history;
};

/// Progress report handed to an observer after initialization and after every generation.
struct GenerationSnapshot {
  std::size_t generation = 0;
  double best_fitness = 0.0;
  std::uint64_t oracle_samples = 0;  // consumed by this run so far
  const Population* population = nullptr;
  const Generator* generator = nullptr;
};

using EvolutionObserver = std::function<void(const GenerationSnapshot&)>;

/// Sum of squared differences between `probs` and one-hot(target).
double fitness_from_probs(std::span<const double> probs, std::size_t target);

/// Fitness of one latent: decode, query the oracle once, score against one-hot(target).
double fitness(const LatentVector& v, std::size_t target, const BlackBoxOracle& oracle, const Generator& gen);

/// Scores a (b x L) latent matrix with a single batched query of b samples.
std::vector<double> fitness_batch(const Tensor& latents, std::size_t target, const BlackBoxOracle& oracle,
                                  const Generator& gen);

/// Elitist latent-space search for a sample the oracle assigns to `target`.
/// Consumes exactly K + g * (K - k) oracle samples for g generations.
EvolutionResult evolve(std::size_t target, const BlackBoxOracle& oracle, const Generator& gen,
                       const EvolutionConfig& config, const EvolutionObserver& observer = {});

/// Closed-form oracle budget of one evolve run.
constexpr std::uint64_t evolve_budget(std::size_t population, std::size_t elites, std::size_t generations) {
  return population + static_cast<std::uint64_t>(generations) * (population - elites);
}

/// Per-generation log of evolve_batch runs, exportable as CSV, plus optional
/// best-specimen images for the first few evolved samples.
class EvolutionTrace {
 public:
  struct Row {
    std::size_t batch_index = 0;  // position of the evolved sample in the stream
    std::size_t target_class = 0;
    std::size_t generation = 0;
    double best_fitness = 0.0;
    std::uint64_t oracle_samples_cumulative = 0;  // oracle call count after this generation
  };
  struct Specimen {
    std::size_t batch_index = 0;
    std::size_t generation = 0;
    Tensor image;
  };

  explicit EvolutionTrace(std::size_t max_samples = 1, std::size_t max_specimen_samples = 0)
      : max_samples_(max_samples), max_specimen_samples_(max_specimen_samples) {}

  bool wants(std::size_t batch_index) const { return batch_index < max_samples_; }
  bool wants_specimens(std::size_t batch_index) const { return batch_index < max_specimen_samples_; }

  std::vector<Row>& rows() noexcept { return rows_; }
  const std::vector<Row>& rows() const noexcept { return rows_; }
  std::vector<Specimen>& specimens() noexcept { return specimens_; }
  const std::vector<Specimen>& specimens() const noexcept { return specimens_; }

  void write_csv(const std::filesystem::path& path) const;
  /// One PGM per specimen: specimen_<batch_index>_gen<generation>.pgm.
  void write_specimens(const std::filesystem::path& dir, std::size_t side, std::size_t scale = 8) const;

 private:
  std::size_t max_samples_;
  std::size_t max_specimen_samples_;
  std::vector<Row> rows_;
  std::vector<Specimen> specimens_;
};

struct EvolvedBatch {
  Tensor samples;        // b x d
  Tensor teacher_probs;  // b x n, from one extra query per sample
  std::vector<std::size_t> targets;
  std::vector<std::size_t> generations;
  std::vector<double> final_fitness;
  std::uint64_t oracle_samples = 0;
};

using ClassSampler = std::function<std::size_t(Rng&)>;

/// Runs evolve once per batch element for a class drawn by `sampler`
/// (uniform over the oracle's classes when empty), then queries the oracle
/// once more per element for the soft label. `stream_offset` numbers the
/// elements for tracing.
EvolvedBatch evolve_batch(const BlackBoxOracle& oracle, const Generator& gen, const EvolutionConfig& config,
                          std::size_t batch_size, Rng& rng, const ClassSampler& sampler = {},
                          EvolutionTrace* trace = nullptr, std::size_t stream_offset = 0);

}  // namespace bbr
