#include "bbr/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "bbr/dataset.hpp"
#include "bbr/error.hpp"

namespace bbr {

void EvolutionConfig::validate() const {
  if (population_size < 2 || elite_size < 1 || elite_size >= population_size) {
    throw ConfigError("evolution needs 1 <= elite_size < population_size (got k = " + std::to_string(elite_size) +
                      ", K = " + std::to_string(population_size) + ")");
  }
  if (!(latent_bound > 0.0) || !std::isfinite(latent_bound)) throw ConfigError("latent_bound must be > 0");
  if (!(threshold > 0.0)) throw ConfigError("threshold must be > 0");
  if (!(mutation_std > 0.0) || !std::isfinite(mutation_std)) throw ConfigError("mutation_std must be > 0");
}

std::size_t Population::best() const {
  if (members.empty()) throw InvalidInputError("empty population");
  std::size_t best = 0;
  for (std::size_t i = 1; i < members.size(); ++i) {
    if (members[i].fitness < members[best].fitness) best = i;
  }
  return best;
}

double fitness_from_probs(std::span<const double> probs, std::size_t target) {
  if (target >= probs.size()) throw InvalidInputError("target class out of range");
  double v = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double diff = probs[i] - (i == target ? 1.0 : 0.0);
    v += diff * diff;
  }
  return v;
}

std::vector<double> fitness_batch(const Tensor& latents, std::size_t target, const BlackBoxOracle& oracle,
                                  const Generator& gen) {
  if (target >= oracle.num_classes()) throw InvalidInputError("target class out of range");
  const Tensor probs = oracle.query(gen.decode_batch(latents));
  std::vector<double> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) out[r] = fitness_from_probs(probs.row(r), target);
  return out;
}

double fitness(const LatentVector& v, std::size_t target, const BlackBoxOracle& oracle, const Generator& gen) {
  if (v.size() != gen.latent_dim()) throw ShapeError("latent vector length does not match the generator");
  return fitness_batch(Tensor({1, v.size()}, v.values), target, oracle, gen).front();
}

namespace {

void evaluate(std::span<Member> members, std::size_t target, const BlackBoxOracle& oracle, const Generator& gen) {
  std::vector<LatentVector> latents;
  latents.reserve(members.size());
  for (const auto& m : members) latents.push_back(m.latent);
  const auto scores = fitness_batch(stack_latents(latents), target, oracle, gen);
  for (std::size_t i = 0; i < members.size(); ++i) members[i].fitness = scores[i];
}

}  // namespace

EvolutionResult evolve(std::size_t target, const BlackBoxOracle& oracle, const Generator& gen,
                       const EvolutionConfig& config, const EvolutionObserver& observer) {
  config.validate();
  if (target >= oracle.num_classes()) throw InvalidInputError("target class out of range");
  const std::size_t K = config.population_size;
  const std::size_t k = config.elite_size;
  const std::size_t L = gen.latent_dim();
  const std::uint64_t calls_before = oracle.call_count();

  Rng rng(config.seed);
  std::uniform_real_distribution<double> init(-config.latent_bound, config.latent_bound);
  std::normal_distribution<double> mutation(0.0, config.mutation_std);
  std::uniform_int_distribution<std::size_t> pick_elite(0, k - 1);

  Population pop;
  pop.members.resize(K);
  for (auto& m : pop.members) {
    m.latent.values.resize(L);
    for (double& x : m.latent.values) x = init(rng);
  }
  evaluate(pop.members, target, oracle, gen);

  EvolutionResult result;
  auto report = [&] {
    const double best = pop.members[pop.best()].fitness;
    result.best_fitness_history.push_back(best);
    if (observer) observer({pop.generation, best, oracle.call_count() - calls_before, &pop, &gen});
    return best;
  };
  double best = report();

  while (best >= config.threshold && pop.generation < config.max_generations) {
    std::stable_sort(pop.members.begin(), pop.members.end(),
                     [](const Member& a, const Member& b) { return a.fitness < b.fitness; });
    pop.members.resize(k);
    for (std::size_t i = k; i < K; ++i) {
      Member child{pop.members[pick_elite(rng)].latent, 0.0};
      for (double& x : child.latent.values) x += mutation(rng);
      pop.members.push_back(std::move(child));
    }
    evaluate(std::span<Member>(pop.members).subspan(k), target, oracle, gen);
    ++pop.generation;
    best = report();
  }

  const Member& winner = pop.members[pop.best()];
  result.best_latent = winner.latent;
  result.final_fitness = winner.fitness;
  result.generations = pop.generation;
  result.sample = gen.decode(winner.latent);
  result.oracle_samples = oracle.call_count() - calls_before;
  return result;
}

void EvolutionTrace::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << "batch_index,target_class,generation,best_fitness,oracle_samples_cumulative\n";
  f.precision(17);
  for (const auto& r : rows_) {
    f << r.batch_index << ',' << r.target_class << ',' << r.generation << ',' << r.best_fitness << ','
      << r.oracle_samples_cumulative << '\n';
  }
}

void EvolutionTrace::write_specimens(const std::filesystem::path& dir, std::size_t side, std::size_t scale) const {
  std::filesystem::create_directories(dir);
  for (const auto& s : specimens_) {
    write_pgm(s.image.data(), side,
              dir / ("specimen_" + std::to_string(s.batch_index) + "_gen" + std::to_string(s.generation) + ".pgm"),
              scale);
  }
}

EvolvedBatch evolve_batch(const BlackBoxOracle& oracle, const Generator& gen, const EvolutionConfig& config,
                          std::size_t batch_size, Rng& rng, const ClassSampler& sampler, EvolutionTrace* trace,
                          std::size_t stream_offset) {
  if (batch_size == 0) throw InvalidInputError("evolve_batch: batch size must be at least 1");
  config.validate();
  const std::uint64_t calls_before = oracle.call_count();
  const std::size_t n = oracle.num_classes();
  std::uniform_int_distribution<std::size_t> uniform_class(0, n - 1);

  EvolvedBatch out;
  out.samples = Tensor::matrix(batch_size, gen.output_dim());
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t target = sampler ? sampler(rng) : uniform_class(rng);
    if (target >= n) throw InvalidInputError("class sampler returned an out-of-range class");
    EvolutionConfig run = config;
    run.seed = rng();

    const std::size_t index = stream_offset + i;
    EvolutionObserver observer;
    if (trace && trace->wants(index)) {
      observer = [&, target, index](const GenerationSnapshot& s) {
        trace->rows().push_back({index, target, s.generation, s.best_fitness, oracle.call_count()});
        if (trace->wants_specimens(index)) {
          trace->specimens().push_back(
              {index, s.generation, s.generator->decode(s.population->members[s.population->best()].latent)});
        }
      };
    }
    const EvolutionResult r = evolve(target, oracle, gen, run, observer);
    std::copy(r.sample.data().begin(), r.sample.data().end(), out.samples.row(i).begin());
    out.targets.push_back(target);
    out.generations.push_back(r.generations);
    out.final_fitness.push_back(r.final_fitness);
  }
  out.teacher_probs = oracle.query(out.samples);
  out.oracle_samples = oracle.call_count() - calls_before;
  return out;
}

}  // namespace bbr
