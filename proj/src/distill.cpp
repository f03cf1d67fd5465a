#include "bbr/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>

#include "bbr/error.hpp"

namespace bbr {

std::string_view to_string(DistillMode mode) {
  switch (mode) {
    case DistillMode::kRipper: return "ripper";
    case DistillMode::kKnockoff: return "knockoff";
    case DistillMode::kGenRandom: return "gen-random";
  }
  return "unknown";
}

DistillMode parse_distill_mode(std::string_view text) {
  if (text == "ripper") return DistillMode::kRipper;
  if (text == "knockoff") return DistillMode::kKnockoff;
  if (text == "gen-random") return DistillMode::kGenRandom;
  throw ConfigError("unknown distillation mode '" + std::string(text) + "'");
}

void DistillConfig::validate() const {
  if (epochs < 1) throw ConfigError("distillation needs at least one epoch");
  if (batch_size < 1) throw ConfigError("distillation batch size must be at least 1");
  if (steps_per_epoch < 1) throw ConfigError("distillation needs at least one step per epoch");
  if (sample_bank && bank_batches < 1) throw ConfigError("sample bank needs at least one batch");
  if (latent_sampling == LatentSampling::kUniform && !(uniform_bound > 0.0)) {
    throw ConfigError("uniform latent bound must be > 0");
  }
}

std::size_t steps_per_epoch_for(std::size_t true_train_size, std::size_t batch_size) {
  if (batch_size == 0) throw InvalidInputError("batch size must be positive");
  return std::max<std::size_t>(1, (true_train_size + batch_size - 1) / batch_size);
}

Evaluation make_evaluation(const BlackBoxOracle& oracle, const LabeledDataset& test) {
  if (test.size() == 0) throw InvalidInputError("empty evaluation set");
  return Evaluation{&test, argmax_rows(oracle.query(test.images))};
}

double agreement(const Classifier& student, std::span<const std::size_t> teacher_labels,
                 const LabeledDataset& data) {
  if (data.size() == 0) throw InvalidInputError("agreement on an empty dataset");
  if (teacher_labels.size() != data.size()) throw ShapeError("teacher label count does not match the dataset");
  const auto mine = argmax_rows(student.forward(data.images));
  std::size_t same = 0;
  for (std::size_t i = 0; i < mine.size(); ++i) same += mine[i] == teacher_labels[i];
  return static_cast<double>(same) / static_cast<double>(data.size());
}

double agreement(const Classifier& student, const BlackBoxOracle& oracle, const LabeledDataset& data) {
  if (data.size() == 0) throw InvalidInputError("agreement on an empty dataset");
  const auto theirs = argmax_rows(oracle.query(data.images));
  return agreement(student, theirs, data);
}

double distillation_loss(const Tensor& teacher_probs, const Tensor& student_probs) {
  return batch_cross_entropy(teacher_probs, student_probs);
}

namespace {

struct LabelledBatch {
  Tensor samples;
  Tensor targets;
};

using BatchSource = std::function<LabelledBatch(Rng&, std::size_t step)>;

/// Shared student loop: pulls a batch per step (from the source, or from the
/// bank once it is full), applies one train step, evaluates once per epoch.
TrainingReport run_distillation(Classifier& student, const BlackBoxOracle& oracle, const DistillConfig& config,
                                const Evaluation& eval, const BatchSource& source) {
  config.validate();
  if (eval.test == nullptr) throw InvalidInputError("distillation needs an evaluation set");
  if (student.input_dim() != oracle.input_dim() || student.num_classes() != oracle.num_classes()) {
    throw ShapeError("student does not match the oracle's input or class count");
  }
  Rng rng(config.seed);
  Adam optimizer(std::as_const(student.net()).parameters(), config.adam);
  TrainingReport report;
  report.mode = config.mode;

  std::uint64_t training_samples = 0;
  std::vector<LabelledBatch> bank;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < config.steps_per_epoch; ++s, ++step) {
      LabelledBatch batch;
      if (config.sample_bank && bank.size() >= config.bank_batches) {
        const std::size_t rows = bank.size() * config.batch_size;
        std::vector<std::size_t> pick(rows);
        std::iota(pick.begin(), pick.end(), 0);
        for (std::size_t i = 0; i < config.batch_size; ++i) {
          std::uniform_int_distribution<std::size_t> d(i, rows - 1);
          std::swap(pick[i], pick[d(rng)]);
        }
        batch.samples = Tensor::matrix(config.batch_size, student.input_dim());
        batch.targets = Tensor::matrix(config.batch_size, student.num_classes());
        for (std::size_t i = 0; i < config.batch_size; ++i) {
          const auto& src = bank[pick[i] / config.batch_size];
          const std::size_t r = pick[i] % config.batch_size;
          std::copy(src.samples.row(r).begin(), src.samples.row(r).end(), batch.samples.row(i).begin());
          std::copy(src.targets.row(r).begin(), src.targets.row(r).end(), batch.targets.row(i).begin());
        }
      } else {
        const std::uint64_t before = oracle.call_count();
        batch = source(rng, step);
        training_samples += oracle.call_count() - before;
        if (config.sample_bank) bank.push_back(batch);
      }
      loss_sum += train_step(student, optimizer, batch.samples, batch.targets);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(config.steps_per_epoch);
    rec.accuracy = accuracy(student, *eval.test);
    rec.agreement = agreement(student, eval.teacher_labels, *eval.test);
    rec.oracle_samples = training_samples;
    report.epochs.push_back(rec);
  }
  return report;
}

void expect_mode(const DistillConfig& config, DistillMode mode) {
  if (config.mode != mode) {
    throw ConfigError("distillation config is for mode '" + std::string(to_string(config.mode)) + "', not '" +
                      std::string(to_string(mode)) + "'");
  }
}

}  // namespace

TrainingReport distill_ripper(Classifier& student, const BlackBoxOracle& oracle, const Generator& gen,
                              const EvolutionConfig& evolution, const DistillConfig& config, const Evaluation& eval,
                              EvolutionTrace* trace) {
  expect_mode(config, DistillMode::kRipper);
  evolution.validate();
  return run_distillation(student, oracle, config, eval, [&](Rng& rng, std::size_t step) {
    EvolvedBatch b = evolve_batch(oracle, gen, evolution, config.batch_size, rng, {}, trace,
                                  step * config.batch_size);
    return LabelledBatch{std::move(b.samples), std::move(b.teacher_probs)};
  });
}

TrainingReport distill_knockoff(Classifier& student, const BlackBoxOracle& oracle, const LabeledDataset& proxy,
                                const DistillConfig& config, const Evaluation& eval) {
  expect_mode(config, DistillMode::kKnockoff);
  if (proxy.size() == 0) throw InvalidInputError("knockoff needs a non-empty proxy set");
  if (proxy.role != DatasetRole::kProxy) throw InvalidInputError("knockoff must train on proxy data");
  std::vector<std::size_t> order(proxy.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  return run_distillation(student, oracle, config, eval, [&](Rng& rng, std::size_t) {
    std::vector<std::size_t> rows;
    while (rows.size() < config.batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      rows.push_back(order[cursor++]);
    }
    Tensor samples = proxy.images.gather_rows(rows);
    Tensor targets = oracle.query(samples);
    return LabelledBatch{std::move(samples), std::move(targets)};
  });
}

TrainingReport distill_gen_random(Classifier& student, const BlackBoxOracle& oracle, const Generator& gen,
                                  const DistillConfig& config, const Evaluation& eval) {
  expect_mode(config, DistillMode::kGenRandom);
  return run_distillation(student, oracle, config, eval, [&](Rng& rng, std::size_t) {
    Tensor latents = Tensor::matrix(config.batch_size, gen.latent_dim());
    if (config.latent_sampling == LatentSampling::kPrior) {
      latents = stack_latents(gen.sample_prior(config.batch_size, rng()));
    } else {
      std::uniform_real_distribution<double> u(-config.uniform_bound, config.uniform_bound);
      for (double& x : latents.data()) x = u(rng);
    }
    Tensor samples = gen.decode_batch(latents);
    Tensor targets = oracle.query(samples);
    return LabelledBatch{std::move(samples), std::move(targets)};
  });
}

void write_report_csv(const TrainingReport& report, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f.precision(17);
  f << "epoch,loss,accuracy,agreement,oracle_samples\n";
  for (const auto& e : report.epochs) {
    f << e.epoch << ',' << e.loss << ',' << e.accuracy << ',' << e.agreement << ',' << e.oracle_samples << '\n';
  }
}

}  // namespace bbr
