#include <doctest.h>

#include <cmath>
#include <numeric>

#include "bbr/checkpoint.hpp"
#include "bbr/distill.hpp"
#include "bbr/error.hpp"
#include "bbr/synthetic.hpp"
#include "bbr/vae.hpp"
#include "helpers.hpp"

using namespace bbr;

namespace {

// Small Gaussian-mixture world: trained teacher, trained generator, true test split.
struct World {
  LabeledDataset train;
  LabeledDataset test;
  LabeledDataset proxy;
  Classifier teacher;
  Vae generator;
};

const World& world() {
  static const World w = [] {
    World out;
    DatasetSpec t;
    t.family = DatasetFamily::kGaussianMixture;
    t.classes = mixture_catalog(false, 4);
    t.samples_per_class = 60;
    t.dimension = 16;
    t.noise_std = 0.05;
    t.seed = 1;
    std::tie(out.train, out.test) = split(generate(t), 0.5, 2);
    DatasetSpec p = t;
    p.classes = mixture_catalog(true, 4);
    p.seed = 3;
    out.proxy = generate(p);

    Rng rng(4);
    out.teacher = Classifier({16, 32, 4}, rng);
    AdamConfig fast;
    fast.learning_rate = 1e-2;
    Adam opt(std::as_const(out.teacher.net()).parameters(), fast);
    Tensor targets = Tensor::matrix(out.train.size(), 4);
    for (std::size_t i = 0; i < out.train.size(); ++i) targets(i, out.train.labels[i]) = 1.0;
    for (int s = 0; s < 300; ++s) train_step(out.teacher, opt, out.train.images, targets);

    VaeConfig vc;
    vc.hidden = 32;
    vc.latent_dim = 4;
    vc.epochs = 30;
    vc.batch_size = 32;
    vc.seed = 5;
    out.generator = vae_train(out.proxy, vc);
    return out;
  }();
  return w;
}

Classifier fresh_student(std::uint64_t seed = 9) {
  Rng rng(seed);
  return Classifier({16, 16, 4}, rng);
}

DistillConfig small_config(DistillMode mode, std::size_t epochs = 4) {
  DistillConfig c;
  c.mode = mode;
  c.epochs = epochs;
  c.steps_per_epoch = steps_per_epoch_for(world().train.size(), 32);
  c.batch_size = 32;
  c.seed = 13;
  return c;
}

EvolutionConfig quick_search() {
  EvolutionConfig e;
  e.max_generations = 3;
  return e;
}

LabeledDataset labelled(Tensor images, std::vector<std::size_t> labels, std::size_t classes) {
  LabeledDataset d;
  d.images = std::move(images);
  d.labels = std::move(labels);
  d.ids.resize(d.labels.size());
  std::iota(d.ids.begin(), d.ids.end(), 0);
  d.role = DatasetRole::kTrueTest;
  for (std::size_t c = 0; c < classes; ++c) d.class_names.push_back("c" + std::to_string(c));
  return d;
}

}  // namespace

TEST_SUITE("distill") {
  TEST_CASE("schedule defaults") {
    const DistillConfig c;
    CHECK(c.epochs == 200);
    CHECK(c.batch_size == 64);
    CHECK(c.adam.learning_rate == 1e-3);
    CHECK_FALSE(c.sample_bank);
    CHECK(steps_per_epoch_for(450, 64) == 8);
    CHECK(steps_per_epoch_for(448, 64) == 7);
    CHECK(steps_per_epoch_for(1, 64) == 1);
  }

  TEST_CASE("mode names") {
    for (auto m : {DistillMode::kRipper, DistillMode::kKnockoff, DistillMode::kGenRandom}) {
      CHECK(parse_distill_mode(to_string(m)) == m);
    }
    CHECK(to_string(DistillMode::kGenRandom) == "gen-random");
    CHECK_THROWS_AS(parse_distill_mode("random"), ConfigError);
  }

  TEST_CASE("config validation") {
    DistillConfig c;
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    CHECK_NOTHROW(c.validate());
  }

  TEST_CASE("distillation loss is the summed soft cross-entropy") {
    const Tensor t = test::random_simplex(20, 5, 1);
    const Tensor p = test::random_simplex(20, 5, 2);
    double expected = 0.0;
    for (std::size_t i = 0; i < 20; ++i) expected += cross_entropy_soft(t.row(i), p.row(i));
    CHECK(std::abs(distillation_loss(t, p) - expected) < 1e-12);
  }

  TEST_CASE("agreement examples") {
    const auto& w = world();
    const BlackBoxOracle oracle(w.teacher);
    CHECK(agreement(w.teacher, oracle, w.test) == 1.0);

    const auto teacher_labels = argmax_rows(oracle.query(w.test.images));
    for (std::size_t c = 0; c < 4; ++c) {
      const double f = static_cast<double>(std::count(teacher_labels.begin(), teacher_labels.end(), c)) /
                       static_cast<double>(teacher_labels.size());
      CHECK(agreement(test::constant_classifier(16, 4, c), oracle, w.test) == doctest::Approx(f).epsilon(1e-15));
    }
  }

  TEST_CASE("agreement fixture against per-sample enumeration") {
    // Identity "student" on logits; teacher labels given directly.
    const Tensor logits = Tensor::from_rows({{3, 1, 0}, {0, 2, 1}, {1, 1, 5}, {2, 2, 0}, {0, 1, 1}, {4, 0, 4}});
    const std::vector<std::size_t> student_argmax{0, 1, 2, 0, 1, 0};
    const std::vector<std::size_t> teacher{0, 2, 2, 1, 1, 0};
    std::size_t same = 0;
    for (std::size_t i = 0; i < 6; ++i) same += student_argmax[i] == teacher[i];
    const Tensor eye = Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    const auto student = test::linear_classifier(eye, Tensor::vector({0, 0, 0}));
    const auto data = labelled(logits, {0, 0, 0, 0, 0, 0}, 3);
    CHECK(agreement(student, teacher, data) == static_cast<double>(same) / 6.0);
    CHECK(agreement(student, teacher, data) == 4.0 / 6.0);
    CHECK_THROWS_AS(agreement(student, std::vector<std::size_t>{}, labelled(Tensor::matrix(0, 3), {}, 3)),
                    InvalidInputError);
  }

  TEST_CASE("evaluation labels are fetched once and excluded from the training budget") {
    const auto& w = world();
    const BlackBoxOracle oracle(w.teacher);
    const Evaluation eval = make_evaluation(oracle, w.test);
    CHECK(oracle.call_count() == w.test.size());
    Classifier student = fresh_student();
    const auto report = distill_gen_random(student, oracle, w.generator, small_config(DistillMode::kGenRandom), eval);
    CHECK(oracle.call_count() == w.test.size() + report.oracle_samples());
  }

  TEST_CASE("knockoff consumes steps x batch samples per epoch") {
    const auto& w = world();
    const BlackBoxOracle oracle(w.teacher);
    const Evaluation eval = make_evaluation(oracle, w.test);
    Classifier student = fresh_student();
    const auto cfg = small_config(DistillMode::kKnockoff, 5);
    const auto report = distill_knockoff(student, oracle, w.proxy, cfg, eval);
    REQUIRE(report.epochs.size() == 5);
    for (std::size_t e = 0; e < 5; ++e) {
      CHECK(report.epochs[e].epoch == e + 1);
      CHECK(report.epochs[e].oracle_samples == (e + 1) * cfg.steps_per_epoch * cfg.batch_size);
    }
    CHECK_THROWS_AS(distill_knockoff(student, oracle, w.train, cfg, eval), InvalidInputError);
  }

  TEST_CASE("gen-random consumes one sample per batch row") {
    const auto& w = world();
    const BlackBoxOracle oracle(w.teacher);
    const Evaluation eval = make_evaluation(oracle, w.test);
    Classifier student = fresh_student();
    auto cfg = small_config(DistillMode::kGenRandom, 3);
    cfg.steps_per_epoch = 1;
    const auto report = distill_gen_random(student, oracle, w.generator, cfg, eval);
    CHECK(report.epochs[0].oracle_samples == 32);
    CHECK(report.oracle_samples() == 96);
  }

  TEST_CASE("ripper budget equals the summed evolution budgets") {
    const auto& w = world();
    const BlackBoxOracle oracle(w.teacher);
    const Evaluation eval = make_evaluation(oracle, w.test);
    Classifier student = fresh_student();
    auto cfg = small_config(DistillMode::kRipper, 2);
    cfg.steps_per_epoch = 2;
    EvolutionTrace trace(1000);
    const auto report = distill_ripper(student, oracle, w.generator, quick_search(), cfg, eval, &trace);
    // Reconstruct per-element generations from the trace rows.
    std::vector<std::size_t> gens(2 * 2 * 32, 0);
    for (const auto& r : trace.rows()) gens.at(r.batch_index) = std::max(gens.at(r.batch_index), r.generation);
    std::uint64_t expected = 0;
    for (std::size_t g : gens) expected += evolve_budget(30, 10, g) + 1;
    CHECK(report.oracle_samples() == expected);
    CHECK(oracle.call_count() == w.test.size() + expected);
  }

  TEST_CASE("oracle sample counts are monotone and one record is written per epoch") {
    const auto& w = world();
    const BlackBoxOracle oracle(w.teacher);
    const Evaluation eval = make_evaluation(oracle, w.test);
    Classifier student = fresh_student();
    const auto report = distill_ripper(student, oracle, w.generator, quick_search(),
                                       small_config(DistillMode::kRipper, 3), eval);
    REQUIRE(report.epochs.size() == 3);
    for (std::size_t e = 1; e < 3; ++e) CHECK(report.epochs[e].oracle_samples > report.epochs[e - 1].oracle_samples);
    for (const auto& r : report.epochs) {
      CHECK((r.accuracy >= 0.0 && r.accuracy <= 1.0));
      CHECK((r.agreement >= 0.0 && r.agreement <= 1.0));
    }
  }

  TEST_CASE("identical seeds give identical reports in every mode") {
    const auto& w = world();
    for (auto mode : {DistillMode::kRipper, DistillMode::kKnockoff, DistillMode::kGenRandom}) {
      TrainingReport reports[2];
      Tensor outputs[2];
      for (int run = 0; run < 2; ++run) {
        const BlackBoxOracle oracle(w.teacher);
        const Evaluation eval = make_evaluation(oracle, w.test);
        Classifier student = fresh_student();
        const auto cfg = small_config(mode, 2);
        if (mode == DistillMode::kRipper) {
          reports[run] = distill_ripper(student, oracle, w.generator, quick_search(), cfg, eval);
        } else if (mode == DistillMode::kKnockoff) {
          reports[run] = distill_knockoff(student, oracle, w.proxy, cfg, eval);
        } else {
          reports[run] = distill_gen_random(student, oracle, w.generator, cfg, eval);
        }
        outputs[run] = student.forward(w.test.images);
      }
      CHECK(reports[0] == reports[1]);
      CHECK(bitwise_equal(outputs[0], outputs[1]));
    }
  }

  TEST_CASE("sample bank stops querying once full") {
    const auto& w = world();
    const BlackBoxOracle oracle(w.teacher);
    const Evaluation eval = make_evaluation(oracle, w.test);
    Classifier student = fresh_student();
    auto cfg = small_config(DistillMode::kRipper, 4);
    cfg.steps_per_epoch = 2;
    cfg.sample_bank = true;
    cfg.bank_batches = 3;
    const std::uint64_t before = oracle.call_count();
    const auto report = distill_ripper(student, oracle, w.generator, quick_search(), cfg, eval);
    CHECK(report.epochs[0].oracle_samples < report.epochs[1].oracle_samples);
    CHECK(report.epochs[1].oracle_samples == report.epochs[2].oracle_samples);
    CHECK(report.epochs[2].oracle_samples == report.epochs[3].oracle_samples);
    CHECK(oracle.call_count() - before == report.oracle_samples());
  }

  TEST_CASE("student trained against a uniform oracle becomes uniform") {
    const auto& w = world();
    const BlackBoxOracle oracle(Classifier(Mlp::zeros({16, 4})));
    const Evaluation eval = make_evaluation(oracle, w.test);
    Classifier student = fresh_student(21);
    auto cfg = small_config(DistillMode::kRipper, 20);
    cfg.adam.learning_rate = 1e-2;
    EvolutionConfig search;
    search.max_generations = 1;
    distill_ripper(student, oracle, w.generator, search, cfg, eval);
    const Tensor probs = student.forward(w.test.images);
    for (std::size_t c = 0; c < 4; ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < probs.rows(); ++i) mean += probs(i, c) / static_cast<double>(probs.rows());
      CHECK(std::abs(mean - 0.25) < 0.05);
    }
  }

  TEST_CASE("training loss falls in every mode") {
    const auto& w = world();
    for (auto mode : {DistillMode::kRipper, DistillMode::kKnockoff, DistillMode::kGenRandom}) {
      const BlackBoxOracle oracle(w.teacher);
      const Evaluation eval = make_evaluation(oracle, w.test);
      Classifier student = fresh_student();
      const auto cfg = small_config(mode, 15);
      TrainingReport r;
      if (mode == DistillMode::kRipper) r = distill_ripper(student, oracle, w.generator, quick_search(), cfg, eval);
      if (mode == DistillMode::kKnockoff) r = distill_knockoff(student, oracle, w.proxy, cfg, eval);
      if (mode == DistillMode::kGenRandom) r = distill_gen_random(student, oracle, w.generator, cfg, eval);
      CHECK_MESSAGE(r.final().loss < r.epochs.front().loss, to_string(mode));
    }
  }

  TEST_CASE("ripper at generation 0 versus gen-random on uniform latents") {
    // A threshold above the largest possible fitness (2) stops every search
    // right after initialization, so both arms train on decoded U(-u, u)
    // latents; the ripper arm only keeps the best of K per element.
    const auto& w = world();
    EvolutionConfig always;
    always.threshold = 2.5;
    double acc[2];
    std::uint64_t samples[2];
    for (int arm = 0; arm < 2; ++arm) {
      const BlackBoxOracle oracle(w.teacher);
      const Evaluation eval = make_evaluation(oracle, w.test);
      Classifier student = fresh_student();
      auto cfg = small_config(arm == 0 ? DistillMode::kRipper : DistillMode::kGenRandom, 10);
      cfg.latent_sampling = LatentSampling::kUniform;
      cfg.uniform_bound = always.latent_bound;
      const auto r = arm == 0 ? distill_ripper(student, oracle, w.generator, always, cfg, eval)
                              : distill_gen_random(student, oracle, w.generator, cfg, eval);
      acc[arm] = r.final().accuracy;
      samples[arm] = r.oracle_samples();
    }
    const std::uint64_t rows = 10 * steps_per_epoch_for(world().train.size(), 32) * 32;
    CHECK(samples[0] == rows * (30 + 1));
    CHECK(samples[1] == rows);
    CHECK(acc[0] > 0.25);
    CHECK(acc[0] >= acc[1]);
  }

  TEST_CASE("mode mismatch and shape mismatch") {
    const auto& w = world();
    const BlackBoxOracle oracle(w.teacher);
    const Evaluation eval = make_evaluation(oracle, w.test);
    Classifier student = fresh_student();
    CHECK_THROWS_AS(distill_knockoff(student, oracle, w.proxy, small_config(DistillMode::kRipper), eval), ConfigError);
    Rng rng(1);
    Classifier wrong({16, 8, 3}, rng);
    CHECK_THROWS_AS(distill_knockoff(wrong, oracle, w.proxy, small_config(DistillMode::kKnockoff), eval), ShapeError);
  }

  TEST_CASE("report CSV") {
    const auto dir = test::scratch_dir("distill_csv");
    TrainingReport r;
    r.epochs.push_back({1, 0.5, 0.25, 0.75, 64});
    r.epochs.push_back({2, 0.25, 0.5, 1.0, 128});
    write_report_csv(r, dir / "r.csv");
    CHECK(read_file(dir / "r.csv") == "epoch,loss,accuracy,agreement,oracle_samples\n1,0.5,0.25,0.75,64\n2,0.25,0.5,1,128\n");
  }
}
