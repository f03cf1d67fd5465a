#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bbr/checkpoint.hpp"
#include "bbr/error.hpp"
#include "bbr/evolution.hpp"
#include "bbr/experiment.hpp"
#include "bbr/nn.hpp"
#include "bbr/oracle.hpp"
#include "bbr/synthetic.hpp"
#include "bbr/vae.hpp"

namespace py = pybind11;
using namespace bbr;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor as_matrix(const Array& a) {
  Tensor t = to_tensor(a);
  if (t.rank() == 1) return Tensor({1, t.size()}, std::vector<double>(t.data().begin(), t.data().end()));
  return t;
}

py::dict dataset_dict(const LabeledDataset& d) {
  py::dict out;
  out["images"] = to_array(d.images);
  out["labels"] = d.labels;
  out["ids"] = d.ids;
  out["role"] = std::string(to_string(d.role));
  out["class_names"] = d.class_names;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Black-box model ripping: evolutionary latent search and distillation";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<InvalidInputError>(m, "InvalidInputError", base.ptr());
  auto format = py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<RoleMismatchError>(m, "RoleMismatchError", format.ptr());
  py::register_exception<DisjointnessError>(m, "DisjointnessError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<StageOrderError>(m, "StageOrderError", base.ptr());

  m.def("softmax", [](const std::vector<double>& logits) { return softmax(logits); }, py::arg("logits"));
  m.def("fitness_from_probs", [](const std::vector<double>& p, std::size_t target) { return fitness_from_probs(p, target); },
        py::arg("probs"), py::arg("target"));
  m.def("evolve_budget", &evolve_budget, py::arg("population"), py::arg("elites"), py::arg("generations"));
  m.def("derive_seed", [](std::uint64_t seed, const std::string& label) { return derive_seed(seed, label); },
        py::arg("seed"), py::arg("label"));

  m.def("true_shape_catalog", &true_shape_catalog);
  m.def("proxy_shape_catalog", &proxy_shape_catalog);
  m.def(
      "generate_shapes",
      [](const std::vector<std::string>& classes, std::size_t samples_per_class, double noise_std, std::uint64_t seed,
         std::size_t side, bool jitter) {
        DatasetSpec s;
        s.classes = classes;
        s.samples_per_class = samples_per_class;
        s.noise_std = noise_std;
        s.seed = seed;
        s.side = side;
        s.jitter = jitter;
        return dataset_dict(generate(s));
      },
      py::arg("classes"), py::arg("samples_per_class"), py::arg("noise_std") = 0.15, py::arg("seed") = 0,
      py::arg("side") = 10, py::arg("jitter") = true);

  py::class_<Classifier>(m, "Classifier")
      .def(py::init([](const std::vector<std::size_t>& widths, std::uint64_t seed) {
             Rng rng(seed);
             return Classifier(widths, rng);
           }),
           py::arg("widths"), py::arg("seed") = 0)
      .def_static("load", &load_classifier, py::arg("path"))
      .def("save", [](const Classifier& c, const std::filesystem::path& p) { save_classifier(c, p); }, py::arg("path"))
      .def_property_readonly("widths", [](const Classifier& c) { return c.net().widths(); })
      .def("forward", [](const Classifier& c, const Array& x) { return to_array(c.forward(as_matrix(x))); },
           py::arg("batch"));

  py::enum_<ResponseMode>(m, "ResponseMode")
      .value("PROBABILITIES", ResponseMode::kProbabilities)
      .value("TOP_LABEL", ResponseMode::kTopLabel);

  py::class_<BlackBoxOracle>(m, "BlackBoxOracle")
      .def(py::init<const Classifier&, ResponseMode>(), py::arg("teacher"),
           py::arg("mode") = ResponseMode::kProbabilities)
      .def_static("from_checkpoint", &BlackBoxOracle::from_checkpoint, py::arg("path"),
                  py::arg("mode") = ResponseMode::kProbabilities)
      .def("query", [](const BlackBoxOracle& o, const Array& x) { return to_array(o.query(as_matrix(x))); },
           py::arg("batch"))
      .def_property_readonly("call_count", &BlackBoxOracle::call_count)
      .def_property_readonly("mode", &BlackBoxOracle::mode)
      .def_property_readonly("input_dim", &BlackBoxOracle::input_dim)
      .def_property_readonly("num_classes", &BlackBoxOracle::num_classes);

  py::class_<Vae>(m, "Vae")
      .def(py::init([](std::size_t output_dim, std::size_t hidden, std::size_t latent_dim, std::uint64_t seed) {
             Rng rng(seed);
             return Vae(output_dim, hidden, latent_dim, rng);
           }),
           py::arg("output_dim") = 100, py::arg("hidden") = 64, py::arg("latent_dim") = 8, py::arg("seed") = 0)
      .def_static("load", &load_vae, py::arg("path"))
      .def_property_readonly("latent_dim", &Vae::latent_dim)
      .def_property_readonly("output_dim", &Vae::output_dim)
      .def("decode", [](const Vae& v, const Array& z) { return to_array(v.decode_batch(as_matrix(z))); },
           py::arg("latents"));

  py::class_<EvolutionConfig>(m, "EvolutionConfig")
      .def(py::init<>())
      .def_readwrite("population_size", &EvolutionConfig::population_size)
      .def_readwrite("elite_size", &EvolutionConfig::elite_size)
      .def_readwrite("latent_bound", &EvolutionConfig::latent_bound)
      .def_readwrite("threshold", &EvolutionConfig::threshold)
      .def_readwrite("max_generations", &EvolutionConfig::max_generations)
      .def_readwrite("mutation_std", &EvolutionConfig::mutation_std)
      .def_readwrite("seed", &EvolutionConfig::seed)
      .def("validate", &EvolutionConfig::validate);

  m.def(
      "evolve",
      [](std::size_t target, const BlackBoxOracle& oracle, const Vae& generator, const EvolutionConfig& config) {
        const EvolutionResult r = evolve(target, oracle, generator, config);
        py::dict out;
        out["sample"] = to_array(r.sample);
        out["best_latent"] = r.best_latent.values;
        out["final_fitness"] = r.final_fitness;
        out["generations"] = r.generations;
        out["oracle_samples"] = r.oracle_samples;
        out["best_fitness_history"] = r.best_fitness_history;
        return out;
      },
      py::arg("target"), py::arg("oracle"), py::arg("generator"), py::arg("config") = EvolutionConfig{});

  py::enum_<Stage>(m, "Stage")
      .value("DATA", Stage::kData)
      .value("TEACHER", Stage::kTeacher)
      .value("GENERATOR", Stage::kGenerator)
      .value("RIP", Stage::kRip)
      .value("KNOCKOFF", Stage::kKnockoff)
      .value("GEN_RANDOM", Stage::kGenRandom)
      .value("EVALUATE", Stage::kEvaluate)
      .value("REPORT", Stage::kReport);

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_static("parse", &parse_config_text, py::arg("text"))
      .def_static("load", &parse_config, py::arg("path"))
      .def("serialize", &serialize_config)
      .def("validate", &ExperimentConfig::validate)
      .def("stage_hash", &stage_hash, py::arg("stage"))
      .def("stage_seed", &stage_seed, py::arg("stage"))
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("output_dir", &ExperimentConfig::output_dir)
      .def("__eq__", [](const ExperimentConfig& a, const ExperimentConfig& b) { return a == b; });

  py::class_<ModeResult>(m, "ModeResult")
      .def_readonly("accuracy", &ModeResult::accuracy)
      .def_readonly("agreement", &ModeResult::agreement)
      .def_readonly("oracle_samples", &ModeResult::oracle_samples);

  py::class_<ExperimentReport>(m, "ExperimentReport")
      .def_static("from_json", &ExperimentReport::from_json, py::arg("text"))
      .def_readonly("teacher_accuracy", &ExperimentReport::teacher_accuracy)
      .def_readonly("ripper", &ExperimentReport::ripper)
      .def_readonly("knockoff", &ExperimentReport::knockoff)
      .def_readonly("gen_random", &ExperimentReport::gen_random)
      .def_readonly("seed", &ExperimentReport::seed)
      .def_readonly("config_hash", &ExperimentReport::config_hash)
      .def("to_json", &ExperimentReport::to_json)
      .def("table", &compare_report)
      .def("__eq__", [](const ExperimentReport& a, const ExperimentReport& b) { return a == b; });

  const auto options = [](const std::filesystem::path& out_dir, bool deterministic, bool verbose) {
    StageOptions o;
    o.out_dir = out_dir;
    o.deterministic = deterministic;
    o.verbose = verbose;
    return o;
  };
  m.def(
      "run_stage",
      [options](Stage stage, const ExperimentConfig& cfg, const std::filesystem::path& out_dir, bool deterministic,
                bool verbose) {
        py::gil_scoped_release release;
        run_stage(stage, cfg, options(out_dir, deterministic, verbose));
      },
      py::arg("stage"), py::arg("config"), py::arg("out_dir"), py::arg("deterministic") = true,
      py::arg("verbose") = false);
  m.def(
      "run_pipeline",
      [options](const ExperimentConfig& cfg, const std::filesystem::path& out_dir, bool deterministic, bool verbose) {
        py::gil_scoped_release release;
        return run_pipeline(cfg, options(out_dir, deterministic, verbose));
      },
      py::arg("config"), py::arg("out_dir"), py::arg("deterministic") = true, py::arg("verbose") = false);
  m.def("load_report", &load_report, py::arg("path"));
}
