#include "bbr/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "bbr/checkpoint.hpp"
#include "bbr/error.hpp"
#include "bbr/oracle.hpp"
#include "bbr/rng.hpp"
#include "bbr/vae.hpp"

namespace bbr {
namespace {

// ---------------------------------------------------------------------------
// Value codecs

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("expected a finite number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_widths(const std::string& v) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (true) {
    const auto at = v.find(',', start);
    out.push_back(parse_u64(trim(std::string_view(v).substr(start, at - start))));
    if (at == std::string::npos) break;
    start = at + 1;
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt_widths(const std::vector<std::size_t>& w) {
  std::string s;
  for (std::size_t x : w) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

std::string_view family_name(DatasetFamily f) {
  return f == DatasetFamily::kShapes ? "shapes" : "gaussian-mixture";
}

DatasetFamily parse_family(const std::string& v) {
  if (v == "shapes") return DatasetFamily::kShapes;
  if (v == "gaussian-mixture") return DatasetFamily::kGaussianMixture;
  throw ConfigError("family must be shapes or gaussian-mixture, got '" + v + "'");
}

// ---------------------------------------------------------------------------
// Key table: one entry per configuration key, in serialization order.

struct Field {
  std::string_view section;
  std::string_view key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  // Empty result = omit (unset optional).
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Settings>
void add_adam(std::vector<Field>& f, std::string_view section, Settings ExperimentConfig::*member) {
  f.push_back({section, "learning_rate",
               [=](ExperimentConfig& c, const std::string& v) { (c.*member).adam.learning_rate = parse_double(v); },
               [=](const ExperimentConfig& c) { return fmt_double((c.*member).adam.learning_rate); }});
  f.push_back({section, "beta1", [=](ExperimentConfig& c, const std::string& v) { (c.*member).adam.beta1 = parse_double(v); },
               [=](const ExperimentConfig& c) { return fmt_double((c.*member).adam.beta1); }});
  f.push_back({section, "beta2", [=](ExperimentConfig& c, const std::string& v) { (c.*member).adam.beta2 = parse_double(v); },
               [=](const ExperimentConfig& c) { return fmt_double((c.*member).adam.beta2); }});
  f.push_back({section, "epsilon",
               [=](ExperimentConfig& c, const std::string& v) { (c.*member).adam.epsilon = parse_double(v); },
               [=](const ExperimentConfig& c) { return fmt_double((c.*member).adam.epsilon); }});
}

template <typename Settings>
void add_seed(std::vector<Field>& f, std::string_view section, Settings ExperimentConfig::*member) {
  f.push_back({section, "seed", [=](ExperimentConfig& c, const std::string& v) { (c.*member).seed = parse_u64(v); },
               [=](const ExperimentConfig& c) {
                 return (c.*member).seed ? std::to_string(*(c.*member).seed) : std::string();
               }});
}

#define BBR_SIZE_FIELD(section, key, expr)                                                              \
  f.push_back({section, #key, [](ExperimentConfig& c, const std::string& v) { c.expr = parse_u64(v); }, \
               [](const ExperimentConfig& c) { return std::to_string(c.expr); }})
#define BBR_DOUBLE_FIELD(section, key, expr)                                                               \
  f.push_back({section, #key, [](ExperimentConfig& c, const std::string& v) { c.expr = parse_double(v); }, \
               [](const ExperimentConfig& c) { return fmt_double(c.expr); }})

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"experiment", "seed", [](ExperimentConfig& c, const std::string& v) { c.seed = parse_u64(v); },
                 [](const ExperimentConfig& c) { return std::to_string(c.seed); }});
    f.push_back({"experiment", "output_dir",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v.empty()) throw ConfigError("output_dir must not be empty");
                   c.output_dir = v;
                 },
                 [](const ExperimentConfig& c) { return c.output_dir; }});

    f.push_back({"data", "family", [](ExperimentConfig& c, const std::string& v) { c.data.family = parse_family(v); },
                 [](const ExperimentConfig& c) { return std::string(family_name(c.data.family)); }});
    BBR_SIZE_FIELD("data", true_classes, data.true_classes);
    BBR_SIZE_FIELD("data", proxy_classes, data.proxy_classes);
    BBR_SIZE_FIELD("data", true_samples_per_class, data.true_samples_per_class);
    BBR_SIZE_FIELD("data", proxy_samples_per_class, data.proxy_samples_per_class);
    BBR_SIZE_FIELD("data", side, data.side);
    BBR_SIZE_FIELD("data", dimension, data.dimension);
    BBR_DOUBLE_FIELD("data", noise_std, data.noise_std);
    BBR_DOUBLE_FIELD("data", test_fraction, data.test_fraction);
    add_seed(f, "data", &ExperimentConfig::data);

    f.push_back({"teacher", "hidden",
                 [](ExperimentConfig& c, const std::string& v) { c.teacher.hidden = parse_widths(v); },
                 [](const ExperimentConfig& c) { return fmt_widths(c.teacher.hidden); }});
    BBR_SIZE_FIELD("teacher", epochs, teacher.epochs);
    BBR_SIZE_FIELD("teacher", batch_size, teacher.batch_size);
    add_adam(f, "teacher", &ExperimentConfig::teacher);
    add_seed(f, "teacher", &ExperimentConfig::teacher);

    f.push_back({"student", "hidden",
                 [](ExperimentConfig& c, const std::string& v) { c.student.hidden = parse_widths(v); },
                 [](const ExperimentConfig& c) { return fmt_widths(c.student.hidden); }});

    BBR_SIZE_FIELD("generator", latent_dim, generator.latent_dim);
    BBR_SIZE_FIELD("generator", hidden, generator.hidden);
    BBR_SIZE_FIELD("generator", epochs, generator.epochs);
    BBR_SIZE_FIELD("generator", batch_size, generator.batch_size);
    add_adam(f, "generator", &ExperimentConfig::generator);
    add_seed(f, "generator", &ExperimentConfig::generator);

    BBR_SIZE_FIELD("evolution", population_size, evolution.search.population_size);
    BBR_SIZE_FIELD("evolution", elite_size, evolution.search.elite_size);
    BBR_DOUBLE_FIELD("evolution", latent_bound, evolution.search.latent_bound);
    BBR_DOUBLE_FIELD("evolution", threshold, evolution.search.threshold);
    BBR_SIZE_FIELD("evolution", max_generations, evolution.search.max_generations);
    BBR_DOUBLE_FIELD("evolution", mutation_std, evolution.search.mutation_std);
    BBR_SIZE_FIELD("evolution", trace_samples, evolution.trace_samples);
    BBR_SIZE_FIELD("evolution", specimen_samples, evolution.specimen_samples);

    BBR_SIZE_FIELD("distill", epochs, distill.epochs);
    BBR_SIZE_FIELD("distill", batch_size, distill.batch_size);
    add_adam(f, "distill", &ExperimentConfig::distill);
    f.push_back({"distill", "sample_bank",
                 [](ExperimentConfig& c, const std::string& v) { c.distill.sample_bank = parse_bool(v); },
                 [](const ExperimentConfig& c) { return std::string(c.distill.sample_bank ? "true" : "false"); }});
    BBR_SIZE_FIELD("distill", bank_batches, distill.bank_batches);
    add_seed(f, "distill", &ExperimentConfig::distill);
    return f;
  }();
  return table;
}

#undef BBR_SIZE_FIELD
#undef BBR_DOUBLE_FIELD

constexpr std::string_view kSections[] = {"experiment", "data",      "teacher", "student",
                                          "generator",  "evolution", "distill"};

std::string section_text(const ExperimentConfig& cfg, std::string_view section, bool with_output_dir = true) {
  std::string out = "[" + std::string(section) + "]\n";
  for (const auto& field : fields()) {
    if (field.section != section) continue;
    if (!with_output_dir && field.key == "output_dir") continue;
    const std::string value = field.get(cfg);
    if (!value.empty()) out += std::string(field.key) + " = " + value + "\n";
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config parsing

void ExperimentConfig::validate() const {
  auto line_of = [&](std::string_view key) -> std::size_t {
    for (const auto& [k, line] : key_lines) {
      if (k == key) return line;
    }
    return 0;
  };
  auto require = [&](bool ok, std::string_view key, const std::string& what) {
    if (!ok) throw ConfigError(std::string(key) + ": " + what, line_of(key));
  };

  const bool shapes = data.family == DatasetFamily::kShapes;
  const std::size_t catalog = shapes ? true_shape_catalog().size() : 0;
  require(data.true_classes >= 2 && (!shapes || data.true_classes <= catalog), "data.true_classes",
          "must be between 2 and the catalog size");
  require(data.proxy_classes >= 1 && (!shapes || data.proxy_classes <= proxy_shape_catalog().size()),
          "data.proxy_classes", "must be between 1 and the catalog size");
  require(data.true_samples_per_class >= 2, "data.true_samples_per_class", "must be at least 2");
  require(data.proxy_samples_per_class >= 1, "data.proxy_samples_per_class", "must be at least 1");
  require(!shapes || data.side >= 6, "data.side", "must be at least 6");
  require(shapes || data.dimension >= 2, "data.dimension", "must be at least 2");
  require(data.noise_std >= 0.0, "data.noise_std", "must be >= 0");
  require(data.test_fraction > 0.0 && data.test_fraction < 1.0, "data.test_fraction", "must be in (0, 1)");

  auto check_adam = [&](const AdamConfig& a, std::string_view section) {
    const std::string s(section);
    require(a.learning_rate >= 0.0, s + ".learning_rate", "must be >= 0");
    require(a.beta1 >= 0.0 && a.beta1 < 1.0, s + ".beta1", "must be in [0, 1)");
    require(a.beta2 >= 0.0 && a.beta2 < 1.0, s + ".beta2", "must be in [0, 1)");
    require(a.epsilon > 0.0, s + ".epsilon", "must be > 0");
  };
  auto check_widths = [&](const std::vector<std::size_t>& w, std::string_view key) {
    for (std::size_t x : w) require(x > 0, key, "layer widths must be positive");
  };

  check_widths(teacher.hidden, "teacher.hidden");
  require(teacher.epochs >= 1, "teacher.epochs", "must be at least 1");
  require(teacher.batch_size >= 1, "teacher.batch_size", "must be at least 1");
  check_adam(teacher.adam, "teacher");
  check_widths(student.hidden, "student.hidden");

  require(generator.latent_dim >= 1, "generator.latent_dim", "must be at least 1");
  require(generator.hidden >= 1, "generator.hidden", "must be at least 1");
  require(generator.epochs >= 1, "generator.epochs", "must be at least 1");
  require(generator.batch_size >= 1, "generator.batch_size", "must be at least 1");
  check_adam(generator.adam, "generator");

  const auto& s = evolution.search;
  require(s.population_size >= 2 && s.elite_size >= 1 && s.elite_size < s.population_size,
          line_of("evolution.population_size") ? "evolution.population_size" : "evolution.elite_size",
          "requires 1 <= k < K (elite_size = " + std::to_string(s.elite_size) +
              ", population_size = " + std::to_string(s.population_size) + ")");
  require(s.latent_bound > 0.0, "evolution.latent_bound", "must be > 0");
  require(s.threshold > 0.0, "evolution.threshold", "must be > 0");
  require(s.mutation_std > 0.0, "evolution.mutation_std", "must be > 0");

  require(distill.epochs >= 1, "distill.epochs", "must be at least 1");
  require(distill.batch_size >= 1, "distill.batch_size", "must be at least 1");
  require(!distill.sample_bank || distill.bank_batches >= 1, "distill.bank_batches", "must be at least 1");
  check_adam(distill.adam, "distill");
}

ExperimentConfig parse_config_text(std::string_view text) {
  ExperimentConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header '" + line + "'", line_no);
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (std::find(std::begin(kSections), std::end(kSections), section) == std::end(kSections)) {
        throw ConfigError("unknown section [" + section + "]", line_no);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + line + "'", line_no);
    if (section.empty()) throw ConfigError("key outside of any section", line_no);
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto field = std::find_if(fields().begin(), fields().end(),
                                    [&](const Field& f) { return f.section == section && f.key == key; });
    if (field == fields().end()) throw ConfigError("unknown key '" + key + "' in [" + section + "]", line_no);
    const std::string full = section + "." + key;
    for (const auto& [k, l] : cfg.key_lines) {
      if (k == full) throw ConfigError("duplicate key '" + key + "' (first set on line " + std::to_string(l) + ")", line_no);
    }
    try {
      field->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(full + ": " + e.what(), line_no);
    }
    cfg.key_lines.emplace_back(full, line_no);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (auto section : kSections) {
    if (!out.empty()) out += "\n";
    out += section_text(cfg, section);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stages, seeds and hashes

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kData: return "data";
    case Stage::kTeacher: return "teacher";
    case Stage::kGenerator: return "generator";
    case Stage::kRip: return "rip";
    case Stage::kKnockoff: return "knockoff";
    case Stage::kGenRandom: return "gen-random";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kReport: return "report";
  }
  return "unknown";
}

std::uint64_t stage_seed(const ExperimentConfig& cfg, Stage stage) {
  std::optional<std::uint64_t> explicit_seed;
  switch (stage) {
    case Stage::kData: explicit_seed = cfg.data.seed; break;
    case Stage::kTeacher: explicit_seed = cfg.teacher.seed; break;
    case Stage::kGenerator: explicit_seed = cfg.generator.seed; break;
    case Stage::kRip:
    case Stage::kKnockoff:
    case Stage::kGenRandom:
      return derive_seed(cfg.distill.seed.value_or(cfg.seed), to_string(stage));
    default: break;
  }
  return explicit_seed.value_or(derive_seed(cfg.seed, to_string(stage)));
}

std::string stage_hash(const ExperimentConfig& cfg, Stage stage) {
  auto digest = [](const std::string& text) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
    return std::string(buf);
  };
  auto own = [&](Stage s, std::initializer_list<std::string_view> sections) {
    std::string text = std::string(to_string(s)) + ":" + std::to_string(stage_seed(cfg, s)) + "\n";
    for (auto sec : sections) text += section_text(cfg, sec, false);
    return text;
  };
  switch (stage) {
    case Stage::kData: return digest(own(stage, {"data"}));
    case Stage::kTeacher: return digest(stage_hash(cfg, Stage::kData) + own(stage, {"teacher"}));
    case Stage::kGenerator: return digest(stage_hash(cfg, Stage::kData) + own(stage, {"generator"}));
    case Stage::kRip:
      return digest(stage_hash(cfg, Stage::kTeacher) + stage_hash(cfg, Stage::kGenerator) +
                    own(stage, {"student", "evolution", "distill"}));
    case Stage::kKnockoff:
      return digest(stage_hash(cfg, Stage::kTeacher) + own(stage, {"student", "distill"}));
    case Stage::kGenRandom:
      return digest(stage_hash(cfg, Stage::kTeacher) + stage_hash(cfg, Stage::kGenerator) +
                    own(stage, {"student", "distill"}));
    case Stage::kEvaluate:
    case Stage::kReport:
      return digest(stage_hash(cfg, Stage::kRip) + stage_hash(cfg, Stage::kKnockoff) +
                    stage_hash(cfg, Stage::kGenRandom));
  }
  return {};
}

namespace artifacts {
std::string student(DistillMode mode) { return "student_" + std::string(to_string(mode)) + ".ckpt"; }
std::string training_csv(DistillMode mode) { return std::string(to_string(mode)) + "_training.csv"; }
std::string summary_json(DistillMode mode) { return std::string(to_string(mode)) + "_summary.json"; }
}  // namespace artifacts

// ---------------------------------------------------------------------------
// Report

std::optional<double> ExperimentReport::delta_vs_knockoff() const {
  if (!ripper || !knockoff) return std::nullopt;
  return ripper->accuracy - knockoff->accuracy;
}

std::optional<double> ExperimentReport::delta_vs_gen_random() const {
  if (!ripper || !gen_random) return std::nullopt;
  return ripper->accuracy - gen_random->accuracy;
}

namespace {

nlohmann::json mode_json(const std::optional<ModeResult>& r) {
  if (!r) return nullptr;
  return {{"accuracy", r->accuracy}, {"agreement", r->agreement}, {"oracle_samples", r->oracle_samples}};
}

std::optional<ModeResult> mode_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return ModeResult{j.at("accuracy").get<double>(), j.at("agreement").get<double>(),
                    j.at("oracle_samples").get<std::uint64_t>()};
}

}  // namespace

std::string ExperimentReport::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["teacher_accuracy"] = teacher_accuracy;
  j["modes"]["ripper"] = mode_json(ripper);
  j["modes"]["knockoff"] = mode_json(knockoff);
  j["modes"]["gen-random"] = mode_json(gen_random);
  const auto dk = delta_vs_knockoff();
  const auto dg = delta_vs_gen_random();
  j["deltas"]["ripper_minus_knockoff"] = dk ? nlohmann::json(*dk) : nlohmann::json(nullptr);
  j["deltas"]["ripper_minus_gen_random"] = dg ? nlohmann::json(*dg) : nlohmann::json(nullptr);
  return j.dump(2) + "\n";
}

ExperimentReport ExperimentReport::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ExperimentReport r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.teacher_accuracy = j.at("teacher_accuracy").get<double>();
    r.ripper = mode_from_json(j.at("modes").at("ripper"));
    r.knockoff = mode_from_json(j.at("modes").at("knockoff"));
    r.gen_random = mode_from_json(j.at("modes").at("gen-random"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

ExperimentReport load_report(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw StageOrderError("missing " + path.string() + "; run the evaluate stage first");
  }
  return ExperimentReport::from_json(read_file(path));
}

std::string compare_report(const ExperimentReport& report) {
  struct Row {
    std::string name;
    const std::optional<ModeResult>* result;
  };
  const Row rows[] = {{"Knockoff", &report.knockoff}, {"Gen-random", &report.gen_random}, {"Ripper", &report.ripper}};

  const Row* best = nullptr;
  for (const auto& r : rows) {
    if (*r.result && (!best || (*r.result)->accuracy > (**best->result).accuracy)) best = &r;
  }
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * v);
    return std::string(buf);
  };

  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-13s %12s %13s %15s %16s\n", "Method", "Accuracy (%)", "Agreement (%)",
                "Oracle samples", "Ripper - row (pt)");
  out += line;
  out += std::string(73, '-') + "\n";
  std::snprintf(line, sizeof(line), "%-13s %12s %13s %15s %16s\n", "Teacher", pct(report.teacher_accuracy).c_str(),
                "-", "-", "-");
  out += line;
  for (const auto& r : rows) {
    const std::string name = r.name + (&r == best ? " *" : "");
    if (!*r.result) {
      std::snprintf(line, sizeof(line), "%-13s %12s %13s %15s %16s\n", name.c_str(), "-", "-", "-", "-");
    } else {
      const ModeResult& m = **r.result;
      std::string delta = "-";
      if (report.ripper && r.result != &report.ripper) delta = pct(report.ripper->accuracy - m.accuracy);
      std::snprintf(line, sizeof(line), "%-13s %12s %13s %15llu %16s\n", name.c_str(), pct(m.accuracy).c_str(),
                    pct(m.agreement).c_str(), static_cast<unsigned long long>(m.oracle_samples), delta.c_str());
    }
    out += line;
  }
  out += "* best non-teacher result\n";
  return out;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

std::filesystem::path need(const StageOptions& opts, std::string_view name, std::string_view producer) {
  const auto path = opts.out_dir / name;
  if (!std::filesystem::exists(path)) {
    throw StageOrderError("missing artifact " + path.string() + "; run the '" + std::string(producer) +
                          "' stage first");
  }
  return path;
}

void check_hash(const Checkpoint& ckpt, const std::string& expected, const std::filesystem::path& path,
                std::string_view producer) {
  if (!ckpt.has_field("config_hash") || ckpt.field("config_hash") != expected) {
    throw StageOrderError(path.string() + " was produced by a different configuration; rerun the '" +
                          std::string(producer) + "' stage");
  }
}

LabeledDataset load_checked(const ExperimentConfig& cfg, const StageOptions& opts, std::string_view name,
                            DatasetRole role) {
  const auto path = need(opts, name, "data");
  check_hash(read_checkpoint(path), stage_hash(cfg, Stage::kData), path, "data");
  return load_dataset(path, role);
}

Classifier load_teacher(const ExperimentConfig& cfg, const StageOptions& opts) {
  const auto path = need(opts, artifacts::kTeacher, "teacher");
  check_hash(read_checkpoint(path), stage_hash(cfg, Stage::kTeacher), path, "teacher");
  return load_classifier(path);
}

Vae load_generator(const ExperimentConfig& cfg, const StageOptions& opts) {
  const auto path = need(opts, artifacts::kGenerator, "generator");
  check_hash(read_checkpoint(path), stage_hash(cfg, Stage::kGenerator), path, "generator");
  return load_vae(path);
}

void log(const StageOptions& opts, const std::string& msg) {
  if (opts.verbose) std::cerr << "[bbr] " << msg << "\n";
}

DatasetSpec base_spec(const DataSettings& d) {
  DatasetSpec spec;
  spec.family = d.family;
  spec.side = d.side;
  spec.dimension = d.dimension;
  spec.noise_std = d.noise_std;
  return spec;
}

void stage_data(const ExperimentConfig& cfg, const StageOptions& opts) {
  const std::uint64_t seed = stage_seed(cfg, Stage::kData);
  const std::string hash = stage_hash(cfg, Stage::kData);
  const bool shapes = cfg.data.family == DatasetFamily::kShapes;

  DatasetSpec truth = base_spec(cfg.data);
  truth.classes = shapes ? std::vector<std::string>(true_shape_catalog().begin(),
                                                    true_shape_catalog().begin() + cfg.data.true_classes)
                         : mixture_catalog(false, cfg.data.true_classes);
  truth.samples_per_class = cfg.data.true_samples_per_class;
  truth.seed = derive_seed(seed, "true");

  DatasetSpec proxy = base_spec(cfg.data);
  proxy.classes = shapes ? std::vector<std::string>(proxy_shape_catalog().begin(),
                                                    proxy_shape_catalog().begin() + cfg.data.proxy_classes)
                         : mixture_catalog(true, cfg.data.proxy_classes);
  proxy.samples_per_class = cfg.data.proxy_samples_per_class;
  proxy.seed = derive_seed(seed, "proxy");

  const auto [train, test] = split(generate(truth), cfg.data.test_fraction, derive_seed(seed, "split"));
  const LabeledDataset z = generate(proxy);
  save_dataset(train, opts.out_dir / artifacts::kTrueTrain, hash);
  save_dataset(test, opts.out_dir / artifacts::kTrueTest, hash);
  save_dataset(z, opts.out_dir / artifacts::kProxy, hash);
  if (shapes) {
    const auto dir = opts.out_dir / "samples";
    std::filesystem::create_directories(dir);
    for (const auto* ds : {&train, &z}) {
      for (std::size_t c = 0; c < ds->num_classes(); ++c) {
        for (std::size_t i = 0; i < ds->size(); ++i) {
          if (ds->labels[i] != c) continue;
          write_pgm(ds->images.row(i), cfg.data.side, dir / (ds->class_names[c] + ".pgm"), 8);
          break;
        }
      }
    }
  }
  log(opts, "data: " + std::to_string(train.size()) + " train / " + std::to_string(test.size()) + " test / " +
                std::to_string(z.size()) + " proxy samples");
}

void stage_teacher(const ExperimentConfig& cfg, const StageOptions& opts) {
  const LabeledDataset train = load_checked(cfg, opts, artifacts::kTrueTrain, DatasetRole::kTrueTrain);
  Rng rng(stage_seed(cfg, Stage::kTeacher));
  std::vector<std::size_t> widths{train.dim()};
  widths.insert(widths.end(), cfg.teacher.hidden.begin(), cfg.teacher.hidden.end());
  widths.push_back(train.num_classes());
  Classifier teacher(widths, rng);
  Adam optimizer(std::as_const(teacher.net()).parameters(), cfg.teacher.adam);

  std::ofstream csv(opts.out_dir / "teacher_training.csv");
  csv.precision(17);
  csv << "epoch,loss,train_accuracy\n";
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.teacher.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.teacher.batch_size, ++steps) {
      const std::size_t end = std::min(order.size(), start + cfg.teacher.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      Tensor targets = Tensor::matrix(rows.size(), train.num_classes());
      for (std::size_t i = 0; i < rows.size(); ++i) targets(i, train.labels[rows[i]]) = 1.0;
      loss += train_step(teacher, optimizer, train.images.gather_rows(rows), targets);
    }
    csv << epoch << ',' << loss / static_cast<double>(steps) << ',' << accuracy(teacher, train) << '\n';
  }
  save_classifier(teacher, opts.out_dir / artifacts::kTeacher, {{"config_hash", stage_hash(cfg, Stage::kTeacher)}});
  log(opts, "teacher: train accuracy " + std::to_string(accuracy(teacher, train)));
}

void stage_generator(const ExperimentConfig& cfg, const StageOptions& opts) {
  const LabeledDataset proxy = load_checked(cfg, opts, artifacts::kProxy, DatasetRole::kProxy);
  VaeConfig vc;
  vc.hidden = cfg.generator.hidden;
  vc.latent_dim = cfg.generator.latent_dim;
  vc.epochs = cfg.generator.epochs;
  vc.batch_size = cfg.generator.batch_size;
  vc.adam = cfg.generator.adam;
  vc.seed = stage_seed(cfg, Stage::kGenerator);
  std::vector<double> losses;
  const Vae vae = vae_train(proxy, vc, &losses);
  save_vae(vae, opts.out_dir / artifacts::kGenerator, {{"config_hash", stage_hash(cfg, Stage::kGenerator)}});
  std::ofstream csv(opts.out_dir / "generator_training.csv");
  csv.precision(17);
  csv << "epoch,negative_elbo\n";
  for (std::size_t i = 0; i < losses.size(); ++i) csv << i + 1 << ',' << losses[i] << '\n';
  log(opts, "generator: negative ELBO " + std::to_string(losses.front()) + " -> " + std::to_string(losses.back()));
}

Classifier make_student(const ExperimentConfig& cfg, std::size_t input_dim, std::size_t classes) {
  Rng rng(derive_seed(cfg.distill.seed.value_or(cfg.seed), "student-init"));
  std::vector<std::size_t> widths{input_dim};
  widths.insert(widths.end(), cfg.student.hidden.begin(), cfg.student.hidden.end());
  widths.push_back(classes);
  return Classifier(widths, rng);
}

void stage_distill(const ExperimentConfig& cfg, const StageOptions& opts, DistillMode mode) {
  const Stage stage = mode == DistillMode::kRipper    ? Stage::kRip
                      : mode == DistillMode::kKnockoff ? Stage::kKnockoff
                                                       : Stage::kGenRandom;
  const auto started = std::chrono::steady_clock::now();
  const BlackBoxOracle oracle(load_teacher(cfg, opts));
  const LabeledDataset train = load_checked(cfg, opts, artifacts::kTrueTrain, DatasetRole::kTrueTrain);
  const LabeledDataset test = load_checked(cfg, opts, artifacts::kTrueTest, DatasetRole::kTrueTest);

  DistillConfig dc;
  dc.mode = mode;
  dc.epochs = cfg.distill.epochs;
  dc.batch_size = cfg.distill.batch_size;
  dc.steps_per_epoch = steps_per_epoch_for(train.size(), cfg.distill.batch_size);
  dc.adam = cfg.distill.adam;
  dc.sample_bank = cfg.distill.sample_bank;
  dc.bank_batches = cfg.distill.bank_batches;
  dc.seed = stage_seed(cfg, stage);

  Classifier student = make_student(cfg, oracle.input_dim(), oracle.num_classes());
  const Evaluation eval = make_evaluation(oracle, test);
  TrainingReport report;
  if (mode == DistillMode::kRipper) {
    const Vae gen = load_generator(cfg, opts);
    EvolutionTrace trace(cfg.evolution.trace_samples, cfg.evolution.specimen_samples);
    report = distill_ripper(student, oracle, gen, cfg.evolution.search, dc, eval, &trace);
    trace.write_csv(opts.out_dir / "evolution_trace.csv");
    if (cfg.data.family == DatasetFamily::kShapes) trace.write_specimens(opts.out_dir / "specimens", cfg.data.side);
  } else if (mode == DistillMode::kKnockoff) {
    const LabeledDataset proxy = load_checked(cfg, opts, artifacts::kProxy, DatasetRole::kProxy);
    report = distill_knockoff(student, oracle, proxy, dc, eval);
  } else {
    const Vae gen = load_generator(cfg, opts);
    report = distill_gen_random(student, oracle, gen, dc, eval);
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  const std::string hash = stage_hash(cfg, stage);
  save_classifier(student, opts.out_dir / artifacts::student(mode),
                  {{"config_hash", hash}, {"oracle_samples", std::to_string(report.oracle_samples())}});
  write_report_csv(report, opts.out_dir / artifacts::training_csv(mode));

  nlohmann::ordered_json summary;
  summary["mode"] = std::string(to_string(mode));
  summary["seed"] = dc.seed;
  summary["config_hash"] = hash;
  const EpochRecord& last = report.final();
  summary["final"] = {{"epoch", last.epoch},
                      {"loss", last.loss},
                      {"accuracy", last.accuracy},
                      {"agreement", last.agreement},
                      {"oracle_samples", last.oracle_samples}};
  summary["config"] = serialize_config(cfg);
  // Wall time would make deterministic reruns differ byte for byte.
  summary["wall_time_seconds"] = opts.deterministic ? nlohmann::json(nullptr) : nlohmann::json(seconds);
  write_file(opts.out_dir / artifacts::summary_json(mode), summary.dump(2) + "\n");
  log(opts, std::string(to_string(mode)) + ": accuracy " + std::to_string(last.accuracy) + ", agreement " +
                std::to_string(last.agreement) + ", oracle samples " + std::to_string(last.oracle_samples));
}

void stage_evaluate(const ExperimentConfig& cfg, const StageOptions& opts) {
  const Classifier teacher = load_teacher(cfg, opts);
  const LabeledDataset test = load_checked(cfg, opts, artifacts::kTrueTest, DatasetRole::kTrueTest);
  const BlackBoxOracle oracle(teacher);
  const auto teacher_labels = argmax_rows(oracle.query(test.images));

  ExperimentReport report;
  report.seed = cfg.seed;
  report.config_hash = stage_hash(cfg, Stage::kEvaluate);
  report.teacher_accuracy = accuracy(teacher, test);

  auto score = [&](DistillMode mode, Stage stage) -> std::optional<ModeResult> {
    const auto path = opts.out_dir / artifacts::student(mode);
    if (!std::filesystem::exists(path)) {
      if (mode == DistillMode::kRipper) need(opts, artifacts::student(mode), "rip");
      return std::nullopt;
    }
    const Checkpoint ckpt = read_checkpoint(path);
    check_hash(ckpt, stage_hash(cfg, stage), path, to_string(stage));
    const Classifier student = load_classifier(path);
    ModeResult r;
    r.accuracy = accuracy(student, test);
    r.agreement = agreement(student, teacher_labels, test);
    r.oracle_samples = std::stoull(ckpt.field("oracle_samples"));
    return r;
  };
  report.ripper = score(DistillMode::kRipper, Stage::kRip);
  report.knockoff = score(DistillMode::kKnockoff, Stage::kKnockoff);
  report.gen_random = score(DistillMode::kGenRandom, Stage::kGenRandom);
  write_file(opts.out_dir / artifacts::kReport, report.to_json());
  log(opts, "evaluate: teacher accuracy " + std::to_string(report.teacher_accuracy));
}

void stage_report(const StageOptions& opts) {
  const ExperimentReport report = load_report(opts.out_dir / artifacts::kReport);
  const std::string table = compare_report(report);
  write_file(opts.out_dir / artifacts::kReportTable, table);
  std::cout << table;
}

}  // namespace

void run_stage(Stage stage, const ExperimentConfig& cfg, const StageOptions& opts) {
  cfg.validate();
  if (opts.out_dir.empty()) throw ConfigError("no output directory");
  std::filesystem::create_directories(opts.out_dir);
  switch (stage) {
    case Stage::kData: stage_data(cfg, opts); break;
    case Stage::kTeacher: stage_teacher(cfg, opts); break;
    case Stage::kGenerator: stage_generator(cfg, opts); break;
    case Stage::kRip: stage_distill(cfg, opts, DistillMode::kRipper); break;
    case Stage::kKnockoff: stage_distill(cfg, opts, DistillMode::kKnockoff); break;
    case Stage::kGenRandom: stage_distill(cfg, opts, DistillMode::kGenRandom); break;
    case Stage::kEvaluate: stage_evaluate(cfg, opts); break;
    case Stage::kReport: stage_report(opts); break;
  }
}

ExperimentReport run_pipeline(const ExperimentConfig& cfg, const StageOptions& opts) {
  for (Stage s : {Stage::kData, Stage::kTeacher, Stage::kGenerator, Stage::kRip, Stage::kKnockoff, Stage::kGenRandom,
                  Stage::kEvaluate}) {
    run_stage(s, cfg, opts);
  }
  return load_report(opts.out_dir / artifacts::kReport);
}

}  // namespace bbr
