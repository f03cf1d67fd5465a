#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bbr/distill.hpp"
#include "bbr/evolution.hpp"
#include "bbr/nn.hpp"
#include "bbr/synthetic.hpp"

namespace bbr {

struct DataSettings {
  DatasetFamily family = DatasetFamily::kShapes;
  std::size_t true_classes = 4;
  std::size_t proxy_classes = 4;  // fewer than the catalog = restricted proxy
  std::size_t true_samples_per_class = 100;
  std::size_t proxy_samples_per_class = 200;
  std::size_t side = 10;
  std::size_t dimension = 16;
  double noise_std = 0.15;
  double test_fraction = 0.5;
  std::optional<std::uint64_t> seed;

  friend bool operator==(const DataSettings&, const DataSettings&) = default;
};

struct TeacherSettings {
  std::vector<std::size_t> hidden{64, 64};
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  AdamConfig adam;
  std::optional<std::uint64_t> seed;

  friend bool operator==(const TeacherSettings&, const TeacherSettings&) = default;
};

struct StudentSettings {
  std::vector<std::size_t> hidden{32};

  friend bool operator==(const StudentSettings&, const StudentSettings&) = default;
};

struct GeneratorSettings {
  std::size_t latent_dim = 8;
  std::size_t hidden = 64;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  AdamConfig adam;
  std::optional<std::uint64_t> seed;

  friend bool operator==(const GeneratorSettings&, const GeneratorSettings&) = default;
};

struct EvolutionSettings {
  EvolutionConfig search;         // search.seed is unused; runs are seeded per batch element
  std::size_t trace_samples = 8;  // evolved samples logged to evolution_trace.csv
  std::size_t specimen_samples = 2;

  friend bool operator==(const EvolutionSettings&, const EvolutionSettings&) = default;
};

struct DistillSettings {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  AdamConfig adam;
  bool sample_bank = false;
  std::size_t bank_batches = 16;
  std::optional<std::uint64_t> seed;

  friend bool operator==(const DistillSettings&, const DistillSettings&) = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "bbr_run";
  DataSettings data;
  TeacherSettings teacher;
  StudentSettings student;
  GeneratorSettings generator;
  EvolutionSettings evolution;
  DistillSettings distill;

  /// Throws ConfigError citing the offending key's line when it came from a file.
  void validate() const;

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.seed == b.seed && a.output_dir == b.output_dir && a.data == b.data && a.teacher == b.teacher &&
           a.student == b.student && a.generator == b.generator && a.evolution == b.evolution &&
           a.distill == b.distill;
  }

  std::vector<std::pair<std::string, std::size_t>> key_lines;  // filled by the parser; not compared
};

/// Parses the INI-style configuration: [section] headers, `key = value`
/// lines, `#` comments. Omitted keys keep their defaults. Unknown keys,
/// malformed lines and invalid values are ConfigErrors carrying the line.
ExperimentConfig parse_config_text(std::string_view text);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Full configuration in the same format (every key written out).
std::string serialize_config(const ExperimentConfig& cfg);

enum class Stage { kData, kTeacher, kGenerator, kRip, kKnockoff, kGenRandom, kEvaluate, kReport };

std::string_view to_string(Stage stage);

/// Seed for a stage: the section's explicit `seed` when given, otherwise
/// derive_seed(global seed, stage name). Distillation stages derive from the
/// [distill] seed when one is given.
std::uint64_t stage_seed(const ExperimentConfig& cfg, Stage stage);

/// Hash of everything that determines a stage's artifacts, including the
/// hashes of the stages it consumes. 16 hex digits.
std::string stage_hash(const ExperimentConfig& cfg, Stage stage);

/// File names inside the output directory.
namespace artifacts {
inline constexpr std::string_view kTrueTrain = "true_train.bbd";
inline constexpr std::string_view kTrueTest = "true_test.bbd";
inline constexpr std::string_view kProxy = "proxy.bbd";
inline constexpr std::string_view kTeacher = "teacher.ckpt";
inline constexpr std::string_view kGenerator = "generator.ckpt";
inline constexpr std::string_view kReport = "report.json";
inline constexpr std::string_view kReportTable = "report.txt";
std::string student(DistillMode mode);
std::string training_csv(DistillMode mode);
std::string summary_json(DistillMode mode);
}  // namespace artifacts

struct StageOptions {
  std::filesystem::path out_dir;
  bool deterministic = true;
  bool verbose = false;
};

struct ModeResult {
  double accuracy = 0.0;
  double agreement = 0.0;
  std::uint64_t oracle_samples = 0;

  friend bool operator==(const ModeResult&, const ModeResult&) = default;
};

struct ExperimentReport {
  double teacher_accuracy = 0.0;
  std::optional<ModeResult> ripper;
  std::optional<ModeResult> knockoff;
  std::optional<ModeResult> gen_random;
  std::uint64_t seed = 0;
  std::string config_hash;

  /// ripper - baseline accuracy, when both are present.
  std::optional<double> delta_vs_knockoff() const;
  std::optional<double> delta_vs_gen_random() const;

  std::string to_json() const;
  static ExperimentReport from_json(std::string_view text);

  friend bool operator==(const ExperimentReport&, const ExperimentReport&) = default;
};

/// Runs one stage, reading its inputs from and writing its outputs to
/// opts.out_dir. Missing inputs are StageOrderErrors naming the artifact;
/// inputs produced under a different configuration are refused the same way.
void run_stage(Stage stage, const ExperimentConfig& cfg, const StageOptions& opts);

/// data, teacher, generator, rip, knockoff, gen-random, evaluate.
ExperimentReport run_pipeline(const ExperimentConfig& cfg, const StageOptions& opts);

ExperimentReport load_report(const std::filesystem::path& path);

/// Text table of teacher / knockoff / gen-random / ripper accuracies and
/// oracle budgets; the best non-teacher row is marked with '*'.
std::string compare_report(const ExperimentReport& report);

}  // namespace bbr
