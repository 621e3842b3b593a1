#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "gdod/combiners.hpp"
#include "gdod/data.hpp"
#include "gdod/model.hpp"

namespace gdod {

struct CsvSource {
  std::string path;
  std::size_t features = 0;
  std::size_t tasks = 0;
};

/// One experiment: a dataset, a model profile, one combiner, and a list of
/// seeds. Defaults are the desk profile.
struct ExperimentConfig {
  // For synthetic data the run seed replaces SyntheticSpec::seed.
  std::variant<SyntheticSpec, CsvSource> dataset = SyntheticSpec{};
  double test_fraction = 0.2;
  ModelProfile profile = ModelProfile::kDesk;
  CombinerConfig combiner;
  bool uncertainty_weighting = false;
  Vector task_weights;  // empty: all ones
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 10;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "gdod_out";
  bool log_steps = false;
  std::size_t threads = 0;  // 0: one per seed
  std::string label;        // empty: derived from the combiner

  std::size_t task_count() const;
};

// Missing keys take defaults; unknown keys or bad values throw ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
// Echo used inside reports. Excludes output_dir and threads, which do not
// influence results.
nlohmann::json config_to_json(const ExperimentConfig& config);
std::string run_label(const ExperimentConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;  // 0 = before training
  Vector train_loss;      // per task, full training split
  Vector test_auc;
  Vector test_logloss;
  // Means over the epoch's steps; absent for epoch 0 or non-GDOD combiners.
  std::optional<double> shared_mass_fraction;
  std::optional<double> subspace_rank;
  std::optional<double> update_norm;
  std::size_t empty_mask_steps = 0;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  StepDiagnostics diagnostics;
};

struct SeedRun {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string failure;
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;  // only with log_steps
};

struct EpochAggregate {
  std::size_t epoch = 0;
  Vector test_auc_mean, test_auc_std;
  Vector test_logloss_mean, test_logloss_std;
  Vector train_loss_mean;
};

struct ExperimentReport {
  std::string label;
  ExperimentConfig config;
  std::vector<SeedRun> runs;
  std::vector<EpochAggregate> aggregate;  // over successful runs
  double wall_seconds = 0.0;              // not serialized into report.json

  std::size_t successful_runs() const;
  // Final-epoch mean test AUC per task.
  Vector final_auc_mean() const;
};

SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed);
ExperimentReport run_experiment(const ExperimentConfig& config);

nlohmann::json report_to_json(const ExperimentReport& report);
// epoch,task,test_auc_mean,test_auc_std,test_logloss_mean,test_logloss_std,train_loss_mean
std::string curves_csv(const ExperimentReport& report);
std::string steps_csv(const ExperimentReport& report);
// Writes <dir>/<label>/{report.json,curves.csv,timing.json[,steps.csv]} and
// returns the run directory.
std::filesystem::path write_report(const ExperimentReport& report, const std::filesystem::path& dir);

struct ComparisonTable {
  std::string baseline;
  std::size_t tasks = 0;
  std::vector<std::string> methods;
  std::vector<Vector> auc;   // per method, per task
  std::vector<Vector> gain;  // auc - baseline auc

  std::string to_csv() const;
};

// Reports in the JSON form of report_to_json; rows keep input order.
ComparisonTable compare_reports(const std::vector<nlohmann::json>& reports,
                                std::string_view baseline);

/// Two-task convex quadratic L(theta) = sum_i 0.5 (theta - c_i)^T A_i (theta - c_i).
struct QuadraticProblem {
  Matrix a1, a2;
  Vector c1, c2;
  Vector theta0;
  double lipschitz = 0.0;  // lambda_max(A_1 + A_2)

  double loss(std::span<const double> theta) const;
  Matrix task_gradients(std::span<const double> theta) const;  // 2 x dim
};

// Random PSD A_i (or identity with c_1 = -c_2 when isotropic).
QuadraticProblem make_quadratic(std::size_t dim, std::uint64_t seed, bool isotropic = false);

struct DescentTrace {
  double gamma = 0.0;
  double lipschitz = 0.0;
  Vector losses;            // steps + 1 values
  Vector update_sq_norms;   // ||sum_i g_i^sh||^2 per step
  Vector slack;             // bound - L(theta^{t+1}); >= -1e-9 required
  bool descent_holds = true;
  bool monotone = true;
  // min_t ||u_t||^2 <= 2 (L_0 - L_T) / (T gamma)
  bool stationarity_bound_holds = true;

  bool passed() const { return descent_holds && monotone && stationarity_bound_holds; }
};

// Full-batch GDOD (SVD basis) with plain gradient steps. gamma defaults to 1/L;
// gamma > 1/L throws InvalidInput.
DescentTrace descent_check(const QuadraticProblem& problem, std::optional<double> gamma,
                           std::size_t steps, MaskRule rule = MaskRule::kAllAgree);

}  // namespace gdod
