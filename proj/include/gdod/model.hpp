#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gdod/combiners.hpp"
#include "gdod/numerics.hpp"
#include "gdod/rng.hpp"

namespace gdod {

// Probabilities are clamped this far from 0 and 1 inside every log.
inline constexpr double kProbabilityClamp = 1e-12;

double sigmoid(double x);
// Binary cross-entropy of one prediction, probability clamped.
double binary_cross_entropy(double label, double probability);

struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  Vector weights;  // outputs x inputs, row-major
  Vector bias;     // outputs

  std::size_t parameter_count() const { return weights.size() + bias.size(); }
};

/// Layer widths of a shared-bottom network. Every shared layer and every hidden
/// head layer uses ReLU; the last head layer has width 1 and feeds a sigmoid.
struct ModelShape {
  std::size_t inputs = 0;
  std::vector<std::size_t> shared_widths;
  std::vector<std::size_t> head_widths;  // last entry must be 1
  std::size_t tasks = 0;

  static ModelShape desk(std::size_t inputs, std::size_t tasks);   // 32,16 | 8,1
  static ModelShape paper(std::size_t inputs, std::size_t tasks);  // 256,32 | 16,1
};

enum class ModelProfile { kDesk, kPaper };
std::string profile_name(ModelProfile profile);
ModelProfile parse_profile(std::string_view name);
ModelShape make_shape(ModelProfile profile, std::size_t inputs, std::size_t tasks);

struct BackwardPass {
  std::vector<Matrix> shared_per_example;  // K matrices m x D
  std::vector<Vector> head_gradients;      // K batch-mean head gradients
  Vector task_losses;                      // K batch-mean losses
};

class SharedBottomModel {
 public:
  // Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  SharedBottomModel(ModelShape shape, Rng& init_rng);
  // All parameters zero.
  explicit SharedBottomModel(ModelShape shape);

  const ModelShape& shape() const { return shape_; }
  std::size_t tasks() const { return shape_.tasks; }
  std::size_t shared_parameter_count() const;
  std::size_t head_parameter_count(std::size_t task) const;

  // Flattened parameter order: layer by layer, weights row-major then bias.
  Vector shared_parameters() const;
  void set_shared_parameters(std::span<const double> theta);
  Vector head_parameters(std::size_t task) const;
  void set_head_parameters(std::size_t task, std::span<const double> theta);

  // K probability vectors of length m.
  std::vector<Vector> forward(const Matrix& x) const;

  // Exact per-example gradients of each task's BCE w.r.t. the shared
  // parameters, plus batch-mean head gradients and losses.
  BackwardPass backward(const Matrix& x, const Matrix& y) const;

 private:
  void check_inputs(const Matrix& x) const;

  ModelShape shape_;
  std::vector<DenseLayer> shared_;
  std::vector<std::vector<DenseLayer>> heads_;
};

enum class OptimizerKind { kSgd, kAdam };
std::string optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Vector first_moment;
  Vector second_moment;
  std::uint64_t step = 0;

  static OptimizerState make(OptimizerKind kind, double learning_rate, std::size_t dim);
};

// SGD: theta -= lr * u. Adam: bias-corrected moments with u as the gradient.
void apply_update(OptimizerState& state, std::span<double> theta, std::span<const double> update);

struct UncertaintyTotal {
  double total = 0.0;
  Vector weights;           // exp(-s_i)
  Vector log_variance_grad;  // d total / d s_i = 1 - exp(-s_i) L_i
};

// total = sum_i exp(-s_i) L_i + s_i
UncertaintyTotal uncertainty_weighted_losses(std::span<const double> raw_losses,
                                             std::span<const double> log_variances);

struct LossWeights {
  enum class Mode { kFixed, kUncertainty };
  Mode mode = Mode::kFixed;
  // Fixed task weights, or the learnable log-variances s_i.
  Vector values;

  static LossWeights fixed(Vector weights);
  static LossWeights uncertainty(std::size_t tasks);
  Vector effective() const;
};

GradientBundle per_example_shared_gradients(const SharedBottomModel& model, const Matrix& x,
                                            const Matrix& y, const LossWeights& loss_weights);

// One descent step on each head with its own task's batch-mean gradient,
// scaled by the task's effective weight. Shared parameters are untouched.
void head_step(SharedBottomModel& model, const Matrix& x, const Matrix& y,
               std::span<OptimizerState> head_states, const LossWeights& loss_weights);

struct TrainingState {
  SharedBottomModel model;
  OptimizerState shared_optimizer;
  std::vector<OptimizerState> head_optimizers;
  LossWeights loss_weights;
  OptimizerState weight_optimizer;  // for uncertainty log-variances

  static TrainingState make(SharedBottomModel model, OptimizerKind kind, double learning_rate,
                            LossWeights loss_weights);
};

struct StepDiagnostics {
  Vector task_losses;
  std::optional<double> shared_mass_fraction;
  std::size_t subspace_rank = 0;
  double update_norm = 0.0;
  bool empty_mask = false;
};

// Per-example backprop, combine the shared gradients, step the shared
// optimizer with the combined update, step every head, and (uncertainty mode)
// step the log-variances.
StepDiagnostics train_step(TrainingState& state, const Matrix& x, const Matrix& y,
                           const CombinerConfig& combiner, Rng& rng);

}  // namespace gdod
