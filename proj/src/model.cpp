#include "gdod/model.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "gdod/errors.hpp"

namespace gdod {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double binary_cross_entropy(double label, double probability) {
  const double p = std::clamp(probability, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

ModelShape ModelShape::desk(std::size_t inputs, std::size_t tasks) {
  return {inputs, {32, 16}, {8, 1}, tasks};
}

ModelShape ModelShape::paper(std::size_t inputs, std::size_t tasks) {
  return {inputs, {256, 32}, {16, 1}, tasks};
}

std::string profile_name(ModelProfile profile) {
  return profile == ModelProfile::kDesk ? "desk" : "paper";
}

ModelProfile parse_profile(std::string_view name) {
  if (name == "desk") return ModelProfile::kDesk;
  if (name == "paper") return ModelProfile::kPaper;
  throw InvalidInput("unknown model profile '" + std::string(name) + "'");
}

ModelShape make_shape(ModelProfile profile, std::size_t inputs, std::size_t tasks) {
  return profile == ModelProfile::kDesk ? ModelShape::desk(inputs, tasks)
                                        : ModelShape::paper(inputs, tasks);
}

namespace {

void validate_shape(const ModelShape& shape) {
  if (shape.inputs == 0) throw InvalidInput("ModelShape: zero input width");
  if (shape.tasks == 0) throw InvalidInput("ModelShape: zero tasks");
  if (shape.shared_widths.empty()) throw InvalidInput("ModelShape: no shared layers");
  if (shape.head_widths.empty() || shape.head_widths.back() != 1)
    throw InvalidInput("ModelShape: head must end in a width-1 layer");
  for (auto w : shape.shared_widths)
    if (w == 0) throw InvalidInput("ModelShape: zero layer width");
  for (auto w : shape.head_widths)
    if (w == 0) throw InvalidInput("ModelShape: zero layer width");
}

DenseLayer make_layer(std::size_t inputs, std::size_t outputs) {
  return {inputs, outputs, Vector(inputs * outputs, 0.0), Vector(outputs, 0.0)};
}

void glorot_fill(DenseLayer& layer, Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(layer.inputs + layer.outputs));
  for (double& w : layer.weights) w = (2.0 * rng.uniform() - 1.0) * limit;
}

std::vector<DenseLayer> make_stack(std::size_t inputs, const std::vector<std::size_t>& widths) {
  std::vector<DenseLayer> layers;
  for (std::size_t w : widths) {
    layers.push_back(make_layer(inputs, w));
    inputs = w;
  }
  return layers;
}

std::size_t count(const std::vector<DenseLayer>& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

Vector flatten(const std::vector<DenseLayer>& layers) {
  Vector out;
  out.reserve(count(layers));
  for (const auto& l : layers) {
    out.insert(out.end(), l.weights.begin(), l.weights.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

void unflatten(std::vector<DenseLayer>& layers, std::span<const double> theta) {
  if (theta.size() != count(layers)) throw InvalidInput("parameter vector length mismatch");
  std::size_t offset = 0;
  for (auto& l : layers) {
    std::copy_n(theta.begin() + offset, l.weights.size(), l.weights.begin());
    offset += l.weights.size();
    std::copy_n(theta.begin() + offset, l.bias.size(), l.bias.begin());
    offset += l.bias.size();
  }
}

// z = W a + b
void affine(const DenseLayer& layer, std::span<const double> input, Vector& out) {
  out.assign(layer.bias.begin(), layer.bias.end());
  for (std::size_t o = 0; o < layer.outputs; ++o)
    out[o] += dot(std::span<const double>(layer.weights.data() + o * layer.inputs, layer.inputs),
                  input);
}

void relu_inplace(Vector& v) {
  for (double& x : v) x = std::max(x, 0.0);
}

// Activations of one example through a stack: acts[0] = input, acts[l+1] is
// the output of layer l (ReLU except where linear_last marks the final layer).
void run_stack(const std::vector<DenseLayer>& layers, std::span<const double> input,
               bool linear_last, std::vector<Vector>& acts) {
  acts.resize(layers.size() + 1);
  acts[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    affine(layers[l], acts[l], acts[l + 1]);
    if (!(linear_last && l + 1 == layers.size())) relu_inplace(acts[l + 1]);
  }
}

// Backpropagate delta (gradient w.r.t. the pre-activation of the top layer)
// through a stack, adding scale * dLoss/dtheta into grad (flattened layout) and
// returning the gradient w.r.t. the stack input. Activations come from
// run_stack; ReLU derivative is taken as [output > 0].
Vector backprop_stack(const std::vector<DenseLayer>& layers, const std::vector<Vector>& acts,
                      Vector delta, double scale, std::span<double> grad) {
  std::vector<std::size_t> offsets(layers.size());
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    offsets[l] = offset;
    offset += layers[l].parameter_count();
  }
  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayer& layer = layers[l];
    const auto& input = acts[l];
    double* w_grad = grad.data() + offsets[l];
    double* b_grad = w_grad + layer.weights.size();
    Vector below(layer.inputs, 0.0);
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double sd = scale * d;
      double* w_row = w_grad + o * layer.inputs;
      const double* w = layer.weights.data() + o * layer.inputs;
      for (std::size_t i = 0; i < layer.inputs; ++i) {
        w_row[i] += sd * input[i];
        below[i] += d * w[i];
      }
      b_grad[o] += sd;
    }
    if (l > 0) {
      // acts[l] is the ReLU output of layer l-1.
      for (std::size_t i = 0; i < layer.inputs; ++i)
        if (!(acts[l][i] > 0.0)) below[i] = 0.0;
    }
    delta = std::move(below);
  }
  return delta;
}

}  // namespace

SharedBottomModel::SharedBottomModel(ModelShape shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  shared_ = make_stack(shape_.inputs, shape_.shared_widths);
  for (std::size_t i = 0; i < shape_.tasks; ++i)
    heads_.push_back(make_stack(shape_.shared_widths.back(), shape_.head_widths));
}

SharedBottomModel::SharedBottomModel(ModelShape shape, Rng& init_rng)
    : SharedBottomModel(std::move(shape)) {
  for (auto& l : shared_) glorot_fill(l, init_rng);
  for (auto& head : heads_)
    for (auto& l : head) glorot_fill(l, init_rng);
}

std::size_t SharedBottomModel::shared_parameter_count() const { return count(shared_); }

std::size_t SharedBottomModel::head_parameter_count(std::size_t task) const {
  return count(heads_.at(task));
}

Vector SharedBottomModel::shared_parameters() const { return flatten(shared_); }

void SharedBottomModel::set_shared_parameters(std::span<const double> theta) {
  unflatten(shared_, theta);
}

Vector SharedBottomModel::head_parameters(std::size_t task) const {
  return flatten(heads_.at(task));
}

void SharedBottomModel::set_head_parameters(std::size_t task, std::span<const double> theta) {
  unflatten(heads_.at(task), theta);
}

void SharedBottomModel::check_inputs(const Matrix& x) const {
  if (x.cols() != shape_.inputs)
    throw InvalidInput("model: input width " + std::to_string(x.cols()) + " != " +
                       std::to_string(shape_.inputs));
  if (!x.all_finite()) throw InvalidInput("model: non-finite features");
}

std::vector<Vector> SharedBottomModel::forward(const Matrix& x) const {
  check_inputs(x);
  std::vector<Vector> out(tasks(), Vector(x.rows()));
  std::vector<Vector> trunk;
  std::vector<Vector> head;
  for (std::size_t j = 0; j < x.rows(); ++j) {
    run_stack(shared_, x.row(j), false, trunk);
    for (std::size_t i = 0; i < tasks(); ++i) {
      run_stack(heads_[i], trunk.back(), true, head);
      out[i][j] = sigmoid(head.back()[0]);
    }
  }
  return out;
}

BackwardPass SharedBottomModel::backward(const Matrix& x, const Matrix& y) const {
  check_inputs(x);
  if (y.rows() != x.rows() || y.cols() != tasks())
    throw InvalidInput("model: label matrix shape mismatch");
  for (double v : y.data())
    if (v != 0.0 && v != 1.0) throw InvalidInput("model: labels must be 0 or 1");

  const std::size_t m = x.rows();
  const std::size_t d = shared_parameter_count();
  BackwardPass out;
  out.task_losses.assign(tasks(), 0.0);
  for (std::size_t i = 0; i < tasks(); ++i) {
    out.shared_per_example.emplace_back(m, d);
    out.head_gradients.emplace_back(head_parameter_count(i), 0.0);
  }
  if (m == 0) return out;
  const double inv_m = 1.0 / static_cast<double>(m);

  std::vector<Vector> trunk;
  std::vector<Vector> head;
  for (std::size_t j = 0; j < m; ++j) {
    run_stack(shared_, x.row(j), false, trunk);
    for (std::size_t i = 0; i < tasks(); ++i) {
      run_stack(heads_[i], trunk.back(), true, head);
      const double p = sigmoid(head.back()[0]);
      const double label = y(j, i);
      out.task_losses[i] += inv_m * binary_cross_entropy(label, p);
      Vector top_delta = backprop_stack(heads_[i], head, Vector{p - label}, inv_m,
                                        out.head_gradients[i]);
      // Head input is the ReLU output of the last shared layer.
      const auto& trunk_out = trunk.back();
      for (std::size_t k = 0; k < top_delta.size(); ++k)
        if (!(trunk_out[k] > 0.0)) top_delta[k] = 0.0;
      backprop_stack(shared_, trunk, std::move(top_delta), 1.0,
                     out.shared_per_example[i].row(j));
    }
  }
  return out;
}

std::string optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw InvalidInput("unknown optimizer '" + std::string(name) + "'");
}

OptimizerState OptimizerState::make(OptimizerKind kind, double learning_rate, std::size_t dim) {
  OptimizerState s;
  s.kind = kind;
  s.learning_rate = learning_rate;
  if (kind == OptimizerKind::kAdam) {
    s.first_moment.assign(dim, 0.0);
    s.second_moment.assign(dim, 0.0);
  }
  return s;
}

void apply_update(OptimizerState& state, std::span<double> theta, std::span<const double> update) {
  if (theta.size() != update.size()) throw InvalidInput("apply_update: dimension mismatch");
  if (state.kind == OptimizerKind::kSgd) {
    axpy(-state.learning_rate, update, theta);
    ++state.step;
    return;
  }
  if (state.first_moment.size() != theta.size() || state.second_moment.size() != theta.size())
    throw InvalidInput("apply_update: Adam moments do not match parameter dimension");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double g = update[k];
    state.first_moment[k] = state.beta1 * state.first_moment[k] + (1.0 - state.beta1) * g;
    state.second_moment[k] = state.beta2 * state.second_moment[k] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.first_moment[k] / correction1;
    const double v_hat = state.second_moment[k] / correction2;
    theta[k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

UncertaintyTotal uncertainty_weighted_losses(std::span<const double> raw_losses,
                                             std::span<const double> log_variances) {
  if (raw_losses.size() != log_variances.size())
    throw InvalidInput("uncertainty_weighted_losses: length mismatch");
  if (!all_finite(raw_losses) || !all_finite(log_variances))
    throw InvalidInput("uncertainty_weighted_losses: non-finite input");
  UncertaintyTotal out;
  for (std::size_t i = 0; i < raw_losses.size(); ++i) {
    const double w = std::exp(-log_variances[i]);
    out.weights.push_back(w);
    out.total += w * raw_losses[i] + log_variances[i];
    out.log_variance_grad.push_back(1.0 - w * raw_losses[i]);
  }
  return out;
}

LossWeights LossWeights::fixed(Vector weights) {
  for (double w : weights)
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("LossWeights: negative or non-finite weight");
  return {Mode::kFixed, std::move(weights)};
}

LossWeights LossWeights::uncertainty(std::size_t tasks) {
  return {Mode::kUncertainty, Vector(tasks, 0.0)};
}

Vector LossWeights::effective() const {
  if (mode == Mode::kFixed) return values;
  Vector out;
  for (double s : values) out.push_back(std::exp(-s));
  return out;
}

GradientBundle per_example_shared_gradients(const SharedBottomModel& model, const Matrix& x,
                                            const Matrix& y, const LossWeights& loss_weights) {
  if (loss_weights.values.size() != model.tasks())
    throw InvalidInput("per_example_shared_gradients: loss weight count != K");
  BackwardPass pass = model.backward(x, y);
  return {std::move(pass.shared_per_example), loss_weights.effective()};
}

namespace {

void step_heads(SharedBottomModel& model, const BackwardPass& pass,
                std::span<OptimizerState> head_states, std::span<const double> weights) {
  if (head_states.size() != model.tasks()) throw InvalidInput("head_step: one optimizer per head");
  for (std::size_t i = 0; i < model.tasks(); ++i) {
    Vector theta = model.head_parameters(i);
    Vector grad = pass.head_gradients[i];
    for (double& g : grad) g *= weights[i];
    apply_update(head_states[i], theta, grad);
    model.set_head_parameters(i, theta);
  }
}

}  // namespace

void head_step(SharedBottomModel& model, const Matrix& x, const Matrix& y,
               std::span<OptimizerState> head_states, const LossWeights& loss_weights) {
  const BackwardPass pass = model.backward(x, y);
  step_heads(model, pass, head_states, loss_weights.effective());
}

TrainingState TrainingState::make(SharedBottomModel model, OptimizerKind kind,
                                  double learning_rate, LossWeights loss_weights) {
  if (loss_weights.values.size() != model.tasks())
    throw InvalidInput("TrainingState: loss weight count != K");
  std::vector<OptimizerState> heads;
  for (std::size_t i = 0; i < model.tasks(); ++i)
    heads.push_back(OptimizerState::make(kind, learning_rate, model.head_parameter_count(i)));
  const std::size_t d = model.shared_parameter_count();
  const std::size_t k = model.tasks();
  return {std::move(model), OptimizerState::make(kind, learning_rate, d), std::move(heads),
          std::move(loss_weights), OptimizerState::make(kind, learning_rate, k)};
}

StepDiagnostics train_step(TrainingState& state, const Matrix& x, const Matrix& y,
                           const CombinerConfig& combiner, Rng& rng) {
  BackwardPass pass = state.model.backward(x, y);
  const Vector weights = state.loss_weights.effective();

  StepDiagnostics diag;
  diag.task_losses = pass.task_losses;

  GradientBundle bundle{std::move(pass.shared_per_example), weights};
  const CombineOutcome outcome = combine(bundle, combiner, rng);
  diag.shared_mass_fraction = outcome.shared_mass_fraction;
  diag.subspace_rank = outcome.subspace_rank;
  diag.empty_mask = outcome.empty_mask;
  diag.update_norm = norm(outcome.update);

  Vector theta = state.model.shared_parameters();
  apply_update(state.shared_optimizer, theta, outcome.update);
  state.model.set_shared_parameters(theta);

  step_heads(state.model, pass, state.head_optimizers, weights);

  if (state.loss_weights.mode == LossWeights::Mode::kUncertainty) {
    const UncertaintyTotal u = uncertainty_weighted_losses(pass.task_losses, state.loss_weights.values);
    apply_update(state.weight_optimizer, state.loss_weights.values, u.log_variance_grad);
  }
  return diag;
}

}  // namespace gdod
