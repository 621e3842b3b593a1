#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

#include "gdod/errors.hpp"
#include "gdod/model.hpp"

using namespace gdod;
using gdod::test::gaussian_matrix;
using gdod::test::max_abs_diff;

namespace {

ModelShape small_shape(std::size_t inputs = 3, std::size_t tasks = 2) {
  return {inputs, {4, 2}, {3, 1}, tasks};
}

Matrix random_labels(std::size_t m, std::size_t k, Rng& rng) {
  Matrix y(m, k);
  for (double& v : y.data()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
  return y;
}

// Independent dense backprop over the flattened layout (per layer: W row-major,
// then b). Returns the gradient of sum_i w_i * mean_j BCE_ij w.r.t. the shared
// parameters and, per task, of mean_j BCE_ij w.r.t. that head.
struct ReferenceGrad {
  Vector shared;
  std::vector<Vector> heads;
};

struct RefLayer {
  std::size_t in, out, offset;
};

std::vector<RefLayer> layout(std::size_t inputs, const std::vector<std::size_t>& widths) {
  std::vector<RefLayer> out;
  std::size_t offset = 0;
  for (std::size_t w : widths) {
    out.push_back({inputs, w, offset});
    offset += w * inputs + w;
    inputs = w;
  }
  return out;
}

Vector ref_forward(const std::vector<RefLayer>& layers, const Vector& theta, Vector a,
                   std::vector<Vector>& acts, bool relu_last) {
  acts = {a};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const RefLayer& L = layers[l];
    Vector z(L.out);
    for (std::size_t o = 0; o < L.out; ++o) {
      double s = theta[L.offset + L.out * L.in + o];
      for (std::size_t i = 0; i < L.in; ++i) s += theta[L.offset + o * L.in + i] * a[i];
      z[o] = (l + 1 < layers.size() || relu_last) ? std::max(0.0, s) : s;
    }
    a = z;
    acts.push_back(a);
  }
  return a;
}

// delta is dLoss/d(output of the stack); accumulates scale * grad into g.
Vector ref_backward(const std::vector<RefLayer>& layers, const Vector& theta,
                    const std::vector<Vector>& acts, Vector delta, bool relu_last, double scale,
                    Vector& g) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const RefLayer& L = layers[l];
    if (l + 1 < layers.size() || relu_last)
      for (std::size_t o = 0; o < L.out; ++o)
        if (acts[l + 1][o] <= 0.0) delta[o] = 0.0;
    Vector prev(L.in, 0.0);
    for (std::size_t o = 0; o < L.out; ++o) {
      g[L.offset + L.out * L.in + o] += scale * delta[o];
      for (std::size_t i = 0; i < L.in; ++i) {
        g[L.offset + o * L.in + i] += scale * delta[o] * acts[l][i];
        prev[i] += theta[L.offset + o * L.in + i] * delta[o];
      }
    }
    delta = prev;
  }
  return delta;
}

ReferenceGrad reference_gradients(const SharedBottomModel& model, const Matrix& x, const Matrix& y,
                                  const Vector& weights) {
  const ModelShape& s = model.shape();
  const auto shared_layers = layout(s.inputs, s.shared_widths);
  const auto head_layers = layout(s.shared_widths.back(), s.head_widths);
  const Vector theta = model.shared_parameters();
  ReferenceGrad out{Vector(theta.size(), 0.0), {}};
  for (std::size_t k = 0; k < s.tasks; ++k) out.heads.emplace_back(model.head_parameter_count(k), 0.0);
  const double inv_m = 1.0 / static_cast<double>(x.rows());
  for (std::size_t j = 0; j < x.rows(); ++j) {
    std::vector<Vector> trunk_acts;
    const Vector h = ref_forward(shared_layers, theta, Vector(x.row(j).begin(), x.row(j).end()),
                                 trunk_acts, true);
    Vector dh(h.size(), 0.0);
    for (std::size_t k = 0; k < s.tasks; ++k) {
      const Vector phi = model.head_parameters(k);
      std::vector<Vector> head_acts;
      const double logit = ref_forward(head_layers, phi, h, head_acts, false)[0];
      const double p = 1.0 / (1.0 + std::exp(-logit));
      const Vector back =
          ref_backward(head_layers, phi, head_acts, Vector{p - y(j, k)}, false, inv_m, out.heads[k]);
      axpy(weights[k], back, dh);
    }
    ref_backward(shared_layers, theta, trunk_acts, dh, true, inv_m, out.shared);
  }
  return out;
}

double example_loss(const SharedBottomModel& model, std::span<const double> x, std::size_t task,
                    double label) {
  Matrix one(0, x.size());
  one.append_row(x);
  return binary_cross_entropy(label, model.forward(one)[task][0]);
}

}  // namespace

TEST_CASE("sigmoid and cross entropy") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) <= 1.0);
  CHECK(binary_cross_entropy(1.0, 0.5) == doctest::Approx(std::log(2.0)));
  CHECK(std::isfinite(binary_cross_entropy(1.0, 0.0)));
  CHECK(binary_cross_entropy(1.0, 0.0) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("shapes and profiles") {
  const ModelShape desk = make_shape(ModelProfile::kDesk, 16, 2);
  CHECK(desk.shared_widths == std::vector<std::size_t>{32, 16});
  CHECK(desk.head_widths == std::vector<std::size_t>{8, 1});
  const ModelShape paper = make_shape(parse_profile("paper"), 16, 2);
  CHECK(paper.shared_widths == std::vector<std::size_t>{256, 32});
  CHECK(paper.head_widths == std::vector<std::size_t>{16, 1});
  CHECK(profile_name(ModelProfile::kDesk) == "desk");
  CHECK_THROWS_AS(parse_profile("huge"), InvalidInput);
  CHECK_THROWS_AS(SharedBottomModel(ModelShape{3, {4}, {2}, 2}), InvalidInput);
  SharedBottomModel m(small_shape());
  CHECK(m.shared_parameter_count() == 3 * 4 + 4 + 4 * 2 + 2);
  CHECK(m.head_parameter_count(0) == 2 * 3 + 3 + 3 + 1);
}

TEST_CASE("forward") {
  SUBCASE("zero model outputs one half") {
    SharedBottomModel m(small_shape());
    for (const auto& p : m.forward(Matrix(4, 3, 1.7)))
      for (double v : p) CHECK(v == 0.5);
  }
  SUBCASE("logit of ln 3 gives 0.75") {
    SharedBottomModel m(small_shape());
    Vector head = m.head_parameters(0);
    head.back() = std::log(3.0);  // output bias
    m.set_head_parameters(0, head);
    const auto p = m.forward(Matrix{{0.3, -1, 2}});
    CHECK(p[0][0] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(p[1][0] == 0.5);
  }
  SUBCASE("batched equals row by row") {
    Rng rng(1);
    SharedBottomModel m(small_shape(), rng);
    const Matrix x = gaussian_matrix(7, 3, rng);
    const auto batch = m.forward(x);
    for (std::size_t r = 0; r < 7; ++r) {
      Matrix one(0, 3);
      one.append_row(x.row(r));
      const auto single = m.forward(one);
      for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(single[k][0] - batch[k][r]) <= 1e-12);
    }
  }
  SUBCASE("width mismatch") {
    SharedBottomModel m(small_shape());
    CHECK_THROWS_AS(m.forward(Matrix(2, 4)), InvalidInput);
  }
}

TEST_CASE("glorot init bounds and determinism") {
  Rng a(3), b(3);
  SharedBottomModel m1(make_shape(ModelProfile::kDesk, 16, 2), a);
  SharedBottomModel m2(make_shape(ModelProfile::kDesk, 16, 2), b);
  CHECK(m1.shared_parameters() == m2.shared_parameters());
  const Vector theta = m1.shared_parameters();
  const double bound = std::sqrt(6.0 / (16 + 32));
  for (std::size_t i = 0; i < 16 * 32; ++i) CHECK(std::abs(theta[i]) <= bound);
  for (std::size_t i = 16 * 32; i < 16 * 32 + 32; ++i) CHECK(theta[i] == 0.0);
}

TEST_CASE("per-example gradients") {
  Rng rng(4);
  SUBCASE("match central finite differences") {
    for (int trial = 0; trial < 5; ++trial) {
      SharedBottomModel m(small_shape(), rng);
      const Matrix x = gaussian_matrix(5, 3, rng);
      const Matrix y = random_labels(5, 2, rng);
      const GradientBundle b = per_example_shared_gradients(m, x, y, LossWeights::fixed({1, 1}));
      const Vector theta = m.shared_parameters();
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t j = 0; j < 5; ++j)
          for (std::size_t p = 0; p < theta.size(); ++p) {
            SharedBottomModel probe = m;
            Vector t = theta;
            t[p] += 1e-5;
            probe.set_shared_parameters(t);
            const double up = example_loss(probe, x.row(j), k, y(j, k));
            t[p] -= 2e-5;
            probe.set_shared_parameters(t);
            const double down = example_loss(probe, x.row(j), k, y(j, k));
            const double fd = (up - down) / 2e-5;
            const double exact = b.per_example[k](j, p);
            CHECK(std::abs(fd - exact) <= 1e-4 * std::max(1e-3, std::abs(exact)) + 1e-8);
          }
    }
  }
  SUBCASE("task means equal the batch gradient") {
    SharedBottomModel m(small_shape(), rng);
    const Matrix x = gaussian_matrix(9, 3, rng);
    const Matrix y = random_labels(9, 2, rng);
    const GradientBundle b = per_example_shared_gradients(m, x, y, LossWeights::fixed({1, 1}));
    const Matrix means = b.task_means();
    for (std::size_t k = 0; k < 2; ++k) {
      Vector w(2, 0.0);
      w[k] = 1.0;
      const ReferenceGrad ref = reference_gradients(m, x, y, w);
      CHECK(max_abs_diff(means.row(k), ref.shared) <= 1e-10);
    }
  }
  SUBCASE("single example and duplicates") {
    SharedBottomModel m(small_shape(), rng);
    const Matrix x = gaussian_matrix(1, 3, rng);
    Matrix xx = x;
    xx.append_row(x.row(0));
    const Matrix y{{1, 0}};
    Matrix yy = y;
    yy.append_row(y.row(0));
    const GradientBundle one = per_example_shared_gradients(m, x, y, LossWeights::fixed({1, 1}));
    const GradientBundle two = per_example_shared_gradients(m, xx, yy, LossWeights::fixed({1, 1}));
    CHECK(max_abs_diff(one.task_means().row(0), one.per_example[0].row(0)) == 0.0);
    CHECK(max_abs_diff(two.per_example[1].row(0), two.per_example[1].row(1)) == 0.0);
  }
  SUBCASE("labels must be binary") {
    SharedBottomModel m(small_shape(), rng);
    CHECK_THROWS_AS(per_example_shared_gradients(m, Matrix(1, 3), Matrix{{0.5, 1}},
                                                 LossWeights::fixed({1, 1})),
                    InvalidInput);
  }
}

TEST_CASE("head gradients match finite differences") {
  Rng rng(5);
  SharedBottomModel m(small_shape(), rng);
  const Matrix x = gaussian_matrix(6, 3, rng);
  const Matrix y = random_labels(6, 2, rng);
  const BackwardPass pass = m.backward(x, y);
  for (std::size_t k = 0; k < 2; ++k) {
    const Vector phi = m.head_parameters(k);
    for (std::size_t p = 0; p < phi.size(); ++p) {
      auto mean_loss = [&](double delta) {
        SharedBottomModel probe = m;
        Vector t = phi;
        t[p] += delta;
        probe.set_head_parameters(k, t);
        double s = 0.0;
        for (std::size_t j = 0; j < 6; ++j) s += example_loss(probe, x.row(j), k, y(j, k));
        return s / 6.0;
      };
      const double fd = (mean_loss(1e-5) - mean_loss(-1e-5)) / 2e-5;
      CHECK(std::abs(fd - pass.head_gradients[k][p]) <=
            1e-4 * std::max(1e-3, std::abs(fd)) + 1e-8);
    }
  }
}

TEST_CASE("optimizers") {
  SUBCASE("sgd step") {
    OptimizerState s = OptimizerState::make(OptimizerKind::kSgd, 0.1, 2);
    Vector theta{0, 0};
    apply_update(s, theta, Vector{1, -2});
    CHECK(max_abs_diff(theta, Vector{-0.1, 0.2}) < 1e-15);
  }
  SUBCASE("adam first step") {
    OptimizerState s = OptimizerState::make(OptimizerKind::kAdam, 0.01, 3);
    Vector theta{1, 1, 1};
    const Vector g{0.5, -3.0, 1e-3};
    apply_update(s, theta, g);
    // m_hat = g and v_hat = g^2 after bias correction.
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(theta[k] == doctest::Approx(1 - 0.01 * g[k] / (std::abs(g[k]) + 1e-8)).epsilon(1e-13));
  }
  SUBCASE("adam second step by hand") {
    OptimizerState s = OptimizerState::make(OptimizerKind::kAdam, 0.1, 1);
    Vector theta{0};
    apply_update(s, theta, Vector{1});
    apply_update(s, theta, Vector{-2});
    const double m = 0.9 * 0.1 + 0.1 * -2;
    const double v = 0.999 * 0.001 + 0.001 * 4;
    const double step2 = 0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
    CHECK(theta[0] == doctest::Approx(-0.1 * (1 / (1 + 1e-8)) - step2).epsilon(1e-12));
  }
  SUBCASE("zero update leaves a fresh state's parameters alone") {
    for (OptimizerKind kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
      OptimizerState s = OptimizerState::make(kind, 0.1, 2);
      Vector theta{0.3, -0.7};
      apply_update(s, theta, Vector{0, 0});
      CHECK(theta == Vector{0.3, -0.7});
    }
  }
  SUBCASE("names") {
    CHECK(parse_optimizer("sgd") == OptimizerKind::kSgd);
    CHECK(optimizer_name(OptimizerKind::kAdam) == "adam");
    CHECK_THROWS_AS(parse_optimizer("rmsprop"), InvalidInput);
  }
}

TEST_CASE("uncertainty weighting") {
  const UncertaintyTotal zero = uncertainty_weighted_losses(Vector{1, 2}, Vector{0, 0});
  CHECK(zero.total == 3.0);
  const UncertaintyTotal hand = uncertainty_weighted_losses(Vector{1, 2}, Vector{std::log(2.0), 0});
  CHECK(hand.total == doctest::Approx(2.5 + std::log(2.0)));
  CHECK(hand.weights[0] == doctest::Approx(0.5));
  const UncertaintyTotal big = uncertainty_weighted_losses(Vector{1}, Vector{30});
  CHECK(big.weights[0] < 1e-12);
  CHECK(big.total == doctest::Approx(30.0));
  // d total / d s by finite differences
  const double fd = (uncertainty_weighted_losses(Vector{1.5}, Vector{0.3 + 1e-6}).total -
                     uncertainty_weighted_losses(Vector{1.5}, Vector{0.3 - 1e-6}).total) /
                    2e-6;
  CHECK(uncertainty_weighted_losses(Vector{1.5}, Vector{0.3}).log_variance_grad[0] ==
        doctest::Approx(fd).epsilon(1e-7));
  CHECK_THROWS_AS(LossWeights::fixed({1, -1}), InvalidInput);
  CHECK(LossWeights::uncertainty(3).effective() == Vector{1, 1, 1});
}

TEST_CASE("head step") {
  Rng rng(6);
  SharedBottomModel m(small_shape(), rng);
  const Matrix x = gaussian_matrix(8, 3, rng);
  const Matrix y = random_labels(8, 2, rng);
  SUBCASE("two sgd steps follow the reference loop") {
    std::vector<OptimizerState> states{OptimizerState::make(OptimizerKind::kSgd, 0.3, m.head_parameter_count(0)),
                                       OptimizerState::make(OptimizerKind::kSgd, 0.3, m.head_parameter_count(1))};
    SharedBottomModel oracle = m;
    const Vector shared = m.shared_parameters();
    for (int step = 0; step < 2; ++step) {
      head_step(m, x, y, states, LossWeights::fixed({1, 2}));
      const ReferenceGrad ref = reference_gradients(oracle, x, y, Vector{1, 2});
      for (std::size_t k = 0; k < 2; ++k) {
        Vector phi = oracle.head_parameters(k);
        axpy(-0.3 * (k == 0 ? 1.0 : 2.0), ref.heads[k], phi);
        oracle.set_head_parameters(k, phi);
        CHECK(max_abs_diff(m.head_parameters(k), phi) <= 1e-12);
      }
    }
    CHECK(m.shared_parameters() == shared);
  }
  SUBCASE("zero learning rate leaves heads unchanged") {
    std::vector<OptimizerState> states{OptimizerState::make(OptimizerKind::kSgd, 0.0, m.head_parameter_count(0)),
                                       OptimizerState::make(OptimizerKind::kSgd, 0.0, m.head_parameter_count(1))};
    const Vector before = m.head_parameters(1);
    head_step(m, x, y, states, LossWeights::fixed({1, 1}));
    CHECK(m.head_parameters(1) == before);
  }
}

TEST_CASE("train step") {
  Rng rng(7);
  SharedBottomModel m(small_shape(), rng);
  const Matrix x = gaussian_matrix(12, 3, rng);
  const Matrix y = random_labels(12, 2, rng);
  SUBCASE("sum with sgd is the joint gradient step") {
    TrainingState state = TrainingState::make(m, OptimizerKind::kSgd, 0.05, LossWeights::fixed({0.7, 1.3}));
    CombinerConfig config;
    config.kind = CombinerKind::kSum;
    const StepDiagnostics diag = train_step(state, x, y, config, rng);
    const ReferenceGrad ref = reference_gradients(m, x, y, Vector{0.7, 1.3});
    Vector expect = m.shared_parameters();
    axpy(-0.05, ref.shared, expect);
    CHECK(max_abs_diff(state.model.shared_parameters(), expect) <= 1e-10);
    CHECK(diag.task_losses.size() == 2);
    CHECK_FALSE(diag.shared_mass_fraction.has_value());
  }
  SUBCASE("zero learning rate keeps parameters and reports diagnostics") {
    TrainingState state = TrainingState::make(m, OptimizerKind::kSgd, 0.0, LossWeights::fixed({1, 1}));
    CombinerConfig config;
    config.groups = 4;
    const StepDiagnostics diag = train_step(state, x, y, config, rng);
    CHECK(state.model.shared_parameters() == m.shared_parameters());
    CHECK(diag.shared_mass_fraction.has_value());
    CHECK(diag.subspace_rank >= 1);
    CHECK(diag.update_norm > 0.0);
  }
  SUBCASE("uncertainty weights move toward balancing the losses") {
    TrainingState state = TrainingState::make(m, OptimizerKind::kSgd, 0.1, LossWeights::uncertainty(2));
    CombinerConfig config;
    config.kind = CombinerKind::kSum;
    const StepDiagnostics diag = train_step(state, x, y, config, rng);
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(state.loss_weights.values[k] == doctest::Approx(-0.1 * (1 - diag.task_losses[k])));
  }
}
