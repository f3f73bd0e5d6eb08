#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "rknn/reference.hpp"
#include "rknn/training.hpp"

using namespace rknn;

namespace {
TaskInstance sq(double a, double y0) { return {VectorField::square_1d(a), {y0}}; }

RknnParams<double> two_stage(double theta, double b2) {
  const std::vector<double> w{1.0 - b2, b2};
  return params_from_weights(2, {theta}, w);
}

RknnParams<double> as_params(const ClassicTableau& t) {
  return params_from_weights(t.coef.stages, t.coef.a, t.coef.b);
}

std::vector<Sample> batch_of(const TaskFamily& f, std::size_t n, std::uint64_t seed) {
  TrainConfig c;
  c.batch_size = n;
  Rng rng(seed);
  return draw_batch(f, c, rng);
}
}  // namespace

TEST_SUITE("training") {
  TEST_CASE("scaled loss") {
    const std::vector<double> t{1.5, -2.0}, r{1.6, -2.1};
    CHECK(scaled_loss(t, t, r) == 0.0);
    CHECK(scaled_loss(t, r, r) == doctest::Approx(1.0));
    const double v = scaled_loss({1.9230769}, {1.9230720}, {1.9230600});
    CHECK(v == doctest::Approx(std::pow(4.9e-6 / 1.69e-5, 2)).epsilon(1e-6));
    CHECK(v == doctest::Approx(0.0841).epsilon(1e-3));
    CHECK_THROWS(scaled_loss({1.0}, {1.0, 2.0}, {1.0}));
  }

  TEST_CASE("scaled loss uses the floor when the reference is exact") {
    CHECK(scaled_loss({1.0}, {1.001}, {1.0}, 1e-4) == doctest::Approx(1e-6 / 1e-4));
  }

  TEST_CASE("residuals square-sum to their scalar counterparts") {
    const std::vector<double> t{1.5, -2.0}, h{1.55, -1.9}, r{1.6, -2.1};
    double s = 0.0;
    for (double x : scaled_residuals<double>(t, h, r)) s += x * x;
    CHECK(s == doctest::Approx(scaled_loss(t, h, r)));

    const auto task = sq(0.7, 1.3);
    const auto c = classic_tableau("rk2").coef;
    s = 0.0;
    for (double x : taylor_residuals(c, task, 4, solution_jet(task, 4))) s += x * x;
    CHECK(s == doctest::Approx(taylor_regularizer(c, task, 4)));
  }

  TEST_CASE("regularizer examples") {
    const auto rk2 = classic_tableau("rk2").coef;
    CHECK(std::abs(taylor_regularizer(rk2, sq(1.0, 1.0), 3) - 9.0) < 1e-9);

    // Orders one and two match; the third coefficient is off by a^3 y^4 / 2.
    const double a = 0.3, y = 2.2;
    const double d3 = 0.5 * a * a * a * std::pow(y, 4);
    CHECK(taylor_regularizer(rk2, sq(a, y), 3) == doctest::Approx(std::pow(6.0 * d3, 2)).epsilon(1e-12));

    const auto exact = two_stage(2.0, 0.25);
    for (double aa : {0.1, 0.3, 0.5})
      for (double yy : {1.0, 2.0, 3.0}) {
        const double scale = std::pow(aa * aa * aa * std::pow(yy, 4), 2);
        CHECK(taylor_regularizer(exact, sq(aa, yy), 3) <= 1e-18 * scale + 1e-30);
      }
  }

  TEST_CASE("first-order conditions always hold") {
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
      const auto p = initial_params(3, rng);
      const auto t = sample(families::van_der_pol(), rng);
      CHECK(taylor_regularizer(p, t, 1) == doctest::Approx(0.0).epsilon(1e-24));
    }
  }

  TEST_CASE("classic third-order tableaux satisfy the third-order conditions") {
    Rng rng(9);
    for (const char* label : {"rk3_1", "rk3_2", "rk3_3"}) {
      const auto& c = classic_tableau(label).coef;
      for (int i = 0; i < 10; ++i) {
        const auto t = sample(families::linear(), rng);
        const double scale = t.y0[0] * t.y0[0] * std::pow(t.field.params()[0], 6);
        CHECK(taylor_regularizer(c, t, 3) <= 1e-18 * std::max(scale, 1.0));
      }
    }
  }

  TEST_CASE("regularizer rejects order zero") {
    CHECK_THROWS(taylor_regularizer(classic_tableau("rk2").coef, sq(1.0, 1.0), 0));
  }

  TEST_CASE("objective of the reference tableau is one") {
    TrainConfig c;
    c.reference = "rk3_3";
    const auto batch = batch_of(families::linear(), 16, 1);
    const auto o = epoch_objective(as_params(classic_tableau("rk3_3")), batch, c);
    CHECK(o.value == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(o.gamma == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("single-sample objective") {
    TrainConfig c;
    c.regularizer_weight = 0.7;
    c.order = 3;
    const auto p = two_stage(1.4, 0.3);
    const std::vector<Sample> batch{{sq(0.35, 2.5), 0.05}};
    const auto o = epoch_objective(p, batch, c);
    const auto& t = batch[0].task;
    const auto y_true = closed_form(t, 0.05);
    const auto y_hat = step(p, t.field, t.y0, 0.05);
    const auto y_rk = step(classic_tableau(c.reference), t.field, t.y0, 0.05);
    const double expect = scaled_loss(y_true, y_hat, y_rk) + 0.7 * taylor_regularizer(p, t, 3);
    CHECK(o.value == doctest::Approx(expect).epsilon(1e-12));
  }

  TEST_CASE("objective gradient matches finite differences") {
    TrainConfig c;
    c.order = 3;
    c.regularizer_weight = 0.5;
    const auto batch = batch_of(families::van_der_pol(), 4, 3);
    Rng rng(4);
    const auto p = initial_params(3, rng);
    const auto o = epoch_objective(p, batch, c);
    auto flat = flatten(p);
    for (std::size_t k = 0; k < flat.size(); ++k) {
      const double e = 1e-6 * std::max(1.0, std::abs(flat[k]));
      auto up = flat, dn = flat;
      up[k] += e;
      dn[k] -= e;
      const double fd = (epoch_objective(unflatten(3, up), batch, c).value -
                         epoch_objective(unflatten(3, dn), batch, c).value) /
                        (2 * e);
      CHECK(o.gradient[k] == doctest::Approx(fd).epsilon(1e-5));
    }
  }

  TEST_CASE("jacobian rows rebuild the value and gradient") {
    TrainConfig c;
    c.regularizer_weight = 2.0;
    const auto batch = batch_of(families::square(), 5, 8);
    Rng rng(2);
    const auto p = initial_params(2, rng);
    const auto o = epoch_objective(p, batch, c, true, true);
    const std::size_t n = p.parameter_count();
    REQUIRE(o.jacobian.size() == o.residuals.size() * n);
    double v = 0.0;
    std::vector<double> g(n, 0.0);
    for (std::size_t r = 0; r < o.residuals.size(); ++r) {
      v += o.residuals[r] * o.residuals[r];
      for (std::size_t k = 0; k < n; ++k) g[k] += 2.0 * o.residuals[r] * o.jacobian[r * n + k];
    }
    CHECK(v == doctest::Approx(o.value).epsilon(1e-12));
    for (std::size_t k = 0; k < n; ++k) CHECK(g[k] == doctest::Approx(o.gradient[k]).epsilon(1e-10));
  }

  TEST_CASE("regularizer-only objective") {
    TrainConfig c;
    const auto batch = batch_of(families::square(), 6, 4);
    const auto p = two_stage(0.8, 0.6);
    const auto full = epoch_objective(p, batch, c, true);
    const auto reg = epoch_objective(p, batch, c, false);
    CHECK(reg.value == doctest::Approx(c.regularizer_weight * full.regularizer));
    CHECK(reg.gamma == doctest::Approx(full.gamma));
  }

  TEST_CASE("thread count does not change the objective") {
    TrainConfig c;
    const auto batch = batch_of(families::brusselator(), 33, 6);
    Rng rng(1);
    const auto p = initial_params(3, rng);
    const auto one = epoch_objective(p, batch, c);
    c.threads = 4;
    const auto four = epoch_objective(p, batch, c);
    CHECK(one.value == four.value);
    CHECK(one.gradient == four.gradient);
  }

  TEST_CASE("diverging samples mark the objective non-finite") {
    TrainConfig c;
    const std::vector<Sample> batch{{sq(0.3, 2.0), 0.05}};
    const auto wild = params_from_weights(2, {1e200}, std::vector<double>{0.5, 0.5});
    CHECK_FALSE(epoch_objective(wild, batch, c).finite);
    CHECK_THROWS(epoch_objective(wild, std::span<const Sample>(), c));
  }

  TEST_CASE("adam first step") {
    AdamConfig cfg;
    cfg.learning_rate = 0.01;
    std::vector<double> x{1.0, -2.0, 0.5};
    const std::vector<double> g{3.0, -0.001, 1e4};
    AdamState s(3);
    adam_step(x, g, s, cfg);
    CHECK(x[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(x[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-4));
    CHECK(x[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-6));
  }

  TEST_CASE("adam leaves parameters alone at a zero gradient") {
    std::vector<double> x{1.0, 2.0};
    AdamState s(2);
    adam_step(x, std::vector<double>{0.0, 0.0}, s, AdamConfig{});
    CHECK(x == std::vector<double>{1.0, 2.0});
  }

  TEST_CASE("adam moves monotonically against a constant gradient") {
    std::vector<double> x{0.0};
    AdamState s(1);
    adam_step(x, std::vector<double>{2.0}, s, AdamConfig{});
    const double first = x[0];
    adam_step(x, std::vector<double>{2.0}, s, AdamConfig{});
    CHECK(first < 0.0);
    CHECK(x[0] < first);
  }

  TEST_CASE("initial parameters") {
    Rng rng(0);
    const auto p = initial_params(4, rng);
    CHECK(p.a.size() == 6);
    CHECK(p.logits.size() == 4);
    for (double v : p.a) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("batches respect the step-size range") {
    TrainConfig c;
    c.batch_size = 200;
    c.h_min = 0.02;
    c.h_max = 0.03;
    Rng rng(0);
    const auto b = draw_batch(families::linear(), c, rng);
    CHECK(b.size() == 200);
    for (const auto& s : b) {
      CHECK(s.h >= 0.02);
      CHECK(s.h <= 0.03);
    }
  }

  TEST_CASE("validation names the field") {
    TrainConfig c;
    c.batch_size = 0;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("batch_size"), std::invalid_argument);
    c = TrainConfig{};
    c.h_min = 0.2;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("h_range"), std::invalid_argument);
    c = TrainConfig{};
    c.reference = "nope";
    CHECK_THROWS(c.validate());
    c = TrainConfig{};
    c.stages = 8;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("stages"), std::invalid_argument);
    c = TrainConfig{};
    c.restarts = 0;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("restarts"), std::invalid_argument);
  }

  TEST_CASE("infinite tolerance stops after the first epoch") {
    TrainConfig c;
    c.tolerance = std::numeric_limits<double>::infinity();
    c.batch_size = 8;
    const auto r = train(c, families::linear());
    CHECK(r.history.size() == 1);
    CHECK(r.stop == StopReason::tolerance_met);
  }

  TEST_CASE("zero iterations return the initial parameters") {
    TrainConfig c;
    c.max_iterations = 0;
    const auto r = train(c, families::linear());
    CHECK(r.history.empty());
    CHECK(flatten(r.params) == flatten(r.initial_params));
  }

  TEST_CASE("training is deterministic") {
    TrainConfig c;
    c.stages = 2;
    c.batch_size = 16;
    c.max_iterations = 30;
    c.seed = 17;
    const auto a = train(c, families::square());
    const auto b = train(c, families::square());
    CHECK(flatten(a.params) == flatten(b.params));
    std::ostringstream sa, sb;
    write_train_report(sa, a);
    write_train_report(sb, b);
    CHECK(sa.str() == sb.str());
    c.seed = 18;
    CHECK(flatten(train(c, families::square()).params) != flatten(a.params));
  }

  TEST_CASE("adam reduces the objective") {
    TrainConfig c;
    c.stages = 2;
    c.batch_size = 32;
    c.max_iterations = 300;
    c.fixed_dataset = true;
    c.seed = 2;
    const auto r = train(c, families::square());
    REQUIRE(r.history.size() == 300);
    CHECK(r.history.back().objective < r.history.front().objective);
  }

  TEST_CASE("gauss-newton training recovers the two-stage third-order method") {
    TrainConfig c;
    c.stages = 2;
    c.batch_size = 64;
    c.max_iterations = 40;
    c.warmup_iterations = 40;
    c.optimizer = Optimizer::levenberg_marquardt;
    c.fixed_dataset = true;
    c.seed = 1;
    const auto r = train(c, families::square());
    const auto coef = r.params.coefficients();
    CHECK(r.history.back().regularizer < 1e-12);
    CHECK(std::abs(2 * coef.a[0] * coef.b[1] - 1.0) < 1e-4);
    CHECK(std::abs(coef.a[0] * coef.a[0] * coef.b[1] - 1.0) < 1e-4);
  }

  TEST_CASE("restarts keep the best run") {
    TrainConfig c;
    c.stages = 2;
    c.batch_size = 16;
    c.max_iterations = 10;
    c.fixed_dataset = true;
    const auto one = train(c, families::square());
    c.restarts = 3;
    const auto three = train(c, families::square());
    CHECK(three.history.back().objective <= one.history.back().objective);
  }

  TEST_CASE("optimizer names") {
    CHECK(parse_optimizer("adam") == Optimizer::adam);
    CHECK(parse_optimizer(to_string(Optimizer::levenberg_marquardt)) == Optimizer::levenberg_marquardt);
    CHECK_FALSE(parse_optimizer("sgd").has_value());
  }

  TEST_CASE("report columns") {
    TrainReport r;
    r.history.push_back({1, 2.0, 3.0, 4.0, 5.0});
    std::ostringstream os;
    write_train_report(os, r);
    CHECK(os.str().rfind("epoch,objective,mse,regularizer,gamma\n1,", 0) == 0);
  }
}
