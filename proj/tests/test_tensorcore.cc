#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "morphkit/autodiff.h"
#include "morphkit/checkpoint.h"
#include "morphkit/errors.h"
#include "morphkit/gradcheck.h"
#include "morphkit/layers.h"
#include "morphkit/optim.h"
#include "morphkit/trainer.h"

using namespace morphkit;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = d(rng);
  return t;
}

using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Central differences on every input coordinate against Var::grad.
double max_rel_error(const Fn& f, std::vector<Tensor> inputs, double h = 1e-6) {
  auto eval = [&](const std::vector<Tensor>& in) {
    Tape t;
    std::vector<Var> vars;
    for (const auto& x : in) vars.push_back(t.constant(x));
    return f(t, vars).item();
  };
  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.variable(x));
  tape.backward(f(tape, vars));
  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const auto g = vars[i].grad();
    for (size_t k = 0; k < inputs[i].size(); ++k) {
      const double keep = inputs[i][k];
      inputs[i][k] = keep + h;
      const double up = eval(inputs);
      inputs[i][k] = keep - h;
      const double down = eval(inputs);
      inputs[i][k] = keep;
      const double num = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(num), std::abs(g[k]), 1e-6});
      worst = std::max(worst, std::abs(num - g[k]) / denom);
    }
  }
  return worst;
}

// Fixed-weight reduction to a scalar that depends on every coordinate.
Var project(Var v) {
  Tape& t = *v.tape();
  if (v.shape().size() == 2) {
    const size_t rows = v.shape()[0], cols = v.shape()[1];
    Tensor rw(Shape{rows});
    for (size_t r = 0; r < rows; ++r) rw[r] = 0.5 + 0.25 * static_cast<double>(r);
    Tensor cw(Shape{cols});
    for (size_t c = 0; c < cols; ++c) cw[c] = 0.2 + 0.3 * static_cast<double>(c % 5);
    return ad::dot(ad::weighted_sum(t.constant(rw), v), t.constant(cw));
  }
  Tensor w(Shape{v.size()});
  for (size_t k = 0; k < w.size(); ++k) w[k] = 0.3 + 0.1 * static_cast<double>(k % 7);
  return ad::dot(v, t.constant(w));
}

}  // namespace

TEST_SUITE("tensorcore") {
  TEST_CASE("matmul by the identity and shape errors") {
    Tape t;
    Tensor eye(Shape{3, 3});
    for (size_t k = 0; k < 3; ++k) eye.at(k, k) = 1.0;
    std::mt19937_64 rng(1);
    const Tensor a = random_tensor({3, 4}, rng);
    const Var r = ad::matmul(t.constant(eye), t.constant(a));
    for (size_t k = 0; k < a.size(); ++k) CHECK(r.value()[k] == a[k]);

    const Var bad = t.constant(Tensor(Shape{4, 2}));
    CHECK_THROWS_WITH_AS(ad::matmul(t.constant(eye), bad),
                         doctest::Contains("matmul: incompatible shapes [3,3] and [4,2]"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(ad::add(t.constant(Tensor(Shape{2})), t.constant(Tensor(Shape{3}))),
                         doctest::Contains("add"), std::invalid_argument);
  }

  TEST_CASE("softmax is normalized and log-softmax is stable") {
    std::mt19937_64 rng(2);
    for (int k = 0; k < 50; ++k) {
      Tape t;
      const Var x = t.constant(random_tensor({17}, rng, -30.0, 30.0));
      const auto p = ad::softmax(x).value();
      double s = 0.0;
      for (double v : p) {
        CHECK(v > 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    Tape t;
    const Var big = t.constant(Tensor::vector({1000.0, 0.0, -1000.0}));
    const auto lp = ad::log_softmax(big).value();
    CHECK(lp[0] == doctest::Approx(0.0));
    CHECK(std::isfinite(lp[2]));
  }

  TEST_CASE("tanh derivative at zero") {
    const double h = 1e-6;
    Tape t;
    const Var x = t.variable(Tensor::vector({0.0}));
    t.backward(ad::sum(ad::tanh(x)));
    const double num = (std::tanh(h) - std::tanh(-h)) / (2.0 * h);
    CHECK(x.grad()[0] == 1.0);
    CHECK(std::abs(x.grad()[0] - num) / std::abs(num) < 1e-7);
  }

  TEST_CASE("every op matches central differences") {
    std::mt19937_64 rng(3);
    const double tol = 1e-6;
    auto R = [&](Shape s) { return random_tensor(std::move(s), rng); };
    auto P = [&](Shape s) { return random_tensor(std::move(s), rng, 0.2, 1.5); };

    CHECK(max_rel_error([](Tape&, const auto& v) { return project(ad::matmul(v[0], v[1])); },
                        {R({3, 4}), R({4, 2})}) < tol);
    CHECK(max_rel_error([](Tape&, const auto& v) { return project(ad::matmul(v[0], v[1])); },
                        {R({3, 4}), R({4})}) < tol);
    CHECK(max_rel_error([](Tape&, const auto& v) { return project(ad::matmul_nt(v[0], v[1])); },
                        {R({3, 4}), R({5, 4})}) < tol);
    CHECK(max_rel_error(
              [](Tape&, const auto& v) {
                return project(ad::mul(ad::sub(v[0], v[1]), ad::add(v[0], v[1])));
              },
              {R({5}), R({5})}) < tol);
    CHECK(max_rel_error([](Tape&, const auto& v) { return project(ad::scale(v[0], -2.5)); },
                        {R({4})}) < tol);
    CHECK(max_rel_error(
              [](Tape&, const auto& v) {
                const Var c = ad::concat({v[0], v[1]});
                const auto parts = ad::split(c, std::vector<size_t>{2, 5});
                return ad::add(project(ad::tanh(parts[0])),
                               project(ad::sigmoid(ad::slice(parts[1], 1, 3))));
              },
              {R({3}), R({4})}) < tol);
    CHECK(max_rel_error([](Tape&, const auto& v) { return project(ad::softmax(v[0])); },
                        {R({6})}) < tol);
    CHECK(max_rel_error([](Tape&, const auto& v) { return project(ad::log_softmax(v[0])); },
                        {R({6})}) < tol);
    CHECK(max_rel_error([](Tape&, const auto& v) { return project(ad::log(v[0])); },
                        {P({6})}) < tol);
    CHECK(max_rel_error(
              [](Tape&, const auto& v) {
                return project(ad::gather_rows(v[0], std::vector<uint32_t>{2, 0, 2}));
              },
              {R({4, 3})}) < tol);
    CHECK(max_rel_error([](Tape&, const auto& v) { return project(ad::gather(v[0], 1)); },
                        {R({4, 3})}) < tol);
    CHECK(max_rel_error(
              [](Tape&, const auto& v) {
                return project(ad::stack(std::vector<Var>{v[0], v[1], v[0]}));
              },
              {R({3}), R({3})}) < tol);
    CHECK(max_rel_error(
              [](Tape&, const auto& v) { return project(ad::weighted_sum(v[0], v[1])); },
              {R({3}), R({3, 4})}) < tol);
    CHECK(max_rel_error([](Tape&, const auto& v) { return ad::mean(v[0]); }, {R({2, 3})}) <
          tol);
    CHECK(max_rel_error([](Tape&, const auto& v) { return ad::dot(v[0], v[1]); },
                        {R({5}), R({5})}) < tol);
    CHECK(max_rel_error([](Tape&, const auto& v) { return ad::pick(v[0], 2); }, {R({4})}) <
          tol);
    CHECK(max_rel_error(
              [](Tape&, const auto& v) {
                return project(ad::additive_scores(v[0], v[1], v[2]));
              },
              {R({4, 3}), R({3}), R({3})}) < tol);
    CHECK(max_rel_error(
              [](Tape&, const auto& v) {
                return project(ad::gru_blend(ad::sigmoid(v[0]), v[1], v[2]));
              },
              {R({4}), R({4}), R({4})}) < tol);
  }

  TEST_CASE("log is floored") {
    Tape t;
    const auto v = ad::log(t.constant(Tensor::vector({0.0}))).value();
    CHECK(v[0] == doctest::Approx(std::log(ad::kLogFloor)));
  }

  TEST_CASE("non-finite values are rejected") {
    Tape t;
    const Var x = t.constant(Tensor::vector({1e308}));
    CHECK_THROWS_AS(ad::scale(x, 10.0), NumericalError);
  }

  TEST_CASE("backward contract") {
    Tape t;
    const Var a = t.variable(Tensor::vector({1.0, 2.0}));
    const Var unused = t.variable(Tensor::vector({3.0}));
    CHECK_THROWS_AS(t.backward(a), std::invalid_argument);
    t.backward(ad::sum(ad::mul(a, a)));
    CHECK(a.grad() == std::vector<double>{2.0, 4.0});
    CHECK(unused.grad() == std::vector<double>{0.0});
  }

  TEST_CASE("parameters accumulate into the gradient sink") {
    ParamSet ps;
    const size_t w = ps.add("w", Tensor::vector({1.0, -1.0}));
    GradBuffer g(ps);
    Tape t(&g);
    const Var p = t.param(ps, w);
    CHECK(t.param(ps, w).id() == p.id());
    t.backward(ad::add(ad::dot(p, p), ad::sum(p)));
    CHECK(g.populated());
    CHECK(g[w] == std::vector<double>{3.0, -1.0});
    CHECK_THROWS_AS(ps.add("w", Tensor::vector({0.0})), std::invalid_argument);
  }

  TEST_CASE("dropout") {
    std::mt19937_64 rng(1);
    Tape t;
    const Var x = t.constant(Tensor(Shape{1000}, 1.0));
    CHECK(ad::dropout(x, 0.0, rng).id() == x.id());
    const auto y = ad::dropout(x, 0.5, rng).value();
    size_t zeros = 0;
    for (double v : y) {
      CHECK((v == 0.0 || v == 2.0));
      zeros += v == 0.0;
    }
    CHECK(zeros > 400);
    CHECK(zeros < 600);
  }

  TEST_CASE("adam applies bias-corrected steps") {
    ParamSet ps;
    const size_t w = ps.add("w", Tensor::vector({1.0, 1.0}));
    Adam opt(ps);
    GradBuffer g(ps);
    CHECK_THROWS_AS(opt.step(ps, g), std::logic_error);
    {
      Tape t(&g);
      const Var p = t.param(ps, w);
      t.backward(ad::dot(p, t.constant(Tensor::vector({2.0, -0.5}))));
    }
    opt.step(ps, g);
    // First bias-corrected step moves each coordinate by lr against the sign.
    CHECK(ps[w].value[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-9));
    CHECK(ps[w].value[1] == doctest::Approx(1.0 + 0.001).epsilon(1e-9));
    CHECK(opt.steps() == 1);
    CHECK_FALSE(g.populated());
    CHECK(g[w] == std::vector<double>{0.0, 0.0});
  }

  TEST_CASE("adam minimizes a quadratic") {
    ParamSet ps;
    const size_t w = ps.add("w", Tensor::vector({3.0, -2.0}));
    AdamConfig cfg;
    cfg.lr = 0.05;
    Adam opt(ps, cfg);
    GradBuffer g(ps);
    for (int k = 0; k < 2000; ++k) {
      Tape t(&g);
      const Var p = t.param(ps, w);
      t.backward(ad::dot(p, p));
      opt.step(ps, g);
    }
    CHECK(std::abs(ps[w].value[0]) < 1e-2);
    CHECK(std::abs(ps[w].value[1]) < 1e-2);
  }

  TEST_CASE("checkpoint round trip") {
    ParamSet ps;
    std::mt19937_64 rng(4);
    ps.add("emb", random_tensor({5, 3}, rng));
    ps.add("bias", random_tensor({3}, rng));
    std::stringstream buf;
    save_checkpoint(buf, ps, 8);
    CHECK(buf.str().substr(0, 4) == "MKCK");
    ParamSet other;
    other.add("emb", Tensor(Shape{5, 3}));
    other.add("bias", Tensor(Shape{3}));
    restore_checkpoint(buf, other);
    for (size_t s = 0; s < 2; ++s) CHECK(other[s].value.storage() == ps[s].value.storage());

    std::stringstream narrow;
    save_checkpoint(narrow, ps, 4);
    const auto recs = load_checkpoint(narrow);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].name == "emb");
    CHECK(recs[0].value.shape() == Shape{5, 3});
    CHECK(recs[0].value[4] == doctest::Approx(ps[0].value[4]).epsilon(1e-6));

    ParamSet wrong;
    wrong.add("emb", Tensor(Shape{3, 5}));
    wrong.add("bias", Tensor(Shape{3}));
    std::stringstream again;
    save_checkpoint(again, ps, 8);
    CHECK_THROWS_AS(restore_checkpoint(again, wrong), DataError);
    std::istringstream junk("MKCK");
    CHECK_THROWS_AS(load_checkpoint(junk), DataError);
  }

  TEST_CASE("gradient checker on a GRU") {
    ParamSet ps;
    const GruCell cell = add_gru(ps, "g", 3, 4, true);
    init_uniform(ps, 0.5, 7);
    std::mt19937_64 rng(8);
    const Tensor x = random_tensor({3}, rng);
    const auto report = grad_check(
        [&](Tape& t) {
          Var h = t.constant(Tensor(Shape{4}));
          for (int k = 0; k < 3; ++k) h = gru_step(t, ps, cell, t.constant(x), h);
          return ad::sum(ad::mul(h, h));
        },
        ps);
    CHECK(report.groups.size() == 6);
    CHECK(report.max_rel_error < 1e-6);
  }

  TEST_CASE("gru update gate endpoints") {
    ParamSet ps;
    const GruCell cell = add_gru(ps, "g", 2, 3, true);
    init_uniform(ps, 0.5, 2);
    Tape t;
    const Var x = t.constant(Tensor::vector({0.3, -0.7}));
    const Var h = t.constant(Tensor::vector({0.1, 0.2, -0.4}));
    // A large negative gate bias keeps the previous state.
    for (double& v : ps[cell.b_z].value.data()) v = -1e3;
    const auto out = gru_step(t, ps, cell, x, h).value();
    CHECK(std::vector<double>(out.begin(), out.end()) == std::vector<double>{0.1, 0.2, -0.4});
  }

  TEST_CASE("training is deterministic across worker counts") {
    auto run = [](size_t workers) {
      ParamSet ps;
      const size_t w = ps.add("w", Tensor(Shape{3}));
      init_uniform(ps, 0.1, 1);
      std::vector<Tensor> xs;
      std::mt19937_64 rng(5);
      for (int k = 0; k < 37; ++k) xs.push_back(random_tensor({3}, rng));
      ExampleFn fn = [&](Tape& t, size_t i, const ExampleContext&) {
        const Var p = t.param(ps, w);
        const Var d = ad::sub(p, t.constant(xs[i]));
        return ExampleLoss{ad::dot(d, d), 1};
      };
      TrainOptions o;
      o.batch = 8;
      o.max_epochs = 4;
      o.workers = workers;
      o.adam.lr = 0.01;
      const auto h = fit(ps, xs.size(), fn, 0, fn, o);
      return std::make_pair(h, ps[w].value.storage());
    };
    const auto [h1, w1] = run(1);
    const auto [h4, w4] = run(4);
    CHECK(w1 == w4);
    REQUIRE(h1.epochs.size() == h4.epochs.size());
    for (size_t k = 0; k < h1.epochs.size(); ++k) {
      CHECK(h1.epochs[k].train_nll == h4.epochs[k].train_nll);
    }
    CHECK(h1.epochs.front().epoch == 0);
    CHECK(h1.total_steps == 4 * 5);
    CHECK(h1.best_valid_nll <= h1.epochs.front().valid_nll);
  }

  TEST_CASE("training stops on non-finite losses") {
    ParamSet ps;
    const size_t w = ps.add("w", Tensor::vector({1.0}));
    ExampleFn fn = [&](Tape& t, size_t, const ExampleContext&) {
      const Var p = t.param(ps, w);
      return ExampleLoss{ad::scale(ad::sum(p), 1e308 * 10.0), 1};
    };
    TrainOptions o;
    o.max_epochs = 1;
    CHECK_THROWS_AS(fit(ps, 3, fn, 0, fn, o), NumericalError);
  }
}
