#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "tensorjump/autodiff.hpp"

using namespace tensorjump::ad;

namespace {

// Central difference of a scalar function of one variable.
template <class F>
double central(F f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace

TEST(Autodiff, ConstantsStayOffTape) {
  Tape tape;
  TapeScope scope(tape);
  Var a(2.0), b(3.0);
  Var c = a * b + 1.0;
  EXPECT_TRUE(c.is_constant());
  EXPECT_DOUBLE_EQ(c.value, 7.0);
  EXPECT_EQ(tape.nodes(), 0u);
}

TEST(Autodiff, ArithmeticPartials) {
  Tape tape;
  TapeScope scope(tape);
  Var x = tape.variable(1.3);
  Var y = tape.variable(-0.7);
  Var f = (x * y + x / y - 2.0 * x) * (y - x) + (-x);
  const auto g = tape.gradient(f);
  const double xv = 1.3, yv = -0.7;
  auto fx = [&](double t) { return (t * yv + t / yv - 2.0 * t) * (yv - t) - t; };
  auto fy = [&](double t) { return (xv * t + xv / t - 2.0 * xv) * (t - xv) - xv; };
  EXPECT_NEAR(g[x.id], central(fx, xv), 1e-8);
  EXPECT_NEAR(g[y.id], central(fy, yv), 1e-8);
}

TEST(Autodiff, ElementaryFunctions) {
  const double x0 = 0.83;
  struct Case {
    Var (*fv)(const Var&);
    double (*fd)(double);
  };
  const Case cases[] = {
      {[](const Var& v) { return sqrt(v); }, [](double v) { return std::sqrt(v); }},
      {[](const Var& v) { return exp(v); }, [](double v) { return std::exp(v); }},
      {[](const Var& v) { return log(v); }, [](double v) { return std::log(v); }},
      {[](const Var& v) { return sin(v); }, [](double v) { return std::sin(v); }},
      {[](const Var& v) { return cos(v); }, [](double v) { return std::cos(v); }},
      {[](const Var& v) { return silu(v); }, [](double v) { return silu(v); }},
  };
  for (const auto& c : cases) {
    Tape tape;
    TapeScope scope(tape);
    Var x = tape.variable(x0);
    Var y = c.fv(x);
    EXPECT_DOUBLE_EQ(y.value, c.fd(x0));
    EXPECT_NEAR(tape.gradient(y)[x.id], central(c.fd, x0), 1e-8);
  }
}

TEST(Autodiff, FusedKernelsMatchScalarChains) {
  Tape tape;
  TapeScope scope(tape);
  std::vector<Var> a, b;
  for (int i = 0; i < 5; ++i) a.push_back(tape.variable(0.3 * i - 0.5));
  for (int i = 0; i < 5; ++i) b.push_back(tape.variable(1.0 / (i + 1.0)));
  const double w[5] = {1.0, -2.0, 0.5, 3.0, 0.25};
  Var f = dot(a.data(), 1, b.data(), 1, 5) + sum(a.data(), 5) * 2.0 + dot(b.data(), 1, w, 1, 5);
  const auto g = tape.gradient(f);
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(g[a[i].id], b[i].value + 2.0, 1e-14);
    EXPECT_NEAR(g[b[i].id], a[i].value + w[i], 1e-14);
  }
}

TEST(Autodiff, StridedSum) {
  Tape tape;
  TapeScope scope(tape);
  std::vector<Var> x;
  for (int i = 0; i < 6; ++i) x.push_back(tape.variable(i));
  Var s = sum(x.data() + 1, 3, 2);  // x1 + x3 + x5
  EXPECT_DOUBLE_EQ(s.value, 9.0);
  const auto g = tape.gradient(s);
  for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(g[x[i].id], i % 2 == 1 ? 1.0 : 0.0);
}

TEST(Autodiff, CombineAndAccumulate) {
  Tape tape;
  TapeScope scope(tape);
  Var x = tape.variable(2.0);
  Var y = tape.variable(5.0);
  const Var parents[] = {x, y, Var(1.0)};
  const double partials[] = {3.0, -1.0, 100.0};
  Var z = combine(1.0, parents, partials);
  Var f = z * z;
  std::vector<double> grad(2, 1.0);
  tape.accumulate_gradient(f, grad, 0.5);
  EXPECT_DOUBLE_EQ(grad[0], 1.0 + 0.5 * 2.0 * 1.0 * 3.0);
  EXPECT_DOUBLE_EQ(grad[1], 1.0 - 0.5 * 2.0 * 1.0);
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  Tape tape;
  TapeScope scope(tape);
  Var x = tape.variable(1.5);
  Var u = x * x;
  Var f = u * u + u;  // x^4 + x^2
  EXPECT_NEAR(tape.gradient(f)[x.id], 4 * 1.5 * 1.5 * 1.5 + 2 * 1.5, 1e-12);
}

TEST(Autodiff, NoActiveTapeThrowsForVariables) {
  Var x(1.0, 0);
  EXPECT_THROW(x * x, std::logic_error);
}

TEST(Autodiff, ScopesNest) {
  Tape outer, inner;
  TapeScope a(outer);
  {
    TapeScope b(inner);
    EXPECT_EQ(Tape::active(), &inner);
  }
  EXPECT_EQ(Tape::active(), &outer);
}
