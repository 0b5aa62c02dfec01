// Tour of the tape: first-order gradients, gradients of gradients, and the
// finite-difference harness that keeps both honest.

#include <cstdio>

#include "mfg/tape.hpp"

using namespace mfg;

int main() {
  Tape tape;

  // d/dx sum(x^2) = 2x
  Val x = tape.leaf(Tensor::row({1.0, 2.0, 3.0}));
  Val y = sumsq(x);
  Val g = grad(y, {x})[0];
  std::printf("sum(x^2) = %g, gradient =", y.tensor().at(0));
  for (int64_t i = 0; i < 3; ++i) std::printf(" %g", g.tensor().at(0, i));
  std::printf("\n");

  // Second order: backward emits tape nodes, so gradients differentiate again.
  // h(x) = sum(tanh(x)), s = sum(grad h) = sum(1 - tanh(x)^2),
  // grad s = -2 tanh(x)(1 - tanh(x)^2).
  Tape tape2;
  Val x2 = tape2.leaf(Tensor::row({0.5, -1.0}));
  Val h = sum(tanh(x2));
  Val gh = grad(h, {x2}, /*create_graph=*/true)[0];
  Val gg = grad(sum(gh), {x2})[0];
  std::printf("grad of grad sum(tanh(x)):");
  for (int64_t i = 0; i < 2; ++i) std::printf(" %g", gg.tensor().at(0, i));
  std::printf("\n");

  // The same harness the test suite uses: max relative error between the
  // analytic gradient and central differences.
  auto f = [](Tape& t, Val v) { return sum(exp(scalar_mul(sumsq(v), 0.1))); };
  double err = finite_diff_check(f, Tensor::row({0.3, -0.7, 1.1}), 1e-5);
  std::printf("finite-difference check on exp(0.1*|x|^2): max rel err %.2e\n", err);
  return 0;
}
