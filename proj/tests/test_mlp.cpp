#include <cmath>

#include "detsel/error.hpp"
#include "detsel/mlp.hpp"
#include "detsel/rmsprop.hpp"
#include "doctest.h"

using namespace detsel;

namespace {

// Loss used for gradient checks: sum_o c_o * y_o.
double weighted_output(const Mlp& net, const std::vector<double>& x, const std::vector<double>& c) {
  const auto y = net.forward(x);
  double s = 0.0;
  for (std::size_t o = 0; o < y.size(); ++o) s += c[o] * y[o];
  return s;
}

void check_gradients(OutputHead head) {
  Rng rng(17);
  Mlp net = Mlp::random(4, 20, 6, head, rng);
  for (auto& p : net.params()) p += rng.uniform(-0.1, 0.1);  // nonzero biases
  const std::vector<double> x = {0.3, -1.0, 0.9, 0.05};
  const std::vector<double> c = {0.5, -1.0, 2.0, 0.1, -0.3, 1.2};
  std::vector<double> grads(net.num_params(), 0.0);
  net.backward(net.forward_cached(x), c, grads);

  const double h = 1e-5;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < net.num_params(); ++i) {
    const double saved = net.params()[i];
    net.params()[i] = saved + h;
    const double up = weighted_output(net, x, c);
    net.params()[i] = saved - h;
    const double down = weighted_output(net, x, c);
    net.params()[i] = saved;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(grads[i]), 1e-6});
    if (std::abs(numeric) < 1e-7 && std::abs(grads[i]) < 1e-7) continue;
    ++checked;
    CHECK(std::abs(numeric - grads[i]) / denom <= 1e-4);
  }
  CHECK(checked > net.num_params() / 2);
}

}  // namespace

TEST_CASE("zero-initialized softmax network is uniform") {
  const Mlp actor(4, 20, 6, OutputHead::kSoftmax);
  for (const auto& x : {std::vector<double>{-1, -1, -1, -1}, std::vector<double>{0.2, 0.9, -1, 0.5}}) {
    for (double p : actor.forward(x)) CHECK(p == doctest::Approx(1.0 / 6.0));
  }
  const Mlp critic(4, 20, 6, OutputHead::kLinear);
  for (double q : critic.forward(std::vector<double>{0.1, 0.2, 0.3, 0.4})) CHECK(q == 0.0);
}

TEST_CASE("parameter layout") {
  const Mlp net(4, 20, 6, OutputHead::kLinear);
  CHECK(net.num_params() == 4 * 20 + 20 + 20 * 6 + 6);
  CHECK(net.b1_offset() == 80);
  CHECK(net.w2_offset() == 100);
  CHECK(net.b2_offset() == 220);
}

TEST_CASE("softmax is stable for large logits") {
  const auto p = softmax(std::vector<double>{1000.0, 1000.0, -1000.0});
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[2] == 0.0);
}

TEST_CASE("backpropagation matches central differences (linear head)") { check_gradients(OutputHead::kLinear); }
TEST_CASE("backpropagation matches central differences (softmax head)") { check_gradients(OutputHead::kSoftmax); }

TEST_CASE("inactive ReLU units pass no gradient") {
  Mlp net(2, 3, 1, OutputHead::kLinear);
  auto p = net.params();
  // Unit 0 active, units 1 and 2 dead for x = (1, 1).
  p[net.w1_offset() + 0] = 1.0;
  p[net.w1_offset() + 2] = -1.0;
  p[net.w1_offset() + 4] = -2.0;
  p[net.b1_offset() + 1] = -0.5;
  for (std::size_t h = 0; h < 3; ++h) p[net.w2_offset() + h] = 1.0;
  std::vector<double> grads(net.num_params(), 0.0);
  const std::vector<double> x = {1.0, 1.0};
  net.backward(net.forward_cached(x), std::vector<double>{1.0}, grads);
  CHECK(grads[net.w1_offset() + 0] == 1.0);
  CHECK(grads[net.w1_offset() + 1] == 1.0);
  for (std::size_t i = 2; i < 6; ++i) CHECK(grads[net.w1_offset() + i] == 0.0);
  CHECK(grads[net.b1_offset() + 1] == 0.0);
  CHECK(grads[net.b1_offset() + 2] == 0.0);
  CHECK(grads[net.w2_offset() + 1] == 0.0);
  CHECK(grads[net.b2_offset()] == 1.0);
}

TEST_CASE("input dimension is checked") {
  const Mlp net(4, 2, 6, OutputHead::kSoftmax);
  CHECK_THROWS_AS(net.forward(std::vector<double>{1.0}), ContractViolation);
}

TEST_CASE("RMSprop first step") {
  RmsProp opt(2, RmsPropConfig{});
  std::vector<double> params = {0.0, 1.0};
  opt.update(params, std::vector<double>{1.0, 0.0});
  CHECK(params[0] == doctest::Approx(-4.9497e-3).epsilon(1e-4));
  CHECK(params[1] == 1.0);
  CHECK(opt.mean_square()[0] == doctest::Approx(0.01));
}

TEST_CASE("RMSprop rejects non-finite gradients untouched") {
  RmsProp opt(2, RmsPropConfig{});
  std::vector<double> params = {0.5, 0.5};
  CHECK_THROWS_AS(opt.update(params, std::vector<double>{1.0, std::nan("")}), NumericalError);
  CHECK_THROWS_AS(opt.update(params, std::vector<double>{INFINITY, 0.0}), NumericalError);
  CHECK(params == std::vector<double>{0.5, 0.5});
  CHECK(opt.mean_square() == std::vector<double>{0.0, 0.0});
}
