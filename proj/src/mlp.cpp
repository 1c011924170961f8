#include "detsel/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "detsel/error.hpp"

namespace detsel {

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  const double m = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (auto& v : out) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : out) v /= sum;
  return out;
}

Mlp::Mlp(std::size_t in, std::size_t hidden, std::size_t out, OutputHead head)
    : in_(in), hidden_(hidden), out_(out), head_(head), params_(hidden * in + hidden + out * hidden + out, 0.0) {
  if (in == 0 || hidden == 0 || out == 0) throw ContractViolation("layer sizes must be positive");
}

Mlp Mlp::random(std::size_t in, std::size_t hidden, std::size_t out, OutputHead head, Rng& rng,
                double output_scale) {
  Mlp net(in, hidden, out, head);
  const double bound1 = std::sqrt(6.0 / static_cast<double>(in));
  for (std::size_t i = 0; i < hidden * in; ++i) net.params_[net.w1_offset() + i] = rng.uniform(-bound1, bound1);
  const double bound2 = output_scale * std::sqrt(6.0 / static_cast<double>(hidden + out));
  for (std::size_t i = 0; i < out * hidden; ++i) net.params_[net.w2_offset() + i] = rng.uniform(-bound2, bound2);
  return net;
}

Mlp::Activations Mlp::forward_cached(std::span<const double> x) const {
  if (x.size() != in_) throw ContractViolation("input dimension mismatch");
  Activations a;
  a.input.assign(x.begin(), x.end());
  a.hidden_pre.assign(hidden_, 0.0);
  a.hidden.assign(hidden_, 0.0);
  const double* w1 = params_.data() + w1_offset();
  const double* b1 = params_.data() + b1_offset();
  for (std::size_t h = 0; h < hidden_; ++h) {
    double z = b1[h];
    for (std::size_t i = 0; i < in_; ++i) z += w1[h * in_ + i] * x[i];
    a.hidden_pre[h] = z;
    a.hidden[h] = z > 0.0 ? z : 0.0;
  }
  a.logits.assign(out_, 0.0);
  const double* w2 = params_.data() + w2_offset();
  const double* b2 = params_.data() + b2_offset();
  for (std::size_t o = 0; o < out_; ++o) {
    double z = b2[o];
    for (std::size_t h = 0; h < hidden_; ++h) z += w2[o * hidden_ + h] * a.hidden[h];
    a.logits[o] = z;
  }
  a.output = head_ == OutputHead::kSoftmax ? softmax(a.logits) : a.logits;
  return a;
}

std::vector<double> Mlp::forward(std::span<const double> x) const { return forward_cached(x).output; }

void Mlp::backward(const Activations& acts, std::span<const double> grad_output, std::span<double> grads) const {
  if (grad_output.size() != out_) throw ContractViolation("upstream gradient dimension mismatch");
  if (head_ == OutputHead::kLinear) {
    backward_logits(acts, grad_output, grads);
    return;
  }
  // Softmax Jacobian: dz_j = p_j * (g_j - sum_i g_i p_i).
  double dot = 0.0;
  for (std::size_t o = 0; o < out_; ++o) dot += grad_output[o] * acts.output[o];
  std::vector<double> grad_logits(out_);
  for (std::size_t o = 0; o < out_; ++o) grad_logits[o] = acts.output[o] * (grad_output[o] - dot);
  backward_logits(acts, grad_logits, grads);
}

void Mlp::backward_logits(const Activations& acts, std::span<const double> grad_logits,
                          std::span<double> grads) const {
  if (grad_logits.size() != out_) throw ContractViolation("upstream gradient dimension mismatch");
  if (grads.size() != params_.size()) throw ContractViolation("gradient buffer size mismatch");
  const double* w2 = params_.data() + w2_offset();
  double* gw1 = grads.data() + w1_offset();
  double* gb1 = grads.data() + b1_offset();
  double* gw2 = grads.data() + w2_offset();
  double* gb2 = grads.data() + b2_offset();

  std::vector<double> grad_hidden(hidden_, 0.0);
  for (std::size_t o = 0; o < out_; ++o) {
    const double g = grad_logits[o];
    gb2[o] += g;
    for (std::size_t h = 0; h < hidden_; ++h) {
      gw2[o * hidden_ + h] += g * acts.hidden[h];
      grad_hidden[h] += g * w2[o * hidden_ + h];
    }
  }
  for (std::size_t h = 0; h < hidden_; ++h) {
    if (acts.hidden_pre[h] <= 0.0) continue;  // dead unit
    const double g = grad_hidden[h];
    gb1[h] += g;
    for (std::size_t i = 0; i < in_; ++i) gw1[h * in_ + i] += g * acts.input[i];
  }
}

bool Mlp::all_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace detsel
