#ifndef DETSEL_MLP_HPP_
#define DETSEL_MLP_HPP_

#include <span>
#include <string>
#include <vector>

#include "detsel/rng.hpp"

namespace detsel {

enum class OutputHead { kSoftmax, kLinear };

// in -> hidden (ReLU) -> out perceptron with parameters in one flat buffer,
// laid out as [W1 (hidden x in, row-major) | b1 | W2 (out x hidden) | b2].
class Mlp {
 public:
  struct Activations {
    std::vector<double> input;
    std::vector<double> hidden_pre;
    std::vector<double> hidden;
    std::vector<double> logits;
    std::vector<double> output;
  };

  Mlp() = default;
  // Zero-initialized network.
  Mlp(std::size_t in, std::size_t hidden, std::size_t out, OutputHead head);

  // He-uniform first layer; second layer uniform with bound
  // output_scale * sqrt(6 / (hidden + out)).
  static Mlp random(std::size_t in, std::size_t hidden, std::size_t out, OutputHead head, Rng& rng,
                    double output_scale = 1.0);

  std::vector<double> forward(std::span<const double> x) const;
  Activations forward_cached(std::span<const double> x) const;

  // Accumulates dL/dparams into `grads` given dL/d(output) (after the head).
  void backward(const Activations& acts, std::span<const double> grad_output, std::span<double> grads) const;
  // Same, given dL/d(logits) (before the head).
  void backward_logits(const Activations& acts, std::span<const double> grad_logits,
                       std::span<double> grads) const;

  std::size_t input_size() const { return in_; }
  std::size_t hidden_size() const { return hidden_; }
  std::size_t output_size() const { return out_; }
  OutputHead head() const { return head_; }

  std::size_t num_params() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  bool all_finite() const;

  // Offsets into the flat buffer.
  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return hidden_ * in_; }
  std::size_t w2_offset() const { return b1_offset() + hidden_; }
  std::size_t b2_offset() const { return w2_offset() + out_ * hidden_; }

  bool operator==(const Mlp&) const = default;

 private:
  std::size_t in_ = 0;
  std::size_t hidden_ = 0;
  std::size_t out_ = 0;
  OutputHead head_ = OutputHead::kLinear;
  std::vector<double> params_;
};

std::vector<double> softmax(std::span<const double> logits);

}  // namespace detsel

#endif  // DETSEL_MLP_HPP_
