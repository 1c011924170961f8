#ifndef DETSEL_RMSPROP_HPP_
#define DETSEL_RMSPROP_HPP_

#include <span>
#include <vector>

namespace detsel {

struct RmsPropConfig {
  double learning_rate = 7e-4;
  double decay = 0.99;
  double epsilon = 1e-2;  // added inside the square root
};

// avg <- decay * avg + (1 - decay) * g^2
// p   <- p - lr * g / sqrt(avg + epsilon)
class RmsProp {
 public:
  RmsProp() = default;
  RmsProp(std::size_t num_params, RmsPropConfig config) : config_(config), mean_square_(num_params, 0.0) {}

  // Throws NumericalError, leaving params and state untouched, if any
  // gradient is non-finite.
  void update(std::span<double> params, std::span<const double> grads);

  const RmsPropConfig& config() const { return config_; }
  const std::vector<double>& mean_square() const { return mean_square_; }

 private:
  RmsPropConfig config_;
  std::vector<double> mean_square_;
};

}  // namespace detsel

#endif  // DETSEL_RMSPROP_HPP_
