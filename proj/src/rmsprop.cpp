#include "detsel/rmsprop.hpp"

#include <cmath>
#include <string>

#include "detsel/error.hpp"

namespace detsel {

void RmsProp::update(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != mean_square_.size()) {
    throw ContractViolation("RMSprop shape mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericalError("RMSprop update rejected: gradient " + std::to_string(i) + " is not finite");
    }
  }
  const double keep = config_.decay;
  const double mix = 1.0 - config_.decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    mean_square_[i] = keep * mean_square_[i] + mix * g * g;
    params[i] -= config_.learning_rate * g / std::sqrt(mean_square_[i] + config_.epsilon);
  }
}

}  // namespace detsel
