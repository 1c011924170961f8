#include "detsel/replay_buffer.hpp"

#include "detsel/error.hpp"

namespace detsel {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ValidationError("replay capacity must be positive");
  slots_.reserve(capacity);
}

void ReplayBuffer::push(StoredTrace trace) {
  if (slots_.size() < capacity_) {
    slots_.push_back(std::move(trace));
    return;
  }
  slots_[head_] = std::move(trace);
  head_ = (head_ + 1) % capacity_;
}

std::vector<const StoredTrace*> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  std::vector<const StoredTrace*> out;
  if (slots_.empty()) return out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) out.push_back(&slots_[rng.index(slots_.size())]);
  return out;
}

const StoredTrace& ReplayBuffer::at(std::size_t i) const {
  if (i >= slots_.size()) throw ContractViolation("replay index out of range");
  return slots_[(head_ + i) % slots_.size()];
}

}  // namespace detsel
