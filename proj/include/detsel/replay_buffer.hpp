#ifndef DETSEL_REPLAY_BUFFER_HPP_
#define DETSEL_REPLAY_BUFFER_HPP_

#include <cstdint>
#include <vector>

#include "detsel/env.hpp"
#include "detsel/rng.hpp"

namespace detsel {

// One episode as seen by the learner: the states visited, actions taken,
// rewards, and the behavior policy's probability of each action.
struct StoredTrace {
  std::uint64_t record_id = 0;
  std::vector<StateVector> states;
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<double> behavior_probs;

  std::size_t length() const { return actions.size(); }
};

// Fixed-capacity FIFO ring of whole episodes.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(StoredTrace trace);
  // Uniform draws with replacement; empty when the buffer is empty.
  std::vector<const StoredTrace*> sample(std::size_t batch, Rng& rng) const;

  std::size_t size() const { return slots_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return slots_.empty(); }
  // i = 0 is the oldest stored trace.
  const StoredTrace& at(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::vector<StoredTrace> slots_;
};

}  // namespace detsel

#endif  // DETSEL_REPLAY_BUFFER_HPP_
