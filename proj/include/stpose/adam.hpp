#pragma once

#include <vector>

#include "stpose/params.hpp"

namespace stpose {

// Bias-corrected Adam over one ParamStore. Slots line up with registration
// order; step counts whole updates (all parameters advance together).
template <class T>
class Adam {
 public:
  struct Hyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(ParamStore<T>& store, Hyper hyper);

  // One update from the gradients currently in the store; `lr` overrides the
  // base rate for this step (the schedule passes the decayed value).
  void update(double lr);
  void update() { update(hyper_.lr); }

  long step() const { return step_; }
  const Hyper& hyper() const { return hyper_; }

 private:
  struct Slot {
    std::vector<T> m, v;
  };
  ParamStore<T>& store_;
  Hyper hyper_;
  std::vector<Slot> slots_;
  long step_ = 0;
};

}  // namespace stpose
