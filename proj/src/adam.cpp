#include "stpose/adam.hpp"

#include <cmath>

namespace stpose {

template <class T>
Adam<T>::Adam(ParamStore<T>& store, Hyper hyper) : store_(store), hyper_(hyper) {
  slots_.resize(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    slots_[i].m.assign(store.at(i).numel(), T(0));
    slots_[i].v.assign(store.at(i).numel(), T(0));
  }
}

template <class T>
void Adam<T>::update(double lr) {
  ++step_;
  const T b1 = static_cast<T>(hyper_.beta1);
  const T b2 = static_cast<T>(hyper_.beta2);
  const T eps = static_cast<T>(hyper_.eps);
  const T corr1 = static_cast<T>(1.0 - std::pow(hyper_.beta1, static_cast<double>(step_)));
  const T corr2 = static_cast<T>(1.0 - std::pow(hyper_.beta2, static_cast<double>(step_)));
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    Param<T>& p = store_.at(i);
    Slot& s = slots_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const T g = p.grad[j];
      s.m[j] = b1 * s.m[j] + (T(1) - b1) * g;
      s.v[j] = b2 * s.v[j] + (T(1) - b2) * g * g;
      const T mhat = s.m[j] / corr1;
      const T vhat = s.v[j] / corr2;
      p.value[j] -= rate * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace stpose
