#include "tbqn/tensor.h"

namespace tbqn {

namespace detail {
bool& grad_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

bool grad_enabled() { return detail::grad_flag(); }

NoGradGuard::NoGradGuard() : prev_(detail::grad_flag()) { detail::grad_flag() = false; }
NoGradGuard::~NoGradGuard() { detail::grad_flag() = prev_; }

}  // namespace tbqn
