#pragma once

#include <exception>
#include <vector>

namespace wd::harness {

// Exceptions must not escape an OpenMP region. Each item stores its own and
// the lowest-index one is rethrown afterwards, so the reported error does
// not depend on scheduling.
class ParallelErrors {
 public:
  explicit ParallelErrors(std::size_t n) : errors_(n) {}

  template <class F>
  void run(std::size_t i, F&& f) {
    try {
      f();
    } catch (...) {
      errors_[i] = std::current_exception();
    }
  }

  bool any() const {
    for (const auto& e : errors_)
      if (e) return true;
    return false;
  }

  void rethrow() const {
    for (const auto& e : errors_)
      if (e) std::rethrow_exception(e);
  }

 private:
  std::vector<std::exception_ptr> errors_;
};

}  // namespace wd::harness
