#pragma once

#include <functional>
#include <string>
#include <vector>

#include "wxadapt/autograd/tensor.hpp"

namespace wxa::ag {

/// Ordered record of differentiable operations. Ops append a backward
/// closure as they run; backward() replays them in exact reverse order.
/// A tape is single-use: backward() may run once, then clear() before reuse.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* op, std::function<void()> backward) {
    if (consumed_) throw UsageError(std::string("Tape: cannot record '") + op + "' after backward; call clear()");
    entries_.push_back({op, std::move(backward)});
  }

  void backward(Tensor<T>& loss) {
    if (consumed_) throw UsageError("Tape: backward called twice without re-recording");
    if (loss.numel() != 1) throw ShapeError("Tape: backward needs a scalar loss, got " + shape_string(loss.shape()));
    consumed_ = true;
    if (!loss.requires_grad()) return;
    loss.grad()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
  }

  void clear() {
    entries_.clear();
    consumed_ = false;
  }

  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] bool consumed() const { return consumed_; }
  [[nodiscard]] std::vector<std::string> op_names() const {
    std::vector<std::string> names;
    names.reserve(entries_.size());
    for (const auto& e : entries_) names.emplace_back(e.op);
    return names;
  }

 private:
  struct Entry {
    const char* op;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

}  // namespace wxa::ag
