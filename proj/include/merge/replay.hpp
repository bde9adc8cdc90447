#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "merge/rng.hpp"

namespace merge {

// Fixed-capacity FIFO experience store with uniform sampling.
template <class T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0)
      throw std::invalid_argument("ReplayBuffer: capacity must be > 0");
    items_.reserve(capacity_);
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[head_] = std::move(item);
      head_ = (head_ + 1) % capacity_;
    }
  }

  const T& operator[](std::size_t i) const { return items_[i]; }

  // Uniform sample with replacement.
  std::vector<const T*> sample(std::size_t n, Rng& rng) const {
    if (items_.empty())
      throw std::logic_error("ReplayBuffer::sample: buffer is empty");
    std::vector<const T*> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      out.push_back(&items_[static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(items_.size())))]);
    return out;
  }

  template <class Pred>
  bool contains(Pred pred) const {
    for (const T& it : items_)
      if (pred(it)) return true;
    return false;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next eviction slot once full
  std::vector<T> items_;
};

}  // namespace merge
