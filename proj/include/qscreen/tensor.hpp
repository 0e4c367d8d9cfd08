#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "qscreen/common.hpp"

namespace qscreen {

// Dense N-d float array with optional gradient buffer.
//
// Invariants:
//  - numel(dims) == values.size()
//  - grad has the same length as values iff requires_grad, else it is empty
//  - leaf is true for user-created tensors; op outputs are non-leaf
template <class T>
struct TensorStorage {
  Shape dims;
  std::vector<T> values;
  std::vector<T> grad;
  bool requires_grad = false;
  bool leaf = true;
};

// Value-semantics handle to shared storage. Copying a Tensor aliases the
// underlying buffer, which is what the tape relies on for identity.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims, bool requires_grad = false);

  static Tensor zeros(Shape dims);
  static Tensor full(Shape dims, T value);
  static Tensor scalar(T value);
  static Tensor from_values(Shape dims, std::vector<T> values);

  bool defined() const { return s_ != nullptr; }
  const Shape& dims() const { return s_->dims; }
  int dim(int i) const { return s_->dims[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(s_->dims.size()); }
  int64_t size() const { return static_cast<int64_t>(s_->values.size()); }

  std::span<T> values() { return s_->values; }
  std::span<const T> values() const { return s_->values; }
  std::span<T> grad();
  std::span<const T> grad() const;

  bool requires_grad() const { return s_->requires_grad; }
  bool has_grad() const { return !s_->grad.empty(); }
  bool is_leaf() const { return s_->leaf; }
  void set_requires_grad(bool on);
  void mark_output() { s_->leaf = false; }
  void zero_grad();

  // Copy without gradient tracking; the result is a constant to the tape.
  Tensor detach() const;

  // Scalar access (rank-agnostic, requires size() == 1).
  T item() const;

  TensorStorage<T>* node() const { return s_.get(); }

 private:
  std::shared_ptr<TensorStorage<T>> s_;
};

// Reverse-mode tape. Operations are recorded in execution order; backward
// replays them in exact reverse order, which makes gradient accumulation
// deterministic bit-for-bit.
//
// A tape and the tensors recorded on it are confined to one thread.
template <class T>
class Tape {
 public:
  void record(TensorStorage<T>* output, std::function<void()> backward_fn);

  // Seeds d(loss)/d(loss) = 1 and propagates. Non-leaf gradients are reset
  // at the start of each call, so repeated calls accumulate exactly one
  // extra copy of the gradient into every leaf.
  void backward(const Tensor<T>& loss);

  void clear();
  size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    TensorStorage<T>* output;
    std::function<void()> fn;
  };
  std::vector<Entry> entries_;
};

extern template struct TensorStorage<float>;
extern template struct TensorStorage<double>;
extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace qscreen
