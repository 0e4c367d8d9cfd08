#include "qscreen/tensor.hpp"

#include <algorithm>

namespace qscreen {

template <class T>
Tensor<T>::Tensor(Shape dims, bool requires_grad) {
  for (int d : dims) {
    if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(dims));
  }
  s_ = std::make_shared<TensorStorage<T>>();
  s_->dims = std::move(dims);
  s_->values.assign(static_cast<size_t>(numel(s_->dims)), T(0));
  if (requires_grad) {
    s_->requires_grad = true;
    s_->grad.assign(s_->values.size(), T(0));
  }
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape dims) {
  return Tensor(std::move(dims));
}

template <class T>
Tensor<T> Tensor<T>::full(Shape dims, T value) {
  Tensor t(std::move(dims));
  std::fill(t.s_->values.begin(), t.s_->values.end(), value);
  return t;
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value) {
  Tensor t(Shape{1});
  t.s_->values[0] = value;
  return t;
}

template <class T>
Tensor<T> Tensor<T>::from_values(Shape dims, std::vector<T> values) {
  Tensor t(std::move(dims));
  if (values.size() != t.s_->values.size()) {
    throw ShapeError("from_values: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(t.dims()));
  }
  t.s_->values = std::move(values);
  return t;
}

template <class T>
std::span<T> Tensor<T>::grad() {
  if (s_->grad.empty()) throw ShapeError("tensor has no gradient buffer");
  return s_->grad;
}

template <class T>
std::span<const T> Tensor<T>::grad() const {
  if (s_->grad.empty()) throw ShapeError("tensor has no gradient buffer");
  return s_->grad;
}

template <class T>
void Tensor<T>::set_requires_grad(bool on) {
  s_->requires_grad = on;
  if (on) {
    if (s_->grad.empty()) s_->grad.assign(s_->values.size(), T(0));
  } else {
    s_->grad.clear();
    s_->grad.shrink_to_fit();
  }
}

template <class T>
void Tensor<T>::zero_grad() {
  std::fill(s_->grad.begin(), s_->grad.end(), T(0));
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  Tensor t(s_->dims);
  t.s_->values = s_->values;
  return t;
}

template <class T>
T Tensor<T>::item() const {
  if (s_->values.size() != 1) {
    throw ShapeError("item() on non-scalar tensor " + shape_str(s_->dims));
  }
  return s_->values[0];
}

template <class T>
void Tape<T>::record(TensorStorage<T>* output, std::function<void()> backward_fn) {
  entries_.push_back(Entry{output, std::move(backward_fn)});
}

template <class T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + shape_str(loss.dims()));
  }
  if (!loss.requires_grad()) return;  // constant graph, nothing to do
  for (auto& e : entries_) {
    if (!e.output->leaf && !e.output->grad.empty()) {
      std::fill(e.output->grad.begin(), e.output->grad.end(), T(0));
    }
  }
  loss.node()->grad[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    it->fn();
  }
}

template <class T>
void Tape<T>::clear() {
  entries_.clear();
}

template struct TensorStorage<float>;
template struct TensorStorage<double>;
template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace qscreen
