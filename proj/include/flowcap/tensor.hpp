#pragma once

// Dense row-major tensors with define-by-run reverse-mode differentiation.
//
// A BasicTensor<T> is a shared handle to a TensorNode<T>. Ops that receive at
// least one requires_grad input (while grad mode is on) record their output
// node on the calling thread's Tape<T>. backward() walks that tape once in
// reverse creation order, which is a valid reverse topological order, and
// then releases it.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "flowcap/errors.hpp"

namespace flowcap {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <class T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::function<void(TensorNode&)> backward_fn;
    std::size_t tape_generation = 0;
    std::size_t tape_index = 0;
    bool on_tape = false;

    T* grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), T(0));
        return grad.data();
    }
};

// Thread-local switch; inference paths turn recording off.
class GradMode {
public:
    static bool enabled();
    static void set_enabled(bool on);
};

class NoGradGuard {
public:
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <class T>
class Tape {
public:
    static Tape& current();

    void record(const std::shared_ptr<TensorNode<T>>& node);
    // Releases all recorded nodes; tensors still held by callers stay alive.
    void clear();
    std::size_t size() const { return nodes_.size(); }
    std::size_t generation() const { return generation_; }
    const std::shared_ptr<TensorNode<T>>& at(std::size_t i) const { return nodes_[i]; }

private:
    std::vector<std::shared_ptr<TensorNode<T>>> nodes_;
    std::size_t generation_ = 1;
};

template <class T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

    static BasicTensor zeros(const Shape& shape, bool requires_grad = false);
    static BasicTensor full(const Shape& shape, T value, bool requires_grad = false);
    static BasicTensor from(const Shape& shape, std::vector<T> values, bool requires_grad = false);
    static BasicTensor scalar(T value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const;
    std::size_t numel() const { return node_->value.size(); }
    // Matrix helpers; vectors are treated as a single row.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<T> data() { return node_->value; }
    std::span<const T> data() const { return node_->value; }
    std::span<const T> grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    T item() const;
    T at(std::size_t i) const { return node_->value[i]; }
    T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

    bool requires_grad() const { return node_->requires_grad; }
    BasicTensor& set_requires_grad(bool on);
    void zero_grad() { node_->grad.clear(); }
    // Constant copy sharing no graph history.
    BasicTensor detach() const;

    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }
    bool same(const BasicTensor& other) const { return node_ == other.node_; }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Reverse sweep from a scalar loss. Gradients accumulate into every
// requires_grad leaf reachable from the loss; the tape is then released.
template <class T>
void backward(const BasicTensor<T>& loss);

// Builds an op result, recording it when grad mode is on and any input needs grad.
template <class T>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                           std::vector<std::shared_ptr<TensorNode<T>>> inputs,
                           std::function<void(TensorNode<T>&)> backward_fn);

template <class To, class From>
BasicTensor<To> cast(const BasicTensor<From>& t, bool requires_grad = false);

extern template class Tape<float>;
extern template class Tape<double>;
extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace flowcap
