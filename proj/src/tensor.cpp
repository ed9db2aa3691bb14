#include "flowcap/tensor.hpp"

#include <sstream>

namespace flowcap {

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Shape: return "shape";
        case ErrorKind::Contract: return "contract";
        case ErrorKind::Vocabulary: return "vocabulary";
        case ErrorKind::Length: return "length";
        case ErrorKind::Format: return "format";
        case ErrorKind::Data: return "data";
        case ErrorKind::Config: return "config";
        case ErrorKind::Numeric: return "numeric";
    }
    return "unknown";
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

template <class T>
Tape<T>& Tape<T>::current() {
    thread_local Tape<T> tape;
    return tape;
}

template <class T>
void Tape<T>::record(const std::shared_ptr<TensorNode<T>>& node) {
    node->on_tape = true;
    node->tape_generation = generation_;
    node->tape_index = nodes_.size();
    nodes_.push_back(node);
}

template <class T>
void Tape<T>::clear() {
    for (auto& n : nodes_) {
        n->on_tape = false;
        // Drop closures and parent links so intermediate buffers are freed
        // even while the caller still holds an output handle.
        n->backward_fn = nullptr;
        n->inputs.clear();
    }
    nodes_.clear();
    ++generation_;
}

template <class T>
BasicTensor<T> BasicTensor<T>::zeros(const Shape& shape, bool requires_grad) {
    return full(shape, T(0), requires_grad);
}

template <class T>
BasicTensor<T> BasicTensor<T>::full(const Shape& shape, T value, bool requires_grad) {
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = shape;
    node->value.assign(shape_numel(shape), value);
    node->requires_grad = requires_grad;
    return BasicTensor(std::move(node));
}

template <class T>
BasicTensor<T> BasicTensor<T>::from(const Shape& shape, std::vector<T> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = shape;
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return BasicTensor(std::move(node));
}

template <class T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
    return from(Shape{}, std::vector<T>{value}, requires_grad);
}

template <class T>
std::size_t BasicTensor<T>::dim(std::size_t i) const {
    if (i >= rank()) throw ShapeError("axis " + std::to_string(i) + " out of range for " + shape_str(shape()));
    return node_->shape[i];
}

template <class T>
std::size_t BasicTensor<T>::rows() const {
    if (rank() == 2) return node_->shape[0];
    if (rank() == 1) return 1;
    throw ShapeError("expected vector or matrix, got " + shape_str(shape()));
}

template <class T>
std::size_t BasicTensor<T>::cols() const {
    if (rank() == 2) return node_->shape[1];
    if (rank() == 1) return node_->shape[0];
    throw ShapeError("expected vector or matrix, got " + shape_str(shape()));
}

template <class T>
T BasicTensor<T>::item() const {
    if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
}

template <class T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
}

template <class T>
BasicTensor<T> BasicTensor<T>::detach() const {
    return from(shape(), node_->value, false);
}

template <class T>
void backward(const BasicTensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward() requires a scalar loss, got " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    }
    auto& tape = Tape<T>::current();
    auto& root = loss.node();
    if (!root->requires_grad) throw ContractError("backward() on a loss that does not require grad");
    if (!root->on_tape || root->tape_generation != tape.generation()) {
        if (!root->backward_fn && root->inputs.empty()) {
            // Leaf loss: d loss / d loss = 1.
            root->grad_buffer()[0] += T(1);
            return;
        }
        throw ContractError("backward() on a loss that is not on the current tape");
    }
    root->grad_buffer()[0] += T(1);
    for (std::size_t i = root->tape_index + 1; i-- > 0;) {
        auto& node = tape.at(i);
        if (node->grad.empty() || !node->backward_fn) continue;
        node->backward_fn(*node);
    }
    tape.clear();
}

template <class T>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                           std::vector<std::shared_ptr<TensorNode<T>>> inputs,
                           std::function<void(TensorNode<T>&)> backward_fn) {
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    bool needs = false;
    if (GradMode::enabled()) {
        for (auto& in : inputs) needs = needs || in->requires_grad;
    }
    if (needs) {
        node->requires_grad = true;
        node->inputs = std::move(inputs);
        node->backward_fn = std::move(backward_fn);
        Tape<T>::current().record(node);
    }
    return BasicTensor<T>(std::move(node));
}

template <class To, class From>
BasicTensor<To> cast(const BasicTensor<From>& t, bool requires_grad) {
    std::vector<To> v(t.data().begin(), t.data().end());
    return BasicTensor<To>::from(t.shape(), std::move(v), requires_grad);
}

template class Tape<float>;
template class Tape<double>;
template class BasicTensor<float>;
template class BasicTensor<double>;
template void backward(const BasicTensor<float>&);
template void backward(const BasicTensor<double>&);
template BasicTensor<float> make_result(const char*, Shape, std::vector<float>,
                                        std::vector<std::shared_ptr<TensorNode<float>>>,
                                        std::function<void(TensorNode<float>&)>);
template BasicTensor<double> make_result(const char*, Shape, std::vector<double>,
                                         std::vector<std::shared_ptr<TensorNode<double>>>,
                                         std::function<void(TensorNode<double>&)>);
template BasicTensor<float> cast(const BasicTensor<float>&, bool);
template BasicTensor<double> cast(const BasicTensor<float>&, bool);
template BasicTensor<float> cast(const BasicTensor<double>&, bool);
template BasicTensor<double> cast(const BasicTensor<double>&, bool);

}  // namespace flowcap
