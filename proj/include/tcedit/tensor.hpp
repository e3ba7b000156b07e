#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace tcedit {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    bool requires_grad = false;
    bool is_leaf = true;
};

// Shared handle to a dense row-major array. Copies alias the same storage.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);
    static Tensor from_node(std::shared_ptr<TensorNode<T>> node);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const { return node_->value.size(); }

    std::span<const T> data() const { return node_->value; }
    // Writable access for leaves only (optimizer updates between passes).
    std::span<T> mutable_data();

    T item() const;
    T at(std::size_t row, std::size_t col) const;

    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf; }

    // Deep copy with a fresh node.
    Tensor clone(bool requires_grad) const;
    Tensor detach() const { return clone(false); }

    TensorNode<T>* node() const { return node_.get(); }
    const std::shared_ptr<TensorNode<T>>& node_ptr() const { return node_; }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

template <typename T, typename U>
Tensor<U> tensor_cast(const Tensor<T>& t, bool requires_grad) {
    std::vector<U> values(t.data().begin(), t.data().end());
    return Tensor<U>(t.shape(), std::move(values), requires_grad);
}

// Gradients produced by one backward pass, keyed by tensor identity.
template <typename T>
class Gradients {
public:
    bool contains(const Tensor<T>& t) const { return grads_.count(t.node()) != 0; }
    // Zeros when the tensor did not influence the loss.
    std::vector<T> of(const Tensor<T>& t) const;
    std::unordered_map<const TensorNode<T>*, std::vector<T>>& raw() { return grads_; }

private:
    std::unordered_map<const TensorNode<T>*, std::vector<T>> grads_;
};

// Per-input gradient buffers handed to a backward rule; null entries mark
// inputs that need no gradient.
template <typename T>
using GradSlots = std::span<std::vector<T>* const>;

template <typename T>
using BackwardRule = std::function<void(std::span<const T> grad_out, GradSlots<T> grad_in)>;

// Ordered log of operations recorded during one forward pass.
template <typename T>
class Tape {
public:
    struct Record {
        std::vector<std::shared_ptr<TensorNode<T>>> inputs;
        std::shared_ptr<TensorNode<T>> output;
        BackwardRule<T> backward;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::size_t size() const { return records_.size(); }
    const std::vector<Record>& records() const { return records_; }

    // Replays the log in reverse from a scalar loss and clears it.
    Gradients<T> backward(const Tensor<T>& loss);

    void push(Record record) { records_.push_back(std::move(record)); }

    static Tape* active();
    static void set_active(Tape* tape);

private:
    std::vector<Record> records_;
};

// Makes a tape the recording target for this thread while in scope.
template <typename T>
class TapeScope {
public:
    explicit TapeScope(Tape<T>& tape) : previous_(Tape<T>::active()) { Tape<T>::set_active(&tape); }
    ~TapeScope() { Tape<T>::set_active(previous_); }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<T>* previous_;
};

// Builds an op result and records it on the active tape when any input needs
// a gradient. Op implementations and custom ops (tests) go through this.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::vector<Tensor<T>> inputs,
                      BackwardRule<T> backward);

}  // namespace tcedit
