#include "tcedit/tensor.hpp"

#include <cmath>
#include <sstream>

namespace tcedit {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (const auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            os << ',';
        }
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
    for (const auto d : shape) {
        if (d == 0) {
            throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
        }
    }
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("tensor of shape " + shape_to_string(shape) + " needs " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(values.size()));
    }
    node_ = std::make_shared<TensorNode<T>>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<TensorNode<T>> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                             shape_to_string(shape()));
    }
    return node_->shape[axis];
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
    if (!node_->is_leaf) {
        throw std::logic_error("mutable_data() is only allowed on leaf tensors");
    }
    return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
    if (size() != 1) {
        throw DimensionError("item() needs a single-element tensor, got " + shape_to_string(shape()));
    }
    return node_->value[0];
}

template <typename T>
T Tensor<T>::at(std::size_t row, std::size_t col) const {
    if (rank() != 2 || row >= dim(0) || col >= dim(1)) {
        throw DimensionError("at(" + std::to_string(row) + "," + std::to_string(col) +
                             ") invalid for shape " + shape_to_string(shape()));
    }
    return node_->value[row * dim(1) + col];
}

template <typename T>
Tensor<T> Tensor<T>::clone(bool requires_grad) const {
    return Tensor(shape(), node_->value, requires_grad);
}

template <typename T>
std::vector<T> Gradients<T>::of(const Tensor<T>& t) const {
    auto it = grads_.find(t.node());
    if (it == grads_.end()) {
        return std::vector<T>(t.size(), T(0));
    }
    return it->second;
}

namespace {

template <typename T>
Tape<T>*& active_slot() {
    thread_local Tape<T>* tape = nullptr;
    return tape;
}

}  // namespace

template <typename T>
Tape<T>* Tape<T>::active() {
    return active_slot<T>();
}

template <typename T>
void Tape<T>::set_active(Tape* tape) {
    active_slot<T>() = tape;
}

template <typename T>
Gradients<T> Tape<T>::backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw DimensionError("backward() needs a scalar loss, got " +
                             (loss.defined() ? shape_to_string(loss.shape()) : std::string("undefined")));
    }
    Gradients<T> result;
    auto& grads = result.raw();
    if (!loss.requires_grad()) {
        records_.clear();
        return result;
    }
    grads[loss.node()] = std::vector<T>{T(1)};

    std::vector<std::vector<T>*> slots;
    for (auto rec = records_.rbegin(); rec != records_.rend(); ++rec) {
        auto out_it = grads.find(rec->output.get());
        if (out_it == grads.end()) {
            continue;
        }
        slots.assign(rec->inputs.size(), nullptr);
        for (std::size_t k = 0; k < rec->inputs.size(); ++k) {
            auto* in = rec->inputs[k].get();
            if (!in->requires_grad) {
                continue;
            }
            auto& g = grads[in];
            if (g.empty()) {
                g.assign(in->value.size(), T(0));
            }
            slots[k] = &g;
        }
        // find() again: inserting input slots may rehash the map.
        out_it = grads.find(rec->output.get());
        rec->backward(std::span<const T>(out_it->second), GradSlots<T>(slots));
        if (!rec->output->is_leaf) {
            grads.erase(out_it);
        }
    }
    records_.clear();
    return result;
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::vector<Tensor<T>> inputs,
                      BackwardRule<T> backward) {
    Tensor<T> out(std::move(shape), std::move(values), false);
    Tape<T>* tape = Tape<T>::active();
    if (tape == nullptr) {
        return out;
    }
    bool needs_grad = false;
    for (const auto& in : inputs) {
        needs_grad = needs_grad || in.requires_grad();
    }
    if (!needs_grad) {
        return out;
    }
    out.node()->requires_grad = true;
    out.node()->is_leaf = false;
    typename Tape<T>::Record rec;
    rec.inputs.reserve(inputs.size());
    for (auto& in : inputs) {
        rec.inputs.push_back(in.node_ptr());
    }
    rec.output = out.node_ptr();
    rec.backward = std::move(backward);
    tape->push(std::move(rec));
    return out;
}

template class Tensor<float>;
template class Tensor<double>;
template class Gradients<float>;
template class Gradients<double>;
template class Tape<float>;
template class Tape<double>;
template Tensor<float> make_result(Shape, std::vector<float>, std::vector<Tensor<float>>, BackwardRule<float>);
template Tensor<double> make_result(Shape, std::vector<double>, std::vector<Tensor<double>>, BackwardRule<double>);

}  // namespace tcedit
