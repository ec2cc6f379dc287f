#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "mapfuse/errors.hpp"
#include "mapfuse/rng.hpp"

namespace mapfuse {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace detail {

template <typename T>
struct TensorStorage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty unless requires_grad
    bool requires_grad = false;
};

}  // namespace detail

// Dense row-major tensor; a shared handle into storage owned by the graph.
// Scalars use shape {1}.
template <typename T>
class Tensor {
public:
    Tensor() : s_(std::make_shared<detail::TensorStorage<T>>()) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        Tensor t;
        for (int e : shape)
            if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
        t.s_->shape = std::move(shape);
        t.s_->data.assign(numel(t.s_->shape), T(0));
        t.set_requires_grad(requires_grad);
        return t;
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        std::fill(t.data().begin(), t.data().end(), value);
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
        Tensor t;
        if (static_cast<int64_t>(values.size()) != numel(shape))
            throw DimensionError("data length " + std::to_string(values.size()) +
                                 " does not match shape " + shape_str(shape));
        t.s_->shape = std::move(shape);
        t.s_->data = std::move(values);
        t.set_requires_grad(requires_grad);
        return t;
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return from({1}, {value}, requires_grad);
    }

    static Tensor uniform(Shape shape, Rng& rng, T lo, T hi, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    const Shape& shape() const { return s_->shape; }
    int dim(int axis) const { return s_->shape.at(axis); }
    int rank() const { return static_cast<int>(s_->shape.size()); }
    int64_t size() const { return static_cast<int64_t>(s_->data.size()); }
    bool is_scalar() const { return s_->data.size() == 1; }

    std::vector<T>& data() { return s_->data; }
    const std::vector<T>& data() const { return s_->data; }

    bool requires_grad() const { return s_->requires_grad; }
    void set_requires_grad(bool rg) {
        s_->requires_grad = rg;
        if (rg)
            s_->grad.assign(s_->data.size(), T(0));
        else
            s_->grad.clear();
    }

    bool has_grad() const { return !s_->grad.empty(); }
    std::vector<T>& grad() {
        if (s_->grad.empty()) throw ContractError("tensor has no grad buffer");
        return s_->grad;
    }
    const std::vector<T>& grad() const {
        if (s_->grad.empty()) throw ContractError("tensor has no grad buffer");
        return s_->grad;
    }
    void zero_grad() {
        std::fill(s_->grad.begin(), s_->grad.end(), T(0));
    }

    T item() const {
        if (!is_scalar()) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
        return s_->data[0];
    }

    Tensor reshaped(Shape shape) const {
        if (numel(shape) != size())
            throw DimensionError("reshape " + shape_str(this->shape()) + " -> " + shape_str(shape));
        Tensor t = *this;  // shares storage; only used on freshly created views
        t.s_ = std::make_shared<detail::TensorStorage<T>>(*s_);
        t.s_->shape = std::move(shape);
        return t;
    }

    std::shared_ptr<detail::TensorStorage<T>> storage() const { return s_; }

private:
    std::shared_ptr<detail::TensorStorage<T>> s_;
};

// Records one backward closure per forward operation. Backward replays the
// closures in exact reverse recording order, so the recording sequence itself
// is the topological order and no sorting is needed.
template <typename T>
class Tape {
public:
    void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

    size_t size() const { return ops_.size(); }

    void clear() { ops_.clear(); }

    // Seeds the root with d(root)/d(root) = 1 and replays the tape. Repeated
    // calls without zeroing grads accumulate additively into the leaves.
    void backward(Tensor<T>& root) {
        if (!root.is_scalar()) throw ContractError("backward root must be scalar, got " + shape_str(root.shape()));
        if (!root.requires_grad()) return;
        root.grad()[0] = T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> ops_;
};

}  // namespace mapfuse
