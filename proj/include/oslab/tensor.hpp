#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <numeric>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "oslab/error.hpp"

namespace oslab {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

/// Storage starts on a cache line so vectorized kernels see the same
/// alignment, and sum in the same order, on every run.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};
    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }
    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

/// Graph is recorded only while this flag is set (per thread).
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

template <typename T>
struct Node {
    Shape shape;
    Buffer<T> data;
    Buffer<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    /// Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (!has_grad) {
            grad.assign(data.size(), T{0});
            has_grad = true;
        }
    }
};

} // namespace detail

/// Disables graph recording for its lifetime (evaluation, optimizer updates).
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Dense row-major tensor with reverse-mode autodiff.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node.
/// Use clone() or detach() for an independent copy. Ops that read a tensor
/// with requires_grad() record a backward edge; backward() on a scalar walks
/// the recorded tape once, fills every reachable grad and frees the tape.
template <typename T = double>
class Tensor {
public:
    using value_type = T;
    using NodeT = detail::Node<T>;

    Tensor() : node_(std::make_shared<NodeT>()) { node_->shape = {0}; }

    explicit Tensor(Shape shape, T fill = T{0}) : node_(std::make_shared<NodeT>()) {
        node_->data.assign(numel_of(shape), fill);
        node_->shape = std::move(shape);
    }

    Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<NodeT>()) {
        if (numel_of(shape) != values.size()) {
            detail::shape_invalid("Tensor", shape,
                                  "expected " + std::to_string(numel_of(shape)) + " values, got " +
                                      std::to_string(values.size()));
        }
        node_->shape = std::move(shape);
        node_->data.assign(values.begin(), values.end());
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T{0}); }
    static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }
    static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size(std::size_t axis) const {
        if (axis >= rank()) detail::shape_invalid("size", shape(), "axis out of range");
        return node_->shape[axis];
    }
    std::size_t numel() const { return node_->data.size(); }

    std::span<T> data() { return node_->data; }
    std::span<const T> data() const { return node_->data; }
    /// Copy of the values.
    std::vector<T> values() const { return {node_->data.begin(), node_->data.end()}; }

    T& operator[](std::size_t i) { return node_->data[i]; }
    const T& operator[](std::size_t i) const { return node_->data[i]; }

    T item() const {
        if (numel() != 1) detail::shape_invalid("item", shape(), "tensor is not a scalar");
        return node_->data[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on = true) {
        node_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return node_->has_grad; }
    std::span<T> grad() {
        if (!node_->has_grad) throw Error("grad: tensor has no gradient");
        return node_->grad;
    }
    std::span<const T> grad() const {
        if (!node_->has_grad) throw Error("grad: tensor has no gradient");
        return node_->grad;
    }
    /// Gradient as a detached tensor of the same shape.
    Tensor grad_tensor() const {
        auto g = grad();
        return Tensor(shape(), std::vector<T>(g.begin(), g.end()));
    }

    void zero_grad() {
        if (node_->has_grad) std::fill(node_->grad.begin(), node_->grad.end(), T{0});
    }
    void clear_grad() {
        node_->grad.clear();
        node_->has_grad = false;
    }

    /// Leaf copy of the values, no graph, no grad.
    Tensor detach() const { return Tensor(shape(), detail::Buffer<T>(node_->data)); }
    Tensor clone() const { return detach(); }

    const char* op_name() const { return node_->op; }
    bool is_leaf() const { return !node_->backward_fn; }
    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    /// Reverse-mode sweep from this scalar. Leaf grads accumulate across calls.
    void backward() {
        const bool scalar = rank() == 0 || (rank() == 1 && shape()[0] == 1);
        if (!scalar) detail::shape_invalid("backward", shape(), "loss must have shape [] or [1]");
        if (!requires_grad()) throw Error("backward: loss does not require grad");

        std::vector<NodeT*> order;
        std::unordered_set<NodeT*> visited;
        std::vector<std::pair<NodeT*, std::size_t>> stack{{node_.get(), 0}};
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                NodeT* p = n->parents[next++].get();
                if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }

        node_->ensure_grad();
        node_->grad[0] += T{1};
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            NodeT* n = *it;
            if (n->backward_fn) {
                n->ensure_grad();
                for (auto& p : n->parents) {
                    if (p->requires_grad) p->ensure_grad();
                }
                n->backward_fn(*n);
            }
        }
        for (NodeT* n : order) {
            if (n->backward_fn) {
                n->backward_fn = nullptr;
                n->parents.clear();
            }
        }
    }

    /// Op plumbing: build a result node, recording an edge if any input needs grad.
    static Tensor make_result(const char* op, Shape shape, detail::Buffer<T> values,
                              std::initializer_list<Tensor> inputs,
                              std::function<void(NodeT&)> backward_fn) {
        Tensor out(std::move(shape), std::move(values));
        out.node_->op = op;
        if (!grad_enabled()) return out;
        bool any = false;
        for (const auto& in : inputs) any = any || in.requires_grad();
        if (!any) return out;
        out.node_->requires_grad = true;
        for (const auto& in : inputs) out.node_->parents.push_back(in.node_);
        out.node_->backward_fn = std::move(backward_fn);
        return out;
    }

    /// Parent at position i of a node produced by make_result.
    static NodeT& parent(NodeT& self, std::size_t i) { return *self.parents[i]; }

private:
    Tensor(Shape shape, detail::Buffer<T>&& values) : node_(std::make_shared<NodeT>()) {
        node_->shape = std::move(shape);
        node_->data = std::move(values);
    }

    std::shared_ptr<NodeT> node_;
};

} // namespace oslab
