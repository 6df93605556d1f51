#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "duckmorph/errors.hpp"

namespace duckmorph::tensor {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad; // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

} // namespace detail

// Disables graph recording on this thread while alive (inference paths).
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

// Shape-tagged row-major array with reverse-mode differentiation. A Tensor is
// a cheap handle; copies share storage. Ops never mutate their inputs.
template <typename T>
class BasicTensor {
public:
    using value_type = T;
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    BasicTensor() = default;

    static BasicTensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<T> v(shape_numel(shape), T(0));
        return from_data(std::move(shape), std::move(v), requires_grad);
    }

    static BasicTensor full(Shape shape, T value, bool requires_grad = false) {
        std::vector<T> v(shape_numel(shape), value);
        return from_data(std::move(shape), std::move(v), requires_grad);
    }

    static BasicTensor from_data(Shape shape, std::vector<T> values, bool requires_grad = false) {
        for (auto d : shape) {
            if (d == 0) throw DimensionError("tensor shape " + shape_str(shape) + " has a zero extent");
        }
        if (shape_numel(shape) != values.size()) {
            throw DimensionError("tensor shape " + shape_str(shape) + " needs " +
                                 std::to_string(shape_numel(shape)) + " values, got " +
                                 std::to_string(values.size()));
        }
        auto n = std::make_shared<detail::Node<T>>();
        n->shape = std::move(shape);
        n->data = std::move(values);
        n->requires_grad = requires_grad;
        return BasicTensor(std::move(n));
    }

    static BasicTensor scalar(T value, bool requires_grad = false) {
        return from_data({1}, {value}, requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const T> data() const { return node_->data; }
    // Direct write access; only for leaves (parameters, inputs) outside a
    // recorded forward pass.
    std::span<T> mutable_data() { return node_->data; }

    bool has_grad() const { return node_->grad.size() == node_->data.size(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool r) { node_->requires_grad = r; }

    T item() const {
        if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
        return node_->data[0];
    }

    T at(std::size_t i) const { return node_->data.at(i); }
    T at(std::size_t r, std::size_t c) const {
        if (rank() != 2) throw DimensionError("2-index access on tensor of shape " + shape_str(shape()));
        return node_->data.at(r * dim(1) + c);
    }

    void zero_grad() { node_->grad.clear(); }

    // Same values, no history.
    BasicTensor detach() const { return from_data(shape(), node_->data, false); }

    // Reverse pass from a single-element tensor.
    void backward() {
        if (numel() != 1) {
            throw DimensionError("backward() needs a scalar, got shape " + shape_str(shape()));
        }
        std::vector<detail::Node<T>*> order;
        std::unordered_set<detail::Node<T>*> seen;
        std::vector<std::pair<detail::Node<T>*, std::size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                auto* p = n->parents[next++].get();
                if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        node_->ensure_grad();
        node_->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            auto* n = *it;
            if (n->backward && n->grad.size() == n->data.size()) n->backward(*n);
        }
    }

    const NodePtr& node() const { return node_; }

    // Builds an op output. `parents` are the inputs; the output records
    // history only when grad mode is on and some input requires grad.
    static BasicTensor make_result(Shape shape, std::vector<T> values,
                                   std::initializer_list<BasicTensor> parents,
                                   std::function<void(detail::Node<T>&)> backward,
                                   const char* op_name) {
        return make_result(std::move(shape), std::move(values),
                           std::vector<BasicTensor>(parents), std::move(backward), op_name);
    }

    static BasicTensor make_result(Shape shape, std::vector<T> values,
                                   const std::vector<BasicTensor>& parents,
                                   std::function<void(detail::Node<T>&)> backward,
                                   const char* op_name) {
        for (const T& v : values) {
            if (!std::isfinite(v)) {
                throw NumericError(std::string("non-finite value produced by ") + op_name);
            }
        }
        auto out = from_data(std::move(shape), std::move(values), false);
        bool track = false;
        if (grad_enabled()) {
            for (const auto& p : parents) track = track || p.requires_grad();
        }
        if (track) {
            out.node_->requires_grad = true;
            for (const auto& p : parents) out.node_->parents.push_back(p.node_);
            out.node_->backward = std::move(backward);
        }
        return out;
    }

private:
    explicit BasicTensor(NodePtr n) : node_(std::move(n)) {}

    NodePtr node_;
};

using Tensor = BasicTensor<float>;

// Gradient buffer of a parent node inside a backward closure, or nullptr
// when that parent does not need a gradient.
template <typename T>
T* grad_of(detail::Node<T>& n) {
    if (!n.requires_grad) return nullptr;
    n.ensure_grad();
    return n.grad.data();
}

} // namespace duckmorph::tensor
