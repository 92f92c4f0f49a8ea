#include "stcnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace stcnn {

const char* dtype_name(DType t) {
    return t == DType::f32 ? "f32" : "f64";
}

std::size_t dtype_bytes(DType t) {
    return t == DType::f32 ? sizeof(float) : sizeof(double);
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) {
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) {
            out += ",";
        }
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {

Buffer::Buffer(DType dtype, std::int64_t n) : dtype_(dtype) {
    if (dtype_ == DType::f32) {
        f32_.assign(static_cast<std::size_t>(n), 0.0f);
    } else {
        f64_.assign(static_cast<std::size_t>(n), 0.0);
    }
}

std::int64_t Buffer::size() const {
    return dtype_ == DType::f32 ? static_cast<std::int64_t>(f32_.size())
                                : static_cast<std::int64_t>(f64_.size());
}

double Buffer::get(std::int64_t i) const {
    return dtype_ == DType::f32 ? static_cast<double>(f32_[static_cast<std::size_t>(i)])
                                : f64_[static_cast<std::size_t>(i)];
}

void Buffer::set(std::int64_t i, double v) {
    if (dtype_ == DType::f32) {
        f32_[static_cast<std::size_t>(i)] = static_cast<float>(v);
    } else {
        f64_[static_cast<std::size_t>(i)] = v;
    }
}

void Buffer::add(std::int64_t i, double v) {
    if (dtype_ == DType::f32) {
        f32_[static_cast<std::size_t>(i)] += static_cast<float>(v);
    } else {
        f64_[static_cast<std::size_t>(i)] += v;
    }
}

void Buffer::fill(double v) {
    if (dtype_ == DType::f32) {
        std::fill(f32_.begin(), f32_.end(), static_cast<float>(v));
    } else {
        std::fill(f64_.begin(), f64_.end(), v);
    }
}

const void* Buffer::raw() const {
    return dtype_ == DType::f32 ? static_cast<const void*>(f32_.data())
                                : static_cast<const void*>(f64_.data());
}

std::size_t Buffer::raw_bytes() const {
    return static_cast<std::size_t>(size()) * dtype_bytes(dtype_);
}

void Node::ensure_grad() {
    if (grad.size() != numel()) {
        grad = Buffer(value.dtype(), numel());
    }
}

ComputeGraph ComputeGraph::build(Node* root) {
    // Iterative post-order DFS; reversing the post-order yields consumers
    // before producers.
    ComputeGraph g;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            g.order.push_back(node);
            stack.pop_back();
        }
    }
    std::reverse(g.order.begin(), g.order.end());
    return g;
}

}  // namespace detail

namespace {

std::shared_ptr<detail::Node> make_leaf(Shape shape, DType dtype, bool requires_grad) {
    for (auto e : shape) {
        if (e <= 0) {
            throw DimensionError("tensor extent must be positive, got shape " + shape_str(shape));
        }
    }
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = detail::Buffer(dtype, shape_numel(n->shape));
    n->requires_grad = requires_grad;
    return n;
}

}  // namespace

Tensor Tensor::adopt(std::shared_ptr<detail::Node> node) {
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, DType dtype, bool requires_grad) {
    return Tensor(make_leaf(std::move(shape), dtype, requires_grad));
}

Tensor Tensor::full(Shape shape, double value, DType dtype, bool requires_grad) {
    auto n = make_leaf(std::move(shape), dtype, requires_grad);
    n->value.fill(value);
    return Tensor(std::move(n));
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values, DType dtype,
                           bool requires_grad) {
    auto n = make_leaf(std::move(shape), dtype, requires_grad);
    if (static_cast<std::int64_t>(values.size()) != n->numel()) {
        throw DimensionError("value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(n->shape));
    }
    for (std::int64_t i = 0; i < n->numel(); ++i) {
        n->value.set(i, values[static_cast<std::size_t>(i)]);
    }
    return Tensor(std::move(n));
}

Tensor Tensor::vector(std::span<const double> values, DType dtype, bool requires_grad) {
    return from_values({static_cast<std::int64_t>(values.size())}, values, dtype, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, std::mt19937_64& rng, DType dtype,
                       bool requires_grad) {
    auto n = make_leaf(std::move(shape), dtype, requires_grad);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::int64_t i = 0; i < n->numel(); ++i) {
        n->value.set(i, dist(rng));
    }
    return Tensor(std::move(n));
}

const Shape& Tensor::shape() const {
    return node_->shape;
}

std::int64_t Tensor::rank() const {
    return static_cast<std::int64_t>(node_->shape.size());
}

std::int64_t Tensor::numel() const {
    return node_->numel();
}

DType Tensor::dtype() const {
    return node_->value.dtype();
}

bool Tensor::requires_grad() const {
    return node_->requires_grad;
}

bool Tensor::is_leaf() const {
    return node_->parents.empty();
}

double Tensor::at(std::int64_t i) const {
    return node_->value.get(i);
}

double Tensor::item() const {
    if (numel() != 1) {
        throw UsageError("item() requires a single-element tensor, got shape " +
                         shape_str(node_->shape));
    }
    return node_->value.get(0);
}

std::vector<double> Tensor::values() const {
    std::vector<double> out(static_cast<std::size_t>(numel()));
    for (std::int64_t i = 0; i < numel(); ++i) {
        out[static_cast<std::size_t>(i)] = node_->value.get(i);
    }
    return out;
}

void Tensor::set(std::int64_t i, double v) {
    if (!is_leaf()) {
        throw UsageError("cannot mutate a graph intermediate (op '" + std::string(node_->op) +
                         "')");
    }
    node_->value.set(i, v);
}

void Tensor::assign(std::span<const double> values) {
    if (!is_leaf()) {
        throw UsageError("cannot mutate a graph intermediate (op '" + std::string(node_->op) +
                         "')");
    }
    if (static_cast<std::int64_t>(values.size()) != numel()) {
        throw DimensionError("assign size mismatch: " + std::to_string(values.size()) + " vs " +
                             std::to_string(numel()));
    }
    for (std::int64_t i = 0; i < numel(); ++i) {
        node_->value.set(i, values[static_cast<std::size_t>(i)]);
    }
}

bool Tensor::has_grad() const {
    return node_->grad.size() == numel();
}

double Tensor::grad_at(std::int64_t i) const {
    if (!has_grad()) {
        throw UsageError("tensor has no gradient; call backward() first");
    }
    return node_->grad.get(i);
}

std::vector<double> Tensor::grad_values() const {
    std::vector<double> out(static_cast<std::size_t>(numel()));
    for (std::int64_t i = 0; i < numel(); ++i) {
        out[static_cast<std::size_t>(i)] = grad_at(i);
    }
    return out;
}

void Tensor::zero_grad() {
    if (has_grad()) {
        node_->grad.fill(0.0);
    }
}

void Tensor::backward() const {
    if (!defined()) {
        throw UsageError("backward() on an undefined tensor");
    }
    if (numel() != 1) {
        throw UsageError("backward() requires a scalar loss, got shape " +
                         shape_str(node_->shape));
    }
    if (!node_->requires_grad) {
        return;  // nothing reachable requires gradients
    }
    auto graph = detail::ComputeGraph::build(node_.get());
    node_->ensure_grad();
    node_->grad.set(0, 1.0);
    for (detail::Node* n : graph.order) {
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

Tensor Tensor::detach(bool requires_grad) const {
    auto n = std::make_shared<detail::Node>();
    n->shape = node_->shape;
    n->value = node_->value;
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

}  // namespace stcnn
