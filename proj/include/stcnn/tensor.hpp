#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stcnn/errors.hpp"

namespace stcnn {

// Scalar precision of a tensor buffer. f64 is the default so gradient checks
// are meaningful; f32 halves memory and is accepted everywhere.
enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

const char* dtype_name(DType t);
std::size_t dtype_bytes(DType t);

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

// Flat row-major scalar buffer in one of the two supported precisions.
class Buffer {
  public:
    Buffer() = default;
    Buffer(DType dtype, std::int64_t n);

    DType dtype() const { return dtype_; }
    std::int64_t size() const;
    bool empty() const { return size() == 0; }

    double get(std::int64_t i) const;
    void set(std::int64_t i, double v);
    void add(std::int64_t i, double v);
    void fill(double v);

    template <class T>
    std::vector<T>& as();
    template <class T>
    const std::vector<T>& as() const;

    const void* raw() const;
    std::size_t raw_bytes() const;

  private:
    DType dtype_ = DType::f64;
    std::vector<float> f32_;
    std::vector<double> f64_;
};

template <>
inline std::vector<float>& Buffer::as<float>() {
    return f32_;
}
template <>
inline std::vector<double>& Buffer::as<double>() {
    return f64_;
}
template <>
inline const std::vector<float>& Buffer::as<float>() const {
    return f32_;
}
template <>
inline const std::vector<double>& Buffer::as<double>() const {
    return f64_;
}

// Calls f with a value of the active scalar type, e.g.
//   dispatch(dtype, [&](auto tag) { using T = decltype(tag); ... });
template <class F>
decltype(auto) dispatch(DType t, F&& f) {
    if (t == DType::f32) {
        return f(float{});
    }
    return f(double{});
}

// One operation record in the compute graph. Holds the produced value, the
// accumulated gradient, the input nodes and the local gradient rule.
struct Node {
    Shape shape;
    Buffer value;
    Buffer grad;  // engaged only while gradients flow through this node
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backprop;

    std::int64_t numel() const { return value.size(); }
    void ensure_grad();
};

// Reverse topological order over the ancestors of a loss node. Acyclic by
// construction (ops only consume already-built nodes); each node appears once,
// consumers before producers, so gradient accumulation is additive across
// fan-out.
struct ComputeGraph {
    std::vector<Node*> order;
    static ComputeGraph build(Node* root);
};

}  // namespace detail

// Value-semantics handle to a graph node. Copies share the node.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, DType dtype = DType::f64, bool requires_grad = false);
    static Tensor full(Shape shape, double value, DType dtype = DType::f64,
                       bool requires_grad = false);
    static Tensor from_values(Shape shape, std::span<const double> values,
                              DType dtype = DType::f64, bool requires_grad = false);
    // 1-D convenience constructor.
    static Tensor vector(std::span<const double> values, DType dtype = DType::f64,
                         bool requires_grad = false);
    static Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
                          DType dtype = DType::f64, bool requires_grad = false);
    static Tensor adopt(std::shared_ptr<detail::Node> node);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::int64_t rank() const;
    std::int64_t numel() const;
    DType dtype() const;
    bool requires_grad() const;
    bool is_leaf() const;

    double at(std::int64_t i) const;
    double item() const;
    std::vector<double> values() const;

    // Leaf-only mutation; graph intermediates are immutable once created.
    void set(std::int64_t i, double v);
    void assign(std::span<const double> values);

    bool has_grad() const;
    double grad_at(std::int64_t i) const;
    std::vector<double> grad_values() const;
    void zero_grad();

    // Populates grad on every requires_grad ancestor. Scalar tensors only.
    void backward() const;

    // Copies the value into a fresh leaf, cutting the graph.
    Tensor detach(bool requires_grad = false) const;

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;
};

}  // namespace stcnn
