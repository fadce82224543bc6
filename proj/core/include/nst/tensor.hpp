#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nst {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct Node;
}

class GradientMap;

// Receives the gradient of the op output and writes (accumulates) into the
// gradient buffers of its inputs. Inputs that do not require a gradient get
// an empty span.
using BackwardRule =
    std::function<void(std::span<const double> grad_output, std::span<const std::span<double>> grad_inputs)>;

/// Dense row-major float64 array that may participate in a reverse-mode
/// autodiff graph.
///
/// Tensor is a cheap handle: copies share the same underlying node. Values are
/// immutable after construction; every op produces a new tensor. Non-finite
/// values are rejected with NumericError at construction time.
class Tensor {
   public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    // Result of a differentiable op. When no input requires a gradient the
    // rule is dropped and the result is a graph-free constant.
    static Tensor from_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, BackwardRule rule);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    std::span<const double> data() const;
    double at(std::size_t flat_index) const { return data()[flat_index]; }
    double item() const;

    bool requires_grad() const;
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    Tensor grad_tensor() const;

    // Same values, no graph linkage.
    Tensor detach() const;

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

   private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const detail::Node& node() const;

    std::shared_ptr<detail::Node> node_;

    friend class GradientMap;
    friend GradientMap backward(const Tensor& root);
};

/// Gradients of a scalar root with respect to every requires_grad leaf
/// reachable from it.
class GradientMap {
   public:
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    // nullptr when the leaf was not reached from the root.
    const Tensor* find(const Tensor& leaf) const;
    const Tensor& at(const Tensor& leaf) const;

   private:
    std::vector<std::pair<Tensor, Tensor>> entries_;

    friend GradientMap backward(const Tensor& root);
};

/// Reverse sweep from a scalar root. Leaf gradients are overwritten (not
/// accumulated across calls) and the recorded graph below the root is released
/// afterwards, so a second call on the same root yields an empty map.
GradientMap backward(const Tensor& root);

}  // namespace nst
