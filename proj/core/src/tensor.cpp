#include "nst/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "nst/errors.hpp"

namespace nst {

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    bool leaf = true;
    std::vector<double> grad;
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardRule rule;
};

}  // namespace detail

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) out << "x";
        out << shape[i];
    }
    out << ']';
    return out.str();
}

namespace {

void check_shape(const Shape& shape, std::size_t data_size) {
    for (auto extent : shape) {
        if (extent == 0) throw ConfigError("tensor extents must be positive, got " + shape_to_string(shape));
    }
    if (shape_numel(shape) != data_size) {
        throw ConfigError("tensor shape " + shape_to_string(shape) + " does not match " + std::to_string(data_size) +
                          " values");
    }
}

void check_finite(std::span<const double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NumericError("non-finite value " + std::to_string(values[i]) + " at flat index " +
                               std::to_string(i));
        }
    }
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    check_shape(shape, data.size());
    check_finite(data);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node_ = std::move(node);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::from_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, BackwardRule rule) {
    Tensor out(std::move(shape), std::move(data), false);
    const bool any_grad =
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.defined() && t.requires_grad(); });
    if (!any_grad) return out;
    auto& node = *out.node_;
    node.requires_grad = true;
    node.leaf = false;
    node.rule = std::move(rule);
    node.inputs.reserve(inputs.size());
    for (auto& input : inputs) node.inputs.push_back(std::move(input.node_));
    return out;
}

const detail::Node& Tensor::node() const {
    if (!node_) throw UsageError("operation on an undefined tensor");
    return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw UsageError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return node().data.size(); }

std::span<const double> Tensor::data() const { return node().data; }

double Tensor::item() const {
    if (numel() != 1) throw UsageError("item() requires a single-element tensor, got " + shape_to_string(shape()));
    return node().data[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

bool Tensor::is_leaf() const { return node().leaf; }

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw UsageError("tensor has no gradient; call backward() on a root that depends on it");
    return node().grad;
}

Tensor Tensor::grad_tensor() const {
    auto g = grad();
    return Tensor(shape(), std::vector<double>(g.begin(), g.end()));
}

Tensor Tensor::detach() const { return Tensor(shape(), std::vector<double>(data().begin(), data().end())); }

const Tensor* GradientMap::find(const Tensor& leaf) const {
    for (const auto& [key, grad] : entries_) {
        if (key.same_node(leaf)) return &grad;
    }
    return nullptr;
}

const Tensor& GradientMap::at(const Tensor& leaf) const {
    if (const auto* g = find(leaf)) return *g;
    throw UsageError("no gradient recorded for the requested tensor");
}

GradientMap backward(const Tensor& root) {
    if (root.numel() != 1) {
        throw UsageError("backward() requires a scalar root, got shape " + shape_to_string(root.shape()));
    }
    GradientMap result;
    if (!root.requires_grad()) return result;

    using detail::Node;
    // Iterative post-order DFS gives a topological order (inputs first).
    std::vector<std::shared_ptr<Node>> order;
    std::unordered_set<const Node*> visited;
    std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
    stack.emplace_back(root.node_, 0);
    visited.insert(root.node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            const auto& child = node->inputs[next++];
            if (child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (const auto& node : order) node->grad.assign(node->data.size(), 0.0);
    root.node_->grad[0] = 1.0;

    std::vector<std::span<double>> grad_inputs;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node& node = **it;
        if (node.leaf || !node.rule) continue;
        grad_inputs.clear();
        for (const auto& input : node.inputs) {
            grad_inputs.push_back(input->requires_grad ? std::span<double>(input->grad) : std::span<double>());
        }
        node.rule(node.grad, grad_inputs);
    }

    for (const auto& node : order) {
        if (!node->leaf) continue;
        check_finite(node->grad);
        result.entries_.emplace_back(Tensor(node), Tensor(node->shape, node->grad));
    }
    for (const auto& node : order) {
        if (node->leaf) continue;
        node->rule = nullptr;
        node->inputs = {};
        node->grad = {};
    }
    return result;
}

}  // namespace nst
