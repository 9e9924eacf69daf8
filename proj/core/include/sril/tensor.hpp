#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace sril {

using Shape = std::vector<int>;

struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

// One tape node. Value is a row-major 64-bit-float buffer. The backward rule,
// when present, reads this node's grad and accumulates into the inputs' grads.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;
    std::uint64_t visit_mark = 0;
};

// Value-style handle over a shared tape node. Copies alias the node; use
// clone() for an independent deep copy (detached leaf).
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }
    bool is_scalar() const { return node_->value.size() == 1; }

    const std::vector<double>& data() const { return node_->value; }
    std::vector<double>& mutable_data() { return node_->value; }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    // Populated by the most recent backward() whose graph reached this node.
    const std::vector<double>& grad() const;
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad();

    // Independent leaf copy: same shape/value/requires_grad, no tape history.
    Tensor clone() const;

    std::shared_ptr<Node> node() const { return node_; }
    static Tensor wrap(std::shared_ptr<Node> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

  private:
    std::shared_ptr<Node> node_;
};

// Reverse-mode pass from a scalar loss. Zeroes the grads of every node
// reachable from `loss`, then accumulates gradients in reverse topological
// order. Single-threaded and deterministic.
void backward(const Tensor& loss);

bool all_finite(const Tensor& t);
bool all_finite(const std::vector<double>& v);

}  // namespace sril
