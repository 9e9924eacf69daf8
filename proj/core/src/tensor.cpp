#include "sril/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace sril {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return wrap(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw TensorError("Tensor::from: shape " + shape_str(shape) + " does not match buffer of size " +
                          std::to_string(data.size()));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return wrap(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

double Tensor::item() const {
    if (!is_scalar()) throw TensorError("item() on non-scalar tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty())
        throw TensorError("grad requested but no backward pass has reached this tensor");
    return node_->grad;
}

void Tensor::zero_grad() {
    node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::clone() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->value = node_->value;
    n->requires_grad = node_->requires_grad;
    return wrap(std::move(n));
}

namespace {
std::atomic<std::uint64_t> g_visit_counter{1};
}

void backward(const Tensor& loss) {
    if (!loss.is_scalar())
        throw TensorError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));

    const std::uint64_t mark = g_visit_counter.fetch_add(1);

    // Iterative post-order DFS gives topological order (inputs before users).
    std::vector<Node*> order;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    loss.node()->visit_mark = mark;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* in = node->inputs[next++].get();
            if (in->visit_mark != mark) {
                in->visit_mark = mark;
                stack.emplace_back(in, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) n->grad.assign(n->value.size(), 0.0);
    loss.node()->grad[0] = 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool all_finite(const Tensor& t) {
    return all_finite(t.data());
}

}  // namespace sril
