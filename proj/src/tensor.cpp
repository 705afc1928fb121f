#include "cprl/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace cprl {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

namespace detail {
void ensure_grad(Node& n) {
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
}
}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    auto n = std::make_shared<detail::Node>();
    n->value.assign(shape_numel(shape), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not hold " +
                                    std::to_string(data.size()) + " values");
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
bool Tensor::requires_grad() const { return node_->requires_grad; }

std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::data_mut() const { return node_->value; }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::grad_mut() const {
    detail::ensure_grad(*node_);
    return node_->grad;
}

void Tensor::zero_grad() const { node_->grad.assign(node_->value.size(), 0.0); }

double Tensor::item() const {
    if (size() != 1)
        throw std::invalid_argument("item: tensor " + shape_str(shape()) + " is not scalar");
    return node_->value[0];
}

double Tensor::at(std::size_t i) const { return node_->value[i]; }

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    (loss.defined() ? shape_str(loss.shape()) : std::string("<empty>")));

    // Post-order over the requires_grad subgraph; iterative to handle deep chains.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    struct Frame {
        detail::Node* n;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    if (loss.node()->requires_grad) stack.push_back({loss.node().get(), 0});
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent == 0) {
            if (seen.count(f.n)) {
                stack.pop_back();
                continue;
            }
            seen.insert(f.n);
        }
        if (f.next_parent < f.n->parents.size()) {
            detail::Node* p = f.n->parents[f.next_parent++].get();
            if (p->requires_grad && !seen.count(p)) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    for (detail::Node* n : order) n->grad.assign(n->value.size(), 0.0);
    if (order.empty()) return;  // loss does not depend on any tracked tensor

    loss.node()->grad.assign(1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
}

bool all_finite(const Tensor& t) {
    for (double v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace cprl
