#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cprl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

// One record in the computation graph. Interior nodes hold a backprop rule
// that pulls this node's grad into its parents' grads.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    std::size_t numel() const { return value.size(); }
};

void ensure_grad(Node& n);

}  // namespace detail

/// Dense row-major 64-bit tensor participating in a define-by-run graph.
/// Copying a Tensor copies the handle, not the buffer.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t ndim() const { return shape().size(); }
    bool requires_grad() const;

    // Mutators are const: they write through the shared node, not the handle.
    std::span<const double> data() const;
    std::span<double> data_mut() const;  // leaf edits between passes
    std::span<const double> grad() const;
    std::span<double> grad_mut() const;
    void zero_grad() const;

    double item() const;  // scalar tensors only
    double at(std::size_t i) const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }

  private:
    std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode sweep from a scalar loss. Grads of every reachable
/// requires_grad node are zeroed and repopulated, leaves included.
void backward(const Tensor& loss);

bool all_finite(const Tensor& t);

}  // namespace cprl
