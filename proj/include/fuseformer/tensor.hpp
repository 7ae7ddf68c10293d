// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense f64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a shared handle onto a graph node. Operations create new nodes
// that remember their inputs and a backward closure; backward() orders the
// reachable sub-graph topologically and replays it in reverse. Only
// scalar-vs-tensor and equal-shape broadcasting exist; model code reshapes
// explicitly.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fuseformer {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// Propagates node.grad into the grads of node.inputs.
using BackwardFn = std::function<void(Node&)>;

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty means absent
    bool requires_grad = false;
    std::vector<NodePtr> inputs;
    BackwardFn backward;
    const char* op = "leaf";

    /// Lazily allocates a zeroed grad buffer and returns it.
    std::vector<double>& grad_buffer();
};

class Tensor {
  public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim(std::size_t i) const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);

    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    /// New leaf holding a copy of the values, detached from any graph.
    Tensor detach() const;

    const NodePtr& node() const { return node_; }
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  private:
    NodePtr node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

bool grad_enabled();

/// Builds the result node of a custom operation. `backward` is attached only
/// when at least one input requires a gradient.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, BackwardFn backward);

/// Reverse topological order of the nodes reachable from a root.
class GradTape {
  public:
    static GradTape record(const Tensor& root);

    std::span<Node* const> nodes() const { return order_; }
    std::size_t size() const { return order_.size(); }

    /// Seeds the root gradient with 1 and runs every backward closure once,
    /// last-recorded first.
    void replay();

  private:
    std::vector<Node*> order_; // topological: inputs before consumers
    NodePtr root_;
};

/// Accumulates d(loss)/d(t) into every reachable tensor with requires_grad.
void backward(const Tensor& loss);

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// a [G×m×k] times b [G×k×n] (or b [G×n×k] with transpose_b) per group.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
/// x [..., C] plus a per-column bias b [C].
Tensor add_bias(const Tensor& x, const Tensor& b);
/// x [N×in] · w [in×out] + b [out]; b may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor neg(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

double stable_sigmoid(double x);
/// log(1 + e^x) without overflow.
double softplus(double x);

// ---- reductions and normalization -------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor softmax(const Tensor& x, std::ptrdiff_t axis = -1);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-12);

// ---- layout ----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
/// Rows of table [V×H] at the given indices, as [n×H].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows);
/// Stacks equally-shaped tensors along a new axis.
Tensor stack(const std::vector<Tensor>& parts, std::size_t axis);

} // namespace fuseformer
