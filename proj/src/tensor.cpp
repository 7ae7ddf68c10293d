// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "fuseformer/errors.hpp"

namespace fuseformer {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap cmap(const double* p, std::size_t rows, std::size_t cols) {
    return ConstMap(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap mmap(double* p, std::size_t rows, std::size_t cols) {
    return MutMap(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

bool is_scalar_like(const Tensor& t) { return t.numel() == 1; }

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor operand");
}

// Grad buffer of an input when it participates in differentiation, else null.
double* grad_of(const NodePtr& n) { return n->requires_grad ? n->grad_buffer().data() : nullptr; }

template <class F, class DF>
Tensor unary(const char* op, const Tensor& x, F f, DF df) {
    require_defined(x, op);
    const auto in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
    return make_result(op, x.shape(), std::move(out), {x}, [df](Node& self) {
        const auto& xin = self.inputs[0];
        double* gx = grad_of(xin);
        if (!gx) return;
        for (std::size_t i = 0; i < self.data.size(); ++i)
            gx[i] += self.grad[i] * df(xin->data[i], self.data[i]);
    });
}

enum class BinaryKind { add, sub, mul };

Tensor binary(const char* op, BinaryKind kind, const Tensor& a, const Tensor& b) {
    require_defined(a, op);
    require_defined(b, op);
    const bool same = a.shape() == b.shape();
    if (!same && !is_scalar_like(a) && !is_scalar_like(b))
        throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    const bool a_scalar = !same && is_scalar_like(a);
    const bool b_scalar = !same && is_scalar_like(b);
    const Shape& out_shape = a_scalar ? b.shape() : a.shape();
    const std::size_t n = shape_numel(out_shape);
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ad[a_scalar ? 0 : i];
        const double y = bd[b_scalar ? 0 : i];
        switch (kind) {
        case BinaryKind::add: out[i] = x + y; break;
        case BinaryKind::sub: out[i] = x - y; break;
        case BinaryKind::mul: out[i] = x * y; break;
        }
    }
    return make_result(op, out_shape, std::move(out), {a, b}, [kind, a_scalar, b_scalar](Node& self) {
        const auto& an = self.inputs[0];
        const auto& bn = self.inputs[1];
        double* ga = grad_of(an);
        double* gb = grad_of(bn);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double g = self.grad[i];
            const std::size_t ia = a_scalar ? 0 : i;
            const std::size_t ib = b_scalar ? 0 : i;
            switch (kind) {
            case BinaryKind::add:
                if (ga) ga[ia] += g;
                if (gb) gb[ib] += g;
                break;
            case BinaryKind::sub:
                if (ga) ga[ia] += g;
                if (gb) gb[ib] -= g;
                break;
            case BinaryKind::mul:
                if (ga) ga[ia] += g * bn->data[ib];
                if (gb) gb[ib] += g * an->data[ia];
                break;
            }
        }
    });
}

std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t rank, const char* op) {
    const auto r = static_cast<std::ptrdiff_t>(rank);
    if (axis < -r || axis >= r) throw ContractError(std::string(op) + ": axis out of range");
    return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

} // namespace

// ---- Shape / Node / Tensor -----------------------------------------------------

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

std::vector<double>& Node::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) : node_(std::make_shared<Node>()) {
    for (auto e : shape)
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    if (shape_numel(shape) != data.size())
        throw DimensionError("tensor of shape " + shape_str(shape) + " given " + std::to_string(data.size()) +
                             " values");
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= node_->shape.size()) throw ContractError("dim index out of range for " + shape_str(node_->shape));
    return node_->shape[i];
}

std::size_t Tensor::numel() const { return node_->data.size(); }
std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }
void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

namespace {
thread_local bool g_grad_enabled = true;
} // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(const char* op, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   BackwardFn backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    const bool needs = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.defined() && t.requires_grad(); });
    if (needs) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (auto& t : inputs) node->inputs.push_back(t.node());
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

// ---- tape --------------------------------------------------------------------

GradTape GradTape::record(const Tensor& root) {
    require_defined(root, "backward");
    GradTape tape;
    tape.root_ = root.node();
    if (!root.requires_grad()) return tape;

    std::unordered_set<Node*> seen;
    // Iterative post-order DFS; (node, next input index).
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child && child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            tape.order_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void GradTape::replay() {
    if (order_.empty()) return;
    root_->grad_buffer()[0] += 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

void backward(const Tensor& loss) {
    require_defined(loss, "backward");
    if (loss.numel() != 1)
        throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    GradTape::record(loss).replay();
}

// ---- linear algebra ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n);
    mmap(out.data(), m, n).noalias() = cmap(a.data().data(), m, k) * cmap(b.data().data(), k, n);
    return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        const auto& an = self.inputs[0];
        const auto& bn = self.inputs[1];
        const auto g = cmap(self.grad.data(), m, n);
        if (an->requires_grad)
            mmap(an->grad_buffer().data(), m, k).noalias() += g * cmap(bn->data.data(), k, n).transpose();
        if (bn->requires_grad)
            mmap(bn->grad_buffer().data(), k, n).noalias() += cmap(an->data.data(), m, k).transpose() * g;
    });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
    require_defined(a, "bmm");
    require_defined(b, "bmm");
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(transpose_b ? 2 : 1))
        throw DimensionError("bmm: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()) +
                             (transpose_b ? " (transposed)" : ""));
    const std::size_t groups = a.dim(0), m = a.dim(1), k = a.dim(2);
    const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
    std::vector<double> out(groups * m * n);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (std::size_t g = 0; g < groups; ++g) {
        auto c = mmap(out.data() + g * m * n, m, n);
        const auto av = cmap(ad + g * m * k, m, k);
        if (transpose_b)
            c.noalias() = av * cmap(bd + g * n * k, n, k).transpose();
        else
            c.noalias() = av * cmap(bd + g * k * n, k, n);
    }
    return make_result("bmm", {groups, m, n}, std::move(out), {a, b}, [groups, m, k, n, transpose_b](Node& self) {
        const auto& an = self.inputs[0];
        const auto& bn = self.inputs[1];
        double* ga = an->requires_grad ? an->grad_buffer().data() : nullptr;
        double* gb = bn->requires_grad ? bn->grad_buffer().data() : nullptr;
        for (std::size_t g = 0; g < groups; ++g) {
            const auto gv = cmap(self.grad.data() + g * m * n, m, n);
            const auto av = cmap(an->data.data() + g * m * k, m, k);
            if (transpose_b) {
                const auto bv = cmap(bn->data.data() + g * n * k, n, k);
                if (ga) mmap(ga + g * m * k, m, k).noalias() += gv * bv;
                if (gb) mmap(gb + g * n * k, n, k).noalias() += gv.transpose() * av;
            } else {
                const auto bv = cmap(bn->data.data() + g * k * n, k, n);
                if (ga) mmap(ga + g * m * k, m, k).noalias() += gv * bv.transpose();
                if (gb) mmap(gb + g * k * n, k, n).noalias() += av.transpose() * gv;
            }
        }
    });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
    require_defined(x, "add_bias");
    require_defined(b, "add_bias");
    if (x.rank() == 0 || b.rank() != 1 || b.dim(0) != x.shape().back())
        throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " does not match " + shape_str(x.shape()));
    const std::size_t c = b.dim(0);
    const std::size_t rows = x.numel() / c;
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto bd = b.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] += bd[j];
    return make_result("add_bias", x.shape(), std::move(out), {x, b}, [rows, c](Node& self) {
        if (double* gx = grad_of(self.inputs[0]))
            for (std::size_t i = 0; i < rows * c; ++i) gx[i] += self.grad[i];
        if (double* gb = grad_of(self.inputs[1]))
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < c; ++j) gb[j] += self.grad[r * c + j];
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_defined(x, "linear");
    require_defined(w, "linear");
    if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.dim(0))
        throw DimensionError("linear: cannot apply weight " + shape_str(w.shape()) + " to " + shape_str(x.shape()));
    const std::size_t in = w.dim(0), out_dim = w.dim(1);
    if (b.defined() && (b.rank() != 1 || b.dim(0) != out_dim))
        throw DimensionError("linear: bias " + shape_str(b.shape()) + " does not match weight " +
                             shape_str(w.shape()));
    const std::size_t rows = x.numel() / in;
    Shape out_shape = x.shape();
    out_shape.back() = out_dim;
    std::vector<double> out(rows * out_dim);
    auto y = mmap(out.data(), rows, out_dim);
    y.noalias() = cmap(x.data().data(), rows, in) * cmap(w.data().data(), in, out_dim);
    if (b.defined()) y.rowwise() += cmap(b.data().data(), 1, out_dim).row(0);
    std::vector<Tensor> inputs{x, w};
    if (b.defined()) inputs.push_back(b);
    return make_result("linear", std::move(out_shape), std::move(out), std::move(inputs),
                       [rows, in, out_dim](Node& self) {
                           const auto& xn = self.inputs[0];
                           const auto& wn = self.inputs[1];
                           const auto g = cmap(self.grad.data(), rows, out_dim);
                           if (xn->requires_grad)
                               mmap(xn->grad_buffer().data(), rows, in).noalias() +=
                                   g * cmap(wn->data.data(), in, out_dim).transpose();
                           if (wn->requires_grad)
                               mmap(wn->grad_buffer().data(), in, out_dim).noalias() +=
                                   cmap(xn->data.data(), rows, in).transpose() * g;
                           if (self.inputs.size() > 2 && self.inputs[2]->requires_grad)
                               mmap(self.inputs[2]->grad_buffer().data(), 1, out_dim) += g.colwise().sum();
                       });
}

// ---- elementwise -----------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinaryKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinaryKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinaryKind::mul, a, b); }

Tensor scale(const Tensor& x, double factor) {
    return unary("scale", x, [factor](double v) { return v * factor; },
                 [factor](double, double) { return factor; });
}

Tensor neg(const Tensor& x) {
    return unary("neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Tensor sigmoid(const Tensor& x) {
    return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
    return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
    return unary("relu", x, [](double v) { return v > 0 ? v : 0.0; },
                 [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
    // tanh approximation
    static constexpr double kC = 0.7978845608028654; // sqrt(2/pi)
    static constexpr double kA = 0.044715;
    return unary(
        "gelu", x,
        [](double v) { return 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))); },
        [](double v, double) {
            const double t = std::tanh(kC * (v + kA * v * v * v));
            return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
        });
}

Tensor exp(const Tensor& x) {
    return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    require_defined(x, "log");
    for (double v : x.data())
        if (!(v > 0)) throw DomainError("log of non-positive value " + std::to_string(v));
    return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

// ---- reductions ------------------------------------------------------------------

Tensor sum(const Tensor& x) {
    require_defined(x, "sum");
    double s = 0;
    for (double v : x.data()) s += v;
    return make_result("sum", {}, {s}, {x}, [](Node& self) {
        if (double* gx = grad_of(self.inputs[0])) {
            const double g = self.grad[0];
            for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i) gx[i] += g;
        }
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor softmax(const Tensor& x, std::ptrdiff_t axis) {
    require_defined(x, "softmax");
    const std::size_t ax = normalize_axis(axis, x.rank(), "softmax");
    const Shape& s = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
    for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t n = s[ax];
    const auto in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < inner; ++j) {
            const std::size_t base = o * n * inner + j;
            double mx = in[base];
            for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[base + i * inner]);
            double z = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = std::exp(in[base + i * inner] - mx);
                out[base + i * inner] = e;
                z += e;
            }
            for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= z;
        }
    return make_result("softmax", s, std::move(out), {x}, [outer, inner, n](Node& self) {
        double* gx = grad_of(self.inputs[0]);
        if (!gx) return;
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < inner; ++j) {
                const std::size_t base = o * n * inner + j;
                double dot = 0;
                for (std::size_t i = 0; i < n; ++i) dot += self.grad[base + i * inner] * self.data[base + i * inner];
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t k = base + i * inner;
                    gx[k] += self.data[k] * (self.grad[k] - dot);
                }
            }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_defined(x, "layer_norm");
    if (!(eps > 0)) throw ContractError("layer_norm: eps must be positive");
    if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
    const std::size_t c = x.shape().back();
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
        throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " +
                             shape_str(beta.shape()) + " do not match " + shape_str(x.shape()));
    const std::size_t rows = x.numel() / c;
    const auto in = x.data();
    const auto gd = gamma.data();
    const auto bd = beta.data();
    std::vector<double> out(in.size());
    // Saved for backward: normalized values and per-row inverse std.
    auto xhat = std::make_shared<std::vector<double>>(in.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * c;
        double mu = 0;
        for (std::size_t j = 0; j < c; ++j) mu += row[j];
        mu /= static_cast<double>(c);
        double var = 0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t j = 0; j < c; ++j) {
            const double h = (row[j] - mu) * is;
            (*xhat)[r * c + j] = h;
            out[r * c + j] = h * gd[j] + bd[j];
        }
    }
    return make_result("layer_norm", x.shape(), std::move(out), {x, gamma, beta}, [rows, c, xhat, inv_std](Node& self) {
        const auto& gn = self.inputs[1];
        double* gx = grad_of(self.inputs[0]);
        double* gg = grad_of(gn);
        double* gb = grad_of(self.inputs[2]);
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g = self.grad.data() + r * c;
            const double* h = xhat->data() + r * c;
            if (gg)
                for (std::size_t j = 0; j < c; ++j) gg[j] += g[j] * h[j];
            if (gb)
                for (std::size_t j = 0; j < c; ++j) gb[j] += g[j];
            if (!gx) continue;
            double mean_dh = 0, mean_dh_h = 0;
            for (std::size_t j = 0; j < c; ++j) {
                const double dh = g[j] * gn->data[j];
                mean_dh += dh;
                mean_dh_h += dh * h[j];
            }
            mean_dh *= inv_c;
            mean_dh_h *= inv_c;
            const double is = (*inv_std)[r];
            for (std::size_t j = 0; j < c; ++j) {
                const double dh = g[j] * gn->data[j];
                gx[r * c + j] += is * (dh - mean_dh - h[j] * mean_dh_h);
            }
        }
    });
}

// ---- layout ------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
    require_defined(x, "reshape");
    if (shape_numel(shape) != x.numel())
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
        if (double* gx = grad_of(self.inputs[0]))
            for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
    require_defined(x, "permute");
    const Shape& in_shape = x.shape();
    const std::size_t r = in_shape.size();
    if (perm.size() != r) throw ContractError("permute: permutation rank mismatch");
    std::vector<bool> used(r, false);
    for (auto p : perm) {
        if (p >= r || used[p]) throw ContractError("permute: invalid permutation");
        used[p] = true;
    }
    std::vector<std::size_t> in_stride(r, 1);
    for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in_shape[i];
    Shape out_shape(r);
    std::vector<std::size_t> src_stride(r);
    for (std::size_t i = 0; i < r; ++i) {
        out_shape[i] = in_shape[perm[i]];
        src_stride[i] = in_stride[perm[i]];
    }
    // Source offset of every output element, shared with backward.
    auto index = std::make_shared<std::vector<std::size_t>>(x.numel());
    std::vector<std::size_t> counter(r, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < x.numel(); ++o) {
        (*index)[o] = src;
        for (std::size_t d = r; d-- > 0;) {
            if (++counter[d] < out_shape[d]) {
                src += src_stride[d];
                break;
            }
            src -= src_stride[d] * (out_shape[d] - 1);
            counter[d] = 0;
        }
    }
    const auto in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t o = 0; o < out.size(); ++o) out[o] = in[(*index)[o]];
    return make_result("permute", std::move(out_shape), std::move(out), {x}, [index](Node& self) {
        if (double* gx = grad_of(self.inputs[0]))
            for (std::size_t o = 0; o < self.grad.size(); ++o) gx[(*index)[o]] += self.grad[o];
    });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows) {
    require_defined(table, "gather_rows");
    if (table.rank() != 2) throw DimensionError("gather_rows: table must be 2-d, got " + shape_str(table.shape()));
    if (rows.empty()) throw ContractError("gather_rows: no rows requested");
    const std::size_t v = table.dim(0), h = table.dim(1);
    for (auto r : rows)
        if (r >= v)
            throw ContractError("gather_rows: index " + std::to_string(r) + " out of range for " + std::to_string(v) +
                                " rows");
    auto idx = std::make_shared<std::vector<std::size_t>>(rows.begin(), rows.end());
    const auto td = table.data();
    std::vector<double> out(rows.size() * h);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(rows[i] * h), h, out.begin() + static_cast<std::ptrdiff_t>(i * h));
    return make_result("gather_rows", {rows.size(), h}, std::move(out), {table}, [idx, h](Node& self) {
        if (double* gt = grad_of(self.inputs[0]))
            for (std::size_t i = 0; i < idx->size(); ++i)
                for (std::size_t j = 0; j < h; ++j) gt[(*idx)[i] * h + j] += self.grad[i * h + j];
    });
}

Tensor stack(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("stack: no tensors");
    for (const auto& p : parts) require_defined(p, "stack");
    const Shape& s = parts[0].shape();
    for (const auto& p : parts)
        if (p.shape() != s)
            throw DimensionError("stack: shape " + shape_str(p.shape()) + " differs from " + shape_str(s));
    if (axis > s.size()) throw ContractError("stack: axis out of range");
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    const std::size_t inner = shape_numel(s) / outer;
    const std::size_t t = parts.size();
    Shape out_shape = s;
    out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), t);
    std::vector<double> out(outer * t * inner);
    for (std::size_t k = 0; k < t; ++k) {
        const auto d = parts[k].data();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(o * inner), inner,
                        out.begin() + static_cast<std::ptrdiff_t>((o * t + k) * inner));
    }
    return make_result("stack", std::move(out_shape), std::move(out), parts, [outer, inner, t](Node& self) {
        for (std::size_t k = 0; k < t; ++k) {
            double* gp = grad_of(self.inputs[k]);
            if (!gp) continue;
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t i = 0; i < inner; ++i) gp[o * inner + i] += self.grad[(o * t + k) * inner + i];
        }
    });
}

} // namespace fuseformer
