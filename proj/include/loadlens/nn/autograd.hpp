#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "loadlens/errors.hpp"

namespace loadlens::nn {

/// Row-major matrix; row-major keeps flatten/reshape memory-order stable.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the computation graph: a value, an optional gradient and
/// a closure pulling the gradient back into the inputs.
struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::vector<NodePtr> inputs;
    std::function<void(Node&)> backprop;

    void ensure_grad() {
        if (grad.rows() != value.rows() || grad.cols() != value.cols())
            grad = Mat::Zero(value.rows(), value.cols());
    }
};

/// Lightweight handle to a graph node.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    static Var constant(Mat value) {
        auto n = std::make_shared<Node>();
        n->value = std::move(value);
        return Var(n);
    }

    static Var param(Mat value) {
        auto n = std::make_shared<Node>();
        n->value = std::move(value);
        n->requires_grad = true;
        n->ensure_grad();
        return Var(n);
    }

    const Mat& value() const { return node_->value; }
    Mat& value() { return node_->value; }
    const Mat& grad() const { return node_->grad; }
    Mat& grad() { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    const NodePtr& node() const { return node_; }
    bool valid() const { return static_cast<bool>(node_); }

private:
    NodePtr node_;
};

namespace detail {

inline NodePtr make_op(Mat value, std::vector<NodePtr> inputs,
                       std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& in : inputs)
        if (in->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->inputs = std::move(inputs);
        n->backprop = std::move(backprop);
    }
    return n;
}

inline void accum(const NodePtr& p, const Mat& delta) {
    if (!p->requires_grad) return;
    p->ensure_grad();
    p->grad += delta;
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeMismatchError(std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                                 std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                 "x" + std::to_string(b.cols()));
}

} // namespace detail

// --- arithmetic -------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows())
        throw ShapeMismatchError("matmul inner dims " + std::to_string(a.cols()) + " vs " +
                                 std::to_string(b.rows()));
    auto an = a.node();
    auto bn = b.node();
    return Var(detail::make_op(a.value() * b.value(), {an, bn}, [an, bn](Node& self) {
        detail::accum(an, self.grad * bn->value.transpose());
        detail::accum(bn, an->value.transpose() * self.grad);
    }));
}

/// a * b^T without materializing the transpose in the graph.
inline Var matmul_nt(const Var& a, const Var& b) {
    if (a.cols() != b.cols())
        throw ShapeMismatchError("matmul_nt inner dims " + std::to_string(a.cols()) + " vs " +
                                 std::to_string(b.cols()));
    auto an = a.node();
    auto bn = b.node();
    return Var(detail::make_op(a.value() * b.value().transpose(), {an, bn}, [an, bn](Node& self) {
        detail::accum(an, self.grad * bn->value);
        detail::accum(bn, self.grad.transpose() * an->value);
    }));
}

inline Var add(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "add");
    auto an = a.node();
    auto bn = b.node();
    return Var(detail::make_op(a.value() + b.value(), {an, bn}, [an, bn](Node& self) {
        detail::accum(an, self.grad);
        detail::accum(bn, self.grad);
    }));
}

inline Var sub(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "sub");
    auto an = a.node();
    auto bn = b.node();
    return Var(detail::make_op(a.value() - b.value(), {an, bn}, [an, bn](Node& self) {
        detail::accum(an, self.grad);
        detail::accum(bn, -self.grad);
    }));
}

inline Var mul(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "mul");
    auto an = a.node();
    auto bn = b.node();
    return Var(detail::make_op(a.value().cwiseProduct(b.value()), {an, bn}, [an, bn](Node& self) {
        detail::accum(an, self.grad.cwiseProduct(bn->value));
        detail::accum(bn, self.grad.cwiseProduct(an->value));
    }));
}

/// Adds a 1 x C bias row to every row of a.
inline Var add_rowvec(const Var& a, const Var& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols())
        throw ShapeMismatchError("add_rowvec bias " + std::to_string(bias.rows()) + "x" +
                                 std::to_string(bias.cols()));
    auto an = a.node();
    auto bn = bias.node();
    Mat out = a.value();
    out.rowwise() += Eigen::RowVectorXd(bias.value().row(0));
    return Var(detail::make_op(std::move(out), {an, bn}, [an, bn](Node& self) {
        detail::accum(an, self.grad);
        detail::accum(bn, self.grad.colwise().sum());
    }));
}

inline Var scale(const Var& a, double c) {
    auto an = a.node();
    return Var(detail::make_op(a.value() * c, {an}, [an, c](Node& self) {
        detail::accum(an, self.grad * c);
    }));
}

/// Broadcast-multiplies a by a 1 x 1 scalar variable.
inline Var scalar_mul(const Var& scalar, const Var& a) {
    if (scalar.rows() != 1 || scalar.cols() != 1)
        throw ShapeMismatchError("scalar_mul expects a 1x1 scalar");
    auto sn = scalar.node();
    auto an = a.node();
    return Var(detail::make_op(a.value() * scalar.value()(0, 0), {sn, an}, [sn, an](Node& self) {
        if (sn->requires_grad) {
            Mat ds(1, 1);
            ds(0, 0) = self.grad.cwiseProduct(an->value).sum();
            detail::accum(sn, ds);
        }
        detail::accum(an, self.grad * sn->value(0, 0));
    }));
}

// --- nonlinearities ---------------------------------------------------------

inline Var relu(const Var& a) {
    auto an = a.node();
    return Var(detail::make_op(a.value().cwiseMax(0.0), {an}, [an](Node& self) {
        detail::accum(an, self.grad.cwiseProduct(
                              (an->value.array() > 0.0).cast<double>().matrix()));
    }));
}

inline Var tanh_op(const Var& a) {
    auto an = a.node();
    Mat y = a.value().array().tanh().matrix();
    auto out = detail::make_op(std::move(y), {an}, nullptr);
    if (out->requires_grad) {
        out->backprop = [an](Node& self) {
            detail::accum(an, self.grad.cwiseProduct(
                                  (1.0 - self.value.array().square()).matrix()));
        };
    }
    return Var(out);
}

inline Var sigmoid(const Var& a) {
    auto an = a.node();
    Mat y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    auto out = detail::make_op(std::move(y), {an}, nullptr);
    if (out->requires_grad) {
        out->backprop = [an](Node& self) {
            detail::accum(an, self.grad.cwiseProduct(
                                  (self.value.array() * (1.0 - self.value.array())).matrix()));
        };
    }
    return Var(out);
}

/// Row-wise softmax with max subtraction.
inline Var softmax_rows(const Var& a) {
    auto an = a.node();
    Mat y = a.value();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        auto row = y.row(r).array();
        const double mx = row.maxCoeff();
        y.row(r) = (row - mx).exp().matrix();
        y.row(r) /= y.row(r).sum();
    }
    auto out = detail::make_op(std::move(y), {an}, nullptr);
    if (out->requires_grad) {
        out->backprop = [an](Node& self) {
            Mat da(self.value.rows(), self.value.cols());
            for (Eigen::Index r = 0; r < self.value.rows(); ++r) {
                const double dot = self.grad.row(r).dot(self.value.row(r));
                da.row(r) = self.value.row(r).cwiseProduct(
                    (self.grad.row(r).array() - dot).matrix());
            }
            detail::accum(an, da);
        };
    }
    return Var(out);
}

/// Per-row layer normalization over the column dimension, with learnable
/// 1 x C gain and bias.
inline Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
    if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols())
        throw ShapeMismatchError("layer_norm gain/bias must be 1 x cols");
    auto xn = x.node();
    auto gn = gain.node();
    auto bn = bias.node();

    const Eigen::Index rows = x.rows();
    const Eigen::Index cols = x.cols();
    auto xhat = std::make_shared<Mat>(rows, cols);
    auto inv_std = std::make_shared<Eigen::VectorXd>(rows);
    Mat out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mean = x.value().row(r).mean();
        const double var = (x.value().row(r).array() - mean).square().mean();
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)(r) = is;
        xhat->row(r) = ((x.value().row(r).array() - mean) * is).matrix();
        out.row(r) = xhat->row(r).cwiseProduct(gain.value().row(0)) + bias.value().row(0);
    }
    return Var(detail::make_op(std::move(out), {xn, gn, bn},
                               [xn, gn, bn, xhat, inv_std](Node& self) {
        const Eigen::Index rows = self.value.rows();
        const Eigen::Index cols = self.value.cols();
        if (gn->requires_grad)
            detail::accum(gn, (self.grad.cwiseProduct(*xhat)).colwise().sum());
        if (bn->requires_grad) detail::accum(bn, self.grad.colwise().sum());
        if (xn->requires_grad) {
            Mat dx(rows, cols);
            const double n = static_cast<double>(cols);
            for (Eigen::Index r = 0; r < rows; ++r) {
                Eigen::RowVectorXd dxhat =
                    self.grad.row(r).cwiseProduct(gn->value.row(0));
                const double mean_dxhat = dxhat.mean();
                const double mean_dxhat_xhat = dxhat.cwiseProduct(xhat->row(r)).sum() / n;
                dx.row(r) = (*inv_std)(r) *
                            (dxhat.array() - mean_dxhat -
                             xhat->row(r).array() * mean_dxhat_xhat)
                                .matrix();
            }
            detail::accum(xn, dx);
        }
    }));
}

// --- shape ops --------------------------------------------------------------

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeMismatchError("concat_cols of nothing");
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeMismatchError("concat_cols row mismatch");
        cols += p.cols();
        nodes.push_back(p.node());
    }
    Mat out(rows, cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    return Var(detail::make_op(std::move(out), nodes, [nodes](Node& self) {
        Eigen::Index c = 0;
        for (const auto& n : nodes) {
            detail::accum(n, self.grad.middleCols(c, n->value.cols()));
            c += n->value.cols();
        }
    }));
}

inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeMismatchError("concat_rows of nothing");
    const Eigen::Index cols = parts.front().cols();
    Eigen::Index rows = 0;
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ShapeMismatchError("concat_rows column mismatch");
        rows += p.rows();
        nodes.push_back(p.node());
    }
    Mat out(rows, cols);
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    return Var(detail::make_op(std::move(out), nodes, [nodes](Node& self) {
        Eigen::Index r = 0;
        for (const auto& n : nodes) {
            detail::accum(n, self.grad.middleRows(r, n->value.rows()));
            r += n->value.rows();
        }
    }));
}

inline Var slice_cols(const Var& a, Eigen::Index first, Eigen::Index count) {
    if (first < 0 || count < 1 || first + count > a.cols())
        throw ShapeMismatchError("slice_cols out of range");
    auto an = a.node();
    return Var(detail::make_op(a.value().middleCols(first, count), {an},
                               [an, first, count](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        an->grad.middleCols(first, count) += self.grad;
    }));
}

inline Var slice_rows(const Var& a, Eigen::Index first, Eigen::Index count) {
    if (first < 0 || count < 1 || first + count > a.rows())
        throw ShapeMismatchError("slice_rows out of range");
    auto an = a.node();
    return Var(detail::make_op(a.value().middleRows(first, count), {an},
                               [an, first, count](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        an->grad.middleRows(first, count) += self.grad;
    }));
}

/// Reinterprets the row-major contents with a new shape (element order kept).
inline Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != a.rows() * a.cols()) throw ShapeMismatchError("reshape element count");
    auto an = a.node();
    Mat out = Eigen::Map<const Mat>(a.value().data(), rows, cols);
    return Var(detail::make_op(std::move(out), {an}, [an](Node& self) {
        detail::accum(an, Eigen::Map<const Mat>(self.grad.data(), an->value.rows(),
                                                an->value.cols()));
    }));
}

/// Gathers rows by index; index -1 yields a zero row. Backward scatters
/// gradients back to the source rows.
inline Var gather_rows(const Var& a, std::shared_ptr<const std::vector<Eigen::Index>> idx) {
    auto an = a.node();
    Mat out = Mat::Zero(static_cast<Eigen::Index>(idx->size()), a.cols());
    for (std::size_t i = 0; i < idx->size(); ++i) {
        const Eigen::Index s = (*idx)[i];
        if (s >= 0) out.row(static_cast<Eigen::Index>(i)) = a.value().row(s);
    }
    return Var(detail::make_op(std::move(out), {an}, [an, idx](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < idx->size(); ++i) {
            const Eigen::Index s = (*idx)[i];
            if (s >= 0) an->grad.row(s) += self.grad.row(static_cast<Eigen::Index>(i));
        }
    }));
}

// --- reductions -------------------------------------------------------------

inline Var sum_all(const Var& a) {
    auto an = a.node();
    Mat out(1, 1);
    out(0, 0) = a.value().sum();
    return Var(detail::make_op(std::move(out), {an}, [an](Node& self) {
        detail::accum(an, Mat::Constant(an->value.rows(), an->value.cols(), self.grad(0, 0)));
    }));
}

inline Var mean_all(const Var& a) {
    auto an = a.node();
    const double n = static_cast<double>(a.rows() * a.cols());
    Mat out(1, 1);
    out(0, 0) = a.value().sum() / n;
    return Var(detail::make_op(std::move(out), {an}, [an, n](Node& self) {
        detail::accum(an, Mat::Constant(an->value.rows(), an->value.cols(),
                                        self.grad(0, 0) / n));
    }));
}

/// Mean squared error between two same-shape variables (per-element mean).
inline Var mse(const Var& a, const Var& b) {
    Var d = sub(a, b);
    return mean_all(mul(d, d));
}

// --- backward ---------------------------------------------------------------

/// Reverse-mode sweep from root. Root gradient seeds with ones.
inline void backward(const Var& root) {
    if (!root.requires_grad()) return;

    // Iterative post-order DFS; graphs can be a few thousand nodes deep.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        bool descended = false;
        while (next < node->inputs.size()) {
            Node* child = node->inputs[next].get();
            ++next;
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
                descended = true;
                break;
            }
        }
        if (!descended && (stack.back().second >= stack.back().first->inputs.size())) {
            order.push_back(stack.back().first);
            stack.pop_back();
        }
    }

    root.node()->ensure_grad();
    root.node()->grad.setOnes();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

// --- parameter helpers ------------------------------------------------------

/// A named trainable tensor.
struct NamedParam {
    std::string name;
    Var var;
};

inline Mat glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
    return m;
}

} // namespace loadlens::nn
