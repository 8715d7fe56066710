#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "eirehn/errors.hpp"
#include "eirehn/tensor.hpp"

namespace eirehn {

// Handle to one value slot on a Tape.
struct Value {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
};

namespace detail {

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x) {
    // log(1 + e^x), overflow-safe for large |x|.
    return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

}  // namespace detail

// Reverse-mode differentiation record. Forward calls append nodes holding
// the primitive, its operand slots, and the computed value; backward()
// replays the record once in reverse, accumulating adjoints additively so
// a slot used several times receives the sum of its contributions. A tape
// is single-use per backward pass and confined to one thread.
class Tape {
    enum class Op : uint8_t {
        Leaf, Add, Sub, Mul, Tanh, Sigm, Softplus, Max0, Exp, Log,
        Scale, MatMul, MatMulTA, Affine, Rows, Col, Sum, Mean, CeLoss,
    };

    struct Node {
        Op op;
        int32_t a = -1, b = -1, c = -1;
        int32_t i0 = 0, i1 = 0;
        double d0 = 0.0;
        Tensor val;
    };

public:
    Tape() { nodes_.reserve(256); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    size_t size() const { return nodes_.size(); }

    const Tensor& val(Value v) const { return nodes_[v.id].val; }

    // ---- leaves -------------------------------------------------------

    Value leaf(Tensor t) { return push({Op::Leaf, -1, -1, -1, 0, 0, 0.0, std::move(t)}); }

    // Cached scalar constant.
    Value constant(double v) {
        auto it = const_cache_.find(v);
        if (it != const_cache_.end()) return it->second;
        Value out = leaf(Tensor::scalar(v));
        const_cache_.emplace(v, out);
        return out;
    }

    // Cached all-zero vector of a given length.
    Value zero_vec(int n) {
        auto it = zero_cache_.find(n);
        if (it != zero_cache_.end()) return it->second;
        Value out = leaf(Tensor::zeros({n}));
        zero_cache_.emplace(n, out);
        return out;
    }

    // ---- elementwise (scalar operands broadcast) ----------------------

    Value add(Value a, Value b) { return binary(Op::Add, a, b); }
    Value sub(Value a, Value b) { return binary(Op::Sub, a, b); }
    Value mul(Value a, Value b) { return binary(Op::Mul, a, b); }

    Value tanh(Value a) { return unary(Op::Tanh, a, [](double x) { return std::tanh(x); }); }
    Value sigm(Value a) { return unary(Op::Sigm, a, detail::sigmoid); }
    Value softplus(Value a) { return unary(Op::Softplus, a, detail::softplus); }
    Value max0(Value a) { return unary(Op::Max0, a, [](double x) { return x > 0.0 ? x : 0.0; }); }
    Value exp(Value a) { return unary(Op::Exp, a, [](double x) { return std::exp(x); }); }

    Value log(Value a) {
        const Tensor& x = nodes_[a.id].val;
        for (size_t i = 0; i < x.numel(); ++i)
            if (x[i] <= 0.0)
                throw DomainError("log: non-positive input " + std::to_string(x[i]));
        return unary(Op::Log, a, [](double v) { return std::log(v); });
    }

    // Elementwise multiply by a compile-time-known constant.
    Value scale(Value a, double k) {
        Tensor out = nodes_[a.id].val;
        for (size_t i = 0; i < out.numel(); ++i) out[i] *= k;
        return push({Op::Scale, a.id, -1, -1, 0, 0, k, std::move(out)});
    }

    // ---- linear algebra ------------------------------------------------

    // [m x k] * [k x n] -> [m x n], or [m x k] * [k] -> [m].
    Value matmul(Value a, Value b) {
        const Tensor& A = nodes_[a.id].val;
        const Tensor& B = nodes_[b.id].val;
        if (A.rank() != 2 || (B.rank() != 1 && B.rank() != 2) || A.cols() != B.rows())
            throw ShapeError("matmul: " + A.shape_str() + " x " + B.shape_str());
        int m = A.rows(), k = A.cols(), n = B.cols();
        Tensor out = B.rank() == 1 ? Tensor({m}) : Tensor({m, n});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int l = 0; l < k; ++l) acc += A[i * k + l] * B[l * n + j];
                out[i * n + j] = acc;
            }
        return push({Op::MatMul, a.id, b.id, -1, 0, 0, 0.0, std::move(out)});
    }

    // transpose(A) * b for matrix A [k x c] and vector b [k] -> [c].
    Value matmul_ta(Value a, Value b) {
        const Tensor& A = nodes_[a.id].val;
        const Tensor& B = nodes_[b.id].val;
        if (A.rank() != 2 || B.rank() != 1 || A.rows() != B.rows())
            throw ShapeError("matmul_ta: " + A.shape_str() + "^T x " + B.shape_str());
        int k = A.rows(), c = A.cols();
        Tensor out({c});
        for (int j = 0; j < c; ++j) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) acc += A[i * c + j] * B[i];
            out[j] = acc;
        }
        return push({Op::MatMulTA, a.id, b.id, -1, 0, 0, 0.0, std::move(out)});
    }

    // W [d x (nh+nx+1)] * [h; x; 1] -- the combined weight-plus-bias form.
    Value affine(Value w, Value h, Value x) {
        const Tensor& W = nodes_[w.id].val;
        const Tensor& H = nodes_[h.id].val;
        const Tensor& X = nodes_[x.id].val;
        int nh = static_cast<int>(H.numel()), nx = static_cast<int>(X.numel());
        if (W.rank() != 2 || W.cols() != nh + nx + 1)
            throw ShapeError("affine: " + W.shape_str() + " vs [" + std::to_string(nh) +
                             ";" + std::to_string(nx) + ";1]");
        int d = W.rows(), k = W.cols();
        Tensor out({d});
        for (int i = 0; i < d; ++i) {
            const double* row = W.data() + static_cast<size_t>(i) * k;
            double acc = row[nh + nx];
            for (int j = 0; j < nh; ++j) acc += row[j] * H[j];
            for (int j = 0; j < nx; ++j) acc += row[nh + j] * X[j];
            out[i] = acc;
        }
        return push({Op::Affine, w.id, h.id, x.id, 0, 0, 0.0, std::move(out)});
    }

    // Contiguous segment of a vector.
    Value rows(Value a, int offset, int len) {
        const Tensor& A = nodes_[a.id].val;
        if (A.rank() != 1 || offset < 0 || offset + len > A.rows())
            throw ShapeError("rows: " + A.shape_str() + " offset " + std::to_string(offset) +
                             " len " + std::to_string(len));
        Tensor out({len});
        for (int i = 0; i < len; ++i) out[i] = A[offset + i];
        return push({Op::Rows, a.id, -1, -1, offset, len, 0.0, std::move(out)});
    }

    // Column j of a matrix, as a vector.
    Value col(Value a, int j) {
        const Tensor& A = nodes_[a.id].val;
        if (A.rank() != 2 || j < 0 || j >= A.cols())
            throw ShapeError("col: " + A.shape_str() + " column " + std::to_string(j));
        int m = A.rows(), n = A.cols();
        Tensor out({m});
        for (int i = 0; i < m; ++i) out[i] = A[i * n + j];
        return push({Op::Col, a.id, -1, -1, j, 0, 0.0, std::move(out)});
    }

    // ---- reductions ----------------------------------------------------

    Value sum(Value a) {
        const Tensor& A = nodes_[a.id].val;
        double acc = 0.0;
        for (size_t i = 0; i < A.numel(); ++i) acc += A[i];
        return push({Op::Sum, a.id, -1, -1, 0, 0, 0.0, Tensor::scalar(acc)});
    }

    Value mean(Value a) {
        const Tensor& A = nodes_[a.id].val;
        double acc = 0.0;
        for (size_t i = 0; i < A.numel(); ++i) acc += A[i];
        return push({Op::Mean, a.id, -1, -1, 0, 0, 0.0,
                     Tensor::scalar(acc / static_cast<double>(A.numel()))});
    }

    // -log softmax(logits)[label], computed with max subtraction.
    Value ce_loss(Value logits, int label) {
        const Tensor& L = nodes_[logits.id].val;
        if (L.rank() != 1) throw ShapeError("ce_loss: logits " + L.shape_str());
        if (label < 0 || label >= L.rows())
            throw ContractError("ce_loss: label " + std::to_string(label) + " out of range [0," +
                                std::to_string(L.rows()) + ")");
        double m = L[0];
        for (size_t i = 1; i < L.numel(); ++i) m = std::max(m, L[i]);
        double z = 0.0;
        for (size_t i = 0; i < L.numel(); ++i) z += std::exp(L[i] - m);
        double loss = m + std::log(z) - L[label];
        return push({Op::CeLoss, logits.id, -1, -1, label, 0, 0.0, Tensor::scalar(loss)});
    }

    // ---- backward ------------------------------------------------------

    void backward(Value loss) {
        if (!loss.valid() || nodes_[loss.id].val.numel() != 1)
            throw ContractError("backward: loss must be a scalar slot");
        if (consumed_) throw ContractError("backward: tape already consumed");
        consumed_ = true;

        grads_.clear();
        grads_.reserve(nodes_.size());
        for (const Node& n : nodes_) grads_.emplace_back(Tensor::zeros(n.val.shape()));
        grads_[loss.id][0] = 1.0;

        for (int32_t i = loss.id; i >= 0; --i) backprop_node(i);
    }

    // Gradient of the recorded loss w.r.t. a slot; zeros when no path.
    const Tensor& grad(Value v) const {
        if (!consumed_) throw ContractError("grad: backward has not run");
        return grads_[v.id];
    }

private:
    Value push(Node&& n) {
        nodes_.push_back(std::move(n));
        return Value{static_cast<int32_t>(nodes_.size() - 1)};
    }

    template <typename F>
    Value unary(Op op, Value a, F&& f) {
        Tensor out = nodes_[a.id].val;
        for (size_t i = 0; i < out.numel(); ++i) out[i] = f(out[i]);
        return push({op, a.id, -1, -1, 0, 0, 0.0, std::move(out)});
    }

    Value binary(Op op, Value a, Value b) {
        const Tensor& A = nodes_[a.id].val;
        const Tensor& B = nodes_[b.id].val;
        const bool as = A.is_scalar(), bs = B.is_scalar();
        if (!as && !bs && !A.same_shape(B))
            throw ShapeError(op_name(op) + ": " + A.shape_str() + " vs " + B.shape_str());
        const Tensor& big = (as && !bs) ? B : A;
        Tensor out(big.shape());
        const size_t n = out.numel();
        for (size_t i = 0; i < n; ++i) {
            double x = A[as ? 0 : i], y = B[bs ? 0 : i];
            out[i] = op == Op::Add ? x + y : op == Op::Sub ? x - y : x * y;
        }
        return push({op, a.id, b.id, -1, 0, 0, 0.0, std::move(out)});
    }

    static std::string op_name(Op op) {
        switch (op) {
            case Op::Add: return "add";
            case Op::Sub: return "sub";
            case Op::Mul: return "mul";
            default: return "op";
        }
    }

    void backprop_node(int32_t i) {
        const Node& n = nodes_[i];
        const Tensor& g = grads_[i];
        switch (n.op) {
            case Op::Leaf: return;
            case Op::Add: {
                accumulate_weighted(n.a, g, +1.0);
                accumulate_weighted(n.b, g, +1.0);
                return;
            }
            case Op::Sub: {
                accumulate_weighted(n.a, g, +1.0);
                accumulate_weighted(n.b, g, -1.0);
                return;
            }
            case Op::Mul: {
                accumulate_product(n.a, g, nodes_[n.b].val);
                accumulate_product(n.b, g, nodes_[n.a].val);
                return;
            }
            case Op::Tanh: {
                Tensor& da = grads_[n.a];
                for (size_t k = 0; k < g.numel(); ++k) da[k] += g[k] * (1.0 - n.val[k] * n.val[k]);
                return;
            }
            case Op::Sigm: {
                Tensor& da = grads_[n.a];
                for (size_t k = 0; k < g.numel(); ++k) da[k] += g[k] * n.val[k] * (1.0 - n.val[k]);
                return;
            }
            case Op::Softplus: {
                Tensor& da = grads_[n.a];
                const Tensor& x = nodes_[n.a].val;
                for (size_t k = 0; k < g.numel(); ++k) da[k] += g[k] * detail::sigmoid(x[k]);
                return;
            }
            case Op::Max0: {
                // Subgradient 0 at and below zero: the halted branch stays dark.
                Tensor& da = grads_[n.a];
                const Tensor& x = nodes_[n.a].val;
                for (size_t k = 0; k < g.numel(); ++k)
                    if (x[k] > 0.0) da[k] += g[k];
                return;
            }
            case Op::Exp: {
                Tensor& da = grads_[n.a];
                for (size_t k = 0; k < g.numel(); ++k) da[k] += g[k] * n.val[k];
                return;
            }
            case Op::Log: {
                Tensor& da = grads_[n.a];
                const Tensor& x = nodes_[n.a].val;
                for (size_t k = 0; k < g.numel(); ++k) da[k] += g[k] / x[k];
                return;
            }
            case Op::Scale: {
                Tensor& da = grads_[n.a];
                for (size_t k = 0; k < g.numel(); ++k) da[k] += g[k] * n.d0;
                return;
            }
            case Op::MatMul: {
                const Tensor& A = nodes_[n.a].val;
                const Tensor& B = nodes_[n.b].val;
                Tensor& dA = grads_[n.a];
                Tensor& dB = grads_[n.b];
                int m = A.rows(), k = A.cols(), c = B.cols();
                for (int r = 0; r < m; ++r)
                    for (int l = 0; l < k; ++l) {
                        double acc = 0.0;
                        for (int j = 0; j < c; ++j) acc += g[r * c + j] * B[l * c + j];
                        dA[r * k + l] += acc;
                    }
                for (int l = 0; l < k; ++l)
                    for (int j = 0; j < c; ++j) {
                        double acc = 0.0;
                        for (int r = 0; r < m; ++r) acc += A[r * k + l] * g[r * c + j];
                        dB[l * c + j] += acc;
                    }
                return;
            }
            case Op::MatMulTA: {
                const Tensor& A = nodes_[n.a].val;
                const Tensor& B = nodes_[n.b].val;
                Tensor& dA = grads_[n.a];
                Tensor& dB = grads_[n.b];
                int k = A.rows(), c = A.cols();
                for (int r = 0; r < k; ++r)
                    for (int j = 0; j < c; ++j) dA[r * c + j] += B[r] * g[j];
                for (int r = 0; r < k; ++r) {
                    double acc = 0.0;
                    for (int j = 0; j < c; ++j) acc += A[r * c + j] * g[j];
                    dB[r] += acc;
                }
                return;
            }
            case Op::Affine: {
                const Tensor& W = nodes_[n.a].val;
                const Tensor& H = nodes_[n.b].val;
                const Tensor& X = nodes_[n.c].val;
                Tensor& dW = grads_[n.a];
                Tensor& dH = grads_[n.b];
                Tensor& dX = grads_[n.c];
                int d = W.rows(), k = W.cols();
                int nh = static_cast<int>(H.numel()), nx = static_cast<int>(X.numel());
                for (int r = 0; r < d; ++r) {
                    double gr = g[r];
                    double* dwrow = dW.data() + static_cast<size_t>(r) * k;
                    const double* wrow = W.data() + static_cast<size_t>(r) * k;
                    for (int j = 0; j < nh; ++j) {
                        dwrow[j] += gr * H[j];
                        dH[j] += wrow[j] * gr;
                    }
                    for (int j = 0; j < nx; ++j) {
                        dwrow[nh + j] += gr * X[j];
                        dX[j] += wrow[nh + j] * gr;
                    }
                    dwrow[nh + nx] += gr;
                }
                return;
            }
            case Op::Rows: {
                Tensor& da = grads_[n.a];
                for (int k = 0; k < n.i1; ++k) da[n.i0 + k] += g[k];
                return;
            }
            case Op::Col: {
                Tensor& da = grads_[n.a];
                int c = nodes_[n.a].val.cols();
                for (size_t k = 0; k < g.numel(); ++k) da[k * c + n.i0] += g[k];
                return;
            }
            case Op::Sum: {
                Tensor& da = grads_[n.a];
                for (size_t k = 0; k < da.numel(); ++k) da[k] += g[0];
                return;
            }
            case Op::Mean: {
                Tensor& da = grads_[n.a];
                double w = g[0] / static_cast<double>(da.numel());
                for (size_t k = 0; k < da.numel(); ++k) da[k] += w;
                return;
            }
            case Op::CeLoss: {
                const Tensor& L = nodes_[n.a].val;
                Tensor& da = grads_[n.a];
                double m = L[0];
                for (size_t k = 1; k < L.numel(); ++k) m = std::max(m, L[k]);
                double z = 0.0;
                for (size_t k = 0; k < L.numel(); ++k) z += std::exp(L[k] - m);
                for (size_t k = 0; k < L.numel(); ++k) {
                    double p = std::exp(L[k] - m) / z;
                    da[k] += g[0] * (p - (static_cast<int>(k) == n.i0 ? 1.0 : 0.0));
                }
                return;
            }
        }
    }

    // grad(operand) += sign * g with scalar-broadcast collapse.
    void accumulate_weighted(int32_t slot, const Tensor& g, double sign) {
        Tensor& d = grads_[slot];
        if (d.is_scalar() && !g.is_scalar()) {
            double acc = 0.0;
            for (size_t i = 0; i < g.numel(); ++i) acc += g[i];
            d[0] += sign * acc;
        } else {
            for (size_t i = 0; i < d.numel(); ++i) d[i] += sign * g[i];
        }
    }

    // grad(operand) += g .* other with scalar broadcast on either side.
    void accumulate_product(int32_t slot, const Tensor& g, const Tensor& other) {
        Tensor& d = grads_[slot];
        const bool os = other.is_scalar();
        if (d.is_scalar() && !g.is_scalar()) {
            double acc = 0.0;
            for (size_t i = 0; i < g.numel(); ++i) acc += g[i] * other[os ? 0 : i];
            d[0] += acc;
        } else {
            for (size_t i = 0; i < d.numel(); ++i) d[i] += g[i] * other[os ? 0 : i];
        }
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::map<double, Value> const_cache_;
    std::map<int, Value> zero_cache_;
    bool consumed_ = false;
};

// Thin expression handle so cell code reads like the update rules.
struct Expr {
    Tape* tape = nullptr;
    Value v;

    const Tensor& val() const { return tape->val(v); }

    Expr tanh() const { return {tape, tape->tanh(v)}; }
    Expr sigm() const { return {tape, tape->sigm(v)}; }
    Expr softplus() const { return {tape, tape->softplus(v)}; }
    Expr max0() const { return {tape, tape->max0(v)}; }
    Expr exp() const { return {tape, tape->exp(v)}; }
    Expr log() const { return {tape, tape->log(v)}; }
    Expr sum() const { return {tape, tape->sum(v)}; }
    Expr mean() const { return {tape, tape->mean(v)}; }
    Expr scale(double k) const { return {tape, tape->scale(v, k)}; }

    friend Expr operator+(Expr a, Expr b) { return {a.tape, a.tape->add(a.v, b.v)}; }
    friend Expr operator-(Expr a, Expr b) { return {a.tape, a.tape->sub(a.v, b.v)}; }
    friend Expr operator*(Expr a, Expr b) { return {a.tape, a.tape->mul(a.v, b.v)}; }
    friend Expr operator-(double k, Expr b) {
        return {b.tape, b.tape->sub(b.tape->constant(k), b.v)};
    }
};

inline Expr ex(Tape& t, Value v) { return {&t, v}; }

}  // namespace eirehn
