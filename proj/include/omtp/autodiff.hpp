#ifndef OMTP_AUTODIFF_HPP
#define OMTP_AUTODIFF_HPP

// Reverse-mode automatic differentiation over small dense tensors.
//
// A Tape is an append-only list of nodes. Values and adjoints live in two
// flat arenas owned by the tape; a Var is a cheap (tape, index) handle.
// Every operation records its operands by index, so the node list is always
// in topological order and backward() is a single reverse sweep.
//
// Shapes are rows x cols, row-major. Vectors are n x 1, scalars 1 x 1.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "omtp/errors.hpp"
#include "omtp/kernels.hpp"

namespace omtp::ad {

enum class BinaryOp : std::uint8_t { Add, Sub, Mul, MatVec, Dot, Concat };

enum class UnaryOp : std::uint8_t { Tanh, Relu, Atan, Negate, Scale, Square, Sqrt, L2Norm, Sum };

class Tape;

class Var {
public:
    Var() = default;

    [[nodiscard]] Tape* tape() const noexcept { return tape_; }
    [[nodiscard]] std::uint32_t index() const noexcept { return index_; }
    [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }

    [[nodiscard]] std::size_t rows() const;
    [[nodiscard]] std::size_t cols() const;
    [[nodiscard]] std::size_t size() const { return rows() * cols(); }
    [[nodiscard]] std::span<const double> value() const;
    [[nodiscard]] std::span<const double> grad() const;
    [[nodiscard]] double scalar() const;

private:
    friend class Tape;
    Var(Tape* tape, std::uint32_t index) : tape_(tape), index_(index) {}

    Tape* tape_ = nullptr;
    std::uint32_t index_ = 0;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void reserve(std::size_t nodes, std::size_t scalars) {
        nodes_.reserve(nodes);
        values_.reserve(scalars);
        adjoints_.reserve(scalars);
    }

    [[nodiscard]] std::size_t node_count() const noexcept { return nodes_.size(); }
    [[nodiscard]] std::size_t scalar_count() const noexcept { return values_.size(); }

    // Leaf holding a copy of `values`; shape rows x cols.
    Var leaf(std::span<const double> values, std::size_t rows, std::size_t cols = 1) {
        if (values.size() != rows * cols) {
            throw DimensionError("leaf: " + std::to_string(values.size()) + " values for shape " +
                                 detail::dims(rows, cols));
        }
        const std::uint32_t id = push(Kind::Leaf, kNone, kNone, rows, cols, 0.0);
        std::copy(values.begin(), values.end(), values_.begin() + static_cast<std::ptrdiff_t>(nodes_[id].offset));
        return {this, id};
    }

    Var vector(std::span<const double> values) { return leaf(values, values.size(), 1); }

    Var scalar(double value) { return leaf(std::span<const double>(&value, 1), 1, 1); }

    Var record_binary(BinaryOp op, Var lhs, Var rhs) {
        check_owned(lhs);
        check_owned(rhs);
        const Node l = nodes_[lhs.index_];
        const Node r = nodes_[rhs.index_];
        switch (op) {
            case BinaryOp::Add:
            case BinaryOp::Sub:
            case BinaryOp::Mul: {
                if (l.rows != r.rows || l.cols != r.cols) {
                    throw DimensionError(std::string(name(op)) + ": shape mismatch " + detail::dims(l.rows, l.cols) +
                                         " vs " + detail::dims(r.rows, r.cols));
                }
                const auto kind = op == BinaryOp::Add ? Kind::Add : op == BinaryOp::Sub ? Kind::Sub : Kind::Mul;
                const std::uint32_t id = push(kind, lhs.index_, rhs.index_, l.rows, l.cols, 0.0);
                auto y = out(id);
                if (kind == Kind::Add) kernels::add(val(l), val(r), y);
                else if (kind == Kind::Sub) kernels::sub(val(l), val(r), y);
                else kernels::mul(val(l), val(r), y);
                return {this, id};
            }
            case BinaryOp::MatVec: {
                if (r.cols != 1 || l.cols != r.rows) {
                    throw DimensionError("matvec: matrix " + detail::dims(l.rows, l.cols) + " times " +
                                         detail::dims(r.rows, r.cols));
                }
                const std::uint32_t id = push(Kind::MatVec, lhs.index_, rhs.index_, l.rows, 1, 0.0);
                kernels::matvec(val(nodes_[lhs.index_]), val(nodes_[rhs.index_]), out(id));
                return {this, id};
            }
            case BinaryOp::Dot: {
                if (l.rows * l.cols != r.rows * r.cols) {
                    throw DimensionError("dot: size mismatch " + detail::dims(l.rows, l.cols) + " vs " +
                                         detail::dims(r.rows, r.cols));
                }
                const std::uint32_t id = push(Kind::Dot, lhs.index_, rhs.index_, 1, 1, 0.0);
                out(id)[0] = kernels::dot(val(nodes_[lhs.index_]), val(nodes_[rhs.index_]));
                return {this, id};
            }
            case BinaryOp::Concat: {
                if (l.cols != 1 || r.cols != 1) {
                    throw DimensionError("concat: expects column vectors, got " + detail::dims(l.rows, l.cols) +
                                         " and " + detail::dims(r.rows, r.cols));
                }
                const std::uint32_t id = push(Kind::Concat, lhs.index_, rhs.index_, l.rows + r.rows, 1, 0.0);
                auto y = out(id);
                auto a = val(nodes_[lhs.index_]);
                auto b = val(nodes_[rhs.index_]);
                std::copy(a.begin(), a.end(), y.begin());
                std::copy(b.begin(), b.end(), y.begin() + static_cast<std::ptrdiff_t>(a.size()));
                return {this, id};
            }
        }
        throw DimensionError("unknown binary op");
    }

    // `constant` is only read by Scale.
    Var record_unary(UnaryOp op, Var x, double constant = 1.0) {
        check_owned(x);
        const Node n = nodes_[x.index_];
        switch (op) {
            case UnaryOp::L2Norm: {
                const std::uint32_t id = push(Kind::L2Norm, x.index_, kNone, 1, 1, 0.0);
                out(id)[0] = kernels::l2norm(val(nodes_[x.index_]));
                return {this, id};
            }
            case UnaryOp::Sum: {
                const std::uint32_t id = push(Kind::Sum, x.index_, kNone, 1, 1, 0.0);
                out(id)[0] = kernels::sum(val(nodes_[x.index_]));
                return {this, id};
            }
            default: break;
        }
        const Kind kind = unary_kind(op);
        const std::uint32_t id = push(kind, x.index_, kNone, n.rows, n.cols, constant);
        auto y = out(id);
        auto v = val(nodes_[x.index_]);
        switch (kind) {
            case Kind::Tanh:
                for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(v[i]);
                break;
            case Kind::Relu:
                for (std::size_t i = 0; i < y.size(); ++i) y[i] = kernels::relu(v[i]);
                break;
            case Kind::Atan:
                for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::atan(v[i]);
                break;
            case Kind::Negate:
                for (std::size_t i = 0; i < y.size(); ++i) y[i] = -v[i];
                break;
            case Kind::Scale: kernels::scale(v, constant, y); break;
            case Kind::Square:
                for (std::size_t i = 0; i < y.size(); ++i) y[i] = v[i] * v[i];
                break;
            case Kind::Sqrt:
                for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::sqrt(v[i]);
                break;
            default: break;
        }
        return {this, id};
    }

    // Records an externally evaluated map y = f(x) together with its Jacobian
    // (out x in, row-major). Used for model drifts whose derivative is known
    // in closed form.
    Var record_map(Var x, std::span<const double> value, std::span<const double> jacobian) {
        check_owned(x);
        const Node n = nodes_[x.index_];
        const std::size_t in = n.rows * n.cols;
        if (jacobian.size() != value.size() * in) {
            throw DimensionError("map: jacobian has " + std::to_string(jacobian.size()) + " entries, expected " +
                                 detail::dims(value.size(), in));
        }
        const std::uint32_t id = push(Kind::Map, x.index_, kNone, value.size(), 1, 0.0);
        nodes_[id].aux = aux_.size();
        aux_.insert(aux_.end(), jacobian.begin(), jacobian.end());
        auto y = out(id);
        std::copy(value.begin(), value.end(), y.begin());
        return {this, id};
    }

    // Resets all adjoints, seeds d(loss)/d(loss) = 1 and sweeps the tape in
    // reverse. May be called repeatedly on the same tape.
    void backward(Var loss) {
        check_owned(loss);
        const Node& ln = nodes_[loss.index_];
        if (ln.rows * ln.cols != 1) {
            throw DimensionError("backward: loss must be scalar, got " + detail::dims(ln.rows, ln.cols));
        }
        std::fill(adjoints_.begin(), adjoints_.end(), 0.0);
        adjoints_[ln.offset] = 1.0;
        for (std::size_t k = loss.index_ + 1; k-- > 0;) propagate(nodes_[k]);
    }

    [[nodiscard]] std::span<const double> value(Var v) const {
        const Node& n = nodes_[v.index_];
        return {values_.data() + n.offset, n.rows * n.cols};
    }

    [[nodiscard]] std::span<const double> grad(Var v) const {
        const Node& n = nodes_[v.index_];
        return {adjoints_.data() + n.offset, n.rows * n.cols};
    }

    [[nodiscard]] std::size_t rows(Var v) const { return nodes_[v.index_].rows; }
    [[nodiscard]] std::size_t cols(Var v) const { return nodes_[v.index_].cols; }

private:
    enum class Kind : std::uint8_t {
        Leaf, Add, Sub, Mul, MatVec, Dot, Concat,
        Tanh, Relu, Atan, Negate, Scale, Square, Sqrt, L2Norm, Sum, Map
    };

    static constexpr std::uint32_t kNone = 0xffffffffu;

    struct Node {
        Kind kind;
        std::uint32_t lhs;
        std::uint32_t rhs;
        std::size_t rows;
        std::size_t cols;
        std::size_t offset;
        std::size_t aux;
        double constant;
    };

    static const char* name(BinaryOp op) {
        switch (op) {
            case BinaryOp::Add: return "add";
            case BinaryOp::Sub: return "sub";
            case BinaryOp::Mul: return "mul";
            case BinaryOp::MatVec: return "matvec";
            case BinaryOp::Dot: return "dot";
            case BinaryOp::Concat: return "concat";
        }
        return "?";
    }

    static Kind unary_kind(UnaryOp op) {
        switch (op) {
            case UnaryOp::Tanh: return Kind::Tanh;
            case UnaryOp::Relu: return Kind::Relu;
            case UnaryOp::Atan: return Kind::Atan;
            case UnaryOp::Negate: return Kind::Negate;
            case UnaryOp::Scale: return Kind::Scale;
            case UnaryOp::Square: return Kind::Square;
            case UnaryOp::Sqrt: return Kind::Sqrt;
            case UnaryOp::L2Norm: return Kind::L2Norm;
            case UnaryOp::Sum: return Kind::Sum;
        }
        return Kind::Leaf;
    }

    void check_owned(Var v) const {
        if (v.tape_ != this || v.index_ >= nodes_.size()) {
            throw DimensionError("variable does not belong to this tape");
        }
    }

    std::uint32_t push(Kind kind, std::uint32_t lhs, std::uint32_t rhs, std::size_t rows, std::size_t cols,
                       double constant) {
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back(Node{kind, lhs, rhs, rows, cols, values_.size(), 0, constant});
        values_.resize(values_.size() + rows * cols, 0.0);
        adjoints_.resize(values_.size(), 0.0);
        return id;
    }

    std::span<const double> val(const Node& n) const { return {values_.data() + n.offset, n.rows * n.cols}; }
    std::span<double> out(std::uint32_t id) {
        const Node& n = nodes_[id];
        return {values_.data() + n.offset, n.rows * n.cols};
    }

    void propagate(const Node& n) {
        const std::size_t size = n.rows * n.cols;
        const double* g = adjoints_.data() + n.offset;
        const double* y = values_.data() + n.offset;
        switch (n.kind) {
            case Kind::Leaf: return;
            case Kind::Add: {
                double* ga = adj(n.lhs);
                for (std::size_t i = 0; i < size; ++i) ga[i] += g[i];
                double* gb = adj(n.rhs);
                for (std::size_t i = 0; i < size; ++i) gb[i] += g[i];
                return;
            }
            case Kind::Sub: {
                double* ga = adj(n.lhs);
                for (std::size_t i = 0; i < size; ++i) ga[i] += g[i];
                double* gb = adj(n.rhs);
                for (std::size_t i = 0; i < size; ++i) gb[i] -= g[i];
                return;
            }
            case Kind::Mul: {
                const double* a = vals(n.lhs);
                const double* b = vals(n.rhs);
                double* ga = adj(n.lhs);
                for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] * b[i];
                double* gb = adj(n.rhs);
                for (std::size_t i = 0; i < size; ++i) gb[i] += g[i] * a[i];
                return;
            }
            case Kind::MatVec: {
                const std::size_t cols = nodes_[n.lhs].cols;
                const double* a = vals(n.lhs);
                const double* x = vals(n.rhs);
                double* ga = adj(n.lhs);
                double* gx = adj(n.rhs);
                for (std::size_t i = 0; i < n.rows; ++i) {
                    const double gi = g[i];
                    if (gi == 0.0) continue;
                    double* grow = ga + i * cols;
                    const double* arow = a + i * cols;
                    for (std::size_t j = 0; j < cols; ++j) {
                        grow[j] += gi * x[j];
                        gx[j] += gi * arow[j];
                    }
                }
                return;
            }
            case Kind::Dot: {
                const std::size_t m = nodes_[n.lhs].rows * nodes_[n.lhs].cols;
                const double* a = vals(n.lhs);
                const double* b = vals(n.rhs);
                double* ga = adj(n.lhs);
                for (std::size_t i = 0; i < m; ++i) ga[i] += g[0] * b[i];
                double* gb = adj(n.rhs);
                for (std::size_t i = 0; i < m; ++i) gb[i] += g[0] * a[i];
                return;
            }
            case Kind::Concat: {
                const std::size_t m = nodes_[n.lhs].rows;
                double* ga = adj(n.lhs);
                for (std::size_t i = 0; i < m; ++i) ga[i] += g[i];
                double* gb = adj(n.rhs);
                for (std::size_t i = m; i < size; ++i) gb[i - m] += g[i];
                return;
            }
            case Kind::Tanh: {
                double* gx = adj(n.lhs);
                for (std::size_t i = 0; i < size; ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
                return;
            }
            case Kind::Relu: {
                const double* x = vals(n.lhs);
                double* gx = adj(n.lhs);
                for (std::size_t i = 0; i < size; ++i) {
                    if (x[i] > 0.0) gx[i] += g[i];
                }
                return;
            }
            case Kind::Atan: {
                const double* x = vals(n.lhs);
                double* gx = adj(n.lhs);
                for (std::size_t i = 0; i < size; ++i) gx[i] += g[i] / (1.0 + x[i] * x[i]);
                return;
            }
            case Kind::Negate: {
                double* gx = adj(n.lhs);
                for (std::size_t i = 0; i < size; ++i) gx[i] -= g[i];
                return;
            }
            case Kind::Scale: {
                double* gx = adj(n.lhs);
                for (std::size_t i = 0; i < size; ++i) gx[i] += g[i] * n.constant;
                return;
            }
            case Kind::Square: {
                const double* x = vals(n.lhs);
                double* gx = adj(n.lhs);
                for (std::size_t i = 0; i < size; ++i) gx[i] += 2.0 * x[i] * g[i];
                return;
            }
            case Kind::Sqrt: {
                double* gx = adj(n.lhs);
                for (std::size_t i = 0; i < size; ++i) gx[i] += g[i] / (2.0 * y[i]);
                return;
            }
            case Kind::L2Norm: {
                // Zero subgradient at the origin.
                if (y[0] == 0.0) return;
                const std::size_t m = nodes_[n.lhs].rows * nodes_[n.lhs].cols;
                const double* x = vals(n.lhs);
                double* gx = adj(n.lhs);
                const double s = g[0] / y[0];
                for (std::size_t i = 0; i < m; ++i) gx[i] += s * x[i];
                return;
            }
            case Kind::Sum: {
                const std::size_t m = nodes_[n.lhs].rows * nodes_[n.lhs].cols;
                double* gx = adj(n.lhs);
                for (std::size_t i = 0; i < m; ++i) gx[i] += g[0];
                return;
            }
            case Kind::Map: {
                const std::size_t in = nodes_[n.lhs].rows * nodes_[n.lhs].cols;
                const double* jac = aux_.data() + n.aux;
                double* gx = adj(n.lhs);
                for (std::size_t i = 0; i < size; ++i) {
                    const double gi = g[i];
                    const double* row = jac + i * in;
                    for (std::size_t j = 0; j < in; ++j) gx[j] += gi * row[j];
                }
                return;
            }
        }
    }

    double* adj(std::uint32_t id) { return adjoints_.data() + nodes_[id].offset; }
    const double* vals(std::uint32_t id) const { return values_.data() + nodes_[id].offset; }

    friend class Var;

    std::vector<Node> nodes_;
    std::vector<double> values_;
    std::vector<double> adjoints_;
    std::vector<double> aux_;
};

inline std::size_t Var::rows() const { return tape_->rows(*this); }
inline std::size_t Var::cols() const { return tape_->cols(*this); }
inline std::span<const double> Var::value() const { return tape_->value(*this); }
inline std::span<const double> Var::grad() const { return tape_->grad(*this); }
inline double Var::scalar() const {
    if (size() != 1) throw DimensionError("scalar(): variable has shape " + detail::dims(rows(), cols()));
    return value()[0];
}

inline Var operator+(Var a, Var b) { return a.tape()->record_binary(BinaryOp::Add, a, b); }
inline Var operator-(Var a, Var b) { return a.tape()->record_binary(BinaryOp::Sub, a, b); }
inline Var operator-(Var a) { return a.tape()->record_unary(UnaryOp::Negate, a); }
inline Var operator*(double c, Var a) { return a.tape()->record_unary(UnaryOp::Scale, a, c); }
inline Var operator*(Var a, double c) { return c * a; }

inline Var mul(Var a, Var b) { return a.tape()->record_binary(BinaryOp::Mul, a, b); }
inline Var matvec(Var m, Var x) { return m.tape()->record_binary(BinaryOp::MatVec, m, x); }
inline Var dot(Var a, Var b) { return a.tape()->record_binary(BinaryOp::Dot, a, b); }
inline Var concat(Var a, Var b) { return a.tape()->record_binary(BinaryOp::Concat, a, b); }

inline Var tanh(Var x) { return x.tape()->record_unary(UnaryOp::Tanh, x); }
inline Var relu(Var x) { return x.tape()->record_unary(UnaryOp::Relu, x); }
inline Var atan(Var x) { return x.tape()->record_unary(UnaryOp::Atan, x); }
inline Var square(Var x) { return x.tape()->record_unary(UnaryOp::Square, x); }
inline Var sqrt(Var x) { return x.tape()->record_unary(UnaryOp::Sqrt, x); }
inline Var l2norm(Var x) { return x.tape()->record_unary(UnaryOp::L2Norm, x); }
inline Var sum(Var x) { return x.tape()->record_unary(UnaryOp::Sum, x); }

}  // namespace omtp::ad

#endif
