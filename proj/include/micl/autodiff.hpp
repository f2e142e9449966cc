#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "micl/matrix.hpp"

namespace micl {

// Handle into a Tape. Scalars are 1x1 matrices.
struct Var {
    std::size_t idx = static_cast<std::size_t>(-1);
    bool valid() const { return idx != static_cast<std::size_t>(-1); }
};

// Reverse-mode autodiff over matrices. One tape per forward pass; backward()
// seeds a scalar root and propagates in reverse creation order.
class Tape {
public:
    Var leaf(Matrix value) {
        nodes_.push_back(Node{std::move(value), {}, {}});
        return Var{nodes_.size() - 1};
    }
    Var scalar(double v) { return leaf(Matrix::scalar(v)); }

    const Matrix& value(Var v) const { return nodes_[v.idx].value; }
    const Matrix& grad(Var v) const { return nodes_[v.idx].grad; }

    std::size_t size() const { return nodes_.size(); }

    // ---- elementwise / broadcast ----

    Var add(Var a, Var b) {
        const Matrix& A = val(a);
        const Matrix& B = val(b);
        if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch");
        Matrix out = A;
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += B[k];
        return make(std::move(out), [this, a, b](const Matrix& g) {
            acc(a, g);
            acc(b, g);
        });
    }

    Var sub(Var a, Var b) {
        const Matrix& A = val(a);
        const Matrix& B = val(b);
        if (!A.same_shape(B)) throw std::invalid_argument("sub: shape mismatch");
        Matrix out = A;
        for (std::size_t k = 0; k < out.size(); ++k) out[k] -= B[k];
        return make(std::move(out), [this, a, b](const Matrix& g) {
            acc(a, g);
            Matrix ng = g;
            for (auto& v : ng.data()) v = -v;
            acc(b, ng);
        });
    }

    Var mul(Var a, Var b) {
        const Matrix& A = val(a);
        const Matrix& B = val(b);
        if (!A.same_shape(B)) throw std::invalid_argument("mul: shape mismatch");
        Matrix out = A;
        for (std::size_t k = 0; k < out.size(); ++k) out[k] *= B[k];
        return make(std::move(out), [this, a, b](const Matrix& g) {
            const Matrix& A2 = val(a);
            const Matrix& B2 = val(b);
            Matrix ga = g, gb = g;
            for (std::size_t k = 0; k < g.size(); ++k) {
                ga[k] *= B2[k];
                gb[k] *= A2[k];
            }
            acc(a, ga);
            acc(b, gb);
        });
    }

    Var div(Var a, Var b) {
        const Matrix& A = val(a);
        const Matrix& B = val(b);
        if (!A.same_shape(B)) throw std::invalid_argument("div: shape mismatch");
        Matrix out = A;
        for (std::size_t k = 0; k < out.size(); ++k) out[k] /= B[k];
        return make(std::move(out), [this, a, b](const Matrix& g) {
            const Matrix& A2 = val(a);
            const Matrix& B2 = val(b);
            Matrix ga = g, gb = g;
            for (std::size_t k = 0; k < g.size(); ++k) {
                ga[k] /= B2[k];
                gb[k] *= -A2[k] / (B2[k] * B2[k]);
            }
            acc(a, ga);
            acc(b, gb);
        });
    }

    Var scale(Var a, double c) {
        Matrix out = val(a);
        for (auto& v : out.data()) v *= c;
        return make(std::move(out), [this, a, c](const Matrix& g) {
            Matrix ga = g;
            for (auto& v : ga.data()) v *= c;
            acc(a, ga);
        });
    }

    Var add_const(Var a, double c) {
        Matrix out = val(a);
        for (auto& v : out.data()) v += c;
        return make(std::move(out), [this, a](const Matrix& g) { acc(a, g); });
    }

    // s is 1x1: every entry of a multiplied by s.
    Var mul_scalar(Var a, Var s) {
        const double sv = val(s)(0, 0);
        Matrix out = val(a);
        for (auto& v : out.data()) v *= sv;
        return make(std::move(out), [this, a, s](const Matrix& g) {
            const double sv2 = val(s)(0, 0);
            const Matrix& A = val(a);
            Matrix ga = g;
            for (auto& v : ga.data()) v *= sv2;
            double gs = 0.0;
            for (std::size_t k = 0; k < g.size(); ++k) gs += g[k] * A[k];
            acc(a, ga);
            acc(s, Matrix::scalar(gs));
        });
    }

    // bias (1 x c) added to every row of a (r x c).
    Var add_rowvec(Var a, Var bias) {
        const Matrix& A = val(a);
        const Matrix& B = val(bias);
        if (B.rows() != 1 || B.cols() != A.cols())
            throw std::invalid_argument("add_rowvec: bias shape mismatch");
        Matrix out = A;
        for (std::size_t i = 0; i < A.rows(); ++i)
            for (std::size_t j = 0; j < A.cols(); ++j) out(i, j) += B(0, j);
        return make(std::move(out), [this, a, bias](const Matrix& g) {
            acc(a, g);
            Matrix gb(1, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
            acc(bias, gb);
        });
    }

    // row i of a (r x c) divided by s(i,0); s is r x 1.
    Var div_rowscale(Var a, Var s) {
        const Matrix& A = val(a);
        const Matrix& S = val(s);
        if (S.rows() != A.rows() || S.cols() != 1)
            throw std::invalid_argument("div_rowscale: scale shape mismatch");
        Matrix out = A;
        for (std::size_t i = 0; i < A.rows(); ++i)
            for (std::size_t j = 0; j < A.cols(); ++j) out(i, j) /= S(i, 0);
        return make(std::move(out), [this, a, s](const Matrix& g) {
            const Matrix& A2 = val(a);
            const Matrix& S2 = val(s);
            Matrix ga = g;
            Matrix gs(S2.rows(), 1);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                const double si = S2(i, 0);
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    ga(i, j) /= si;
                    gs(i, 0) -= g(i, j) * A2(i, j) / (si * si);
                }
            }
            acc(a, ga);
            acc(s, gs);
        });
    }

    // col (n x 1) + row (1 x m) -> n x m outer sum.
    Var bcast_sum(Var col, Var row) {
        const Matrix& C = val(col);
        const Matrix& R = val(row);
        if (C.cols() != 1 || R.rows() != 1) throw std::invalid_argument("bcast_sum: bad shapes");
        Matrix out(C.rows(), R.cols());
        for (std::size_t i = 0; i < C.rows(); ++i)
            for (std::size_t j = 0; j < R.cols(); ++j) out(i, j) = C(i, 0) + R(0, j);
        return make(std::move(out), [this, col, row](const Matrix& g) {
            Matrix gc(g.rows(), 1);
            Matrix gr(1, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    gc(i, 0) += g(i, j);
                    gr(0, j) += g(i, j);
                }
            acc(col, gc);
            acc(row, gr);
        });
    }

    // ---- unary maps ----

    Var leaky_relu(Var a, double slope) {
        Matrix out = val(a);
        for (auto& v : out.data())
            if (v < 0.0) v *= slope;
        return make(std::move(out), [this, a, slope](const Matrix& g) {
            const Matrix& A = val(a);
            Matrix ga = g;
            for (std::size_t k = 0; k < g.size(); ++k)
                if (A[k] < 0.0) ga[k] *= slope;
            acc(a, ga);
        });
    }

    Var tanh_(Var a) {
        Matrix out = val(a);
        for (auto& v : out.data()) v = std::tanh(v);
        Matrix saved = out;
        return make(std::move(out), [this, a, saved](const Matrix& g) {
            Matrix ga = g;
            for (std::size_t k = 0; k < g.size(); ++k) ga[k] *= 1.0 - saved[k] * saved[k];
            acc(a, ga);
        });
    }

    Var softplus(Var a) {
        Matrix out = val(a);
        for (auto& v : out.data()) v = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
        return make(std::move(out), [this, a](const Matrix& g) {
            const Matrix& A = val(a);
            Matrix ga = g;
            for (std::size_t k = 0; k < g.size(); ++k) ga[k] *= sigmoid_scalar(A[k]);
            acc(a, ga);
        });
    }

    Var sigmoid(Var a) {
        Matrix out = val(a);
        for (auto& v : out.data()) v = sigmoid_scalar(v);
        Matrix saved = out;
        return make(std::move(out), [this, a, saved](const Matrix& g) {
            Matrix ga = g;
            for (std::size_t k = 0; k < g.size(); ++k) ga[k] *= saved[k] * (1.0 - saved[k]);
            acc(a, ga);
        });
    }

    Var log_(Var a) {
        Matrix out = val(a);
        for (auto& v : out.data()) v = std::log(v);
        return make(std::move(out), [this, a](const Matrix& g) {
            const Matrix& A = val(a);
            Matrix ga = g;
            for (std::size_t k = 0; k < g.size(); ++k) ga[k] /= A[k];
            acc(a, ga);
        });
    }

    Var sqrt_(Var a) {
        Matrix out = val(a);
        for (auto& v : out.data()) v = std::sqrt(v);
        Matrix saved = out;
        return make(std::move(out), [this, a, saved](const Matrix& g) {
            Matrix ga = g;
            for (std::size_t k = 0; k < g.size(); ++k) ga[k] *= 0.5 / saved[k];
            acc(a, ga);
        });
    }

    Var square(Var a) {
        Matrix out = val(a);
        for (auto& v : out.data()) v *= v;
        return make(std::move(out), [this, a](const Matrix& g) {
            const Matrix& A = val(a);
            Matrix ga = g;
            for (std::size_t k = 0; k < g.size(); ++k) ga[k] *= 2.0 * A[k];
            acc(a, ga);
        });
    }

    // Gradient is identity inside [lo, hi], zero outside.
    Var clamp(Var a, double lo, double hi) {
        const Matrix& A = val(a);
        Matrix out = A;
        for (auto& v : out.data()) v = v < lo ? lo : (v > hi ? hi : v);
        return make(std::move(out), [this, a, lo, hi](const Matrix& g) {
            const Matrix& A2 = val(a);
            Matrix ga = g;
            for (std::size_t k = 0; k < g.size(); ++k)
                if (A2[k] < lo || A2[k] > hi) ga[k] = 0.0;
            acc(a, ga);
        });
    }

    // ---- linear algebra ----

    Var matmul_(Var a, Var b) {
        Matrix out = matmul(val(a), val(b));
        return make(std::move(out), [this, a, b](const Matrix& g) {
            // dA = g * B^T ; dB = A^T * g
            Matrix ga(val(a).rows(), val(a).cols());
            Matrix gb(val(b).rows(), val(b).cols());
            matmul_nt_acc(g, val(b), ga);
            matmul_tn_acc(val(a), g, gb);
            acc(a, ga);
            acc(b, gb);
        });
    }

    Var transpose(Var a) {
        Matrix out = val(a).transposed();
        return make(std::move(out), [this, a](const Matrix& g) { acc(a, g.transposed()); });
    }

    // ---- structural ----

    Var concat_rows(const std::vector<Var>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
        std::size_t rows = 0;
        const std::size_t cols = val(parts[0]).cols();
        for (Var p : parts) {
            if (val(p).cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
            rows += val(p).rows();
        }
        Matrix out(rows, cols);
        std::size_t r = 0;
        for (Var p : parts) {
            const Matrix& P = val(p);
            for (std::size_t i = 0; i < P.rows(); ++i)
                for (std::size_t j = 0; j < cols; ++j) out(r + i, j) = P(i, j);
            r += P.rows();
        }
        auto parts_copy = parts;
        return make(std::move(out), [this, parts_copy](const Matrix& g) {
            std::size_t r2 = 0;
            for (Var p : parts_copy) {
                const std::size_t pr = val(p).rows();
                Matrix gp(pr, g.cols());
                for (std::size_t i = 0; i < pr; ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) gp(i, j) = g(r2 + i, j);
                acc(p, gp);
                r2 += pr;
            }
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
        std::size_t cols = 0;
        const std::size_t rows = val(parts[0]).rows();
        for (Var p : parts) {
            if (val(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
            cols += val(p).cols();
        }
        Matrix out(rows, cols);
        std::size_t c = 0;
        for (Var p : parts) {
            const Matrix& P = val(p);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < P.cols(); ++j) out(i, c + j) = P(i, j);
            c += P.cols();
        }
        auto parts_copy = parts;
        return make(std::move(out), [this, parts_copy](const Matrix& g) {
            std::size_t c2 = 0;
            for (Var p : parts_copy) {
                const std::size_t pc = val(p).cols();
                Matrix gp(g.rows(), pc);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < pc; ++j) gp(i, j) = g(i, c2 + j);
                acc(p, gp);
                c2 += pc;
            }
        });
    }

    Var slice_rows(Var a, std::size_t start, std::size_t count) {
        const Matrix& A = val(a);
        if (start + count > A.rows()) throw std::invalid_argument("slice_rows: out of range");
        Matrix out(count, A.cols());
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t j = 0; j < A.cols(); ++j) out(i, j) = A(start + i, j);
        return make(std::move(out), [this, a, start](const Matrix& g) {
            Matrix ga(val(a).rows(), val(a).cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) ga(start + i, j) = g(i, j);
            acc(a, ga);
        });
    }

    // Rows of `table` selected by ids; backward scatter-adds.
    Var gather_rows(Var table, std::vector<std::size_t> ids) {
        const Matrix& T = val(table);
        Matrix out(ids.size(), T.cols());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] >= T.rows()) throw std::out_of_range("gather_rows: id out of range");
            for (std::size_t j = 0; j < T.cols(); ++j) out(i, j) = T(ids[i], j);
        }
        return make(std::move(out), [this, table, ids](const Matrix& g) {
            Matrix gt(val(table).rows(), val(table).cols());
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gt(ids[i], j) += g(i, j);
            acc(table, gt);
        });
    }

    // ---- reductions ----

    Var row_sums(Var a) {
        const Matrix& A = val(a);
        Matrix out(A.rows(), 1);
        for (std::size_t i = 0; i < A.rows(); ++i)
            for (std::size_t j = 0; j < A.cols(); ++j) out(i, 0) += A(i, j);
        return make(std::move(out), [this, a](const Matrix& g) {
            Matrix ga(val(a).rows(), val(a).cols());
            for (std::size_t i = 0; i < ga.rows(); ++i)
                for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) = g(i, 0);
            acc(a, ga);
        });
    }

    Var mean_rows(Var a) {
        const Matrix& A = val(a);
        const double inv = 1.0 / static_cast<double>(A.rows());
        Matrix out(1, A.cols());
        for (std::size_t i = 0; i < A.rows(); ++i)
            for (std::size_t j = 0; j < A.cols(); ++j) out(0, j) += A(i, j) * inv;
        return make(std::move(out), [this, a, inv](const Matrix& g) {
            Matrix ga(val(a).rows(), val(a).cols());
            for (std::size_t i = 0; i < ga.rows(); ++i)
                for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) = g(0, j) * inv;
            acc(a, ga);
        });
    }

    Var sum_all(Var a) {
        const Matrix& A = val(a);
        double s = 0.0;
        for (double v : A.data()) s += v;
        return make(Matrix::scalar(s), [this, a](const Matrix& g) {
            Matrix ga(val(a).rows(), val(a).cols(), g(0, 0));
            acc(a, ga);
        });
    }

    // ---- softmax ----

    Var softmax_rows(Var a) {
        Matrix out = softmax_value(val(a), nullptr);
        Matrix saved = out;
        return make(std::move(out), [this, a, saved](const Matrix& g) {
            acc(a, softmax_backward(saved, g));
        });
    }

    // mask(i,j) == false entries get probability 0 and receive no gradient.
    // Every row must have at least one allowed entry.
    Var masked_softmax_rows(Var a, const std::vector<std::vector<bool>>& mask) {
        Matrix out = softmax_value(val(a), &mask);
        Matrix saved = out;
        return make(std::move(out), [this, a, saved](const Matrix& g) {
            acc(a, softmax_backward(saved, g));
        });
    }

    // ---- backward ----

    void backward(Var root) {
        const Matrix& rv = val(root);
        if (rv.rows() != 1 || rv.cols() != 1)
            throw std::invalid_argument("backward: root must be scalar");
        for (auto& n : nodes_) n.grad = Matrix(n.value.rows(), n.value.cols());
        nodes_[root.idx].grad(0, 0) = 1.0;
        for (std::size_t k = root.idx + 1; k-- > 0;) {
            if (nodes_[k].backward_fn) nodes_[k].backward_fn(nodes_[k].grad);
        }
    }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void(const Matrix&)> backward_fn;
    };

    std::vector<Node> nodes_;

    const Matrix& val(Var v) const { return nodes_[v.idx].value; }

    Var make(Matrix value, std::function<void(const Matrix&)> bw) {
        nodes_.push_back(Node{std::move(value), {}, std::move(bw)});
        return Var{nodes_.size() - 1};
    }

    void acc(Var v, const Matrix& g) {
        Matrix& gr = nodes_[v.idx].grad;
        if (gr.size() == 0) gr = Matrix(g.rows(), g.cols());
        for (std::size_t k = 0; k < g.size(); ++k) gr[k] += g[k];
    }

    static double sigmoid_scalar(double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }

    static Matrix softmax_value(const Matrix& A, const std::vector<std::vector<bool>>* mask) {
        Matrix out(A.rows(), A.cols());
        for (std::size_t i = 0; i < A.rows(); ++i) {
            double mx = -1e300;
            for (std::size_t j = 0; j < A.cols(); ++j)
                if (!mask || (*mask)[i][j]) mx = std::max(mx, A(i, j));
            double denom = 0.0;
            for (std::size_t j = 0; j < A.cols(); ++j) {
                if (!mask || (*mask)[i][j]) {
                    out(i, j) = std::exp(A(i, j) - mx);
                    denom += out(i, j);
                }
            }
            if (denom == 0.0) throw std::invalid_argument("softmax: fully masked row");
            for (std::size_t j = 0; j < A.cols(); ++j) out(i, j) /= denom;
        }
        return out;
    }

    static Matrix softmax_backward(const Matrix& p, const Matrix& g) {
        Matrix ga(p.rows(), p.cols());
        for (std::size_t i = 0; i < p.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < p.cols(); ++j) dot += g(i, j) * p(i, j);
            for (std::size_t j = 0; j < p.cols(); ++j) ga(i, j) = p(i, j) * (g(i, j) - dot);
        }
        return ga;
    }
};

}  // namespace micl
