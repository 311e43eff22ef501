#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cogsense/tensor.hpp"

namespace cogsense {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
};

// Reverse-mode autodiff tape. Nodes are recorded in topological (creation)
// order; backward() sweeps them exactly once in reverse. A tape is built
// fresh for every loss evaluation and never mutated in place.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    // Leaf holding a copy of the given values; gradients are retrievable.
    Var param(const Tensor& t) { return push(t, {}, nullptr); }

    // Leaf that participates in the graph but whose gradient is not of
    // interest (masks, frozen targets, ...).
    Var constant(Tensor t) { return push(std::move(t), {}, nullptr); }

    Var push(Tensor value, std::vector<int> parents, BackwardFn fn) {
        if (!value.all_finite()) {
            throw std::runtime_error("Tape: non-finite value produced by forward op");
        }
        Node n;
        n.value = std::move(value);
        n.grad = Tensor::zeros(n.value.rows(), n.value.cols());
        n.parents = std::move(parents);
        n.backward = std::move(fn);
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
    Tensor& grad_mut(int id) { return nodes_[id].grad; }
    size_t node_count() const { return nodes_.size(); }

    // Seeds d(root)/d(root) = 1 and propagates to every reachable ancestor.
    // Each node's backward fn runs at most once.
    void backward(Var root) {
        if (root.tape != this) throw std::invalid_argument("Tape::backward: var from another tape");
        if (nodes_[root.id].value.size() != 1) {
            throw std::invalid_argument("Tape::backward: root must be scalar");
        }
        std::vector<char> needed(nodes_.size(), 0);
        mark_ancestors(root.id, needed);
        nodes_[root.id].grad.values[0] = 1.0;
        for (int i = root.id; i >= 0; --i) {
            if (needed[i] && nodes_[i].backward) {
                nodes_[i].backward(*this, i);
            }
        }
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<int> parents;
        BackwardFn backward;
    };

    void mark_ancestors(int root, std::vector<char>& needed) {
        std::vector<int> stack{root};
        needed[root] = 1;
        while (!stack.empty()) {
            const int id = stack.back();
            stack.pop_back();
            for (int p : nodes_[id].parents) {
                if (!needed[p]) {
                    needed[p] = 1;
                    stack.push_back(p);
                }
            }
        }
    }

    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace detail {

inline void check_same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw std::invalid_argument("ops: vars from different tapes");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive ops. Each op records a backward rule; all rules are validated by
// the finite-difference harness in the tests.
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
    detail::check_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.cols() != B.rows()) {
        throw DimensionError("matmul: inner dimensions disagree " + A.shape_str() + " x " + B.shape_str());
    }
    const int m = A.rows(), k = A.cols(), n = B.cols();
    Tensor C(m, n);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = A.at(i, p);
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                C.at(i, j) += av * B.at(p, j);
            }
        }
    }
    const int ai = a.id, bi = b.id;
    return t.push(std::move(C), {ai, bi}, [ai, bi, m, k, n](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        const Tensor& A2 = tp.value(Var{&tp, ai});
        const Tensor& B2 = tp.value(Var{&tp, bi});
        Tensor& dA = tp.grad_mut(ai);
        Tensor& dB = tp.grad_mut(bi);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                const double g = G.at(i, j);
                if (g == 0.0) continue;
                for (int p = 0; p < k; ++p) {
                    dA.at(i, p) += g * B2.at(p, j);
                    dB.at(p, j) += g * A2.at(i, p);
                }
            }
        }
    });
}

inline Var add(Var a, Var b) {
    detail::check_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (!A.same_shape(B)) throw DimensionError("add: shape mismatch");
    Tensor C = A;
    for (size_t i = 0; i < C.size(); ++i) C.values[i] += B.values[i];
    const int ai = a.id, bi = b.id;
    return t.push(std::move(C), {ai, bi}, [ai, bi](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        Tensor& dA = tp.grad_mut(ai);
        Tensor& dB = tp.grad_mut(bi);
        for (size_t i = 0; i < G.size(); ++i) {
            dA.values[i] += G.values[i];
            dB.values[i] += G.values[i];
        }
    });
}

inline Var sub(Var a, Var b) {
    detail::check_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (!A.same_shape(B)) throw DimensionError("sub: shape mismatch");
    Tensor C = A;
    for (size_t i = 0; i < C.size(); ++i) C.values[i] -= B.values[i];
    const int ai = a.id, bi = b.id;
    return t.push(std::move(C), {ai, bi}, [ai, bi](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        Tensor& dA = tp.grad_mut(ai);
        Tensor& dB = tp.grad_mut(bi);
        for (size_t i = 0; i < G.size(); ++i) {
            dA.values[i] += G.values[i];
            dB.values[i] -= G.values[i];
        }
    });
}

inline Var mul(Var a, Var b) {
    detail::check_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (!A.same_shape(B)) throw DimensionError("mul: shape mismatch");
    Tensor C = A;
    for (size_t i = 0; i < C.size(); ++i) C.values[i] *= B.values[i];
    const int ai = a.id, bi = b.id;
    return t.push(std::move(C), {ai, bi}, [ai, bi](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        const Tensor& A2 = tp.value(Var{&tp, ai});
        const Tensor& B2 = tp.value(Var{&tp, bi});
        Tensor& dA = tp.grad_mut(ai);
        Tensor& dB = tp.grad_mut(bi);
        for (size_t i = 0; i < G.size(); ++i) {
            dA.values[i] += G.values[i] * B2.values[i];
            dB.values[i] += G.values[i] * A2.values[i];
        }
    });
}

inline Var scale(Var a, double c) {
    Tape& t = *a.tape;
    Tensor C = t.value(a);
    for (double& v : C.values) v *= c;
    const int ai = a.id;
    return t.push(std::move(C), {ai}, [ai, c](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        Tensor& dA = tp.grad_mut(ai);
        for (size_t i = 0; i < G.size(); ++i) dA.values[i] += c * G.values[i];
    });
}

// a: r x c, row: 1 x c, added to every row (bias broadcast).
inline Var add_row(Var a, Var row) {
    detail::check_same_tape(a, row);
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    const Tensor& R = t.value(row);
    if (R.rows() != 1 || R.cols() != A.cols()) throw DimensionError("add_row: row shape mismatch");
    Tensor C = A;
    for (int i = 0; i < A.rows(); ++i) {
        for (int j = 0; j < A.cols(); ++j) C.at(i, j) += R.at(0, j);
    }
    const int ai = a.id, ri = row.id;
    return t.push(std::move(C), {ai, ri}, [ai, ri](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        Tensor& dA = tp.grad_mut(ai);
        Tensor& dR = tp.grad_mut(ri);
        for (int i = 0; i < G.rows(); ++i) {
            for (int j = 0; j < G.cols(); ++j) {
                dA.at(i, j) += G.at(i, j);
                dR.at(0, j) += G.at(i, j);
            }
        }
    });
}

inline Var tanh(Var a) {
    Tape& t = *a.tape;
    Tensor C = t.value(a);
    for (double& v : C.values) v = std::tanh(v);
    const Tensor Y = C;
    const int ai = a.id;
    return t.push(std::move(C), {ai}, [ai, Y](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        Tensor& dA = tp.grad_mut(ai);
        for (size_t i = 0; i < G.size(); ++i) {
            dA.values[i] += G.values[i] * (1.0 - Y.values[i] * Y.values[i]);
        }
    });
}

inline Var square(Var a) {
    Tape& t = *a.tape;
    Tensor C = t.value(a);
    for (double& v : C.values) v *= v;
    const int ai = a.id;
    return t.push(std::move(C), {ai}, [ai](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        const Tensor& A2 = tp.value(Var{&tp, ai});
        Tensor& dA = tp.grad_mut(ai);
        for (size_t i = 0; i < G.size(); ++i) {
            dA.values[i] += 2.0 * A2.values[i] * G.values[i];
        }
    });
}

// Row-wise RMS normalization with a learned per-column gain.
inline Var rms_norm(Var x, Var gain, double eps = 1e-6) {
    detail::check_same_tape(x, gain);
    Tape& t = *x.tape;
    const Tensor& X = t.value(x);
    const Tensor& G0 = t.value(gain);
    if (G0.rows() != 1 || G0.cols() != X.cols()) throw DimensionError("rms_norm: gain shape mismatch");
    const int R = X.rows(), C = X.cols();
    Tensor Y(R, C);
    std::vector<double> inv_rms(static_cast<size_t>(R));
    for (int r = 0; r < R; ++r) {
        double ss = 0.0;
        for (int c = 0; c < C; ++c) ss += X.at(r, c) * X.at(r, c);
        const double inv = 1.0 / std::sqrt(ss / C + eps);
        inv_rms[static_cast<size_t>(r)] = inv;
        for (int c = 0; c < C; ++c) Y.at(r, c) = X.at(r, c) * inv * G0.at(0, c);
    }
    const int xi = x.id, gi = gain.id;
    return t.push(std::move(Y), {xi, gi}, [xi, gi, R, C, inv_rms](Tape& tp, int self) {
        const Tensor& Gr = tp.grad_mut(self);
        const Tensor& X2 = tp.value(Var{&tp, xi});
        const Tensor& Gn = tp.value(Var{&tp, gi});
        Tensor& dX = tp.grad_mut(xi);
        Tensor& dG = tp.grad_mut(gi);
        for (int r = 0; r < R; ++r) {
            const double inv = inv_rms[static_cast<size_t>(r)];
            double dot = 0.0;  // sum_j grad_j * gain_j * x_j
            for (int c = 0; c < C; ++c) dot += Gr.at(r, c) * Gn.at(0, c) * X2.at(r, c);
            const double k = dot * inv * inv * inv / C;
            for (int c = 0; c < C; ++c) {
                dX.at(r, c) += Gr.at(r, c) * Gn.at(0, c) * inv - X2.at(r, c) * k;
                dG.at(0, c) += Gr.at(r, c) * X2.at(r, c) * inv;
            }
        }
    });
}

// Row-wise softmax (max-subtracted). Masked entries should be pushed to a
// large negative value before calling; exp() then underflows to exactly 0.
inline Var softmax_rows(Var a) {
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    const int R = A.rows(), C = A.cols();
    Tensor Y(R, C);
    for (int r = 0; r < R; ++r) {
        double m = A.at(r, 0);
        for (int c = 1; c < C; ++c) m = std::max(m, A.at(r, c));
        double s = 0.0;
        for (int c = 0; c < C; ++c) {
            const double e = std::exp(A.at(r, c) - m);
            Y.at(r, c) = e;
            s += e;
        }
        for (int c = 0; c < C; ++c) Y.at(r, c) /= s;
    }
    const Tensor Ycopy = Y;
    const int ai = a.id;
    return t.push(std::move(Y), {ai}, [ai, Ycopy, R, C](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        Tensor& dA = tp.grad_mut(ai);
        for (int r = 0; r < R; ++r) {
            double dot = 0.0;
            for (int c = 0; c < C; ++c) dot += G.at(r, c) * Ycopy.at(r, c);
            for (int c = 0; c < C; ++c) {
                dA.at(r, c) += (G.at(r, c) - dot) * Ycopy.at(r, c);
            }
        }
    });
}

inline Var transpose(Var a) {
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    Tensor C(A.cols(), A.rows());
    for (int i = 0; i < A.rows(); ++i) {
        for (int j = 0; j < A.cols(); ++j) C.at(j, i) = A.at(i, j);
    }
    const int ai = a.id;
    return t.push(std::move(C), {ai}, [ai](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        Tensor& dA = tp.grad_mut(ai);
        for (int i = 0; i < G.rows(); ++i) {
            for (int j = 0; j < G.cols(); ++j) dA.at(j, i) += G.at(i, j);
        }
    });
}

// Rows of `table` selected by index; repeated indices accumulate on backward.
inline Var gather_rows(Var table, std::vector<int> idx) {
    Tape& t = *table.tape;
    const Tensor& T = t.value(table);
    Tensor C(static_cast<int>(idx.size()), T.cols());
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= T.rows()) throw std::invalid_argument("gather_rows: index out of range");
        for (int j = 0; j < T.cols(); ++j) C.at(static_cast<int>(i), j) = T.at(idx[i], j);
    }
    const int ti = table.id;
    return t.push(std::move(C), {ti}, [ti, idx](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        Tensor& dT = tp.grad_mut(ti);
        for (size_t i = 0; i < idx.size(); ++i) {
            for (int j = 0; j < G.cols(); ++j) dT.at(idx[i], j) += G.at(static_cast<int>(i), j);
        }
    });
}

inline Var slice_rows(Var a, int begin, int end) {
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    if (begin < 0 || end > A.rows() || begin >= end) throw DimensionError("slice_rows: bad range");
    Tensor C(end - begin, A.cols());
    for (int i = begin; i < end; ++i) {
        for (int j = 0; j < A.cols(); ++j) C.at(i - begin, j) = A.at(i, j);
    }
    const int ai = a.id;
    return t.push(std::move(C), {ai}, [ai, begin, end](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        Tensor& dA = tp.grad_mut(ai);
        for (int i = begin; i < end; ++i) {
            for (int j = 0; j < G.cols(); ++j) dA.at(i, j) += G.at(i - begin, j);
        }
    });
}

inline Var slice_cols(Var a, int begin, int end) {
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    if (begin < 0 || end > A.cols() || begin >= end) throw DimensionError("slice_cols: bad range");
    Tensor C(A.rows(), end - begin);
    for (int i = 0; i < A.rows(); ++i) {
        for (int j = begin; j < end; ++j) C.at(i, j - begin) = A.at(i, j);
    }
    const int ai = a.id;
    return t.push(std::move(C), {ai}, [ai, begin, end](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        Tensor& dA = tp.grad_mut(ai);
        for (int i = 0; i < G.rows(); ++i) {
            for (int j = begin; j < end; ++j) dA.at(i, j) += G.at(i, j - begin);
        }
    });
}

inline Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    Tape& t = *parts[0].tape;
    int rows = 0;
    const int cols = t.value(parts[0]).cols();
    for (Var p : parts) {
        detail::check_same_tape(parts[0], p);
        if (t.value(p).cols() != cols) throw DimensionError("concat_rows: column mismatch");
        rows += t.value(p).rows();
    }
    Tensor C(rows, cols);
    std::vector<int> ids;
    std::vector<int> offsets;
    int off = 0;
    for (Var p : parts) {
        const Tensor& P = t.value(p);
        for (int i = 0; i < P.rows(); ++i) {
            for (int j = 0; j < cols; ++j) C.at(off + i, j) = P.at(i, j);
        }
        ids.push_back(p.id);
        offsets.push_back(off);
        off += P.rows();
    }
    return t.push(std::move(C), ids, [ids, offsets, cols](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        for (size_t k = 0; k < ids.size(); ++k) {
            Tensor& dP = tp.grad_mut(ids[k]);
            for (int i = 0; i < dP.rows(); ++i) {
                for (int j = 0; j < cols; ++j) dP.at(i, j) += G.at(offsets[k] + i, j);
            }
        }
    });
}

inline Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    Tape& t = *parts[0].tape;
    int cols = 0;
    const int rows = t.value(parts[0]).rows();
    for (Var p : parts) {
        detail::check_same_tape(parts[0], p);
        if (t.value(p).rows() != rows) throw DimensionError("concat_cols: row mismatch");
        cols += t.value(p).cols();
    }
    Tensor C(rows, cols);
    std::vector<int> ids;
    std::vector<int> offsets;
    int off = 0;
    for (Var p : parts) {
        const Tensor& P = t.value(p);
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < P.cols(); ++j) C.at(i, off + j) = P.at(i, j);
        }
        ids.push_back(p.id);
        offsets.push_back(off);
        off += P.cols();
    }
    return t.push(std::move(C), ids, [ids, offsets, rows](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        for (size_t k = 0; k < ids.size(); ++k) {
            Tensor& dP = tp.grad_mut(ids[k]);
            for (int i = 0; i < rows; ++i) {
                for (int j = 0; j < dP.cols(); ++j) dP.at(i, j) += G.at(i, offsets[k] + j);
            }
        }
    });
}

inline Var mean_rows(Var a) {
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    if (A.rows() == 0) throw DimensionError("mean_rows: empty input");
    Tensor C(1, A.cols());
    for (int j = 0; j < A.cols(); ++j) {
        double s = 0.0;
        for (int i = 0; i < A.rows(); ++i) s += A.at(i, j);
        C.at(0, j) = s / A.rows();
    }
    const int ai = a.id;
    const int R = A.rows();
    return t.push(std::move(C), {ai}, [ai, R](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        Tensor& dA = tp.grad_mut(ai);
        for (int i = 0; i < R; ++i) {
            for (int j = 0; j < G.cols(); ++j) dA.at(i, j) += G.at(0, j) / R;
        }
    });
}

// Sum of same-shape tensors in one node (used for reductions over many
// scalar terms without building a long add chain).
inline Var add_all(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("add_all: empty");
    Tape& t = *parts[0].tape;
    Tensor C = t.value(parts[0]);
    std::vector<int> ids{parts[0].id};
    for (size_t k = 1; k < parts.size(); ++k) {
        detail::check_same_tape(parts[0], parts[k]);
        const Tensor& P = t.value(parts[k]);
        if (!P.same_shape(C)) throw DimensionError("add_all: shape mismatch");
        for (size_t i = 0; i < C.size(); ++i) C.values[i] += P.values[i];
        ids.push_back(parts[k].id);
    }
    return t.push(std::move(C), ids, [ids](Tape& tp, int self) {
        const Tensor& G = tp.grad_mut(self);
        for (int id : ids) {
            Tensor& dP = tp.grad_mut(id);
            for (size_t i = 0; i < G.size(); ++i) dP.values[i] += G.values[i];
        }
    });
}

// -log softmax(logits[row])[target], numerically stable. This is both the
// autoregressive CE term and (negated) the log-probability used by the
// GFlowNet policy terms.
inline Var cross_entropy_row(Var logits, int row, int target) {
    Tape& t = *logits.tape;
    const Tensor& L = t.value(logits);
    if (row < 0 || row >= L.rows()) throw std::invalid_argument("cross_entropy_row: row out of range");
    if (target < 0 || target >= L.cols()) throw std::invalid_argument("cross_entropy_row: target out of range");
    double m = L.at(row, 0);
    for (int c = 1; c < L.cols(); ++c) m = std::max(m, L.at(row, c));
    double s = 0.0;
    for (int c = 0; c < L.cols(); ++c) s += std::exp(L.at(row, c) - m);
    const double lse = m + std::log(s);
    const double loss = lse - L.at(row, target);
    const int li = logits.id;
    return t.push(Tensor::scalar(loss), {li}, [li, row, target, lse](Tape& tp, int self) {
        const double go = tp.grad_mut(self).values[0];
        const Tensor& L2 = tp.value(Var{&tp, li});
        Tensor& dL = tp.grad_mut(li);
        for (int c = 0; c < L2.cols(); ++c) {
            const double p = std::exp(L2.at(row, c) - lse);
            dL.at(row, c) += go * (p - (c == target ? 1.0 : 0.0));
        }
    });
}

// Spec form: logits is a 1xK vector.
inline Var softmax_cross_entropy(Var logits, int target) {
    const Tensor& L = logits.tape->value(logits);
    if (L.rows() != 1) throw DimensionError("softmax_cross_entropy: logits must be a vector");
    return cross_entropy_row(logits, 0, target);
}

// Mean of squared element differences.
inline Var mse(Var a, Var b) {
    detail::check_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (!A.same_shape(B)) throw DimensionError("mse: shape mismatch");
    if (A.size() == 0) throw DimensionError("mse: empty input");
    double s = 0.0;
    for (size_t i = 0; i < A.size(); ++i) {
        const double d = A.values[i] - B.values[i];
        s += d * d;
    }
    const double n = static_cast<double>(A.size());
    const int ai = a.id, bi = b.id;
    return t.push(Tensor::scalar(s / n), {ai, bi}, [ai, bi, n](Tape& tp, int self) {
        const double go = tp.grad_mut(self).values[0];
        const Tensor& A2 = tp.value(Var{&tp, ai});
        const Tensor& B2 = tp.value(Var{&tp, bi});
        Tensor& dA = tp.grad_mut(ai);
        Tensor& dB = tp.grad_mut(bi);
        for (size_t i = 0; i < A2.size(); ++i) {
            const double d = 2.0 * (A2.values[i] - B2.values[i]) / n;
            dA.values[i] += go * d;
            dB.values[i] -= go * d;
        }
    });
}

}  // namespace cogsense
