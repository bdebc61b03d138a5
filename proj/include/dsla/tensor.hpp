// Dense f64 matrices with reverse-mode differentiation on an append-only tape.
// A Tensor is a value plus (optionally) a node id on the Tape that produced it;
// constants carry no tape. A Tape belongs to one forward pass and one thread,
// and is discarded after backward. Parameters enter a pass through
// Tape::leaf(value, param_id); backward() returns param_id -> gradient.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dsla/errors.hpp"

namespace dsla {

class Tape;

// ε inside sqrt for l2_norm_rows / embedding distances: keeps the gradient
// finite at the all-zero row (identical embeddings are reachable).
inline constexpr double kNormEps = 1e-12;

struct Tensor {
    int rows = 0;
    int cols = 0;
    std::shared_ptr<std::vector<double>> data;
    Tape* tape = nullptr;
    int node = -1;

    Tensor() = default;
    Tensor(int r, int c)
        : rows(r), cols(c),
          data(std::make_shared<std::vector<double>>(static_cast<std::size_t>(r) * c, 0.0)) {}

    static Tensor from(int r, int c, std::vector<double> vals) {
        if (static_cast<std::size_t>(r) * c != vals.size())
            throw ShapeError("Tensor::from: value count does not match shape");
        Tensor t;
        t.rows = r;
        t.cols = c;
        t.data = std::make_shared<std::vector<double>>(std::move(vals));
        return t;
    }

    static Tensor scalar(double v) { return from(1, 1, {v}); }

    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
    bool taped() const { return tape != nullptr && node >= 0; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    double at(int r, int c) const { return (*data)[static_cast<std::size_t>(r) * cols + c]; }

    double item() const {
        if (rows != 1 || cols != 1) throw ShapeError("item() requires a 1x1 tensor");
        return (*data)[0];
    }
};

/// Value copy detached from any tape.
inline Tensor detach(const Tensor& t) {
    Tensor out;
    out.rows = t.rows;
    out.cols = t.cols;
    out.data = std::make_shared<std::vector<double>>(*t.data);
    return out;
}

using GradMap = std::map<std::string, Tensor>;

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Register a value as a differentiable leaf. A non-empty `param_id` keys
    /// this leaf's gradient in the map returned by backward().
    Tensor leaf(const Tensor& value, const std::string& param_id = "") {
        Tensor out;
        out.rows = value.rows;
        out.cols = value.cols;
        out.data = value.data;
        out.tape = this;
        out.node = new_node(value.rows, value.cols, param_id);
        return out;
    }

    int new_node(int rows, int cols, std::string param_id = "") {
        records_.push_back(Record{rows, cols,
                                  std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0),
                                  nullptr, std::move(param_id)});
        return static_cast<int>(records_.size()) - 1;
    }

    void set_back(int node, std::function<void(Tape&)> fn) { records_[node].back = std::move(fn); }

    std::vector<double>& grad(int node) { return records_[node].grad; }
    const std::vector<double>& grad(int node) const { return records_[node].grad; }

    /// Reverse sweep from a scalar loss. Every node is visited at most once, in
    /// reverse creation order. Leaves registered with a param_id that the loss
    /// does not reach keep their zero gradient.
    GradMap backward(const Tensor& loss) {
        if (loss.rows != 1 || loss.cols != 1) throw ShapeError("backward: loss must be 1x1");
        if (loss.tape != this || loss.node < 0)
            throw ContractError("backward: loss does not live on this tape");
        for (auto& r : records_) std::fill(r.grad.begin(), r.grad.end(), 0.0);
        records_[loss.node].grad[0] = 1.0;
        for (int i = loss.node; i >= 0; --i)
            if (records_[i].back) records_[i].back(*this);
        GradMap out;
        for (const Record& r : records_)
            if (!r.param_id.empty()) out.emplace(r.param_id, Tensor::from(r.rows, r.cols, r.grad));
        return out;
    }

    std::size_t num_records() const { return records_.size(); }

private:
    struct Record {
        int rows, cols;
        std::vector<double> grad;
        std::function<void(Tape&)> back;
        std::string param_id;
    };
    std::vector<Record> records_;
};

namespace detail {

inline void check_finite(const Tensor& t, const char* op) {
    for (double v : *t.data)
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value produced");
}

inline Tape* common_tape(const Tensor& a) { return a.taped() ? a.tape : nullptr; }

inline Tape* common_tape(const Tensor& a, const Tensor& b) {
    Tape* ta = a.taped() ? a.tape : nullptr;
    Tape* tb = b.taped() ? b.tape : nullptr;
    if (ta && tb && ta != tb) throw ContractError("operands live on different tapes");
    return ta ? ta : tb;
}

// Wrap computed values as the op output; `build(out_node)` returns the
// backward closure (ignored for constant inputs).
template <typename BackBuilder>
Tensor make_op(Tape* tape, int rows, int cols, std::vector<double> vals, const char* opname,
               BackBuilder&& build) {
    Tensor out = Tensor::from(rows, cols, std::move(vals));
    check_finite(out, opname);
    if (tape) {
        out.tape = tape;
        out.node = tape->new_node(rows, cols);
        tape->set_back(out.node, build(out.node));
    }
    return out;
}

// C (MxN) += A (MxK) · B (KxN)
inline void gemm_nn(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C (MxN) += A (MxK) · Bᵀ, B stored (NxK)
inline void gemm_nt(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C (MxN) += Aᵀ · B, A stored (KxM), B stored (KxN)
inline void gemm_tn(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int p = 0; p < k; ++p) {
        const double* arow = a + static_cast<std::size_t>(p) * m;
        const double* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline int node_of(const Tensor& t) { return t.taped() ? t.node : -1; }

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
    Tape* tape = detail::common_tape(a, b);
    const int m = a.rows, k = a.cols, n = b.cols;
    std::vector<double> vals(static_cast<std::size_t>(m) * n, 0.0);
    detail::gemm_nn(vals.data(), a.data->data(), b.data->data(), m, k, n);
    return detail::make_op(tape, m, n, std::move(vals), "matmul", [&](int on) {
        const int an = detail::node_of(a), bn = detail::node_of(b);
        auto ad = a.data, bd = b.data;
        return [on, an, bn, ad, bd, m, k, n](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            if (an >= 0) detail::gemm_nt(t.grad(an).data(), g.data(), bd->data(), m, n, k);
            if (bn >= 0) detail::gemm_tn(t.grad(bn).data(), ad->data(), g.data(), k, m, n);
        };
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
    Tape* tape = detail::common_tape(a, b);
    std::vector<double> vals(a.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = (*a.data)[i] + (*b.data)[i];
    return detail::make_op(tape, a.rows, a.cols, std::move(vals), "add", [&](int on) {
        const int an = detail::node_of(a), bn = detail::node_of(b);
        return [on, an, bn](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            if (an >= 0) {
                auto& ga = t.grad(an);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bn >= 0) {
                auto& gb = t.grad(bn);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        };
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("sub: shape mismatch");
    Tape* tape = detail::common_tape(a, b);
    std::vector<double> vals(a.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = (*a.data)[i] - (*b.data)[i];
    return detail::make_op(tape, a.rows, a.cols, std::move(vals), "sub", [&](int on) {
        const int an = detail::node_of(a), bn = detail::node_of(b);
        return [on, an, bn](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            if (an >= 0) {
                auto& ga = t.grad(an);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bn >= 0) {
                auto& gb = t.grad(bn);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        };
    });
}

inline Tensor mul_elem(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("mul_elem: shape mismatch");
    Tape* tape = detail::common_tape(a, b);
    std::vector<double> vals(a.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = (*a.data)[i] * (*b.data)[i];
    return detail::make_op(tape, a.rows, a.cols, std::move(vals), "mul_elem", [&](int on) {
        const int an = detail::node_of(a), bn = detail::node_of(b);
        auto ad = a.data, bd = b.data;
        return [on, an, bn, ad, bd](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            if (an >= 0) {
                auto& ga = t.grad(an);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*bd)[i];
            }
            if (bn >= 0) {
                auto& gb = t.grad(bn);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * (*ad)[i];
            }
        };
    });
}

inline Tensor div_elem(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("div_elem: shape mismatch");
    Tape* tape = detail::common_tape(a, b);
    std::vector<double> vals(a.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = (*a.data)[i] / (*b.data)[i];
    Tensor out = detail::make_op(tape, a.rows, a.cols, std::move(vals), "div_elem",
                                 [&](int) { return std::function<void(Tape&)>(); });
    // backward needs the output values, so the closure is attached after make_op
    if (out.taped()) {
        const int on = out.node, an = detail::node_of(a), bn = detail::node_of(b);
        auto bd = b.data, od = out.data;
        out.tape->set_back(on, [on, an, bn, bd, od](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            if (an >= 0) {
                auto& ga = t.grad(an);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / (*bd)[i];
            }
            if (bn >= 0) {
                auto& gb = t.grad(bn);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * (*od)[i] / (*bd)[i];
            }
        });
    }
    return out;
}

inline Tensor scale(const Tensor& a, double c) {
    Tape* tape = detail::common_tape(a);
    std::vector<double> vals(a.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = c * (*a.data)[i];
    return detail::make_op(tape, a.rows, a.cols, std::move(vals), "scale", [&](int on) {
        const int an = a.node;
        return [on, an, c](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            auto& ga = t.grad(an);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
        };
    });
}

/// Multiply every element of `a` by the 1x1 tensor `s` (both differentiable).
inline Tensor mul_scalar(const Tensor& a, const Tensor& s) {
    if (s.rows != 1 || s.cols != 1) throw ShapeError("mul_scalar: scale must be 1x1");
    Tape* tape = detail::common_tape(a, s);
    const double sv = (*s.data)[0];
    std::vector<double> vals(a.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = sv * (*a.data)[i];
    return detail::make_op(tape, a.rows, a.cols, std::move(vals), "mul_scalar", [&](int on) {
        const int an = detail::node_of(a), sn = detail::node_of(s);
        auto ad = a.data;
        return [on, an, sn, sv, ad](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            if (an >= 0) {
                auto& ga = t.grad(an);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += sv * g[i];
            }
            if (sn >= 0) {
                double acc = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * (*ad)[i];
                t.grad(sn)[0] += acc;
            }
        };
    });
}

inline Tensor relu(const Tensor& a) {
    Tape* tape = detail::common_tape(a);
    std::vector<double> vals(a.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = (*a.data)[i] > 0.0 ? (*a.data)[i] : 0.0;
    return detail::make_op(tape, a.rows, a.cols, std::move(vals), "relu", [&](int on) {
        const int an = a.node;
        auto ad = a.data;
        return [on, an, ad](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            auto& ga = t.grad(an);
            for (std::size_t i = 0; i < g.size(); ++i)
                if ((*ad)[i] > 0.0) ga[i] += g[i];
        };
    });
}

inline Tensor sigmoid(const Tensor& a) {
    Tape* tape = detail::common_tape(a);
    std::vector<double> vals(a.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double x = (*a.data)[i];
        vals[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    Tensor out = detail::make_op(tape, a.rows, a.cols, std::move(vals), "sigmoid",
                                 [&](int on) { return std::function<void(Tape&)>(); });
    if (out.taped()) {
        const int on = out.node, an = a.node;
        auto od = out.data;
        out.tape->set_back(on, [on, an, od](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            auto& ga = t.grad(an);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*od)[i] * (1.0 - (*od)[i]);
        });
    }
    return out;
}

inline Tensor square(const Tensor& a) {
    Tape* tape = detail::common_tape(a);
    std::vector<double> vals(a.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = (*a.data)[i] * (*a.data)[i];
    return detail::make_op(tape, a.rows, a.cols, std::move(vals), "square", [&](int on) {
        const int an = a.node;
        auto ad = a.data;
        return [on, an, ad](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            auto& ga = t.grad(an);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * g[i] * (*ad)[i];
        };
    });
}

/// log(1 + e^x), overflow-safe.
inline Tensor softplus(const Tensor& a) {
    Tape* tape = detail::common_tape(a);
    std::vector<double> vals(a.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double x = (*a.data)[i];
        vals[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    }
    return detail::make_op(tape, a.rows, a.cols, std::move(vals), "softplus", [&](int on) {
        const int an = a.node;
        auto ad = a.data;
        return [on, an, ad](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            auto& ga = t.grad(an);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = (*ad)[i];
                const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                ga[i] += g[i] * s;
            }
        };
    });
}

/// Sum over rows: (r x c) -> (1 x c).
inline Tensor sum_rows(const Tensor& a) {
    Tape* tape = detail::common_tape(a);
    std::vector<double> vals(a.cols, 0.0);
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) vals[c] += a.at(r, c);
    return detail::make_op(tape, 1, a.cols, std::move(vals), "sum_rows", [&](int on) {
        const int an = a.node, rows = a.rows, cols = a.cols;
        return [on, an, rows, cols](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            auto& ga = t.grad(an);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) ga[static_cast<std::size_t>(r) * cols + c] += g[c];
        };
    });
}

/// Mean over rows: (r x c) -> (1 x c). Errors on empty input.
inline Tensor mean_rows(const Tensor& a) {
    if (a.rows < 1) throw ShapeError("mean_rows: empty input");
    return scale(sum_rows(a), 1.0 / a.rows);
}

/// Sum of all elements -> 1x1.
inline Tensor sum_all(const Tensor& a) {
    Tape* tape = detail::common_tape(a);
    double acc = 0.0;
    for (double v : *a.data) acc += v;
    return detail::make_op(tape, 1, 1, {acc}, "sum_all", [&](int on) {
        const int an = a.node;
        return [on, an](Tape& t) {
            const double g = t.grad(on)[0];
            auto& ga = t.grad(an);
            for (double& v : ga) v += g;
        };
    });
}

/// Stack tensors with equal column counts on top of each other.
inline Tensor stack_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("stack_rows: no inputs");
    const int cols = parts[0].cols;
    int rows = 0;
    Tape* tape = nullptr;
    for (const Tensor& p : parts) {
        if (p.cols != cols) throw ShapeError("stack_rows: column mismatch");
        rows += p.rows;
        if (p.taped()) {
            if (tape && tape != p.tape) throw ContractError("stack_rows: mixed tapes");
            tape = p.tape;
        }
    }
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(rows) * cols);
    for (const Tensor& p : parts) vals.insert(vals.end(), p.data->begin(), p.data->end());
    return detail::make_op(tape, rows, cols, std::move(vals), "stack_rows", [&](int on) {
        std::vector<std::pair<int, int>> nodes_and_rows;  // (node, row count)
        nodes_and_rows.reserve(parts.size());
        for (const Tensor& p : parts) nodes_and_rows.emplace_back(detail::node_of(p), p.rows);
        return [on, nodes_and_rows, cols](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            std::size_t offset = 0;
            for (auto [node, r] : nodes_and_rows) {
                const std::size_t len = static_cast<std::size_t>(r) * cols;
                if (node >= 0) {
                    auto& gp = t.grad(node);
                    for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
                }
                offset += len;
            }
        };
    });
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) { return stack_rows({a, b}); }

/// Concatenate tensors with equal row counts side by side.
inline Tensor stack_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("stack_cols: no inputs");
    const int rows = parts[0].rows;
    int cols = 0;
    Tape* tape = nullptr;
    for (const Tensor& p : parts) {
        if (p.rows != rows) throw ShapeError("stack_cols: row mismatch");
        cols += p.cols;
        if (p.taped()) tape = p.tape;
    }
    std::vector<double> vals(static_cast<std::size_t>(rows) * cols);
    int col_off = 0;
    for (const Tensor& p : parts) {
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < p.cols; ++c)
                vals[static_cast<std::size_t>(r) * cols + col_off + c] = p.at(r, c);
        col_off += p.cols;
    }
    return detail::make_op(tape, rows, cols, std::move(vals), "stack_cols", [&](int on) {
        std::vector<std::pair<int, int>> nodes_and_cols;
        for (const Tensor& p : parts) nodes_and_cols.emplace_back(detail::node_of(p), p.cols);
        return [on, nodes_and_cols, rows, cols](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            int off = 0;
            for (auto [node, pc] : nodes_and_cols) {
                if (node >= 0) {
                    auto& gp = t.grad(node);
                    for (int r = 0; r < rows; ++r)
                        for (int c = 0; c < pc; ++c)
                            gp[static_cast<std::size_t>(r) * pc + c] +=
                                g[static_cast<std::size_t>(r) * cols + off + c];
                }
                off += pc;
            }
        };
    });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) { return stack_cols({a, b}); }

/// Embedding lookup: out[i] = table[ids[i]].
inline Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    Tape* tape = detail::common_tape(table);
    for (int id : ids)
        if (id < 0 || id >= table.rows) throw std::out_of_range("gather_rows: row id out of range");
    const int cols = table.cols;
    std::vector<double> vals(ids.size() * static_cast<std::size_t>(cols));
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table.data->begin() + static_cast<std::size_t>(ids[i]) * cols, cols,
                    vals.begin() + i * cols);
    return detail::make_op(tape, static_cast<int>(ids.size()), cols, std::move(vals), "gather_rows",
                           [&](int on) {
                               const int tn = table.node;
                               return [on, tn, ids, cols](Tape& t) {
                                   const std::vector<double>& g = t.grad(on);
                                   auto& gt = t.grad(tn);
                                   for (std::size_t i = 0; i < ids.size(); ++i)
                                       for (int c = 0; c < cols; ++c)
                                           gt[static_cast<std::size_t>(ids[i]) * cols + c] +=
                                               g[i * cols + c];
                               };
                           });
}

/// Segment sum: out (num_rows x c), out[dst[i]] += src[i]. Inverse of gather_rows.
inline Tensor scatter_add_rows(const Tensor& src, const std::vector<int>& dst, int num_rows) {
    if (static_cast<std::size_t>(src.rows) != dst.size())
        throw ShapeError("scatter_add_rows: one destination per source row required");
    for (int id : dst)
        if (id < 0 || id >= num_rows) throw std::out_of_range("scatter_add_rows: destination out of range");
    Tape* tape = detail::common_tape(src);
    const int cols = src.cols;
    std::vector<double> vals(static_cast<std::size_t>(num_rows) * cols, 0.0);
    for (std::size_t i = 0; i < dst.size(); ++i)
        for (int c = 0; c < cols; ++c)
            vals[static_cast<std::size_t>(dst[i]) * cols + c] += src.at(static_cast<int>(i), c);
    return detail::make_op(tape, num_rows, cols, std::move(vals), "scatter_add_rows", [&](int on) {
        const int sn = src.node;
        return [on, sn, dst, cols](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            auto& gs = t.grad(sn);
            for (std::size_t i = 0; i < dst.size(); ++i)
                for (int c = 0; c < cols; ++c)
                    gs[i * cols + c] += g[static_cast<std::size_t>(dst[i]) * cols + c];
        };
    });
}

/// Multiply row r by the fixed coefficient coeffs[r].
inline Tensor scale_rows(const Tensor& a, const std::vector<double>& coeffs) {
    if (static_cast<std::size_t>(a.rows) != coeffs.size())
        throw ShapeError("scale_rows: one coefficient per row required");
    Tape* tape = detail::common_tape(a);
    std::vector<double> vals(a.size());
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c)
            vals[static_cast<std::size_t>(r) * a.cols + c] = coeffs[r] * a.at(r, c);
    return detail::make_op(tape, a.rows, a.cols, std::move(vals), "scale_rows", [&](int on) {
        const int an = a.node, cols = a.cols;
        return [on, an, coeffs, cols](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            auto& ga = t.grad(an);
            for (std::size_t r = 0; r < coeffs.size(); ++r)
                for (int c = 0; c < cols; ++c) ga[r * cols + c] += coeffs[r] * g[r * cols + c];
        };
    });
}

/// Broadcast-add a 1xC row vector to every row of a.
inline Tensor add_rowvec(const Tensor& a, const Tensor& b) {
    if (b.rows != 1 || b.cols != a.cols) throw ShapeError("add_rowvec: need 1 x cols vector");
    Tape* tape = detail::common_tape(a, b);
    std::vector<double> vals(a.size());
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c)
            vals[static_cast<std::size_t>(r) * a.cols + c] = a.at(r, c) + (*b.data)[c];
    return detail::make_op(tape, a.rows, a.cols, std::move(vals), "add_rowvec", [&](int on) {
        const int an = detail::node_of(a), bn = detail::node_of(b), rows = a.rows, cols = a.cols;
        return [on, an, bn, rows, cols](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            if (an >= 0) {
                auto& ga = t.grad(an);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bn >= 0) {
                auto& gb = t.grad(bn);
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c) gb[c] += g[static_cast<std::size_t>(r) * cols + c];
            }
        };
    });
}

/// Per-row Euclidean norm with ε-guard: out_r = sqrt(Σ_c a²_rc + ε) -> (r x 1).
inline Tensor l2_norm_rows(const Tensor& a) {
    Tape* tape = detail::common_tape(a);
    std::vector<double> vals(a.rows);
    for (int r = 0; r < a.rows; ++r) {
        double acc = kNormEps;
        for (int c = 0; c < a.cols; ++c) acc += a.at(r, c) * a.at(r, c);
        vals[r] = std::sqrt(acc);
    }
    Tensor out = detail::make_op(tape, a.rows, 1, std::move(vals), "l2_norm_rows",
                                 [&](int) { return std::function<void(Tape&)>(); });
    if (out.taped()) {
        const int on = out.node, an = a.node, cols = a.cols;
        auto ad = a.data, od = out.data;
        out.tape->set_back(on, [on, an, cols, ad, od](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            auto& ga = t.grad(an);
            for (std::size_t r = 0; r < g.size(); ++r)
                for (int c = 0; c < cols; ++c)
                    ga[r * cols + c] += g[r] * (*ad)[r * cols + c] / (*od)[r];
        });
    }
    return out;
}

/// Numerically stable per-row log Σ_c exp(a_rc) -> (r x 1).
inline Tensor log_sum_exp_row(const Tensor& a) {
    if (a.cols < 1) throw ShapeError("log_sum_exp_row: empty rows");
    Tape* tape = detail::common_tape(a);
    std::vector<double> vals(a.rows);
    for (int r = 0; r < a.rows; ++r) {
        double m = a.at(r, 0);
        for (int c = 1; c < a.cols; ++c) m = std::max(m, a.at(r, c));
        double acc = 0.0;
        for (int c = 0; c < a.cols; ++c) acc += std::exp(a.at(r, c) - m);
        vals[r] = m + std::log(acc);
    }
    Tensor out = detail::make_op(tape, a.rows, 1, std::move(vals), "log_sum_exp_row",
                                 [&](int) { return std::function<void(Tape&)>(); });
    if (out.taped()) {
        const int on = out.node, an = a.node, cols = a.cols;
        auto ad = a.data, od = out.data;
        out.tape->set_back(on, [on, an, cols, ad, od](Tape& t) {
            const std::vector<double>& g = t.grad(on);
            auto& ga = t.grad(an);
            for (std::size_t r = 0; r < g.size(); ++r)
                for (int c = 0; c < cols; ++c)
                    ga[r * cols + c] += g[r] * std::exp((*ad)[r * cols + c] - (*od)[r]);
        });
    }
    return out;
}

}  // namespace dsla
