// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "ropim/kernels.hpp"
#include "ropim/matrix.hpp"
#include "ropim/sketch.hpp"

// Reverse-mode differentiation over dense matrices. A Tape owns every node
// created through it; creation order is a topological order of the graph,
// so backward() is a single reverse sweep applying each node's
// vector-Jacobian product. One backward per tape.

namespace ropim {

template <typename T>
class Tape;

template <typename T>
struct Node {
    Mat<T> val;
    Mat<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::function<void(Node<T>&)> vjp;
};

template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(Node<T>* n) : n_(n) {}
    const Mat<T>& value() const { return n_->val; }
    const Mat<T>& grad() const {
        if (n_->grad.empty()) throw std::logic_error("grad not populated; run backward first");
        return n_->grad;
    }
    bool has_grad() const { return !n_->grad.empty(); }
    bool requires_grad() const { return n_->requires_grad; }
    size_t rows() const { return n_->val.rows(); }
    size_t cols() const { return n_->val.cols(); }
    Node<T>* node() const { return n_; }

private:
    Node<T>* n_ = nullptr;
};

template <typename T>
class Tape {
public:
    Var<T> leaf(Mat<T> v, bool requires_grad) {
        Node<T>& n = fresh();
        n.val = std::move(v);
        n.requires_grad = requires_grad;
        return Var<T>(&n);
    }

    Var<T> constant(Mat<T> v) { return leaf(std::move(v), false); }

    Var<T> matmul(Var<T> a, Var<T> b) {
        if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
        const auto& k = kernels::table<T>();
        const size_t m = a.rows(), n = b.cols(), kk = a.cols();
        Mat<T> out(m, n);
        k.gemm_nn(m, n, kk, a.value().data(), b.value().data(), out.data(), false);
        return record(std::move(out), {a, b}, [a, b](Node<T>& self) {
            const auto& k2 = kernels::table<T>();
            const size_t M = a.rows(), N = b.cols(), K = a.cols();
            if (a.requires_grad())
                k2.gemm_nt(M, K, N, self.grad.data(), b.value().data(),
                           ensure_grad(*a.node()).data(), true);
            if (b.requires_grad())
                k2.gemm_tn(K, N, M, a.value().data(), self.grad.data(),
                           ensure_grad(*b.node()).data(), true);
        });
    }

    Var<T> add(Var<T> a, Var<T> b) {
        if (!a.value().same_shape(b.value())) throw ShapeError("add: shape mismatch");
        Mat<T> out(a.rows(), a.cols());
        kernels::table<T>().vadd(out.size(), a.value().data(), b.value().data(), out.data());
        return record(std::move(out), {a, b}, [a, b](Node<T>& self) {
            const auto& k = kernels::table<T>();
            if (a.requires_grad())
                k.axpy(self.grad.size(), T(1), self.grad.data(), ensure_grad(*a.node()).data());
            if (b.requires_grad())
                k.axpy(self.grad.size(), T(1), self.grad.data(), ensure_grad(*b.node()).data());
        });
    }

    Var<T> sub(Var<T> a, Var<T> b) {
        if (!a.value().same_shape(b.value())) throw ShapeError("sub: shape mismatch");
        Mat<T> out(a.rows(), a.cols());
        kernels::table<T>().vsub(out.size(), a.value().data(), b.value().data(), out.data());
        return record(std::move(out), {a, b}, [a, b](Node<T>& self) {
            const auto& k = kernels::table<T>();
            if (a.requires_grad())
                k.axpy(self.grad.size(), T(1), self.grad.data(), ensure_grad(*a.node()).data());
            if (b.requires_grad())
                k.axpy(self.grad.size(), T(-1), self.grad.data(), ensure_grad(*b.node()).data());
        });
    }

    Var<T> mul(Var<T> a, Var<T> b) {
        if (!a.value().same_shape(b.value())) throw ShapeError("mul: shape mismatch");
        Mat<T> out(a.rows(), a.cols());
        kernels::table<T>().vmul(out.size(), a.value().data(), b.value().data(), out.data());
        return record(std::move(out), {a, b}, [a, b](Node<T>& self) {
            if (a.requires_grad()) {
                Mat<T>& ga = ensure_grad(*a.node());
                for (size_t i = 0; i < self.grad.size(); ++i)
                    ga.values()[i] += self.grad.values()[i] * b.value().values()[i];
            }
            if (b.requires_grad()) {
                Mat<T>& gb = ensure_grad(*b.node());
                for (size_t i = 0; i < self.grad.size(); ++i)
                    gb.values()[i] += self.grad.values()[i] * a.value().values()[i];
            }
        });
    }

    Var<T> smul(Var<T> a, T c) {
        Mat<T> out(a.rows(), a.cols());
        kernels::table<T>().scale(out.size(), c, a.value().data(), out.data());
        return record(std::move(out), {a}, [a, c](Node<T>& self) {
            if (a.requires_grad())
                kernels::table<T>().axpy(self.grad.size(), c, self.grad.data(),
                                         ensure_grad(*a.node()).data());
        });
    }

    // x + broadcast row b (bias), b is 1 x cols.
    Var<T> add_rowvec(Var<T> x, Var<T> b) {
        if (b.rows() != 1 || b.cols() != x.cols()) throw ShapeError("add_rowvec: bias must be 1 x cols");
        Mat<T> out(x.rows(), x.cols());
        for (size_t i = 0; i < x.rows(); ++i)
            kernels::table<T>().vadd(x.cols(), x.value().row(i), b.value().row(0), out.row(i));
        return record(std::move(out), {x, b}, [x, b](Node<T>& self) {
            if (x.requires_grad())
                kernels::table<T>().axpy(self.grad.size(), T(1), self.grad.data(),
                                         ensure_grad(*x.node()).data());
            if (b.requires_grad()) {
                Mat<T>& gb = ensure_grad(*b.node());
                for (size_t i = 0; i < self.grad.rows(); ++i)
                    kernels::table<T>().axpy(self.grad.cols(), T(1), self.grad.row(i), gb.row(0));
            }
        });
    }

    Var<T> transpose(Var<T> a) {
        Mat<T> out(a.cols(), a.rows());
        for (size_t i = 0; i < a.rows(); ++i)
            for (size_t j = 0; j < a.cols(); ++j) out(j, i) = a.value()(i, j);
        return record(std::move(out), {a}, [a](Node<T>& self) {
            if (!a.requires_grad()) return;
            Mat<T>& ga = ensure_grad(*a.node());
            for (size_t i = 0; i < self.grad.rows(); ++i)
                for (size_t j = 0; j < self.grad.cols(); ++j) ga(j, i) += self.grad(i, j);
        });
    }

    Var<T> reshape(Var<T> a, size_t rows, size_t cols) {
        if (rows * cols != a.value().size()) throw ShapeError("reshape: element count differs");
        Mat<T> out(rows, cols, a.value().values());
        return record(std::move(out), {a}, [a](Node<T>& self) {
            if (a.requires_grad())
                kernels::table<T>().axpy(self.grad.size(), T(1), self.grad.data(),
                                         ensure_grad(*a.node()).data());
        });
    }

    Var<T> concat_rows(Var<T> a, Var<T> b) {
        if (a.cols() != b.cols()) throw ShapeError("concat_rows: column counts differ");
        Mat<T> out(a.rows() + b.rows(), a.cols());
        std::copy(a.value().values().begin(), a.value().values().end(), out.values().begin());
        std::copy(b.value().values().begin(), b.value().values().end(),
                  out.values().begin() + static_cast<ptrdiff_t>(a.value().size()));
        return record(std::move(out), {a, b}, [a, b](Node<T>& self) {
            const auto& k = kernels::table<T>();
            if (a.requires_grad())
                k.axpy(a.value().size(), T(1), self.grad.data(), ensure_grad(*a.node()).data());
            if (b.requires_grad())
                k.axpy(b.value().size(), T(1), self.grad.data() + a.value().size(),
                       ensure_grad(*b.node()).data());
        });
    }

    Var<T> concat_cols(const std::vector<Var<T>>& parts) {
        if (parts.empty()) throw ShapeError("concat_cols: no parts");
        const size_t rows = parts.front().rows();
        size_t cols = 0;
        for (const auto& p : parts) {
            if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
            cols += p.cols();
        }
        Mat<T> out(rows, cols);
        size_t c0 = 0;
        for (const auto& p : parts) {
            for (size_t i = 0; i < rows; ++i)
                std::copy(p.value().row(i), p.value().row(i) + p.cols(), out.row(i) + c0);
            c0 += p.cols();
        }
        return record(std::move(out), parts, [parts](Node<T>& self) {
            size_t c = 0;
            for (const auto& p : parts) {
                if (p.requires_grad()) {
                    Mat<T>& gp = ensure_grad(*p.node());
                    for (size_t i = 0; i < gp.rows(); ++i)
                        kernels::table<T>().axpy(p.cols(), T(1), self.grad.row(i) + c, gp.row(i));
                }
                c += p.cols();
            }
        });
    }

    Var<T> slice_rows(Var<T> a, size_t r0, size_t n) {
        if (r0 + n > a.rows()) throw ShapeError("slice_rows: out of range");
        Mat<T> out(n, a.cols());
        std::copy(a.value().row(r0), a.value().row(r0) + n * a.cols(), out.data());
        return record(std::move(out), {a}, [a, r0](Node<T>& self) {
            if (a.requires_grad())
                kernels::table<T>().axpy(self.grad.size(), T(1), self.grad.data(),
                                         ensure_grad(*a.node()).row(r0));
        });
    }

    Var<T> slice_cols(Var<T> a, size_t c0, size_t n) {
        if (c0 + n > a.cols()) throw ShapeError("slice_cols: out of range");
        Mat<T> out(a.rows(), n);
        for (size_t i = 0; i < a.rows(); ++i)
            std::copy(a.value().row(i) + c0, a.value().row(i) + c0 + n, out.row(i));
        return record(std::move(out), {a}, [a, c0](Node<T>& self) {
            if (!a.requires_grad()) return;
            Mat<T>& ga = ensure_grad(*a.node());
            for (size_t i = 0; i < self.grad.rows(); ++i)
                kernels::table<T>().axpy(self.grad.cols(), T(1), self.grad.row(i), ga.row(i) + c0);
        });
    }

    Var<T> softmax_rows(Var<T> a) {
        Mat<T> out(a.rows(), a.cols());
        for (size_t i = 0; i < a.rows(); ++i) {
            const T* x = a.value().row(i);
            T* y = out.row(i);
            T mx = x[0];
            for (size_t j = 1; j < a.cols(); ++j) mx = std::max(mx, x[j]);
            T sum = 0;
            for (size_t j = 0; j < a.cols(); ++j) {
                y[j] = std::exp(x[j] - mx);
                sum += y[j];
            }
            for (size_t j = 0; j < a.cols(); ++j) y[j] /= sum;
        }
        return record(std::move(out), {a}, [a](Node<T>& self) {
            if (!a.requires_grad()) return;
            Mat<T>& ga = ensure_grad(*a.node());
            for (size_t i = 0; i < self.grad.rows(); ++i) {
                const T* y = self.val.row(i);
                const T* g = self.grad.row(i);
                T dot = 0;
                for (size_t j = 0; j < self.grad.cols(); ++j) dot += g[j] * y[j];
                T* out_g = ga.row(i);
                for (size_t j = 0; j < self.grad.cols(); ++j) out_g[j] += y[j] * (g[j] - dot);
            }
        });
    }

    // Row-wise layer norm with learnable gain/offset (each 1 x cols).
    Var<T> layer_norm_rows(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
        if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 ||
            beta.cols() != x.cols())
            throw ShapeError("layer_norm_rows: gain/offset must be 1 x cols");
        const size_t R = x.rows(), C = x.cols();
        auto xhat = std::make_shared<Mat<T>>(R, C);
        auto inv_std = std::make_shared<std::vector<T>>(R);
        Mat<T> out(R, C);
        for (size_t i = 0; i < R; ++i) {
            const T* xi = x.value().row(i);
            T mean = 0;
            for (size_t j = 0; j < C; ++j) mean += xi[j];
            mean /= T(C);
            T var = 0;
            for (size_t j = 0; j < C; ++j) {
                const T d = xi[j] - mean;
                var += d * d;
            }
            var /= T(C);
            const T is = T(1) / std::sqrt(var + eps);
            (*inv_std)[i] = is;
            for (size_t j = 0; j < C; ++j) {
                const T xh = (xi[j] - mean) * is;
                (*xhat)(i, j) = xh;
                out(i, j) = gamma.value()(0, j) * xh + beta.value()(0, j);
            }
        }
        return record(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std](Node<T>& self) {
            const size_t R = self.grad.rows(), C = self.grad.cols();
            if (gamma.requires_grad()) {
                Mat<T>& gg = ensure_grad(*gamma.node());
                for (size_t i = 0; i < R; ++i)
                    for (size_t j = 0; j < C; ++j) gg(0, j) += self.grad(i, j) * (*xhat)(i, j);
            }
            if (beta.requires_grad()) {
                Mat<T>& gb = ensure_grad(*beta.node());
                for (size_t i = 0; i < R; ++i)
                    for (size_t j = 0; j < C; ++j) gb(0, j) += self.grad(i, j);
            }
            if (x.requires_grad()) {
                Mat<T>& gx = ensure_grad(*x.node());
                std::vector<T> dxhat(C);
                for (size_t i = 0; i < R; ++i) {
                    T mean_dx = 0, mean_dx_xhat = 0;
                    for (size_t j = 0; j < C; ++j) {
                        dxhat[j] = self.grad(i, j) * gamma.value()(0, j);
                        mean_dx += dxhat[j];
                        mean_dx_xhat += dxhat[j] * (*xhat)(i, j);
                    }
                    mean_dx /= T(C);
                    mean_dx_xhat /= T(C);
                    const T is = (*inv_std)[i];
                    for (size_t j = 0; j < C; ++j)
                        gx(i, j) += is * (dxhat[j] - mean_dx - (*xhat)(i, j) * mean_dx_xhat);
                }
            }
        });
    }

    // tanh-form approximation: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
    Var<T> gelu(Var<T> a) {
        constexpr T c0 = T(0.7978845608028654);  // sqrt(2/pi)
        constexpr T c1 = T(0.044715);
        Mat<T> out(a.rows(), a.cols());
        for (size_t i = 0; i < a.value().size(); ++i) {
            const T x = a.value().values()[i];
            out.values()[i] = T(0.5) * x * (T(1) + std::tanh(c0 * (x + c1 * x * x * x)));
        }
        return record(std::move(out), {a}, [a](Node<T>& self) {
            if (!a.requires_grad()) return;
            Mat<T>& ga = ensure_grad(*a.node());
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const T x = a.value().values()[i];
                const T u = c0 * (x + c1 * x * x * x);
                const T t = std::tanh(u);
                const T sech2 = T(1) - t * t;
                const T d = T(0.5) * (T(1) + t) + T(0.5) * x * sech2 * c0 * (T(1) + T(3) * c1 * x * x);
                ga.values()[i] += self.grad.values()[i] * d;
            }
        });
    }

    Var<T> mean_all(Var<T> a) {
        T sum = 0;
        for (const T& x : a.value().values()) sum += x;
        Mat<T> out(1, 1, std::vector<T>{sum / T(a.value().size())});
        return record(std::move(out), {a}, [a](Node<T>& self) {
            if (!a.requires_grad()) return;
            Mat<T>& ga = ensure_grad(*a.node());
            const T g = self.grad(0, 0) / T(a.value().size());
            for (size_t i = 0; i < ga.size(); ++i) ga.values()[i] += g;
        });
    }

    // Sum of absolute values; subgradient at 0 is 0.
    Var<T> abs_sum(Var<T> a) {
        const T s = kernels::table<T>().abs_sum(a.value().size(), a.value().data());
        Mat<T> out(1, 1, std::vector<T>{s});
        return record(std::move(out), {a}, [a](Node<T>& self) {
            if (!a.requires_grad()) return;
            kernels::table<T>().sign_axpy(a.value().size(), self.grad(0, 0), a.value().data(),
                                          ensure_grad(*a.node()).data());
        });
    }

    // The lossy soft-mask and its complement are symmetric linear maps, so
    // each is its own transpose in the backward pass.
    Var<T> sketch_roundtrip(Var<T> a, const SketchSpec& spec) {
        Mat<T> out = ropim::roundtrip(spec, a.value());
        return record(std::move(out), {a}, [a, &spec](Node<T>& self) {
            if (!a.requires_grad()) return;
            Mat<T> back = ropim::roundtrip(spec, self.grad);
            kernels::table<T>().axpy(back.size(), T(1), back.data(),
                                     ensure_grad(*a.node()).data());
        });
    }

    Var<T> sketch_complement(Var<T> a, const SketchSpec& spec) {
        Mat<T> out = ropim::complement_roundtrip(spec, a.value());
        return record(std::move(out), {a}, [a, &spec](Node<T>& self) {
            if (!a.requires_grad()) return;
            Mat<T> back = ropim::complement_roundtrip(spec, self.grad);
            kernels::table<T>().axpy(back.size(), T(1), back.data(),
                                     ensure_grad(*a.node()).data());
        });
    }

    void backward(Var<T> loss) {
        if (consumed_) throw std::logic_error("backward: tape already consumed");
        if (loss.rows() != 1 || loss.cols() != 1)
            throw std::invalid_argument("backward: loss must be a scalar");
        consumed_ = true;
        loss.node()->grad = Mat<T>(1, 1, T(1));
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node<T>& n = *it;
            if (!n.grad.empty() && n.vjp) n.vjp(n);
        }
    }

    bool consumed() const { return consumed_; }
    size_t node_count() const { return nodes_.size(); }

    static Mat<T>& ensure_grad(Node<T>& n) {
        if (n.grad.empty()) n.grad = Mat<T>(n.val.rows(), n.val.cols(), T(0));
        return n.grad;
    }

private:
    Node<T>& fresh() {
        if (consumed_) throw std::logic_error("tape already consumed; make a new tape");
        return nodes_.emplace_back();
    }

    Var<T> record(Mat<T> val, const std::vector<Var<T>>& parents,
                  std::function<void(Node<T>&)> vjp) {
        Node<T>& n = fresh();
        n.val = std::move(val);
        for (const auto& p : parents) n.requires_grad = n.requires_grad || p.requires_grad();
        if (n.requires_grad) n.vjp = std::move(vjp);
        return Var<T>(&n);
    }

    std::deque<Node<T>> nodes_;
    bool consumed_ = false;
};

}  // namespace ropim
