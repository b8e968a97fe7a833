#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tpool/errors.hpp"
#include "tpool/rng.hpp"

namespace tpool {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

template <class S>
struct TensorImpl {
    Shape shape;
    std::vector<S> data;
    bool requires_grad = false;
    bool leaf = true;
    bool consumed = false;  // set once backward has run through this node

    // recorded graph edges; empty for leaves and for results of
    // all-constant inputs (nothing to differentiate)
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;

    std::vector<S> grad;  // sized on demand during backward

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), S(0));
    }
};

// Dense n-dimensional array with value-handle semantics: copying a Tensor
// copies a reference to the same buffer. Ops on tensors that require
// gradients record nodes for one later backward() pass.
template <class S>
class Tensor {
public:
    using Scalar = S;

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), S(0), requires_grad);
    }

    static Tensor filled(Shape shape, S value, bool requires_grad = false) {
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl<S>>();
        t.impl_->shape = std::move(shape);
        t.impl_->data.assign(shape_numel(t.impl_->shape), value);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor from_data(Shape shape, std::vector<S> data, bool requires_grad = false) {
        if (shape_numel(shape) != data.size())
            throw ShapeError("tensor " + shape_str(shape) + " cannot hold " +
                             std::to_string(data.size()) + " scalars");
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl<S>>();
        t.impl_->shape = std::move(shape);
        t.impl_->data = std::move(data);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(S value) {
        return from_data({1}, {value});
    }

    static Tensor randn(Shape shape, Rng& rng, S mean, S stddev, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (S& v : t.impl_->data) v = static_cast<S>(rng.normal(mean, stddev));
        return t;
    }

    static Tensor rand_uniform(Shape shape, Rng& rng, S lo, S hi, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (S& v : t.impl_->data)
            v = static_cast<S>(lo + (hi - lo) * static_cast<S>(rng.uniform()));
        return t;
    }

    bool defined() const { return impl_ != nullptr; }

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t size() const { return impl_->data.size(); }

    std::size_t rows() const {
        require_rank(2, "rows()");
        return impl_->shape[0];
    }
    std::size_t cols() const {
        require_rank(2, "cols()");
        return impl_->shape[1];
    }

    S* data() { return impl_->data.data(); }
    const S* data() const { return impl_->data.data(); }
    const std::vector<S>& vec() const { return impl_->data; }

    S operator()(std::size_t i) const { return impl_->data[i]; }
    S operator()(std::size_t i, std::size_t j) const {
        return impl_->data[i * impl_->shape[1] + j];
    }
    S& ref(std::size_t i) { return impl_->data[i]; }
    S& ref(std::size_t i, std::size_t j) {
        return impl_->data[i * impl_->shape[1] + j];
    }

    S value() const {
        if (size() != 1)
            throw ContractError("value(): tensor " + shape_str(shape()) + " is not scalar");
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }

    // Node identity; keys gradient maps and optimizer state.
    const void* id() const { return impl_.get(); }

    std::shared_ptr<TensorImpl<S>> impl() const { return impl_; }

    void require_rank(std::size_t r, const char* what) const {
        if (rank() != r)
            throw ShapeError(std::string(what) + " expects rank-" + std::to_string(r) +
                             " tensor, got " + shape_str(shape()));
    }

private:
    std::shared_ptr<TensorImpl<S>> impl_;
};

// Builds a recorded op node. `backward` reads self.grad and accumulates into
// self.parents[k]->grad (after ensure_grad). It is dropped if no parent
// requires a gradient.
template <class S>
Tensor<S> make_op(Shape out_shape, std::vector<S> out_data,
                  std::vector<Tensor<S>> parents,
                  std::function<void(TensorImpl<S>&)> backward) {
    Tensor<S> out = Tensor<S>::from_data(std::move(out_shape), std::move(out_data));
    bool needs_grad = false;
    for (const auto& p : parents) needs_grad = needs_grad || p.requires_grad();
    if (needs_grad) {
        auto impl = out.impl();
        impl->requires_grad = true;
        impl->leaf = false;
        impl->parents.reserve(parents.size());
        for (const auto& p : parents) impl->parents.push_back(p.impl());
        impl->backward_fn = std::move(backward);
    }
    return out;
}

// ---------------------------------------------------------------------------
// gradients
// ---------------------------------------------------------------------------

template <class S>
class GradientMap {
public:
    bool contains(const Tensor<S>& t) const { return grads_.count(t.id()) != 0; }

    const Tensor<S>& at(const Tensor<S>& t) const {
        auto it = grads_.find(t.id());
        if (it == grads_.end())
            throw ContractError("gradient map has no entry for this tensor");
        return it->second;
    }

    std::size_t size() const { return grads_.size(); }

    void insert(const void* key, Tensor<S> grad) { grads_.emplace(key, std::move(grad)); }

private:
    std::unordered_map<const void*, Tensor<S>> grads_;
};

// Reverse-mode sweep from a scalar loss. Visits each recorded node once in
// reverse topological order, returns gradients for every requires_grad leaf,
// and consumes the graph: a second backward over the same nodes is a
// contract error.
template <class S>
GradientMap<S> backward(const Tensor<S>& loss) {
    if (loss.size() != 1)
        throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    auto root = loss.impl();
    if (root->consumed)
        throw ContractError("backward: graph already consumed by a previous backward pass");

    // iterative post-order DFS over parent edges
    std::vector<TensorImpl<S>*> order;
    std::unordered_set<TensorImpl<S>*> seen;
    struct Frame {
        TensorImpl<S>* node;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            TensorImpl<S>* child = f.node->parents[f.next++].get();
            if (seen.insert(child).second) stack.push_back({child, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl<S>* node = *it;
        if (node->backward_fn && node->requires_grad) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }

    GradientMap<S> map;
    for (TensorImpl<S>* node : order) {
        if (node->leaf && node->requires_grad && !node->grad.empty()) {
            map.insert(node, Tensor<S>::from_data(node->shape, node->grad));
        }
        node->grad.clear();
        if (!node->leaf) {
            node->consumed = true;
            node->backward_fn = nullptr;
            node->parents.clear();
        }
    }
    return map;
}

// ---------------------------------------------------------------------------
// primitive ops
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shapes differ: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

template <class S>
void axpy(std::vector<S>& dst, const std::vector<S>& src, S alpha = S(1)) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
}

}  // namespace detail

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<S> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a(i) + b(i);
    bool ga = a.requires_grad(), gb = b.requires_grad();
    return make_op<S>(a.shape(), std::move(out), {a, b}, [ga, gb](TensorImpl<S>& self) {
        if (ga) {
            self.parents[0]->ensure_grad();
            detail::axpy(self.parents[0]->grad, self.grad);
        }
        if (gb) {
            self.parents[1]->ensure_grad();
            detail::axpy(self.parents[1]->grad, self.grad);
        }
    });
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<S> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a(i) - b(i);
    bool ga = a.requires_grad(), gb = b.requires_grad();
    return make_op<S>(a.shape(), std::move(out), {a, b}, [ga, gb](TensorImpl<S>& self) {
        if (ga) {
            self.parents[0]->ensure_grad();
            detail::axpy(self.parents[0]->grad, self.grad);
        }
        if (gb) {
            self.parents[1]->ensure_grad();
            detail::axpy(self.parents[1]->grad, self.grad, S(-1));
        }
    });
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<S> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a(i) * b(i);
    bool ga = a.requires_grad(), gb = b.requires_grad();
    return make_op<S>(a.shape(), std::move(out), {a, b}, [ga, gb](TensorImpl<S>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (ga) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pa.grad[i] += self.grad[i] * pb.data[i];
        }
        if (gb) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pb.grad[i] += self.grad[i] * pa.data[i];
        }
    });
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S alpha) {
    std::vector<S> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * a(i);
    return make_op<S>(a.shape(), std::move(out), {a}, [alpha](TensorImpl<S>& self) {
        self.parents[0]->ensure_grad();
        detail::axpy(self.parents[0]->grad, self.grad, alpha);
    });
}

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    a.require_rank(2, "matmul lhs");
    b.require_rank(2, "matmul rhs");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw ShapeError("matmul: inner extents differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    std::vector<S> out(m * n, S(0));
    {
        const S* pa = a.data();
        const S* pb = b.data();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t kk = 0; kk < k; ++kk) {
                const S aik = pa[i * k + kk];
                const S* brow = pb + kk * n;
                S* orow = out.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
            }
    }
    bool ga = a.requires_grad(), gb = b.requires_grad();
    return make_op<S>({m, n}, std::move(out), {a, b}, [m, k, n, ga, gb](TensorImpl<S>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (ga) {  // dA = G * B^T
            pa.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const S g = self.grad[i * n + j];
                    for (std::size_t kk = 0; kk < k; ++kk)
                        pa.grad[i * k + kk] += g * pb.data[kk * n + j];
                }
        }
        if (gb) {  // dB = A^T * G
            pb.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const S aik = pa.data[i * k + kk];
                    for (std::size_t j = 0; j < n; ++j)
                        pb.grad[kk * n + j] += aik * self.grad[i * n + j];
                }
        }
    });
}

template <class S>
Tensor<S> transpose(const Tensor<S>& a) {
    a.require_rank(2, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<S> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a(i, j);
    return make_op<S>({n, m}, std::move(out), {a}, [m, n](TensorImpl<S>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j * m + i];
    });
}

// A[m x n] + b[n], broadcast over rows
template <class S>
Tensor<S> add_row(const Tensor<S>& a, const Tensor<S>& b) {
    a.require_rank(2, "add_row lhs");
    b.require_rank(1, "add_row rhs");
    const std::size_t m = a.rows(), n = a.cols();
    if (b.size() != n)
        throw ShapeError("add_row: row width mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    std::vector<S> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a(i, j) + b(j);
    bool ga = a.requires_grad(), gb = b.requires_grad();
    return make_op<S>({m, n}, std::move(out), {a, b}, [m, n, ga, gb](TensorImpl<S>& self) {
        if (ga) {
            self.parents[0]->ensure_grad();
            detail::axpy(self.parents[0]->grad, self.grad);
        }
        if (gb) {
            auto& pb = *self.parents[1];
            pb.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) pb.grad[j] += self.grad[i * n + j];
        }
    });
}

// softmax along `axis`, max-stabilized; slices sum to 1
template <class S>
Tensor<S> softmax(const Tensor<S>& x, std::size_t axis) {
    if (axis >= x.rank())
        throw ShapeError("softmax: axis " + std::to_string(axis) + " out of bounds for " +
                         shape_str(x.shape()));
    const Shape& sh = x.shape();
    std::size_t extent = sh[axis];
    std::size_t inner = 1;
    for (std::size_t d = axis + 1; d < sh.size(); ++d) inner *= sh[d];
    std::size_t outer = x.size() / (extent * inner);

    std::vector<S> out(x.size());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * extent * inner + in;
            S mx = x(base);
            for (std::size_t e = 1; e < extent; ++e)
                mx = std::max(mx, x(base + e * inner));
            S sum = S(0);
            for (std::size_t e = 0; e < extent; ++e) {
                S v = std::exp(x(base + e * inner) - mx);
                out[base + e * inner] = v;
                sum += v;
            }
            for (std::size_t e = 0; e < extent; ++e) out[base + e * inner] /= sum;
        }

    return make_op<S>(sh, std::move(out), {x}, [extent, inner, outer](TensorImpl<S>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        // dx = y * (g - sum(g*y)) per slice
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * extent * inner + in;
                S dot = S(0);
                for (std::size_t e = 0; e < extent; ++e) {
                    const std::size_t k = base + e * inner;
                    dot += self.grad[k] * self.data[k];
                }
                for (std::size_t e = 0; e < extent; ++e) {
                    const std::size_t k = base + e * inner;
                    p.grad[k] += self.data[k] * (self.grad[k] - dot);
                }
            }
    });
}

// exact x * Phi(x) with the Gaussian CDF (erf form, not the tanh fit)
template <class S>
Tensor<S> gelu(const Tensor<S>& x) {
    static const S inv_sqrt2 = S(1) / std::sqrt(S(2));
    static const S inv_sqrt2pi = S(1) / std::sqrt(S(2) * S(M_PI));
    std::vector<S> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        S v = x(i);
        out[i] = v * S(0.5) * (S(1) + std::erf(v * inv_sqrt2));
    }
    return make_op<S>(x.shape(), std::move(out), {x}, [](TensorImpl<S>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            S v = p.data[i];
            S cdf = S(0.5) * (S(1) + std::erf(v * inv_sqrt2));
            S pdf = std::exp(S(-0.5) * v * v) * inv_sqrt2pi;
            p.grad[i] += self.grad[i] * (cdf + v * pdf);
        }
    });
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    std::vector<S> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = S(1) / (S(1) + std::exp(-x(i)));
    return make_op<S>(x.shape(), std::move(out), {x}, [](TensorImpl<S>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            S y = self.data[i];
            p.grad[i] += self.grad[i] * y * (S(1) - y);
        }
    });
}

template <class S>
Tensor<S> tanh(const Tensor<S>& x) {
    std::vector<S> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x(i));
    return make_op<S>(x.shape(), std::move(out), {x}, [](TensorImpl<S>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            S y = self.data[i];
            p.grad[i] += self.grad[i] * (S(1) - y * y);
        }
    });
}

// normalize each last-axis slice to zero mean / unit variance, then scale
// and shift by gamma/beta
template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     S eps = S(1e-5)) {
    if (x.rank() == 0) throw ShapeError("layer_norm: undefined input");
    const std::size_t n = x.shape().back();
    if (gamma.size() != n || beta.size() != n)
        throw ShapeError("layer_norm: affine extents " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match last axis of " +
                         shape_str(x.shape()));
    const std::size_t rows = x.size() / n;
    std::vector<S> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const S* xr = x.data() + r * n;
        S mean = S(0);
        for (std::size_t j = 0; j < n; ++j) mean += xr[j];
        mean /= S(n);
        S var = S(0);
        for (std::size_t j = 0; j < n; ++j) {
            S d = xr[j] - mean;
            var += d * d;
        }
        var /= S(n);
        const S inv = S(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j)
            out[r * n + j] = (xr[j] - mean) * inv * gamma(j) + beta(j);
    }
    bool gx = x.requires_grad(), gg = gamma.requires_grad(), gb = beta.requires_grad();
    return make_op<S>(x.shape(), std::move(out), {x, gamma, beta},
                      [n, rows, eps, gx, gg, gb](TensorImpl<S>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        if (gx) px.ensure_grad();
        if (gg) pg.ensure_grad();
        if (gb) pb.ensure_grad();
        std::vector<S> xhat(n), gh(n);
        for (std::size_t r = 0; r < rows; ++r) {
            const S* xr = px.data.data() + r * n;
            const S* gr = self.grad.data() + r * n;
            S mean = S(0);
            for (std::size_t j = 0; j < n; ++j) mean += xr[j];
            mean /= S(n);
            S var = S(0);
            for (std::size_t j = 0; j < n; ++j) {
                S d = xr[j] - mean;
                var += d * d;
            }
            var /= S(n);
            const S inv = S(1) / std::sqrt(var + eps);
            for (std::size_t j = 0; j < n; ++j) xhat[j] = (xr[j] - mean) * inv;
            if (gg)
                for (std::size_t j = 0; j < n; ++j) pg.grad[j] += gr[j] * xhat[j];
            if (gb)
                for (std::size_t j = 0; j < n; ++j) pb.grad[j] += gr[j];
            if (gx) {
                S mean_gh = S(0), mean_ghx = S(0);
                for (std::size_t j = 0; j < n; ++j) {
                    gh[j] = gr[j] * pg.data[j];
                    mean_gh += gh[j];
                    mean_ghx += gh[j] * xhat[j];
                }
                mean_gh /= S(n);
                mean_ghx /= S(n);
                for (std::size_t j = 0; j < n; ++j)
                    px.grad[r * n + j] += inv * (gh[j] - mean_gh - xhat[j] * mean_ghx);
            }
        }
    });
}

template <class S>
Tensor<S> sum_all(const Tensor<S>& x) {
    S total = std::accumulate(x.data(), x.data() + x.size(), S(0));
    return make_op<S>({1}, {total}, {x}, [](TensorImpl<S>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const S g = self.grad[0];
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
    });
}

// column means of a [T x D] matrix -> [D]
template <class S>
Tensor<S> mean_axis0(const Tensor<S>& x) {
    x.require_rank(2, "mean_axis0");
    const std::size_t t = x.rows(), d = x.cols();
    std::vector<S> out(d, S(0));
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j) out[j] += x(i, j);
    for (std::size_t j = 0; j < d; ++j) out[j] /= S(t);
    return make_op<S>({d}, std::move(out), {x}, [t, d](TensorImpl<S>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const S inv = S(1) / S(t);
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) p.grad[i * d + j] += self.grad[j] * inv;
    });
}

template <class S>
Tensor<S> slice_rows(const Tensor<S>& x, std::size_t r0, std::size_t r1) {
    x.require_rank(2, "slice_rows");
    if (r0 >= r1 || r1 > x.rows())
        throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") invalid for " + shape_str(x.shape()));
    const std::size_t n = x.cols(), m = r1 - r0;
    std::vector<S> out(x.data() + r0 * n, x.data() + r1 * n);
    return make_op<S>({m, n}, std::move(out), {x}, [r0, m, n](TensorImpl<S>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < m * n; ++i) p.grad[r0 * n + i] += self.grad[i];
    });
}

template <class S>
Tensor<S> slice_cols(const Tensor<S>& x, std::size_t c0, std::size_t c1) {
    x.require_rank(2, "slice_cols");
    if (c0 >= c1 || c1 > x.cols())
        throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") invalid for " + shape_str(x.shape()));
    const std::size_t m = x.rows(), n = x.cols(), w = c1 - c0;
    std::vector<S> out(m * w);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x(i, c0 + j);
    return make_op<S>({m, w}, std::move(out), {x}, [c0, m, n, w](TensorImpl<S>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j)
                p.grad[i * n + c0 + j] += self.grad[i * w + j];
    });
}

template <class S>
Tensor<S> concat_rows(const Tensor<S>& a, const Tensor<S>& b) {
    a.require_rank(2, "concat_rows lhs");
    b.require_rank(2, "concat_rows rhs");
    if (a.cols() != b.cols())
        throw ShapeError("concat_rows: widths differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const std::size_t n = a.cols(), ma = a.rows(), mb = b.rows();
    std::vector<S> out;
    out.reserve((ma + mb) * n);
    out.insert(out.end(), a.data(), a.data() + ma * n);
    out.insert(out.end(), b.data(), b.data() + mb * n);
    bool ga = a.requires_grad(), gb = b.requires_grad();
    return make_op<S>({ma + mb, n}, std::move(out), {a, b},
                      [ma, mb, n, ga, gb](TensorImpl<S>& self) {
        if (ga) {
            auto& pa = *self.parents[0];
            pa.ensure_grad();
            for (std::size_t i = 0; i < ma * n; ++i) pa.grad[i] += self.grad[i];
        }
        if (gb) {
            auto& pb = *self.parents[1];
            pb.ensure_grad();
            for (std::size_t i = 0; i < mb * n; ++i) pb.grad[i] += self.grad[ma * n + i];
        }
    });
}

template <class S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
    a.require_rank(2, "concat_cols lhs");
    b.require_rank(2, "concat_cols rhs");
    if (a.rows() != b.rows())
        throw ShapeError("concat_cols: heights differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const std::size_t m = a.rows(), na = a.cols(), nb = b.cols();
    std::vector<S> out(m * (na + nb));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < na; ++j) out[i * (na + nb) + j] = a(i, j);
        for (std::size_t j = 0; j < nb; ++j) out[i * (na + nb) + na + j] = b(i, j);
    }
    bool ga = a.requires_grad(), gb = b.requires_grad();
    return make_op<S>({m, na + nb}, std::move(out), {a, b},
                      [m, na, nb, ga, gb](TensorImpl<S>& self) {
        const std::size_t n = na + nb;
        if (ga) {
            auto& pa = *self.parents[0];
            pa.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < na; ++j) pa.grad[i * na + j] += self.grad[i * n + j];
        }
        if (gb) {
            auto& pb = *self.parents[1];
            pb.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < nb; ++j)
                    pb.grad[i * nb + j] += self.grad[i * n + na + j];
        }
    });
}

// new shape over the same scalars; element count must match
template <class S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
    if (shape_numel(shape) != x.size())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " has " + std::to_string(x.size()) +
                         " elements, target " + shape_str(shape) + " wants " +
                         std::to_string(shape_numel(shape)));
    std::vector<S> out(x.data(), x.data() + x.size());
    return make_op<S>(std::move(shape), std::move(out), {x}, [](TensorImpl<S>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        detail::axpy(p.grad, self.grad);
    });
}

// y_ij = x_ij / sum_j x_ij (row-stochastic rescale; rows must not sum to 0)
template <class S>
Tensor<S> normalize_rows(const Tensor<S>& x) {
    x.require_rank(2, "normalize_rows");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<S> out(m * n);
    std::vector<S> sums(m);
    for (std::size_t i = 0; i < m; ++i) {
        S s = S(0);
        for (std::size_t j = 0; j < n; ++j) s += x(i, j);
        sums[i] = s;
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x(i, j) / s;
    }
    return make_op<S>({m, n}, std::move(out), {x},
                      [m, n, sums = std::move(sums)](TensorImpl<S>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            S dot = S(0);
            for (std::size_t j = 0; j < n; ++j)
                dot += self.grad[i * n + j] * self.data[i * n + j];
            for (std::size_t j = 0; j < n; ++j)
                p.grad[i * n + j] += (self.grad[i * n + j] - dot) / sums[i];
        }
    });
}

}  // namespace tpool
