#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "mrg/tape.hpp"

namespace mrg {
namespace detail {

inline std::vector<double>& grad_buf(const std::shared_ptr<Tensor::Impl>& p) {
    if (p->g.empty()) p->g.assign(p->v.size(), 0.0);
    return p->g;
}

inline bool wants_grad(const Tensor& t) { return t.requires_grad(); }

inline Tensor finish(Tape& tape, const char* op, Tensor out, bool any_requires_grad,
                     std::function<void()> backward) {
    if (tape.check_finite && !out.all_finite())
        throw NumericError(strf("%s: produced non-finite values", op));
    if (tape.grad_enabled() && any_requires_grad) {
        out.set_requires_grad(true);
        tape.record(op, out, std::move(backward));
    }
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw ShapeError(strf("matmul: %s vs %s", a.shape_str().c_str(), b.shape_str().c_str()));
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::zeros(m, n);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.values().data();
    for (int i = 0; i < m; ++i) {
        const double* arow = av + static_cast<size_t>(i) * k;
        double* orow = ov + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double aip = arow[p];
            if (aip == 0.0) continue;
            const double* brow = bv + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    return detail::finish(tape, "matmul", out, a.requires_grad() || b.requires_grad(), [=] {
        if (oi->g.empty()) return;
        const double* og = oi->g.data();
        if (ai->requires_grad) {
            auto& ag = detail::grad_buf(ai);
            // dA += dC * B^T (row-dot-row form)
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    const double* grow = og + static_cast<size_t>(i) * n;
                    const double* brow = bi->v.data() + static_cast<size_t>(p) * n;
                    double s = 0.0;
                    for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                    ag[static_cast<size_t>(i) * k + p] += s;
                }
        }
        if (bi->requires_grad) {
            auto& bg = detail::grad_buf(bi);
            // dB += A^T * dC
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    const double aip = ai->v[static_cast<size_t>(i) * k + p];
                    if (aip == 0.0) continue;
                    const double* grow = og + static_cast<size_t>(i) * n;
                    double* brow = bg.data() + static_cast<size_t>(p) * n;
                    for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
                }
        }
    });
}

/// a * b^T without materializing the transpose.
inline Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols())
        throw ShapeError(strf("matmul_nt: %s vs %s", a.shape_str().c_str(), b.shape_str().c_str()));
    const int m = a.rows(), k = a.cols(), n = b.rows();
    Tensor out = Tensor::zeros(m, n);
    for (int i = 0; i < m; ++i) {
        const double* arow = a.values().data() + static_cast<size_t>(i) * k;
        for (int j = 0; j < n; ++j) {
            const double* brow = b.values().data() + static_cast<size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            out(i, j) = s;
        }
    }
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    return detail::finish(tape, "matmul_nt", out, a.requires_grad() || b.requires_grad(), [=] {
        if (oi->g.empty()) return;
        const double* og = oi->g.data();
        if (ai->requires_grad) {
            auto& ag = detail::grad_buf(ai);
            // dA += dC * B
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double c = og[static_cast<size_t>(i) * n + j];
                    if (c == 0.0) continue;
                    const double* brow = bi->v.data() + static_cast<size_t>(j) * k;
                    double* arow = ag.data() + static_cast<size_t>(i) * k;
                    for (int p = 0; p < k; ++p) arow[p] += c * brow[p];
                }
        }
        if (bi->requires_grad) {
            auto& bg = detail::grad_buf(bi);
            // dB += dC^T * A
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double c = og[static_cast<size_t>(i) * n + j];
                    if (c == 0.0) continue;
                    const double* arow = ai->v.data() + static_cast<size_t>(i) * k;
                    double* brow = bg.data() + static_cast<size_t>(j) * k;
                    for (int p = 0; p < k; ++p) brow[p] += c * arow[p];
                }
        }
    });
}

inline Tensor transpose(Tape& tape, const Tensor& x) {
    const int m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros(n, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out(j, i) = x(i, j);
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "transpose", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& xg = detail::grad_buf(xi);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) xg[static_cast<size_t>(i) * n + j] += oi->g[static_cast<size_t>(j) * m + i];
    });
}

/// x * W^T + b with x: n x in, W: out x in, b: 1 x out.
inline Tensor affine(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.cols() != w.cols())
        throw ShapeError(strf("affine: input %s vs weight %s", x.shape_str().c_str(), w.shape_str().c_str()));
    if (b.rows() != 1 || b.cols() != w.rows())
        throw ShapeError(strf("affine: bias %s vs weight %s", b.shape_str().c_str(), w.shape_str().c_str()));
    const int n = x.rows(), in = x.cols(), out_dim = w.rows();
    Tensor out = Tensor::zeros(n, out_dim);
    for (int i = 0; i < n; ++i) {
        const double* xrow = x.values().data() + static_cast<size_t>(i) * in;
        for (int o = 0; o < out_dim; ++o) {
            const double* wrow = w.values().data() + static_cast<size_t>(o) * in;
            double s = b.values()[o];
            for (int p = 0; p < in; ++p) s += xrow[p] * wrow[p];
            out(i, o) = s;
        }
    }
    auto xi = x.impl(), wi = w.impl(), bi = b.impl(), oi = out.impl();
    bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
    return detail::finish(tape, "affine", out, rg, [=] {
        if (oi->g.empty()) return;
        const double* og = oi->g.data();
        if (xi->requires_grad) {
            auto& xg = detail::grad_buf(xi);
            for (int i = 0; i < n; ++i)
                for (int o = 0; o < out_dim; ++o) {
                    const double c = og[static_cast<size_t>(i) * out_dim + o];
                    if (c == 0.0) continue;
                    const double* wrow = wi->v.data() + static_cast<size_t>(o) * in;
                    double* xrow = xg.data() + static_cast<size_t>(i) * in;
                    for (int p = 0; p < in; ++p) xrow[p] += c * wrow[p];
                }
        }
        if (wi->requires_grad) {
            auto& wg = detail::grad_buf(wi);
            for (int i = 0; i < n; ++i)
                for (int o = 0; o < out_dim; ++o) {
                    const double c = og[static_cast<size_t>(i) * out_dim + o];
                    if (c == 0.0) continue;
                    const double* xrow = xi->v.data() + static_cast<size_t>(i) * in;
                    double* wrow = wg.data() + static_cast<size_t>(o) * in;
                    for (int p = 0; p < in; ++p) wrow[p] += c * xrow[p];
                }
        }
        if (bi->requires_grad) {
            auto& bg = detail::grad_buf(bi);
            for (int i = 0; i < n; ++i)
                for (int o = 0; o < out_dim; ++o) bg[o] += og[static_cast<size_t>(i) * out_dim + o];
        }
    });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError(strf("add: %s vs %s", a.shape_str().c_str(), b.shape_str().c_str()));
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    return detail::finish(tape, "add", out, a.requires_grad() || b.requires_grad(), [=] {
        if (oi->g.empty()) return;
        if (ai->requires_grad) {
            auto& g = detail::grad_buf(ai);
            for (size_t i = 0; i < g.size(); ++i) g[i] += oi->g[i];
        }
        if (bi->requires_grad) {
            auto& g = detail::grad_buf(bi);
            for (size_t i = 0; i < g.size(); ++i) g[i] += oi->g[i];
        }
    });
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError(strf("mul: %s vs %s", a.shape_str().c_str(), b.shape_str().c_str()));
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    return detail::finish(tape, "mul", out, a.requires_grad() || b.requires_grad(), [=] {
        if (oi->g.empty()) return;
        if (ai->requires_grad) {
            auto& g = detail::grad_buf(ai);
            for (size_t i = 0; i < g.size(); ++i) g[i] += oi->g[i] * bi->v[i];
        }
        if (bi->requires_grad) {
            auto& g = detail::grad_buf(bi);
            for (size_t i = 0; i < g.size(); ++i) g[i] += oi->g[i] * ai->v[i];
        }
    });
}

inline Tensor scale(Tape& tape, const Tensor& x, double s) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i) out.values()[i] = s * x.values()[i];
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "scale", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& g = detail::grad_buf(xi);
        for (size_t i = 0; i < g.size(); ++i) g[i] += s * oi->g[i];
    });
}

/// x * s where s is a learnable 1x1 tensor.
inline Tensor scale_by(Tape& tape, const Tensor& x, const Tensor& s) {
    if (s.size() != 1) throw ShapeError(strf("scale_by: scale must be 1x1, got %s", s.shape_str().c_str()));
    const double sv = s.values()[0];
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i) out.values()[i] = sv * x.values()[i];
    auto xi = x.impl(), si = s.impl(), oi = out.impl();
    return detail::finish(tape, "scale_by", out, x.requires_grad() || s.requires_grad(), [=] {
        if (oi->g.empty()) return;
        if (xi->requires_grad) {
            auto& g = detail::grad_buf(xi);
            for (size_t i = 0; i < g.size(); ++i) g[i] += si->v[0] * oi->g[i];
        }
        if (si->requires_grad) {
            double acc = 0.0;
            for (size_t i = 0; i < xi->v.size(); ++i) acc += oi->g[i] * xi->v[i];
            detail::grad_buf(si)[0] += acc;
        }
    });
}

/// x + s broadcast, s a learnable 1x1 tensor.
inline Tensor add_scalar(Tape& tape, const Tensor& x, const Tensor& s) {
    if (s.size() != 1) throw ShapeError(strf("add_scalar: shift must be 1x1, got %s", s.shape_str().c_str()));
    const double sv = s.values()[0];
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i) out.values()[i] = x.values()[i] + sv;
    auto xi = x.impl(), si = s.impl(), oi = out.impl();
    return detail::finish(tape, "add_scalar", out, x.requires_grad() || s.requires_grad(), [=] {
        if (oi->g.empty()) return;
        if (xi->requires_grad) {
            auto& g = detail::grad_buf(xi);
            for (size_t i = 0; i < g.size(); ++i) g[i] += oi->g[i];
        }
        if (si->requires_grad) {
            double acc = 0.0;
            for (double gv : oi->g) acc += gv;
            detail::grad_buf(si)[0] += acc;
        }
    });
}

inline Tensor sigmoid(Tape& tape, const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i) {
        const double v = x.values()[i];
        out.values()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                   : std::exp(v) / (1.0 + std::exp(v));
    }
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "sigmoid", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& g = detail::grad_buf(xi);
        for (size_t i = 0; i < g.size(); ++i) {
            const double y = oi->v[i];
            g[i] += oi->g[i] * y * (1.0 - y);
        }
    });
}

inline Tensor exp(Tape& tape, const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i) out.values()[i] = std::exp(x.values()[i]);
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "exp", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& g = detail::grad_buf(xi);
        for (size_t i = 0; i < g.size(); ++i) g[i] += oi->g[i] * oi->v[i];
    });
}

inline Tensor log(Tape& tape, const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i) {
        if (x.values()[i] <= 0.0)
            throw NumericError(strf("log: non-positive input %s", fmt_double(x.values()[i]).c_str()));
        out.values()[i] = std::log(x.values()[i]);
    }
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "log", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& g = detail::grad_buf(xi);
        for (size_t i = 0; i < g.size(); ++i) g[i] += oi->g[i] / xi->v[i];
    });
}

/// log(max(x, eps)); zero gradient in the clamped region. Used to turn soft
/// adjacency weights into additive attention biases.
inline Tensor log_clamped(Tape& tape, const Tensor& x, double eps) {
    if (eps <= 0.0) throw NumericError("log_clamped: eps must be positive");
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i) out.values()[i] = std::log(std::max(x.values()[i], eps));
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "log_clamped", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& g = detail::grad_buf(xi);
        for (size_t i = 0; i < g.size(); ++i)
            if (xi->v[i] > eps) g[i] += oi->g[i] / xi->v[i];
    });
}

inline Tensor relu(Tape& tape, const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (size_t i = 0; i < x.size(); ++i) out.values()[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "relu", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& g = detail::grad_buf(xi);
        for (size_t i = 0; i < g.size(); ++i)
            if (xi->v[i] > 0.0) g[i] += oi->g[i];
    });
}

/// Exact (erf-based) GELU.
inline Tensor gelu(Tape& tape, const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    for (size_t i = 0; i < x.size(); ++i) {
        const double v = x.values()[i];
        out.values()[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    }
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "gelu", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& g = detail::grad_buf(xi);
        constexpr double inv_sqrt_2pi = 0.39894228040143267794;
        for (size_t i = 0; i < g.size(); ++i) {
            const double v = xi->v[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            g[i] += oi->g[i] * (cdf + v * pdf);
        }
    });
}

// ---------------------------------------------------------------------------
// Normalization and reductions
// ---------------------------------------------------------------------------

/// Row-wise softmax; each output row is non-negative and sums to 1.
inline Tensor softmax_rows(Tape& tape, const Tensor& x) {
    const int n = x.rows(), d = x.cols();
    Tensor out = Tensor::zeros(n, d);
    for (int i = 0; i < n; ++i) {
        const double* xr = x.values().data() + static_cast<size_t>(i) * d;
        double* yr = out.values().data() + static_cast<size_t>(i) * d;
        double m = xr[0];
        for (int j = 1; j < d; ++j) m = std::max(m, xr[j]);
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
            yr[j] = std::exp(xr[j] - m);
            s += yr[j];
        }
        for (int j = 0; j < d; ++j) yr[j] /= s;
    }
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "softmax", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& g = detail::grad_buf(xi);
        for (int i = 0; i < n; ++i) {
            const double* y = oi->v.data() + static_cast<size_t>(i) * d;
            const double* gy = oi->g.data() + static_cast<size_t>(i) * d;
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += gy[j] * y[j];
            double* gx = g.data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < d; ++j) gx[j] += y[j] * (gy[j] - dot);
        }
    });
}

/// Row-wise layer norm with learnable scale/shift (1 x d each). Uses the
/// biased variance; eps defaults small so normalized rows have variance
/// within 1e-12 of 1 for unit-scale inputs.
inline Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         double eps = 1e-12) {
    const int n = x.rows(), d = x.cols();
    if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
        throw ShapeError(strf("layer_norm: x %s, gamma %s, beta %s", x.shape_str().c_str(),
                              gamma.shape_str().c_str(), beta.shape_str().c_str()));
    Tensor out = Tensor::zeros(n, d);
    auto inv_std = std::make_shared<std::vector<double>>(n);
    auto means = std::make_shared<std::vector<double>>(n);
    for (int i = 0; i < n; ++i) {
        const double* xr = x.values().data() + static_cast<size_t>(i) * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xr[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xr[j] - mu;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        (*means)[i] = mu;
        (*inv_std)[i] = is;
        double* yr = out.values().data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) yr[j] = (xr[j] - mu) * is * gamma.values()[j] + beta.values()[j];
    }
    auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl();
    bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    return detail::finish(tape, "layer_norm", out, rg, [=] {
        if (oi->g.empty()) return;
        for (int i = 0; i < n; ++i) {
            const double* xr = xi->v.data() + static_cast<size_t>(i) * d;
            const double* gy = oi->g.data() + static_cast<size_t>(i) * d;
            const double mu = (*means)[i], is = (*inv_std)[i];
            if (gi->requires_grad) {
                auto& gg = detail::grad_buf(gi);
                for (int j = 0; j < d; ++j) gg[j] += gy[j] * (xr[j] - mu) * is;
            }
            if (bi->requires_grad) {
                auto& bg = detail::grad_buf(bi);
                for (int j = 0; j < d; ++j) bg[j] += gy[j];
            }
            if (xi->requires_grad) {
                auto& xg = detail::grad_buf(xi);
                double sum_dyg = 0.0, sum_dyg_xhat = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double dyg = gy[j] * gi->v[j];
                    sum_dyg += dyg;
                    sum_dyg_xhat += dyg * (xr[j] - mu) * is;
                }
                double* gx = xg.data() + static_cast<size_t>(i) * d;
                for (int j = 0; j < d; ++j) {
                    const double xhat = (xr[j] - mu) * is;
                    const double dyg = gy[j] * gi->v[j];
                    gx[j] += is * (dyg - sum_dyg / d - xhat * sum_dyg_xhat / d);
                }
            }
        }
    });
}

inline Tensor sum_all(Tape& tape, const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    Tensor out = Tensor::scalar(s);
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "sum", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& g = detail::grad_buf(xi);
        for (size_t i = 0; i < g.size(); ++i) g[i] += oi->g[0];
    });
}

inline Tensor mean_all(Tape& tape, const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    const double inv = 1.0 / static_cast<double>(x.size());
    Tensor out = Tensor::scalar(s * inv);
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "mean", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& g = detail::grad_buf(xi);
        for (size_t i = 0; i < g.size(); ++i) g[i] += oi->g[0] * inv;
    });
}

/// Column means: n x d -> 1 x d.
inline Tensor mean_rows(Tape& tape, const Tensor& x) {
    const int n = x.rows(), d = x.cols();
    Tensor out = Tensor::zeros(1, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.values()[j] += x(i, j);
    for (int j = 0; j < d; ++j) out.values()[j] /= n;
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "mean_rows", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& g = detail::grad_buf(xi);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) g[static_cast<size_t>(i) * d + j] += oi->g[j] / n;
    });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(Tape& tape, const Tensor& x, int rows, int cols) {
    if (static_cast<size_t>(rows) * cols != x.size())
        throw ShapeError(strf("reshape: %s -> %dx%d", x.shape_str().c_str(), rows, cols));
    Tensor out = Tensor::from_data(rows, cols, x.values());
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "reshape", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& g = detail::grad_buf(xi);
        for (size_t i = 0; i < g.size(); ++i) g[i] += oi->g[i];
    });
}

inline Tensor slice_rows(Tape& tape, const Tensor& x, int r0, int r1) {
    if (r0 < 0 || r1 > x.rows() || r0 >= r1)
        throw ShapeError(strf("slice_rows: [%d,%d) of %s", r0, r1, x.shape_str().c_str()));
    const int d = x.cols(), n = r1 - r0;
    Tensor out = Tensor::zeros(n, d);
    std::copy_n(x.values().data() + static_cast<size_t>(r0) * d, static_cast<size_t>(n) * d,
                out.values().data());
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "slice_rows", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& g = detail::grad_buf(xi);
        for (size_t i = 0; i < static_cast<size_t>(n) * d; ++i)
            g[static_cast<size_t>(r0) * d + i] += oi->g[i];
    });
}

inline Tensor slice_cols(Tape& tape, const Tensor& x, int c0, int c1) {
    if (c0 < 0 || c1 > x.cols() || c0 >= c1)
        throw ShapeError(strf("slice_cols: [%d,%d) of %s", c0, c1, x.shape_str().c_str()));
    const int n = x.rows(), w = c1 - c0, d = x.cols();
    Tensor out = Tensor::zeros(n, w);
    for (int i = 0; i < n; ++i)
        std::copy_n(x.values().data() + static_cast<size_t>(i) * d + c0, w,
                    out.values().data() + static_cast<size_t>(i) * w);
    auto xi = x.impl(), oi = out.impl();
    return detail::finish(tape, "slice_cols", out, x.requires_grad(), [=] {
        if (oi->g.empty() || !xi->requires_grad) return;
        auto& g = detail::grad_buf(xi);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < w; ++j)
                g[static_cast<size_t>(i) * d + c0 + j] += oi->g[static_cast<size_t>(i) * w + j];
    });
}

inline Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const int d = parts[0].cols();
    int total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p.cols() != d)
            throw ShapeError(strf("concat_rows: %s vs %s", parts[0].shape_str().c_str(), p.shape_str().c_str()));
        total += p.rows();
        rg = rg || p.requires_grad();
    }
    Tensor out = Tensor::zeros(total, d);
    int at = 0;
    std::vector<std::shared_ptr<Tensor::Impl>> impls;
    std::vector<int> offsets;
    for (const auto& p : parts) {
        std::copy_n(p.values().data(), p.size(), out.values().data() + static_cast<size_t>(at) * d);
        impls.push_back(p.impl());
        offsets.push_back(at);
        at += p.rows();
    }
    auto oi = out.impl();
    return detail::finish(tape, "concat_rows", out, rg, [=] {
        if (oi->g.empty()) return;
        for (size_t k = 0; k < impls.size(); ++k) {
            if (!impls[k]->requires_grad) continue;
            auto& g = detail::grad_buf(impls[k]);
            const size_t off = static_cast<size_t>(offsets[k]) * d;
            for (size_t i = 0; i < g.size(); ++i) g[i] += oi->g[off + i];
        }
    });
}

inline Tensor concat_rows(Tape& tape, std::initializer_list<Tensor> parts) {
    std::vector<Tensor> v(parts);
    return concat_rows(tape, std::span<const Tensor>(v));
}

inline Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const int n = parts[0].rows();
    int total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p.rows() != n)
            throw ShapeError(strf("concat_cols: %s vs %s", parts[0].shape_str().c_str(), p.shape_str().c_str()));
        total += p.cols();
        rg = rg || p.requires_grad();
    }
    Tensor out = Tensor::zeros(n, total);
    std::vector<std::shared_ptr<Tensor::Impl>> impls;
    std::vector<int> offsets;
    int at = 0;
    for (const auto& p : parts) {
        const int w = p.cols();
        for (int i = 0; i < n; ++i)
            std::copy_n(p.values().data() + static_cast<size_t>(i) * w, w,
                        out.values().data() + static_cast<size_t>(i) * total + at);
        impls.push_back(p.impl());
        offsets.push_back(at);
        at += w;
    }
    auto oi = out.impl();
    return detail::finish(tape, "concat_cols", out, rg, [=] {
        if (oi->g.empty()) return;
        for (size_t k = 0; k < impls.size(); ++k) {
            if (!impls[k]->requires_grad) continue;
            auto& g = detail::grad_buf(impls[k]);
            const int w = impls[k]->cols;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < w; ++j)
                    g[static_cast<size_t>(i) * w + j] += oi->g[static_cast<size_t>(i) * total + offsets[k] + j];
        }
    });
}

inline Tensor concat_cols(Tape& tape, std::initializer_list<Tensor> parts) {
    std::vector<Tensor> v(parts);
    return concat_cols(tape, std::span<const Tensor>(v));
}

// ---------------------------------------------------------------------------
// Lookup and losses
// ---------------------------------------------------------------------------

inline Tensor embedding_lookup(Tape& tape, const Tensor& table, const std::vector<int>& ids) {
    if (ids.empty()) throw ShapeError("embedding_lookup: empty id list");
    const int v = table.rows(), d = table.cols();
    for (int id : ids)
        if (id < 0 || id >= v)
            throw ShapeError(strf("embedding_lookup: id %d outside table %s", id, table.shape_str().c_str()));
    Tensor out = Tensor::zeros(static_cast<int>(ids.size()), d);
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table.values().data() + static_cast<size_t>(ids[i]) * d, d,
                    out.values().data() + i * d);
    auto ti = table.impl(), oi = out.impl();
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    return detail::finish(tape, "embedding_lookup", out, table.requires_grad(), [=] {
        if (oi->g.empty() || !ti->requires_grad) return;
        auto& g = detail::grad_buf(ti);
        for (size_t i = 0; i < ids_copy->size(); ++i) {
            double* dst = g.data() + static_cast<size_t>((*ids_copy)[i]) * d;
            const double* src = oi->g.data() + i * d;
            for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
}

/// Mean token-level cross entropy of logits (n x V) against target ids (n).
inline Tensor cross_entropy(Tape& tape, const Tensor& logits, const std::vector<int>& targets) {
    const int n = logits.rows(), v = logits.cols();
    if (static_cast<int>(targets.size()) != n)
        throw ShapeError(strf("cross_entropy: %d logit rows vs %zu targets", n, targets.size()));
    for (int t : targets)
        if (t < 0 || t >= v) throw ShapeError(strf("cross_entropy: target %d outside vocab %d", t, v));
    auto probs = std::make_shared<std::vector<double>>(logits.values());
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double* row = probs->data() + static_cast<size_t>(i) * v;
        double m = row[0];
        for (int j = 1; j < v; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (int j = 0; j < v; ++j) {
            row[j] = std::exp(row[j] - m);
            s += row[j];
        }
        for (int j = 0; j < v; ++j) row[j] /= s;
        total += -std::log(std::max(row[targets[i]], 1e-300));
    }
    Tensor out = Tensor::scalar(total / n);
    auto li = logits.impl(), oi = out.impl();
    auto tgt = std::make_shared<std::vector<int>>(targets);
    return detail::finish(tape, "cross_entropy", out, logits.requires_grad(), [=] {
        if (oi->g.empty() || !li->requires_grad) return;
        auto& g = detail::grad_buf(li);
        const double c = oi->g[0] / n;
        for (int i = 0; i < n; ++i) {
            const double* p = probs->data() + static_cast<size_t>(i) * v;
            double* gr = g.data() + static_cast<size_t>(i) * v;
            for (int j = 0; j < v; ++j) gr[j] += c * p[j];
            gr[(*tgt)[i]] -= c;
        }
    });
}

/// Mean binary cross entropy of probabilities against fixed 0/1 labels;
/// probabilities are clamped to [clamp, 1-clamp] before the log and the
/// clamped region has zero gradient.
inline Tensor binary_cross_entropy(Tape& tape, const Tensor& probs, const Tensor& labels,
                                   double clamp = 1e-12) {
    if (!probs.same_shape(labels))
        throw ShapeError(strf("binary_cross_entropy: %s vs %s", probs.shape_str().c_str(),
                              labels.shape_str().c_str()));
    const size_t n = probs.size();
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double p = std::min(std::max(probs.values()[i], clamp), 1.0 - clamp);
        const double y = labels.values()[i];
        total += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(n));
    auto pi = probs.impl(), yi = labels.impl(), oi = out.impl();
    return detail::finish(tape, "binary_cross_entropy", out, probs.requires_grad(), [=] {
        if (oi->g.empty() || !pi->requires_grad) return;
        auto& g = detail::grad_buf(pi);
        const double c = oi->g[0] / static_cast<double>(n);
        for (size_t i = 0; i < n; ++i) {
            const double raw = pi->v[i];
            if (raw <= clamp || raw >= 1.0 - clamp) continue;
            g[i] += c * (raw - yi->v[i]) / (raw * (1.0 - raw));
        }
    });
}

} // namespace mrg
