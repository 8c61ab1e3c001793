#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "mrg/common.hpp"
#include "mrg/rng.hpp"

namespace mrg {

/// Dense row-major matrix of 64-bit reals with an optional same-shape
/// gradient accumulator. Scalars are 1x1, row vectors 1xn. Handles share the
/// underlying buffer (shallow copy); values are treated as immutable once an
/// op has consumed the tensor, which makes saved activations on the tape safe
/// to alias. Gradients accumulate across backward calls until zero_grad().
class Tensor {
public:
    struct Impl {
        int rows = 0;
        int cols = 0;
        std::vector<double> v;
        std::vector<double> g;       // lazily allocated, same size as v
        bool requires_grad = false;
        bool op_output = false;      // produced by a tape-recorded op
    };

    Tensor() = default;

    static Tensor zeros(int rows, int cols, bool requires_grad = false) {
        Tensor t;
        t.p_ = std::make_shared<Impl>();
        t.p_->rows = check_extent(rows);
        t.p_->cols = check_extent(cols);
        t.p_->v.assign(static_cast<size_t>(rows) * cols, 0.0);
        t.p_->requires_grad = requires_grad;
        return t;
    }

    static Tensor full(int rows, int cols, double value, bool requires_grad = false) {
        Tensor t = zeros(rows, cols, requires_grad);
        for (auto& x : t.p_->v) x = value;
        return t;
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return full(1, 1, value, requires_grad);
    }

    static Tensor from_data(int rows, int cols, std::vector<double> data,
                            bool requires_grad = false) {
        if (static_cast<size_t>(rows) * cols != data.size())
            throw ShapeError(strf("Tensor: %dx%d needs %zu values, got %zu", rows, cols,
                                  static_cast<size_t>(rows) * cols, data.size()));
        Tensor t = zeros(rows, cols, requires_grad);
        t.p_->v = std::move(data);
        return t;
    }

    /// i.i.d. N(0, stddev^2) entries; the usual parameter init.
    static Tensor randn(int rows, int cols, Rng& rng, double stddev = 1.0,
                        bool requires_grad = false) {
        Tensor t = zeros(rows, cols, requires_grad);
        for (auto& x : t.p_->v) x = stddev * rng.normal();
        return t;
    }

    static Tensor uniform(int rows, int cols, Rng& rng, double lo, double hi,
                          bool requires_grad = false) {
        Tensor t = zeros(rows, cols, requires_grad);
        for (auto& x : t.p_->v) x = rng.uniform(lo, hi);
        return t;
    }

    bool defined() const { return static_cast<bool>(p_); }
    int rows() const { return p_->rows; }
    int cols() const { return p_->cols; }
    size_t size() const { return p_->v.size(); }

    std::vector<double>& values() { return p_->v; }
    const std::vector<double>& values() const { return p_->v; }

    double operator()(int r, int c) const { return p_->v[static_cast<size_t>(r) * p_->cols + c]; }
    double& operator()(int r, int c) { return p_->v[static_cast<size_t>(r) * p_->cols + c]; }
    double item() const {
        if (size() != 1) throw ShapeError(strf("item: tensor is %s, not scalar", shape_str().c_str()));
        return p_->v[0];
    }

    bool requires_grad() const { return p_->requires_grad; }
    void set_requires_grad(bool b) { p_->requires_grad = b; }
    bool is_op_output() const { return p_->op_output; }
    void mark_op_output() { p_->op_output = true; }

    bool has_grad() const { return !p_->g.empty(); }
    std::vector<double>& grad() {
        if (p_->g.empty()) p_->g.assign(p_->v.size(), 0.0);
        return p_->g;
    }
    const std::vector<double>& grad() const {
        if (p_->g.empty()) throw Error("grad: no gradient accumulated");
        return p_->g;
    }
    void zero_grad() {
        if (!p_->g.empty()) std::fill(p_->g.begin(), p_->g.end(), 0.0);
    }

    /// Same values, no grad tracking, no tape history.
    Tensor detached_copy() const {
        Tensor t = zeros(rows(), cols());
        t.p_->v = p_->v;
        return t;
    }

    std::string shape_str() const { return strf("%dx%d", p_->rows, p_->cols); }

    bool all_finite() const {
        for (double x : p_->v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return rows() == o.rows() && cols() == o.cols(); }

    std::shared_ptr<Impl> impl() const { return p_; }

private:
    static int check_extent(int e) {
        if (e <= 0) throw ShapeError(strf("Tensor: extent %d must be positive", e));
        return e;
    }

    std::shared_ptr<Impl> p_;
};

} // namespace mrg
