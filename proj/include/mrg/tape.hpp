#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mrg/tensor.hpp"

namespace mrg {

/// Single-writer record of executed ops. Ops append nodes in execution order,
/// so walking the record backwards visits each node exactly once in reverse
/// topological order. backward(loss) seeds d(loss)/d(loss) = 1 and replays;
/// leaf gradients accumulate across calls, op-output gradients are reset at
/// the start of each call.
class Tape {
public:
    struct Node {
        const char* op;
        std::function<void()> backward;
        std::shared_ptr<Tensor::Impl> out;
    };

    bool grad_enabled() const { return grad_enabled_; }
    void set_grad_enabled(bool b) { grad_enabled_ = b; }

    /// When set (default), every op validates its output for NaN/Inf and
    /// throws NumericError on a fault.
    bool check_finite = true;

    void record(const char* op, const Tensor& out, std::function<void()> backward) {
        out.impl()->op_output = true;
        nodes_.push_back(Node{op, std::move(backward), out.impl()});
    }

    size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    void clear() { nodes_.clear(); }

    void backward(const Tensor& loss) {
        if (!loss.defined() || loss.size() != 1)
            throw Error(strf("backward: loss must be scalar, got %s",
                             loss.defined() ? loss.shape_str().c_str() : "undefined"));
        if (nodes_.empty()) throw Error("backward: tape is empty");
        // Reset gradients of op outputs from any previous walk; leaves keep
        // their accumulators.
        for (auto& n : nodes_)
            if (!n.out->g.empty()) std::fill(n.out->g.begin(), n.out->g.end(), 0.0);
        auto li = loss.impl();
        if (li->g.empty()) li->g.assign(li->v.size(), 0.0);
        li->g[0] = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            if (it->backward) it->backward();
    }

private:
    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
};

/// Scoped grad-disable: ops executed inside compute values only and record
/// nothing, so their outputs are constants.
class NoGradGuard {
public:
    explicit NoGradGuard(Tape& tape) : tape_(tape), prev_(tape.grad_enabled()) {
        tape_.set_grad_enabled(false);
    }
    ~NoGradGuard() { tape_.set_grad_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    Tape& tape_;
    bool prev_;
};

} // namespace mrg
