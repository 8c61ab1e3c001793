#pragma once

#include <string>
#include <vector>

#include "mrg/tensor.hpp"

namespace mrg {

/// Checkpoint/optimizer-facing view of a parameter tensor. Non-trainable
/// entries (frozen base weights under low-rank adaptation) are serialized but
/// never handed to the optimizer.
struct NamedParam {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

using ParamList = std::vector<NamedParam>;

inline void add_param(ParamList& list, const std::string& name, const Tensor& t,
                      bool trainable = true) {
    Tensor tt = t;
    tt.set_requires_grad(trainable);
    list.push_back({name, tt, trainable});
}

inline size_t trainable_count(const ParamList& list) {
    size_t n = 0;
    for (const auto& p : list)
        if (p.trainable) n += p.tensor.size();
    return n;
}

inline std::vector<Tensor> trainable_tensors(const ParamList& list) {
    std::vector<Tensor> out;
    for (const auto& p : list)
        if (p.trainable) out.push_back(p.tensor);
    return out;
}

} // namespace mrg
