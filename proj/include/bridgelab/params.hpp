#pragma once

#include <string>
#include <vector>

#include "bridgelab/autodiff.hpp"

namespace bridgelab {

// Role drives the optimizer's weight-decay exclusion rule: decay applies to
// `weight` only; bias, BN affine terms and learned constant inputs are
// excluded by default.
enum class ParamRole { weight, bias, bn_gamma, bn_beta, constant_input };

inline const char* param_role_name(ParamRole r) {
    switch (r) {
        case ParamRole::weight: return "weight";
        case ParamRole::bias: return "bias";
        case ParamRole::bn_gamma: return "bn_gamma";
        case ParamRole::bn_beta: return "bn_beta";
        case ParamRole::constant_input: return "constant_input";
    }
    return "?";
}

struct NamedParam {
    std::string name;
    ParamRole role;
    Var var;
};

using ParamList = std::vector<NamedParam>;

inline std::vector<Var> vars_of(const ParamList& params) {
    std::vector<Var> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.var);
    return out;
}

inline void zero_grads(const ParamList& params) {
    for (const auto& p : params) const_cast<Var&>(p.var).zero_grad();
}

// Named non-trainable state (BN running statistics) for checkpointing.
struct NamedState {
    std::string name;
    Tensor* tensor;
};

using StateList = std::vector<NamedState>;

// Kaiming-style init for layers feeding rectifier-family activations.
inline Tensor he_normal(Shape shape, std::size_t fan_in, SeededRng& rng) {
    return Tensor::randn(std::move(shape), rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

} // namespace bridgelab
