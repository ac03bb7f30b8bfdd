#pragma once

#include <cstddef>

#include "taskmaml/parameters.hpp"

namespace taskmaml {

enum class OptimizerKind { sgd, adam };

struct AdamSettings {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Outer-loop optimizer; SGD or Adam with bias correction.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate, AdamSettings adam = {});

    void step(ParameterVector& params, const ParameterVector& gradient);
    std::size_t steps() const noexcept { return t_; }

private:
    OptimizerKind kind_;
    double lr_;
    AdamSettings adam_;
    std::size_t t_ = 0;
    ParameterVector m_;
    ParameterVector v_;
};

}  // namespace taskmaml
