#include "taskmaml/optimizer.hpp"

#include <cmath>

namespace taskmaml {

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, AdamSettings adam)
    : kind_(kind), lr_(learning_rate), adam_(adam) {}

void Optimizer::step(ParameterVector& params, const ParameterVector& gradient) {
    params.require_same_layout(gradient, "optimizer step");
    ++t_;
    if (kind_ == OptimizerKind::sgd) {
        params.axpy(-lr_, gradient);
        return;
    }
    if (m_.size() != params.size()) {
        m_ = params.zeros_like();
        v_ = params.zeros_like();
    }
    const double b1 = adam_.beta1, b2 = adam_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = gradient[i];
        m_[i] = b1 * m_[i] + (1.0 - b1) * g;
        v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
        const double mhat = m_[i] / c1;
        const double vhat = v_[i] / c2;
        params[i] -= lr_ * mhat / (std::sqrt(vhat) + adam_.epsilon);
    }
}

}  // namespace taskmaml
