#include "silpack/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace silpack {

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
    if (params.size() != grad.size()) throw DimensionError("adam: parameter and gradient lengths differ");
    if (state.m.size() != params.size()) {
        if (state.step != 0) throw DimensionError("adam: state length changed mid-run");
        state.m = Eigen::VectorXd::Zero(params.size());
        state.v = Eigen::VectorXd::Zero(params.size());
    }
    for (Eigen::Index k = 0; k < grad.size(); ++k) {
        if (!std::isfinite(grad[k])) {
            throw NumericalError("non-finite gradient at parameter " + std::to_string(k) + " (object " +
                                 std::to_string(k / 6) + ")");
        }
    }

    ++state.step;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps_hat);
}

double lr_schedule(int iter, const Schedule& schedule) {
    if (iter < 0 || iter >= schedule.iterations)
        throw ParameterError("iteration " + std::to_string(iter) + " outside schedule of " +
                             std::to_string(schedule.iterations));
    const double phase = static_cast<double>(iter) / schedule.iterations;
    return schedule.lr_end +
           0.5 * (schedule.lr_start - schedule.lr_end) * (1.0 + std::cos(std::numbers::pi * phase));
}

}  // namespace silpack
