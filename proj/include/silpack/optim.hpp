#pragma once

#include <Eigen/Core>

#include "silpack/common.hpp"

namespace silpack {

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
    long step = 0;

    AdamState() = default;
    explicit AdamState(Eigen::Index n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

// One bias-corrected Adam update in place. Throws NumericalError naming the
// object (index / 6) of the first non-finite gradient entry.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr);

// Cosine decay from lr_start at iteration 0 towards lr_end.
struct Schedule {
    double lr_start = 1e-2;
    double lr_end = 1e-4;
    int iterations = 1000;
};

double lr_schedule(int iter, const Schedule& schedule);

}  // namespace silpack
