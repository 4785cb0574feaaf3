#pragma once

#include <vector>

#include "emedm/policy.hpp"
#include "emedm/types.hpp"

namespace emedm {

enum class ExecPolicy { Serial, Parallel };

// One training example: a borrowed state plus the demonstrated action.
struct StepRef {
    const StateVec* s = nullptr;
    ActionId a = -1;
};

// Mean cross-entropy -log pi(a|s) over the batch. If grad is non-null the
// gradient of that mean is accumulated into it (caller sizes and zeroes it).
// Serial and Parallel produce bitwise-identical results for any thread count:
// work is split into fixed blocks whose partials are reduced in block order.
double nll_batch(const PolicyModel& model, const std::vector<StepRef>& batch,
                 ExecPolicy exec, Gradient* grad);

// Mean squared (Brier) loss sum_a (p_a - onehot_a)^2 over the batch.
double brier_batch(const PolicyModel& model, const std::vector<StepRef>& batch,
                   ExecPolicy exec, Gradient* grad);

// Mean energy over a set of states; optional gradient of the mean, scaled by
// sign (+1 to push energy up under minimization, -1 to push it down).
double energy_mean_batch(const PolicyModel& model, const std::vector<const StateVec*>& states,
                         ExecPolicy exec, double sign, Gradient* grad);

// ll[i][j] = sum over steps of trajectory i of log pi_j(a|s).
std::vector<std::vector<double>> loglik_matrix(const std::vector<PolicyModel>& policies,
                                               const Dataset& data, ExecPolicy exec);

double traj_loglik(const PolicyModel& model, const Trajectory& traj);

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<double> m;
    std::vector<double> v;
    long t = 0;

    explicit Adam(double lr_ = 1e-3) : lr(lr_) {}
    void step(std::vector<double>& params, const Gradient& grad);
};

}  // namespace emedm
