#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "emedm/kernels.hpp"
#include "emedm/policy.hpp"
#include "emedm/rng.hpp"
#include "emedm/types.hpp"

namespace emedm {

enum class BcLoss { CrossEntropy, Squared };

struct EdmConfig {
    int epochs = 50;
    int batch_size = 64;
    double learning_rate = 1e-3;
    int sgld_steps = 20;
    double sgld_step_size = 1e-2;
    double sgld_noise = 1e-2;
    int buffer_size = 1024;
    double reinit_prob = 0.05;
    double occupancy_weight = 1.0;
    std::uint64_t seed = 0;
    int hidden = kDefaultHidden;
    BcLoss bc_loss = BcLoss::CrossEntropy;
    ExecPolicy exec = ExecPolicy::Serial;

    void validate() const;
};

// Persistent chains for negative-phase sampling.
struct SgldBuffer {
    int m = 0;
    std::vector<StateVec> states;

    static SgldBuffer init(int m, int capacity, Rng& rng);
};

// Mean demonstration negative log-likelihood and its parameter gradient.
std::pair<double, Gradient> bc_term(const PolicyModel& model, const std::vector<StepRef>& batch,
                                    ExecPolicy exec = ExecPolicy::Serial);

// Draws n chains from the buffer (fresh noise with probability reinit_prob),
// runs sgld_steps of s <- s - (step_size/2) dE/ds + noise*N(0,I), writes the
// end states back, and returns them.
std::vector<StateVec> sgld_sample(const PolicyModel& model, SgldBuffer& buffer, int n,
                                  const EdmConfig& cfg, Rng& rng);

// Contrastive energy difference: mean E over data states minus mean E over
// model states, with the gradient taken through both terms.
std::pair<double, Gradient> occupancy_term(const PolicyModel& model,
                                           const std::vector<const StateVec*>& data_states,
                                           const std::vector<const StateVec*>& model_states,
                                           ExecPolicy exec = ExecPolicy::Serial);

struct CurvePoint {
    int epoch = 0;
    double loss_total = 0.0;
    double loss_bc = 0.0;
    double loss_occ = 0.0;
};

struct EdmResult {
    PolicyModel policy;
    std::vector<CurvePoint> curve;
};

// Minimizes bc + occupancy_weight * occupancy with Adam. Optional
// per-trajectory weights steer batch sampling (the EM M-step passes
// responsibilities); optional warm start skips fresh initialization.
EdmResult train_edm(const Dataset& data, const EdmConfig& cfg,
                    const std::vector<double>* traj_weights = nullptr,
                    const PolicyModel* warm_start = nullptr);

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path);

}  // namespace emedm
