#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "emedm/edm.hpp"
#include "emedm/envgen.hpp"
#include "emedm/policy.hpp"
#include "emedm/types.hpp"

namespace emedm {

// Behavior cloning: the EDM objective with the occupancy term switched off.
EdmResult train_bc(const Dataset& data, const EdmConfig& cfg);

// Single-logit MLP over concatenated features (state + one-hot action, plus
// next state for AIRL). D = sigmoid(logit).
struct Discriminator {
    int in = 0;
    int H = 0;
    std::vector<double> params;  // [w1 (H x in) | b1 (H) | w2 (H) | b2]

    Discriminator() = default;
    Discriminator(int in, int H);
    static Discriminator init(int in, int H, std::uint64_t seed);

    double* w1() { return params.data(); }
    double* b1() { return params.data() + static_cast<std::size_t>(H) * in; }
    double* w2() { return params.data() + static_cast<std::size_t>(H) * in + H; }
    double* b2() { return params.data() + static_cast<std::size_t>(H) * in + 2 * static_cast<std::size_t>(H); }
    const double* w1() const { return params.data(); }
    const double* b1() const { return params.data() + static_cast<std::size_t>(H) * in; }
    const double* w2() const { return params.data() + static_cast<std::size_t>(H) * in + H; }
    const double* b2() const { return params.data() + static_cast<std::size_t>(H) * in + 2 * static_cast<std::size_t>(H); }
};

double disc_logit(const Discriminator& disc, const std::vector<double>& x);

// Mean logistic loss -mean log D(learner) - mean log (1-D)(expert) and its
// parameter gradient.
std::pair<double, std::vector<double>> disc_loss_grad(const Discriminator& disc,
                                                      const std::vector<std::vector<double>>& expert_batch,
                                                      const std::vector<std::vector<double>>& learner_batch);

// One gradient step on the loss above; returns the pre-step loss.
double train_discriminator(Discriminator& disc, const std::vector<std::vector<double>>& expert_batch,
                           const std::vector<std::vector<double>>& learner_batch, double lr);

struct AdvConfig {
    int iters = 40;
    int rollouts_per_iter = 10;
    int disc_steps = 5;
    int policy_steps = 5;
    int disc_batch = 64;
    double disc_lr = 1e-3;
    double policy_lr = 1e-3;
    double clip = 0.2;
    double entropy_bonus = 1e-2;
    int hidden = kDefaultHidden;
    std::uint64_t seed = 0;

    void validate() const;
};

// Clipped-ratio policy-gradient pass over fixed rollouts with per-step rewards
// and a per-timestep mean return-to-go baseline. Returns the surrogate loss of
// the first minibatch pass.
double ppo_update(PolicyModel& policy, Adam& opt, const Dataset& rollouts,
                  const std::vector<std::vector<double>>& rewards, double gamma,
                  const AdvConfig& cfg);

struct GailResult {
    PolicyModel policy;
    Discriminator disc;
    std::vector<CurvePoint> curve;  // loss_bc: policy surrogate, loss_occ: discriminator loss
};

GailResult train_gail(const EnvSpec& env, const Dataset& expert_data, const AdvConfig& cfg,
                      const Discriminator* init_disc = nullptr);

struct AirlResult {
    PolicyModel policy;
    Discriminator disc;
    std::vector<CurvePoint> curve;
};

AirlResult train_airl(const EnvSpec& env, const Dataset& expert_data, const AdvConfig& cfg,
                      const Discriminator* init_disc = nullptr);

// Recovered AIRL reward log D - log (1-D), which is the discriminator logit.
double airl_reward(const Discriminator& disc, const StateVec& s, ActionId a, int A,
                   const StateVec& s_next);

enum class RewardKind { GroundTruth, NlgTerminal, NlgTime };

struct RewardSpec {
    RewardKind kind = RewardKind::GroundTruth;
    double time_penalty = 0.1;
};

// ground_truth copies environment rewards; nlg_terminal puts 100*NLG on the
// final step; nlg_time additionally charges time_penalty on every step.
Dataset assign_rewards(const Dataset& data, const RewardSpec& spec);

enum class CqlMode { Auto, Tabular, Continuous };

struct CqlConfig {
    double alpha = 1.0;
    double gamma = 0.95;
    CqlMode mode = CqlMode::Auto;
    double lr = 0.5;           // tabular sweep step
    int sweeps = 400;          // tabular iterations
    int epochs = 50;           // continuous
    int batch_size = 64;
    double net_lr = 1e-3;
    int hidden = kDefaultHidden;
    int target_refresh = 100;
    std::uint64_t seed = 0;
    ExecPolicy exec = ExecPolicy::Serial;

    void validate() const;
};

struct QTable {
    bool tabular = true;
    int S = 0;
    int A = 0;
    std::vector<std::vector<double>> table;  // tabular mode, S x A
    PolicyModel net;                         // continuous mode
    double gamma = 0.95;
    double alpha = 1.0;
    std::vector<CurvePoint> curve;  // loss_bc: Bellman part, loss_occ: conservatism part
};

QTable train_cql(const Dataset& data, const RewardSpec& reward, const CqlConfig& cfg);

ActionId greedy_action(const std::vector<double>& q_row);

struct GreedyPolicy {
    QTable q;

    ActionId act_cell(int cell) const;
    ActionId act(const StateVec& s) const;
    std::vector<double> dist(const StateVec& s) const;  // softmax over Q values
};

GreedyPolicy cql_policy(QTable q);

}  // namespace emedm
