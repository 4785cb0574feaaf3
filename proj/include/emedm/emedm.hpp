#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emedm/edm.hpp"
#include "emedm/policy.hpp"
#include "emedm/types.hpp"

namespace emedm {

struct ClusterModel {
    int K = 0;
    std::vector<double> priors;
    std::vector<PolicyModel> policies;
    std::vector<std::vector<double>> u;  // responsibilities, one row per trajectory
    std::vector<double> loglik_history;
    std::vector<double> sum_log_u_history;
};

struct EmConfig {
    int K = 1;
    int max_iters = 80;
    double loglik_tol = 1.0;
    double min_cluster_mass = 0.5;
    EdmConfig edm;  // edm.epochs is the per-M-step budget
    std::uint64_t seed = 0;

    void validate() const;
};

// Responsibilities: u_ij proportional to priors[j] * exp(traj_loglik(policy_j, traj_i)),
// normalized per row in log space.
std::vector<std::vector<double>> e_step(const ClusterModel& clusters, const Dataset& data);

// Prior update and weighted EDM retraining. prev_policies, when given, warm-start
// each cluster's training; iter salts the per-cluster training seeds.
std::pair<std::vector<double>, std::vector<PolicyModel>> m_step(
    const std::vector<std::vector<double>>& u, const Dataset& data, const EmConfig& cfg,
    const std::vector<PolicyModel>* prev_policies = nullptr, int iter = 0);

// Mixture log-likelihood sum_i log sum_j priors[j] * Pr(traj_i | policy_j).
double total_loglik(const ClusterModel& clusters, const Dataset& data);

// The literal sum_ij log u_ij, tracked alongside the mixture log-likelihood.
double sum_log_responsibilities(const std::vector<std::vector<double>>& u);

ClusterModel fit(const Dataset& data, const EmConfig& cfg);

// Largest candidate K (ascending) that keeps all clusters occupied and improves
// the mixture log-likelihood over the previous accepted candidate by more than
// loglik_tol.
int select_k(const Dataset& data, const std::vector<int>& k_candidates, const EmConfig& cfg);

// Posterior-weighted mixture of cluster policies; the posterior over clusters
// conditions on the given prefix only.
std::vector<double> predict_action_dist(const ClusterModel& clusters,
                                        const std::vector<Step>& prefix, const StateVec& s);

// Incremental prefix posterior for sequential prediction over one trajectory.
// After t observe() calls, dist(s) equals predict_action_dist with that prefix.
class PrefixPosterior {
public:
    explicit PrefixPosterior(const ClusterModel& clusters);
    void observe(const StateVec& s, ActionId a);
    std::vector<double> cluster_weights() const;
    std::vector<double> dist(const StateVec& s) const;

private:
    const ClusterModel* clusters_;
    std::vector<double> loglik_;
};

void save_cluster_model(const ClusterModel& model, const std::string& path);
ClusterModel load_cluster_model(const std::string& path);

// CSV: trajectory_id, argmax_cluster, u_0..u_{K-1}
void write_cluster_report(const ClusterModel& model, const Dataset& data, const std::string& path);

}  // namespace emedm
