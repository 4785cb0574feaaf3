#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emedm/baselines.hpp"
#include "emedm/emedm.hpp"
#include "emedm/envgen.hpp"
#include "emedm/eval.hpp"

namespace emedm {

// Resolved experiment configuration; the JSON document mirrors this struct
// section by section and rejects unknown keys.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string tag = "run";
    int jobs = 1;
    int folds = 5;
    int per_intent = 20;
    double temperature = 1.0;
    EnvSpec env;
    bool has_env = false;  // true once an env section or file was supplied
    EdmConfig edm;
    EmConfig em;  // em.edm kept in sync with edm
    AdvConfig adv;
    CqlConfig cql;
    RewardSpec cql_t_reward;
    std::vector<int> k_candidates;       // non-empty: run select_k before fitting
    std::vector<std::string> methods;    // empty: all seven
};

RunConfig default_run_config();
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

const std::vector<std::string>& all_method_names();

// Predictors adapting each trained model to the sequential protocol.
class PolicyPredictor : public TrainedPredictor {
public:
    explicit PolicyPredictor(PolicyModel model) : model_(std::move(model)) {}
    std::vector<double> predict_dist(const StateVec& s) override { return action_probs(model_, s); }

private:
    PolicyModel model_;
};

// For policies trained in raw feature space (simulator rollouts): states come
// in normalized and are mapped back before querying the policy.
class RawPolicyPredictor : public TrainedPredictor {
public:
    RawPolicyPredictor(PolicyModel model, NormStats stats)
        : model_(std::move(model)), stats_(std::move(stats)) {}
    std::vector<double> predict_dist(const StateVec& s) override;

private:
    PolicyModel model_;
    NormStats stats_;
};

class ClusterPredictor : public TrainedPredictor {
public:
    explicit ClusterPredictor(ClusterModel model);
    void begin_trajectory() override;
    std::vector<double> predict_dist(const StateVec& s) override;
    void observe(const StateVec& s, ActionId a) override;

private:
    ClusterModel model_;
    std::optional<PrefixPosterior> posterior_;
};

class CqlPredictor : public TrainedPredictor {
public:
    explicit CqlPredictor(GreedyPolicy policy) : policy_(std::move(policy)) {}
    std::vector<double> predict_dist(const StateVec& s) override { return policy_.dist(s); }

private:
    GreedyPolicy policy_;
};

MethodHandle make_bc_handle(const RunConfig& cfg);
MethodHandle make_edm_handle(const RunConfig& cfg);
MethodHandle make_emedm_handle(const RunConfig& cfg);
MethodHandle make_gail_handle(const RunConfig& cfg);
MethodHandle make_airl_handle(const RunConfig& cfg);
MethodHandle make_cql_handle(const RunConfig& cfg, const RewardSpec& reward);

struct MethodSpec {
    std::string name;
    MethodHandle handle;
};

// Builds handles for the named methods; gail/airl demand cfg.has_env.
std::vector<MethodSpec> build_methods(const std::vector<std::string>& names, const RunConfig& cfg);

// Fills missing pretest/posttest from min-max scaled trajectory returns so
// learning-gain rewards have a stand-in on simulator data.
void synthesize_outcomes(Dataset& data);

struct Task1Result {
    std::vector<std::string> method_names;
    std::vector<std::vector<EvalReport>> reports;  // method x fold
    RankResult ranks;                              // over per-fold accuracy
};

Task1Result run_task1(const Dataset& data, const RunConfig& cfg);
void write_task1_reports(const Task1Result& res, const std::string& dir);

struct Task2Result {
    std::vector<std::string> method_names;
    std::vector<EvalReport> reports;  // per method, trained on A, tested on B
    ClusterModel clusters;
    std::vector<long> train_counts;  // per-cluster argmax assignments, cohort A
    std::vector<long> test_counts;   // cohort B through the fitted posterior
    Chi2Result chi2;
    bool chi2_valid = false;  // false when fewer than 2 occupied clusters remain
};

Task2Result run_task2(const Dataset& train_data, const Dataset& test_data, const RunConfig& cfg);
void write_task2_reports(const Task2Result& res, const std::string& dir);

// Cluster assignment of an unseen trajectory under a fitted model: posterior
// over clusters after observing the whole trajectory (states already normalized).
int assign_cluster(const ClusterModel& clusters, const Trajectory& traj, const NormStats& stats);

void save_norm_stats(const NormStats& stats, const std::string& path);
NormStats load_norm_stats(const std::string& path);

void save_qtable(const QTable& q, const std::string& path);
QTable load_qtable(const std::string& path);

void save_discriminator(const Discriminator& disc, const std::string& path);
Discriminator load_discriminator(const std::string& path);

}  // namespace emedm
