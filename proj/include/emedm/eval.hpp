#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "emedm/dataset.hpp"
#include "emedm/types.hpp"

namespace emedm {

struct EvalReport {
    double acc = 0.0, prec = 0.0, rec = 0.0, f1 = 0.0;
    double auc = 0.0, apr = 0.0, jaccard = 0.0;
};

// Macro one-vs-rest metrics over the classes present in y_true or y_pred;
// classes with zero denominators contribute 0. AUC uses midranks, APR is
// step average precision over tied score groups.
EvalReport metrics(const std::vector<ActionId>& y_true, const std::vector<ActionId>& y_pred,
                   const std::vector<std::vector<double>>& y_score);

// Sequential per-trajectory prediction protocol: predict_dist is called on the
// normalized state before observe reveals the demonstrated action.
class TrainedPredictor {
public:
    virtual ~TrainedPredictor() = default;
    virtual void begin_trajectory() {}
    virtual std::vector<double> predict_dist(const StateVec& s) = 0;
    virtual void observe(const StateVec&, ActionId) {}
};

// Builds a predictor from normalized training data; stats invert back to raw
// features for simulator-backed methods.
using MethodHandle = std::function<std::unique_ptr<TrainedPredictor>(
    const Dataset& train_norm, const NormStats& stats, std::uint64_t seed)>;

// Runs the prediction protocol of an already-trained predictor over test
// trajectories; states are normalized with stats before every call.
EvalReport evaluate_predictor(TrainedPredictor& predictor, const Dataset& test,
                              const NormStats& stats);

EvalReport evaluate_method(const MethodHandle& method, const Dataset& train, const Dataset& test,
                           std::uint64_t seed);

// Shared folds across methods; per-(method, fold) seeds derived from seed.
// jobs > 1 evaluates fold x method pairs on that many threads.
std::vector<std::vector<EvalReport>> cross_validate(const std::vector<MethodHandle>& methods,
                                                    const Dataset& data, int k, std::uint64_t seed,
                                                    int jobs = 1);

EvalReport report_mean(const std::vector<EvalReport>& reports);
EvalReport report_std(const std::vector<EvalReport>& reports);

// Friedman chi-square over within-dataset ranks (scores: methods x datasets,
// higher is better), with average-rank ties and tie correction.
std::pair<double, double> friedman(const std::vector<std::vector<double>>& scores);

struct RankResult {
    double friedman_stat = 0.0;
    double p_value = 1.0;
    std::vector<double> mean_ranks;
    std::vector<std::vector<double>> pairwise_p;
};

RankResult conover(const std::vector<std::vector<double>>& scores);

struct Chi2Result {
    double stat = 0.0;
    int df = 0;
    double p = 1.0;
};

Chi2Result chi2_homogeneity(const std::vector<std::vector<double>>& table);

double ari(const std::vector<int>& labels_a, const std::vector<int>& labels_b);

// CSV: method, fold, acc, rec, prec, f1, auc, apr, jaccard
void write_results_csv(const std::vector<std::string>& method_names,
                       const std::vector<std::vector<EvalReport>>& reports, const std::string& path);

void write_rank_report(const std::vector<std::string>& method_names, const RankResult& ranks,
                       const std::string& path);

}  // namespace emedm
