#include "emedm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "emedm/rng.hpp"

namespace emedm {

NormStats fit_normalizer(const Dataset& data) {
    if (data.trajectories.empty()) throw std::invalid_argument("empty dataset");
    const int m = data.m;
    std::vector<double> sum(m, 0.0), sumsq(m, 0.0);
    std::size_t n = 0;
    for (const auto& traj : data.trajectories) {
        for (const auto& step : traj.steps) {
            for (int j = 0; j < m; ++j) {
                sum[j] += step.state[j];
                sumsq[j] += step.state[j] * step.state[j];
            }
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("empty dataset");
    NormStats stats;
    stats.mean.resize(m);
    stats.stddev.resize(m);
    for (int j = 0; j < m; ++j) {
        stats.mean[j] = sum[j] / static_cast<double>(n);
        double var = sumsq[j] / static_cast<double>(n) - stats.mean[j] * stats.mean[j];
        stats.stddev[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return stats;
}

Dataset apply_normalizer(const Dataset& data, const NormStats& stats) {
    if (static_cast<int>(stats.mean.size()) != data.m ||
        static_cast<int>(stats.stddev.size()) != data.m)
        throw std::invalid_argument("normalizer dimension mismatch");
    Dataset out = data;
    for (auto& traj : out.trajectories)
        for (auto& step : traj.steps)
            for (int j = 0; j < data.m; ++j)
                step.state[j] = (step.state[j] - stats.mean[j]) / stats.stddev[j];
    out.normalization = stats;
    return out;
}

Dataset invert_normalizer(const Dataset& data, const NormStats& stats) {
    if (static_cast<int>(stats.mean.size()) != data.m ||
        static_cast<int>(stats.stddev.size()) != data.m)
        throw std::invalid_argument("normalizer dimension mismatch");
    Dataset out = data;
    for (auto& traj : out.trajectories)
        for (auto& step : traj.steps)
            for (int j = 0; j < data.m; ++j)
                step.state[j] = step.state[j] * stats.stddev[j] + stats.mean[j];
    out.normalization.reset();
    return out;
}

std::vector<Fold> kfold_split(const Dataset& data, int k, std::uint64_t seed) {
    const std::size_t n = data.trajectories.size();
    if (k < 2) throw std::invalid_argument("kfold: k must be >= 2");
    if (static_cast<std::size_t>(k) > n)
        throw std::invalid_argument("kfold: k exceeds trajectory count");

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = make_rng(seed, "kfold");
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<Fold> folds(k);
    std::vector<int> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) fold_of[perm[i]] = static_cast<int>(i % k);

    for (int f = 0; f < k; ++f) {
        folds[f].train.m = folds[f].test.m = data.m;
        folds[f].train.A = folds[f].test.A = data.A;
        for (std::size_t i = 0; i < n; ++i) {
            if (fold_of[i] == f)
                folds[f].test.trajectories.push_back(data.trajectories[i]);
            else
                folds[f].train.trajectories.push_back(data.trajectories[i]);
        }
    }
    return folds;
}

}  // namespace emedm
