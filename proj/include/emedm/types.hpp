#pragma once

#include <optional>
#include <string>
#include <vector>

namespace emedm {

// One observed state: m continuous features.
using StateVec = std::vector<double>;

// Discrete action index in [0, A).
using ActionId = int;

struct Step {
    StateVec state;
    ActionId action = 0;
};

// Per-trajectory metadata. Test scores are on [0,1]; true_intent and the
// synthetic-environment fields (per-step rewards, latent grid cells) are
// present only where a generator attached them.
struct TrajMeta {
    std::string student_id;
    std::optional<double> pretest;
    std::optional<double> posttest;
    std::optional<int> true_intent;
};

struct Trajectory {
    std::vector<Step> steps;
    TrajMeta meta;
    std::vector<double> rewards;  // per-step ground-truth rewards (synthetic mode), else empty
    std::vector<int> cells;       // per-step latent grid cells (synthetic mode), else empty

    std::size_t length() const { return steps.size(); }
};

struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // entries > 0; zero-variance features forced to 1
};

struct Dataset {
    std::vector<Trajectory> trajectories;
    int m = 0;  // feature dimension
    int A = 0;  // action count
    std::optional<NormStats> normalization;

    std::size_t size() const { return trajectories.size(); }
    std::size_t total_steps() const;
};

// Throws std::invalid_argument on NaN/Inf features, out-of-range actions,
// inconsistent dimensions or empty trajectories.
void validate(const Dataset& data);

}  // namespace emedm
