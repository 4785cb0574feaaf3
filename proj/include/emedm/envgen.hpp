#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emedm/policy.hpp"
#include "emedm/rng.hpp"
#include "emedm/types.hpp"

namespace emedm {

// Deterministic gridworld with K_true reward functions over cells. Rewards are
// collected on arrival; moving off the grid leaves the agent in place. Cells
// listed in terminal_cells end the episode on arrival.
struct EnvSpec {
    int width = 8;
    int height = 8;
    int K_true = 1;
    std::vector<std::vector<double>> rewards;  // K_true rows of width*height cell rewards
    double gamma = 0.95;
    int horizon = 40;
    int m = 32;
    std::uint64_t embed_seed = 0;
    double noise_sigma = 0.05;
    int A = 4;  // 4 moves (up, right, down, left) or 3 (right, down, stay)
    std::vector<int> terminal_cells;

    int cells() const { return width * height; }
    bool is_terminal(int cell) const;
    void validate() const;
};

// Labels live in Trajectory.meta.true_intent; require_labels enforces presence.
using LabeledDataset = Dataset;
void require_labels(const Dataset& data);

// Benchmark environment: 8x8, 4 moves, corner goals, gamma 0.95, horizon 40,
// m=32 embedded features with sigma 0.05 observation noise.
EnvSpec default_benchmark(int K_true);

int next_cell(const EnvSpec& spec, int cell, ActionId a);

// Q iterated to sup-norm residual below 1e-8; terminal cells keep Q = 0.
std::vector<std::vector<double>> value_iteration(const EnvSpec& spec, int reward_index);

// pi(a|cell) proportional to exp(Q(cell,a)/temperature).
std::vector<std::vector<double>> boltzmann_expert(const std::vector<std::vector<double>>& Q,
                                                  double temperature);

// Noiseless embedding of every cell (a seeded Gaussian vector per cell).
std::vector<StateVec> base_embeddings(const EnvSpec& spec);

// base_embeddings[cell] plus noise_sigma * N(0, I) drawn from rng.
StateVec embed_state(const EnvSpec& spec, int cell, Rng& rng);

// per_intent expert trajectories per reward function, labeled, with per-step
// ground-truth rewards and latent cells attached.
LabeledDataset sample_dataset(const EnvSpec& spec, int per_intent, double temperature,
                              std::uint64_t seed);

// On-policy trajectories of the given policy over embedded states; rewards
// come from the reward_index-th reward function.
Dataset rollout(const EnvSpec& spec, const PolicyModel& policy, int n, std::uint64_t seed,
                int reward_index = 0);

void save_env_spec(const EnvSpec& spec, const std::string& path);
EnvSpec load_env_spec(const std::string& path);

}  // namespace emedm
