#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "emedm/types.hpp"

namespace emedm {

// Per-feature mean and population stddev over all steps of all trajectories.
// Zero-variance features get stddev 1 so the declared dimension is preserved.
NormStats fit_normalizer(const Dataset& data);

// z-scores every feature; actions and metadata are untouched.
Dataset apply_normalizer(const Dataset& data, const NormStats& stats);

// Inverse of apply_normalizer with the same stats.
Dataset invert_normalizer(const Dataset& data, const NormStats& stats);

struct Fold {
    Dataset train;
    Dataset test;
};

// Trajectory-level k-fold partition: every trajectory lands in exactly one
// test fold. Deterministic for a fixed seed.
std::vector<Fold> kfold_split(const Dataset& data, int k, std::uint64_t seed);

}  // namespace emedm
