#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emedm/rng.hpp"
#include "emedm/types.hpp"

namespace emedm {

// Flat parameter-space vector, same layout as PolicyModel::params.
using Gradient = std::vector<double>;

// Feed-forward map R^m -> R^A with one tanh hidden layer of width H.
// Parameters live in one flat vector laid out as
//   [w1 (H x m, row-major) | b1 (H) | w2 (A x H, row-major) | b2 (A)]
// so optimizers and serialization can treat the model as a plain vector.
struct PolicyModel {
    int m = 0;
    int A = 0;
    int H = 0;
    std::vector<double> params;

    PolicyModel() = default;
    PolicyModel(int m, int A, int H);

    std::size_t param_count() const { return params.size(); }

    double* w1() { return params.data(); }
    double* b1() { return params.data() + static_cast<std::size_t>(H) * m; }
    double* w2() { return params.data() + static_cast<std::size_t>(H) * m + H; }
    double* b2() { return params.data() + static_cast<std::size_t>(H) * m + H + static_cast<std::size_t>(A) * H; }
    const double* w1() const { return params.data(); }
    const double* b1() const { return params.data() + static_cast<std::size_t>(H) * m; }
    const double* w2() const { return params.data() + static_cast<std::size_t>(H) * m + H; }
    const double* b2() const { return params.data() + static_cast<std::size_t>(H) * m + H + static_cast<std::size_t>(A) * H; }

    // Xavier-uniform weights, zero biases.
    static PolicyModel init(int m, int A, int H, std::uint64_t seed);
};

constexpr int kDefaultHidden = 64;

std::vector<double> logits(const PolicyModel& model, const StateVec& s);

// Softmax of the logits, computed with max subtraction.
std::vector<double> action_probs(const PolicyModel& model, const StateVec& s);

// E(s) = -logsumexp(logits(s)).
double energy(const PolicyModel& model, const StateVec& s);

// dE/ds by backpropagation through the network.
StateVec energy_grad_state(const PolicyModel& model, const StateVec& s);

// d log pi(a|s) / d theta.
Gradient param_grad_logprob(const PolicyModel& model, const StateVec& s, ActionId a);

ActionId sample_action(const PolicyModel& model, const StateVec& s, Rng& rng);

// Cached forward pass, reused by the batch kernels.
struct Forward {
    std::vector<double> hidden;  // tanh activations, length H
    std::vector<double> logit;   // length A
    std::vector<double> probs;   // softmax, length A
    double logsumexp = 0.0;      // max-shifted
};
Forward forward_pass(const PolicyModel& model, const StateVec& s);

// Accumulates d(loss)/d(logits) into a parameter-space gradient:
//   grad += scale * J^T dlogits  evaluated at (s, cached forward).
void backprop_logits(const PolicyModel& model, const StateVec& s, const Forward& fwd,
                     const std::vector<double>& dlogits, double scale, Gradient& grad);

// JSON persistence (architecture metadata + flat arrays; lossless round-trip).
void save_policy(const PolicyModel& model, const std::string& path);
PolicyModel load_policy(const std::string& path);

}  // namespace emedm
