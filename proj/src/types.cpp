#include "emedm/types.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace emedm {

std::size_t Dataset::total_steps() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.steps.size();
    return n;
}

void validate(const Dataset& data) {
    if (data.m <= 0) throw std::invalid_argument("dataset: feature dimension must be positive");
    if (data.A < 2) throw std::invalid_argument("dataset: need at least 2 actions");
    for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
        const auto& traj = data.trajectories[i];
        if (traj.steps.empty())
            throw std::invalid_argument("trajectory " + std::to_string(i) + " is empty");
        for (std::size_t t = 0; t < traj.steps.size(); ++t) {
            const auto& step = traj.steps[t];
            if (static_cast<int>(step.state.size()) != data.m)
                throw std::invalid_argument("trajectory " + std::to_string(i) + " step " +
                                            std::to_string(t) + ": state dimension mismatch");
            for (double v : step.state)
                if (!std::isfinite(v))
                    throw std::invalid_argument("trajectory " + std::to_string(i) + " step " +
                                                std::to_string(t) + ": non-finite feature");
            if (step.action < 0 || step.action >= data.A)
                throw std::invalid_argument("trajectory " + std::to_string(i) + " step " +
                                            std::to_string(t) + ": action out of range");
        }
        if (!traj.rewards.empty() && traj.rewards.size() != traj.steps.size())
            throw std::invalid_argument("trajectory " + std::to_string(i) +
                                        ": reward count does not match step count");
    }
    if (data.normalization) {
        const auto& ns = *data.normalization;
        if (static_cast<int>(ns.mean.size()) != data.m ||
            static_cast<int>(ns.stddev.size()) != data.m)
            throw std::invalid_argument("normalization stats dimension mismatch");
        for (double s : ns.stddev)
            if (!(s > 0.0)) throw std::invalid_argument("normalization stddev must be positive");
    }
}

}  // namespace emedm
