#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "emedm/kernels.hpp"
#include "emedm/policy.hpp"
#include "emedm/rng.hpp"
#include "emedm/types.hpp"

using namespace emedm;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <typename F>
double best_of(int reps, F&& body) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_ms();
        body();
        best = std::min(best, now_ms() - t0);
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms, double diff) {
    std::printf("%-18s %10.2f ms %10.2f ms %8.2fx   max|diff| %.3g\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms, diff);
}

}  // namespace

int main() {
    const int m = 32, A = 4, H = 64, n = 8192;
    const PolicyModel model = PolicyModel::init(m, A, H, 11);
    Rng rng = make_rng(3, "bench");
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<StateVec> states(n, StateVec(m));
    std::vector<StepRef> batch(n);
    std::vector<const StateVec*> ptrs(n);
    std::uniform_int_distribution<int> act(0, A - 1);
    for (int i = 0; i < n; ++i) {
        for (double& v : states[i]) v = normal(rng);
        batch[i] = {&states[i], act(rng)};
        ptrs[i] = &states[i];
    }

    std::printf("%-18s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

    {
        Gradient gs(model.param_count(), 0.0), gp(model.param_count(), 0.0);
        double vs = 0.0, vp = 0.0;
        const double ts = best_of(5, [&] {
            std::fill(gs.begin(), gs.end(), 0.0);
            vs = nll_batch(model, batch, ExecPolicy::Serial, &gs);
        });
        const double tp = best_of(5, [&] {
            std::fill(gp.begin(), gp.end(), 0.0);
            vp = nll_batch(model, batch, ExecPolicy::Parallel, &gp);
        });
        double diff = std::fabs(vs - vp);
        for (std::size_t i = 0; i < gs.size(); ++i) diff = std::max(diff, std::fabs(gs[i] - gp[i]));
        report("nll_batch", ts, tp, diff);
    }

    {
        Gradient gs(model.param_count(), 0.0), gp(model.param_count(), 0.0);
        double vs = 0.0, vp = 0.0;
        const double ts = best_of(5, [&] {
            std::fill(gs.begin(), gs.end(), 0.0);
            vs = brier_batch(model, batch, ExecPolicy::Serial, &gs);
        });
        const double tp = best_of(5, [&] {
            std::fill(gp.begin(), gp.end(), 0.0);
            vp = brier_batch(model, batch, ExecPolicy::Parallel, &gp);
        });
        double diff = std::fabs(vs - vp);
        for (std::size_t i = 0; i < gs.size(); ++i) diff = std::max(diff, std::fabs(gs[i] - gp[i]));
        report("brier_batch", ts, tp, diff);
    }

    {
        Gradient gs(model.param_count(), 0.0), gp(model.param_count(), 0.0);
        double vs = 0.0, vp = 0.0;
        const double ts = best_of(5, [&] {
            std::fill(gs.begin(), gs.end(), 0.0);
            vs = energy_mean_batch(model, ptrs, ExecPolicy::Serial, 1.0, &gs);
        });
        const double tp = best_of(5, [&] {
            std::fill(gp.begin(), gp.end(), 0.0);
            vp = energy_mean_batch(model, ptrs, ExecPolicy::Parallel, 1.0, &gp);
        });
        double diff = std::fabs(vs - vp);
        for (std::size_t i = 0; i < gs.size(); ++i) diff = std::max(diff, std::fabs(gs[i] - gp[i]));
        report("energy_mean_batch", ts, tp, diff);
    }

    {
        const int policies_n = 6, trajs = 128, T = 40;
        std::vector<PolicyModel> policies;
        for (int j = 0; j < policies_n; ++j) policies.push_back(PolicyModel::init(m, A, H, 100 + j));
        Dataset data;
        data.m = m;
        data.A = A;
        for (int i = 0; i < trajs; ++i) {
            Trajectory traj;
            for (int t = 0; t < T; ++t) {
                Step st;
                st.state.resize(m);
                for (double& v : st.state) v = normal(rng);
                st.action = act(rng);
                traj.steps.push_back(std::move(st));
            }
            data.trajectories.push_back(std::move(traj));
        }
        std::vector<std::vector<double>> ls, lp;
        const double ts = best_of(3, [&] { ls = loglik_matrix(policies, data, ExecPolicy::Serial); });
        const double tp =
            best_of(3, [&] { lp = loglik_matrix(policies, data, ExecPolicy::Parallel); });
        double diff = 0.0;
        for (std::size_t i = 0; i < ls.size(); ++i)
            for (std::size_t j = 0; j < ls[i].size(); ++j)
                diff = std::max(diff, std::fabs(ls[i][j] - lp[i][j]));
        report("loglik_matrix", ts, tp, diff);
    }

    return 0;
}
