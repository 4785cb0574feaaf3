#include "emedm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace emedm {

namespace {

constexpr std::size_t kBlock = 32;

// d(-log p(a|s)) / dlogits
void nll_dlogits(const Forward& f, ActionId a, std::vector<double>& dl) {
    int A = static_cast<int>(f.probs.size());
    dl.resize(A);
    for (int k = 0; k < A; ++k) dl[k] = f.probs[k] - (k == a ? 1.0 : 0.0);
}

// d(sum_a (p_a - onehot_a)^2) / dlogits
void brier_dlogits(const Forward& f, ActionId a, std::vector<double>& dl) {
    int A = static_cast<int>(f.probs.size());
    dl.resize(A);
    double dot = 0.0;
    for (int k = 0; k < A; ++k) {
        double r = f.probs[k] - (k == a ? 1.0 : 0.0);
        dot += r * f.probs[k];
    }
    for (int k = 0; k < A; ++k) {
        double r = f.probs[k] - (k == a ? 1.0 : 0.0);
        dl[k] = 2.0 * f.probs[k] * (r - dot);
    }
}

double brier_value(const Forward& f, ActionId a) {
    double v = 0.0;
    int A = static_cast<int>(f.probs.size());
    for (int k = 0; k < A; ++k) {
        double r = f.probs[k] - (k == a ? 1.0 : 0.0);
        v += r * r;
    }
    return v;
}

// Shared skeleton for the two classification losses. The parallel path splits
// the batch into fixed-size blocks and reduces partials in block order, so the
// result does not depend on the number of threads.
template <typename ValueFn, typename DlogitsFn>
double step_loss_batch(const PolicyModel& model, const std::vector<StepRef>& batch,
                       ExecPolicy exec, Gradient* grad, ValueFn value, DlogitsFn dlogits_of) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    if (grad && grad->size() != model.params.size()) throw std::invalid_argument("gradient size mismatch");
    std::size_t n = batch.size();
    double inv_n = 1.0 / static_cast<double>(n);

    if (exec == ExecPolicy::Serial) {
        double acc = 0.0;
        std::vector<double> dl;
        for (const StepRef& it : batch) {
            Forward f = forward_pass(model, *it.s);
            acc += value(f, it.a);
            if (grad) {
                dlogits_of(f, it.a, dl);
                backprop_logits(model, *it.s, f, dl, inv_n, *grad);
            }
        }
        return acc * inv_n;
    }

    std::size_t nblocks = (n + kBlock - 1) / kBlock;
    std::vector<double> loss_part(nblocks, 0.0);
    std::vector<Gradient> grad_part;
    if (grad) grad_part.assign(nblocks, Gradient(model.params.size(), 0.0));
#pragma omp parallel for schedule(static)
    for (long b = 0; b < static_cast<long>(nblocks); ++b) {
        std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        std::size_t hi = std::min(n, lo + kBlock);
        double acc = 0.0;
        std::vector<double> dl;
        for (std::size_t i = lo; i < hi; ++i) {
            Forward f = forward_pass(model, *batch[i].s);
            acc += value(f, batch[i].a);
            if (grad) {
                dlogits_of(f, batch[i].a, dl);
                backprop_logits(model, *batch[i].s, f, dl, inv_n, grad_part[b]);
            }
        }
        loss_part[b] = acc;
    }
    double total = 0.0;
    for (std::size_t b = 0; b < nblocks; ++b) total += loss_part[b];
    if (grad) {
        for (std::size_t b = 0; b < nblocks; ++b)
            for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += grad_part[b][i];
    }
    return total * inv_n;
}

}  // namespace

double nll_batch(const PolicyModel& model, const std::vector<StepRef>& batch,
                 ExecPolicy exec, Gradient* grad) {
    return step_loss_batch(
        model, batch, exec, grad,
        [](const Forward& f, ActionId a) { return f.logsumexp - f.logit[a]; },
        nll_dlogits);
}

double brier_batch(const PolicyModel& model, const std::vector<StepRef>& batch,
                   ExecPolicy exec, Gradient* grad) {
    return step_loss_batch(model, batch, exec, grad, brier_value, brier_dlogits);
}

double energy_mean_batch(const PolicyModel& model, const std::vector<const StateVec*>& states,
                         ExecPolicy exec, double sign, Gradient* grad) {
    if (states.empty()) throw std::invalid_argument("empty batch");
    if (grad && grad->size() != model.params.size()) throw std::invalid_argument("gradient size mismatch");
    std::size_t n = states.size();
    double inv_n = 1.0 / static_cast<double>(n);
    auto grad_one = [&](const StateVec& s, const Forward& f, Gradient& g) {
        // dE/dlogit_a = -p_a
        std::vector<double> dl(model.A);
        for (int a = 0; a < model.A; ++a) dl[a] = -f.probs[a];
        backprop_logits(model, s, f, dl, sign * inv_n, g);
    };

    if (exec == ExecPolicy::Serial) {
        double acc = 0.0;
        for (const StateVec* s : states) {
            Forward f = forward_pass(model, *s);
            acc += -f.logsumexp;
            if (grad) grad_one(*s, f, *grad);
        }
        return acc * inv_n;
    }

    std::size_t nblocks = (n + kBlock - 1) / kBlock;
    std::vector<double> loss_part(nblocks, 0.0);
    std::vector<Gradient> grad_part;
    if (grad) grad_part.assign(nblocks, Gradient(model.params.size(), 0.0));
#pragma omp parallel for schedule(static)
    for (long b = 0; b < static_cast<long>(nblocks); ++b) {
        std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        std::size_t hi = std::min(n, lo + kBlock);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            Forward f = forward_pass(model, *states[i]);
            acc += -f.logsumexp;
            if (grad) grad_one(*states[i], f, grad_part[b]);
        }
        loss_part[b] = acc;
    }
    double total = 0.0;
    for (std::size_t b = 0; b < nblocks; ++b) total += loss_part[b];
    if (grad) {
        for (std::size_t b = 0; b < nblocks; ++b)
            for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += grad_part[b][i];
    }
    return total * inv_n;
}

double traj_loglik(const PolicyModel& model, const Trajectory& traj) {
    static const double log_floor = std::log(1e-300);
    double ll = 0.0;
    for (const Step& st : traj.steps) {
        Forward f = forward_pass(model, st.state);
        ll += std::max(f.logit[st.action] - f.logsumexp, log_floor);
    }
    return ll;
}

std::vector<std::vector<double>> loglik_matrix(const std::vector<PolicyModel>& policies,
                                               const Dataset& data, ExecPolicy exec) {
    std::size_t N = data.trajectories.size();
    std::size_t K = policies.size();
    std::vector<std::vector<double>> ll(N, std::vector<double>(K, 0.0));
    if (exec == ExecPolicy::Parallel) {
#pragma omp parallel for schedule(static)
        for (long i = 0; i < static_cast<long>(N); ++i)
            for (std::size_t j = 0; j < K; ++j)
                ll[i][j] = traj_loglik(policies[j], data.trajectories[i]);
    } else {
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < K; ++j)
                ll[i][j] = traj_loglik(policies[j], data.trajectories[i]);
    }
    return ll;
}

void Adam::step(std::vector<double>& params, const Gradient& grad) {
    if (grad.size() != params.size()) throw std::invalid_argument("gradient size mismatch");
    if (m.empty()) {
        m.assign(params.size(), 0.0);
        v.assign(params.size(), 0.0);
    }
    if (m.size() != params.size()) throw std::invalid_argument("optimizer state size mismatch");
    ++t;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
}

}  // namespace emedm
