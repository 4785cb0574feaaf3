#include "emedm/edm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <random>
#include <stdexcept>

namespace emedm {

void EdmConfig::validate() const {
    if (epochs <= 0) throw std::invalid_argument("epochs must be positive");
    if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("learning_rate must be positive");
    if (sgld_steps <= 0) throw std::invalid_argument("sgld_steps must be positive");
    if (!(sgld_step_size > 0.0)) throw std::invalid_argument("sgld_step_size must be positive");
    if (!(sgld_noise >= 0.0)) throw std::invalid_argument("sgld_noise must be nonnegative");
    if (buffer_size <= 0) throw std::invalid_argument("buffer_size must be positive");
    if (!(reinit_prob >= 0.0 && reinit_prob <= 1.0))
        throw std::invalid_argument("reinit_prob must be in [0,1]");
    if (!(occupancy_weight >= 0.0)) throw std::invalid_argument("occupancy_weight must be nonnegative");
    if (hidden <= 0) throw std::invalid_argument("hidden must be positive");
}

SgldBuffer SgldBuffer::init(int m, int capacity, Rng& rng) {
    if (m <= 0 || capacity <= 0) throw std::invalid_argument("bad buffer dimensions");
    SgldBuffer buf;
    buf.m = m;
    buf.states.assign(capacity, StateVec(m));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (StateVec& s : buf.states)
        for (double& x : s) x = normal(rng);
    return buf;
}

std::pair<double, Gradient> bc_term(const PolicyModel& model, const std::vector<StepRef>& batch,
                                    ExecPolicy exec) {
    Gradient grad(model.params.size(), 0.0);
    double loss = nll_batch(model, batch, exec, &grad);
    return {loss, std::move(grad)};
}

std::pair<double, Gradient> occupancy_term(const PolicyModel& model,
                                           const std::vector<const StateVec*>& data_states,
                                           const std::vector<const StateVec*>& model_states,
                                           ExecPolicy exec) {
    Gradient grad(model.params.size(), 0.0);
    double e_data = energy_mean_batch(model, data_states, exec, 1.0, &grad);
    double e_model = energy_mean_batch(model, model_states, exec, -1.0, &grad);
    return {e_data - e_model, std::move(grad)};
}

std::vector<StateVec> sgld_sample(const PolicyModel& model, SgldBuffer& buffer, int n,
                                  const EdmConfig& cfg, Rng& rng) {
    if (n < 1) throw std::invalid_argument("n must be positive");
    if (buffer.states.empty()) throw std::invalid_argument("empty SGLD buffer");
    if (buffer.m != model.m) throw std::invalid_argument("buffer dimension mismatch");
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, buffer.states.size() - 1);

    // Fixed main-stream consumption per chain (coin, slot, chain seed); all
    // remaining randomness comes from the chain's own generator, so evolution
    // can run in parallel without changing the result.
    std::vector<StateVec> chains(n);
    std::vector<std::size_t> slot(n);
    std::vector<std::uint64_t> chain_seed(n);
    std::vector<char> fresh(n);
    for (int i = 0; i < n; ++i) {
        fresh[i] = u01(rng) < cfg.reinit_prob;
        slot[i] = pick(rng);
        chain_seed[i] = rng();
    }

    auto evolve = [&](int i) {
        Rng crng(mix64(chain_seed[i]));
        std::normal_distribution<double> normal(0.0, 1.0);
        StateVec s;
        if (fresh[i]) {
            s.resize(model.m);
            for (double& x : s) x = normal(crng);
        } else {
            s = buffer.states[slot[i]];
        }
        for (int t = 0; t < cfg.sgld_steps; ++t) {
            StateVec g = energy_grad_state(model, s);
            for (int d = 0; d < model.m; ++d)
                s[d] += -0.5 * cfg.sgld_step_size * g[d] + cfg.sgld_noise * normal(crng);
        }
        chains[i] = std::move(s);
    };
    if (cfg.exec == ExecPolicy::Parallel) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) evolve(i);
    } else {
        for (int i = 0; i < n; ++i) evolve(i);
    }
    for (int i = 0; i < n; ++i) buffer.states[slot[i]] = chains[i];
    return chains;
}

EdmResult train_edm(const Dataset& data, const EdmConfig& cfg,
                    const std::vector<double>* traj_weights, const PolicyModel* warm_start) {
    cfg.validate();
    validate(data);
    std::size_t N = data.trajectories.size();
    if (traj_weights) {
        if (traj_weights->size() != N) throw std::invalid_argument("weight count mismatch");
        for (double w : *traj_weights)
            if (!(w >= 0.0) || !std::isfinite(w))
                throw std::invalid_argument("trajectory weights must be nonnegative");
    }

    std::vector<StepRef> steps;
    std::vector<double> cumw;
    steps.reserve(data.total_steps());
    cumw.reserve(data.total_steps());
    double total = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        double w = traj_weights ? (*traj_weights)[i] : 1.0;
        for (const Step& st : data.trajectories[i].steps) {
            steps.push_back({&st.state, st.action});
            total += w;
            cumw.push_back(total);
        }
    }
    if (!(total > 0.0)) throw std::invalid_argument("all trajectory weights are zero");

    PolicyModel model;
    if (warm_start) {
        if (warm_start->m != data.m || warm_start->A != data.A)
            throw std::invalid_argument("warm start dimension mismatch");
        model = *warm_start;
    } else {
        model = PolicyModel::init(data.m, data.A, cfg.hidden, cfg.seed);
    }

    Rng rng_batch = make_rng(cfg.seed, "batch");
    Rng rng_sgld = make_rng(cfg.seed, "sgld");
    bool use_occ = cfg.occupancy_weight > 0.0;
    SgldBuffer buffer;
    if (use_occ) buffer = SgldBuffer::init(data.m, cfg.buffer_size, rng_sgld);

    int updates = static_cast<int>(std::ceil(total / cfg.batch_size));
    if (updates < 1) updates = 1;
    Adam opt(cfg.learning_rate);
    Gradient grad(model.params.size(), 0.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<StepRef> batch(cfg.batch_size);
    std::vector<const StateVec*> data_states(cfg.batch_size);
    std::vector<CurvePoint> curve;
    curve.reserve(cfg.epochs);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double sum_bc = 0.0, sum_occ = 0.0, sum_total = 0.0;
        for (int u = 0; u < updates; ++u) {
            for (int b = 0; b < cfg.batch_size; ++b) {
                double v = u01(rng_batch) * total;
                std::size_t idx = std::upper_bound(cumw.begin(), cumw.end(), v) - cumw.begin();
                if (idx >= steps.size()) idx = steps.size() - 1;
                batch[b] = steps[idx];
                data_states[b] = steps[idx].s;
            }
            std::fill(grad.begin(), grad.end(), 0.0);
            double loss_bc = cfg.bc_loss == BcLoss::CrossEntropy
                                 ? nll_batch(model, batch, cfg.exec, &grad)
                                 : brier_batch(model, batch, cfg.exec, &grad);
            double loss_occ = 0.0;
            if (use_occ) {
                std::vector<StateVec> neg = sgld_sample(model, buffer, cfg.batch_size, cfg, rng_sgld);
                std::vector<const StateVec*> neg_states(neg.size());
                for (std::size_t i = 0; i < neg.size(); ++i) neg_states[i] = &neg[i];
                double e_data = energy_mean_batch(model, data_states, cfg.exec, cfg.occupancy_weight, &grad);
                double e_model = energy_mean_batch(model, neg_states, cfg.exec, -cfg.occupancy_weight, &grad);
                loss_occ = e_data - e_model;
            }
            opt.step(model.params, grad);
            sum_bc += loss_bc;
            sum_occ += loss_occ;
            sum_total += loss_bc + cfg.occupancy_weight * loss_occ;
        }
        curve.push_back({epoch, sum_total / updates, sum_bc / updates, sum_occ / updates});
    }
    return {std::move(model), std::move(curve)};
}

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << "epoch,loss_total,loss_bc,loss_occ\n" << std::setprecision(17);
        for (const CurvePoint& p : curve)
            out << p.epoch << "," << p.loss_total << "," << p.loss_bc << "," << p.loss_occ << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp);
}

}  // namespace emedm
