#include "emedm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "emedm/ingest.hpp"

namespace emedm {

EdmResult train_bc(const Dataset& data, const EdmConfig& cfg) {
    EdmConfig c = cfg;
    c.occupancy_weight = 0.0;
    return train_edm(data, c);
}

Discriminator::Discriminator(int in_, int H_) : in(in_), H(H_) {
    if (in <= 0 || H <= 0) throw std::invalid_argument("bad discriminator dimensions");
    params.assign(static_cast<std::size_t>(H) * in + 2 * static_cast<std::size_t>(H) + 1, 0.0);
}

Discriminator Discriminator::init(int in, int H, std::uint64_t seed) {
    Discriminator d(in, H);
    Rng rng = make_rng(seed, "disc_init");
    double lim1 = std::sqrt(6.0 / (in + H));
    double lim2 = std::sqrt(6.0 / (H + 1));
    std::uniform_real_distribution<double> u1(-lim1, lim1), u2(-lim2, lim2);
    for (int i = 0; i < H * in; ++i) d.w1()[i] = u1(rng);
    for (int i = 0; i < H; ++i) d.w2()[i] = u2(rng);
    return d;
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

struct DiscForward {
    std::vector<double> hidden;
    double logit = 0.0;
};

DiscForward disc_forward(const Discriminator& d, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != d.in) throw std::invalid_argument("discriminator input size mismatch");
    DiscForward f;
    f.hidden.resize(d.H);
    for (int h = 0; h < d.H; ++h) {
        double z = d.b1()[h];
        const double* row = d.w1() + static_cast<std::size_t>(h) * d.in;
        for (int i = 0; i < d.in; ++i) z += row[i] * x[i];
        f.hidden[h] = std::tanh(z);
    }
    double z = *d.b2();
    for (int h = 0; h < d.H; ++h) z += d.w2()[h] * f.hidden[h];
    f.logit = z;
    return f;
}

// Accumulates dloss/dlogit = g backward into a parameter-space gradient.
void disc_backprop(const Discriminator& d, const std::vector<double>& x, const DiscForward& f,
                   double g, std::vector<double>& grad) {
    std::size_t off_b1 = static_cast<std::size_t>(d.H) * d.in;
    std::size_t off_w2 = off_b1 + d.H;
    std::size_t off_b2 = off_w2 + d.H;
    grad[off_b2] += g;
    for (int h = 0; h < d.H; ++h) {
        grad[off_w2 + h] += g * f.hidden[h];
        double gh = g * d.w2()[h] * (1.0 - f.hidden[h] * f.hidden[h]);
        double* gw1 = grad.data() + static_cast<std::size_t>(h) * d.in;
        for (int i = 0; i < d.in; ++i) gw1[i] += gh * x[i];
        grad[off_b1 + h] += gh;
    }
}

std::vector<double> concat_sa(const StateVec& s, ActionId a, int A) {
    std::vector<double> x(s.size() + A, 0.0);
    std::copy(s.begin(), s.end(), x.begin());
    x[s.size() + a] = 1.0;
    return x;
}

std::vector<double> concat_sas(const StateVec& s, ActionId a, int A, const StateVec& s2) {
    std::vector<double> x(s.size() + A + s2.size(), 0.0);
    std::copy(s.begin(), s.end(), x.begin());
    x[s.size() + a] = 1.0;
    std::copy(s2.begin(), s2.end(), x.begin() + s.size() + A);
    return x;
}

}  // namespace

double disc_logit(const Discriminator& disc, const std::vector<double>& x) {
    return disc_forward(disc, x).logit;
}

std::pair<double, std::vector<double>> disc_loss_grad(const Discriminator& disc,
                                                      const std::vector<std::vector<double>>& expert_batch,
                                                      const std::vector<std::vector<double>>& learner_batch) {
    if (expert_batch.empty() || learner_batch.empty()) throw std::invalid_argument("empty batch");
    std::vector<double> grad(disc.params.size(), 0.0);
    double loss = 0.0;
    double nl = static_cast<double>(learner_batch.size());
    double ne = static_cast<double>(expert_batch.size());
    for (const std::vector<double>& x : learner_batch) {
        DiscForward f = disc_forward(disc, x);
        loss += softplus(-f.logit) / nl;
        disc_backprop(disc, x, f, (sigmoid(f.logit) - 1.0) / nl, grad);
    }
    for (const std::vector<double>& x : expert_batch) {
        DiscForward f = disc_forward(disc, x);
        loss += softplus(f.logit) / ne;
        disc_backprop(disc, x, f, sigmoid(f.logit) / ne, grad);
    }
    return {loss, std::move(grad)};
}

double train_discriminator(Discriminator& disc, const std::vector<std::vector<double>>& expert_batch,
                           const std::vector<std::vector<double>>& learner_batch, double lr) {
    auto [loss, grad] = disc_loss_grad(disc, expert_batch, learner_batch);
    for (std::size_t i = 0; i < disc.params.size(); ++i) disc.params[i] -= lr * grad[i];
    return loss;
}

void AdvConfig::validate() const {
    if (iters < 1 || rollouts_per_iter < 1 || policy_steps < 1 || disc_batch < 1)
        throw std::invalid_argument("adversarial config counts must be positive");
    if (disc_steps < 0) throw std::invalid_argument("disc_steps must be nonnegative");
    if (!(disc_lr > 0.0) || !(policy_lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
    if (!(clip > 0.0)) throw std::invalid_argument("clip must be positive");
    if (!(entropy_bonus >= 0.0)) throw std::invalid_argument("entropy_bonus must be nonnegative");
    if (hidden < 1) throw std::invalid_argument("hidden must be positive");
}

double ppo_update(PolicyModel& policy, Adam& opt, const Dataset& rollouts,
                  const std::vector<std::vector<double>>& rewards, double gamma,
                  const AdvConfig& cfg) {
    cfg.validate();
    std::size_t n_traj = rollouts.trajectories.size();
    if (rewards.size() != n_traj) throw std::invalid_argument("reward rows must match rollouts");

    std::vector<std::vector<double>> returns(n_traj);
    std::size_t max_len = 0;
    for (std::size_t i = 0; i < n_traj; ++i) {
        std::size_t T = rollouts.trajectories[i].length();
        if (rewards[i].size() != T) throw std::invalid_argument("reward length mismatch");
        returns[i].assign(T, 0.0);
        double g = 0.0;
        for (std::size_t t = T; t-- > 0;) {
            g = rewards[i][t] + gamma * g;
            returns[i][t] = g;
        }
        max_len = std::max(max_len, T);
    }
    std::vector<double> baseline(max_len, 0.0);
    std::vector<int> count(max_len, 0);
    for (std::size_t i = 0; i < n_traj; ++i)
        for (std::size_t t = 0; t < returns[i].size(); ++t) {
            baseline[t] += returns[i][t];
            ++count[t];
        }
    for (std::size_t t = 0; t < max_len; ++t) baseline[t] /= count[t];

    std::vector<StepRef> steps;
    std::vector<double> adv;
    std::vector<double> old_logp;
    for (std::size_t i = 0; i < n_traj; ++i) {
        const Trajectory& traj = rollouts.trajectories[i];
        for (std::size_t t = 0; t < traj.length(); ++t) {
            steps.push_back({&traj.steps[t].state, traj.steps[t].action});
            adv.push_back(returns[i][t] - baseline[t]);
        }
    }
    if (steps.empty()) throw std::invalid_argument("empty rollouts");
    old_logp.reserve(steps.size());
    for (const StepRef& st : steps) {
        Forward f = forward_pass(policy, *st.s);
        old_logp.push_back(f.logit[st.a] - f.logsumexp);
    }

    double inv_n = 1.0 / static_cast<double>(steps.size());
    double first_loss = 0.0;
    Gradient grad(policy.params.size(), 0.0);
    std::vector<double> dl(policy.A);
    for (int pass = 0; pass < cfg.policy_steps; ++pass) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        for (std::size_t i = 0; i < steps.size(); ++i) {
            Forward f = forward_pass(policy, *steps[i].s);
            double logp = f.logit[steps[i].a] - f.logsumexp;
            double ratio = std::exp(logp - old_logp[i]);
            double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
            double a = adv[i];
            double obj = std::min(ratio * a, clipped * a);
            double entropy = 0.0;
            for (int k = 0; k < policy.A; ++k) entropy -= f.probs[k] * std::log(f.probs[k]);
            loss += (-obj - cfg.entropy_bonus * entropy) * inv_n;

            bool pass_through = ratio * a <= clipped * a;
            for (int k = 0; k < policy.A; ++k) {
                double d = 0.0;
                if (pass_through) {
                    double ind = k == steps[i].a ? 1.0 : 0.0;
                    d -= a * ratio * (ind - f.probs[k]);
                }
                d += cfg.entropy_bonus * f.probs[k] * (std::log(f.probs[k]) + entropy);
                dl[k] = d;
            }
            backprop_logits(policy, *steps[i].s, f, dl, inv_n, grad);
        }
        if (pass == 0) first_loss = loss;
        opt.step(policy.params, grad);
    }
    return first_loss;
}

namespace {

GailResult adversarial_train(const EnvSpec& env, const Dataset& expert_data, const AdvConfig& cfg,
                             const Discriminator* init_disc, bool airl) {
    cfg.validate();
    env.validate();
    validate(expert_data);
    if (expert_data.m != env.m) throw std::invalid_argument("expert data dimension mismatch");
    if (expert_data.A != env.A) throw std::invalid_argument("expert action count mismatch");
    int A = env.A;
    int in_dim = airl ? 2 * env.m + A : env.m + A;

    PolicyModel policy = PolicyModel::init(env.m, A, cfg.hidden, derive_seed(cfg.seed, "adv_policy"));
    Discriminator disc = init_disc ? *init_disc
                                   : Discriminator::init(in_dim, cfg.hidden, derive_seed(cfg.seed, "adv_disc"));
    if (disc.in != in_dim) throw std::invalid_argument("discriminator input size mismatch");

    auto features_of = [&](const Trajectory& traj, std::size_t t) {
        const Step& st = traj.steps[t];
        if (!airl) return concat_sa(st.state, st.action, A);
        const StateVec& nxt = t + 1 < traj.length() ? traj.steps[t + 1].state : st.state;
        return concat_sas(st.state, st.action, A, nxt);
    };
    std::vector<std::vector<double>> expert_feats;
    for (const Trajectory& traj : expert_data.trajectories)
        for (std::size_t t = 0; t < traj.length(); ++t) expert_feats.push_back(features_of(traj, t));

    Adam popt(cfg.policy_lr);
    Rng rng = make_rng(cfg.seed, "adv_loop");
    GailResult out;
    out.curve.reserve(cfg.iters);
    for (int it = 0; it < cfg.iters; ++it) {
        Dataset roll = rollout(env, policy, cfg.rollouts_per_iter, rng());
        std::vector<std::vector<double>> learner_feats;
        for (const Trajectory& traj : roll.trajectories)
            for (std::size_t t = 0; t < traj.length(); ++t) learner_feats.push_back(features_of(traj, t));

        double disc_loss = 0.0;
        std::uniform_int_distribution<std::size_t> pe(0, expert_feats.size() - 1);
        std::uniform_int_distribution<std::size_t> pl(0, learner_feats.size() - 1);
        for (int d = 0; d < cfg.disc_steps; ++d) {
            std::vector<std::vector<double>> eb(cfg.disc_batch), lb(cfg.disc_batch);
            for (int b = 0; b < cfg.disc_batch; ++b) {
                eb[b] = expert_feats[pe(rng)];
                lb[b] = learner_feats[pl(rng)];
            }
            // GAIL pushes D up on learner samples; AIRL labels experts 1.
            disc_loss = airl ? train_discriminator(disc, lb, eb, cfg.disc_lr)
                             : train_discriminator(disc, eb, lb, cfg.disc_lr);
        }

        std::vector<std::vector<double>> rewards(roll.trajectories.size());
        for (std::size_t i = 0; i < roll.trajectories.size(); ++i) {
            const Trajectory& traj = roll.trajectories[i];
            rewards[i].resize(traj.length());
            for (std::size_t t = 0; t < traj.length(); ++t) {
                double logit = disc_logit(disc, features_of(traj, t));
                rewards[i][t] = airl ? logit : softplus(-logit);
            }
        }
        double pol_loss = ppo_update(policy, popt, roll, rewards, env.gamma, cfg);
        out.curve.push_back({it, pol_loss + disc_loss, pol_loss, disc_loss});
    }
    out.policy = std::move(policy);
    out.disc = std::move(disc);
    return out;
}

}  // namespace

GailResult train_gail(const EnvSpec& env, const Dataset& expert_data, const AdvConfig& cfg,
                      const Discriminator* init_disc) {
    return adversarial_train(env, expert_data, cfg, init_disc, false);
}

AirlResult train_airl(const EnvSpec& env, const Dataset& expert_data, const AdvConfig& cfg,
                      const Discriminator* init_disc) {
    GailResult r = adversarial_train(env, expert_data, cfg, init_disc, true);
    return {std::move(r.policy), std::move(r.disc), std::move(r.curve)};
}

double airl_reward(const Discriminator& disc, const StateVec& s, ActionId a, int A,
                   const StateVec& s_next) {
    return disc_logit(disc, concat_sas(s, a, A, s_next));
}

Dataset assign_rewards(const Dataset& data, const RewardSpec& spec) {
    if (!(spec.time_penalty >= 0.0)) throw std::invalid_argument("time_penalty must be nonnegative");
    Dataset out = data;
    for (Trajectory& traj : out.trajectories) {
        std::size_t T = traj.length();
        if (spec.kind == RewardKind::GroundTruth) {
            if (traj.rewards.size() != T)
                throw std::invalid_argument("missing ground-truth rewards");
            continue;
        }
        if (!traj.meta.pretest || !traj.meta.posttest)
            throw std::invalid_argument("missing test scores for NLG rewards");
        double gain = 100.0 * nlg(*traj.meta.pretest, *traj.meta.posttest);
        traj.rewards.assign(T, spec.kind == RewardKind::NlgTime ? -spec.time_penalty : 0.0);
        traj.rewards[T - 1] += gain;
    }
    return out;
}

void CqlConfig::validate() const {
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be nonnegative");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0,1]");
    if (!(lr > 0.0) || !(net_lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
    if (sweeps < 1 || epochs < 1 || batch_size < 1 || target_refresh < 1 || hidden < 1)
        throw std::invalid_argument("cql config counts must be positive");
}

namespace {

struct Transition {
    int cell = -1;
    const StateVec* s = nullptr;
    ActionId a = -1;
    double r = 0.0;
    int cell2 = -1;
    const StateVec* s2 = nullptr;
    bool terminal = false;
};

std::vector<Transition> collect_transitions(const Dataset& data, bool need_cells) {
    std::vector<Transition> ts;
    ts.reserve(data.total_steps());
    for (const Trajectory& traj : data.trajectories) {
        std::size_t T = traj.length();
        if (traj.rewards.size() != T) throw std::invalid_argument("missing rewards");
        if (need_cells && traj.cells.size() != T)
            throw std::invalid_argument("tabular mode needs latent cells");
        for (std::size_t t = 0; t < T; ++t) {
            Transition tr;
            tr.s = &traj.steps[t].state;
            tr.a = traj.steps[t].action;
            tr.r = traj.rewards[t];
            tr.terminal = t + 1 == T;
            if (!tr.terminal) tr.s2 = &traj.steps[t + 1].state;
            if (need_cells) {
                tr.cell = traj.cells[t];
                if (!tr.terminal) tr.cell2 = traj.cells[t + 1];
            }
            ts.push_back(tr);
        }
    }
    return ts;
}

}  // namespace

QTable train_cql(const Dataset& data, const RewardSpec& reward, const CqlConfig& cfg) {
    cfg.validate();
    Dataset with_r = assign_rewards(data, reward);
    validate(with_r);

    bool tabular;
    if (cfg.mode == CqlMode::Tabular)
        tabular = true;
    else if (cfg.mode == CqlMode::Continuous)
        tabular = false;
    else {
        tabular = true;
        for (const Trajectory& traj : with_r.trajectories)
            if (traj.cells.size() != traj.length()) tabular = false;
    }

    QTable q;
    q.tabular = tabular;
    q.A = with_r.A;
    q.gamma = cfg.gamma;
    q.alpha = cfg.alpha;
    int A = with_r.A;
    double inv_A = 1.0 / A;
    std::vector<Transition> ts = collect_transitions(with_r, tabular);

    if (tabular) {
        int S = 0;
        for (const Transition& t : ts) S = std::max({S, t.cell + 1, t.cell2 + 1});
        q.S = S;
        q.table.assign(S, std::vector<double>(A, 0.0));
        for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
            double td_sum = 0.0, cql_sum = 0.0;
            for (const Transition& t : ts) {
                double nxt = t.terminal ? 0.0
                                        : *std::max_element(q.table[t.cell2].begin(), q.table[t.cell2].end());
                double target = t.r + cfg.gamma * nxt;
                double delta = q.table[t.cell][t.a] - target;
                for (int b = 0; b < A; ++b)
                    q.table[t.cell][b] -= cfg.lr * cfg.alpha * (inv_A - (b == t.a ? 1.0 : 0.0));
                q.table[t.cell][t.a] -= cfg.lr * delta;
                td_sum += 0.5 * delta * delta;
                double row_mean = 0.0;
                for (int b = 0; b < A; ++b) row_mean += q.table[t.cell][b] * inv_A;
                cql_sum += cfg.alpha * (row_mean - q.table[t.cell][t.a]);
            }
            double n = static_cast<double>(ts.size());
            q.curve.push_back({sweep, (td_sum + cql_sum) / n, td_sum / n, cql_sum / n});
        }
        return q;
    }

    q.S = 0;
    q.net = PolicyModel::init(with_r.m, A, cfg.hidden, derive_seed(cfg.seed, "cql_net"));
    PolicyModel target_net = q.net;
    Adam opt(cfg.net_lr);
    Rng rng = make_rng(cfg.seed, "cql_batch");
    std::uniform_int_distribution<std::size_t> pick(0, ts.size() - 1);
    int updates_per_epoch = static_cast<int>(std::max<std::size_t>(1, ts.size() / cfg.batch_size));
    Gradient grad(q.net.params.size(), 0.0);
    std::vector<double> dl(A);
    long updates = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double td_sum = 0.0, cql_sum = 0.0;
        for (int u = 0; u < updates_per_epoch; ++u) {
            std::fill(grad.begin(), grad.end(), 0.0);
            double inv_n = 1.0 / cfg.batch_size;
            for (int b = 0; b < cfg.batch_size; ++b) {
                const Transition& t = ts[pick(rng)];
                Forward f = forward_pass(q.net, *t.s);
                double nxt = 0.0;
                if (!t.terminal) {
                    std::vector<double> qn = logits(target_net, *t.s2);
                    nxt = *std::max_element(qn.begin(), qn.end());
                }
                double target = t.r + cfg.gamma * nxt;
                double delta = f.logit[t.a] - target;
                for (int k = 0; k < A; ++k) dl[k] = cfg.alpha * inv_A;
                dl[t.a] += delta - cfg.alpha;
                backprop_logits(q.net, *t.s, f, dl, inv_n, grad);
                td_sum += 0.5 * delta * delta;
                double row_mean = 0.0;
                for (int k = 0; k < A; ++k) row_mean += f.logit[k] * inv_A;
                cql_sum += cfg.alpha * (row_mean - f.logit[t.a]);
            }
            opt.step(q.net.params, grad);
            ++updates;
            if (updates % cfg.target_refresh == 0) target_net = q.net;
        }
        double n = static_cast<double>(updates_per_epoch) * cfg.batch_size;
        q.curve.push_back({epoch, (td_sum + cql_sum) / n, td_sum / n, cql_sum / n});
    }
    return q;
}

ActionId greedy_action(const std::vector<double>& q_row) {
    if (q_row.empty()) throw std::invalid_argument("empty Q row");
    return static_cast<ActionId>(std::max_element(q_row.begin(), q_row.end()) - q_row.begin());
}

ActionId GreedyPolicy::act_cell(int cell) const {
    if (!q.tabular) throw std::invalid_argument("not a tabular Q-table");
    if (cell < 0 || cell >= q.S) throw std::invalid_argument("cell out of range");
    return greedy_action(q.table[cell]);
}

ActionId GreedyPolicy::act(const StateVec& s) const {
    if (q.tabular) throw std::invalid_argument("tabular Q-table needs cell ids");
    return greedy_action(logits(q.net, s));
}

std::vector<double> GreedyPolicy::dist(const StateVec& s) const {
    if (q.tabular) throw std::invalid_argument("tabular Q-table needs cell ids");
    return action_probs(q.net, s);
}

GreedyPolicy cql_policy(QTable q) { return GreedyPolicy{std::move(q)}; }

}  // namespace emedm
