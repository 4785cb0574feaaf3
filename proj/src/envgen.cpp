#include "emedm/envgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace emedm {

bool EnvSpec::is_terminal(int cell) const {
    return std::find(terminal_cells.begin(), terminal_cells.end(), cell) != terminal_cells.end();
}

void EnvSpec::validate() const {
    if (width <= 0 || height <= 0) throw std::invalid_argument("grid dimensions must be positive");
    if (K_true < 1) throw std::invalid_argument("K_true must be at least 1");
    if (static_cast<int>(rewards.size()) != K_true)
        throw std::invalid_argument("need one reward table per intention");
    for (const std::vector<double>& r : rewards)
        if (static_cast<int>(r.size()) != cells())
            throw std::invalid_argument("reward table size must match cell count");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0,1)");
    if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
    if (m <= 0) throw std::invalid_argument("m must be positive");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be nonnegative");
    if (A != 3 && A != 4) throw std::invalid_argument("A must be 3 or 4");
    for (int c : terminal_cells)
        if (c < 0 || c >= cells()) throw std::invalid_argument("terminal cell out of range");
}

void require_labels(const Dataset& data) {
    for (std::size_t i = 0; i < data.trajectories.size(); ++i)
        if (!data.trajectories[i].meta.true_intent)
            throw std::invalid_argument("trajectory " + std::to_string(i) + " has no intention label");
}

EnvSpec default_benchmark(int K_true) {
    EnvSpec spec;
    spec.K_true = K_true;
    spec.embed_seed = 7;
    int corners[4] = {0, spec.width * spec.height - 1, spec.width - 1,
                      spec.width * (spec.height - 1)};
    if (K_true < 1 || K_true > 4) throw std::invalid_argument("benchmark supports 1 to 4 intentions");
    spec.rewards.assign(K_true, std::vector<double>(spec.cells(), 0.0));
    for (int k = 0; k < K_true; ++k) spec.rewards[k][corners[k]] = 10.0;
    spec.validate();
    return spec;
}

int next_cell(const EnvSpec& spec, int cell, ActionId a) {
    int row = cell / spec.width, col = cell % spec.width;
    static const int move4[4][2] = {{-1, 0}, {0, 1}, {1, 0}, {0, -1}};
    static const int move3[3][2] = {{0, 1}, {1, 0}, {0, 0}};
    const int* d = spec.A == 4 ? move4[a] : move3[a];
    int nr = row + d[0], nc = col + d[1];
    if (nr < 0 || nr >= spec.height || nc < 0 || nc >= spec.width) return cell;
    return nr * spec.width + nc;
}

std::vector<std::vector<double>> value_iteration(const EnvSpec& spec, int reward_index) {
    spec.validate();
    if (reward_index < 0 || reward_index >= spec.K_true)
        throw std::invalid_argument("reward index out of range");
    const std::vector<double>& r = spec.rewards[reward_index];
    int C = spec.cells();
    std::vector<std::vector<double>> Q(C, std::vector<double>(spec.A, 0.0));
    std::vector<double> V(C, 0.0);
    for (;;) {
        double residual = 0.0;
        for (int c = 0; c < C; ++c) {
            if (spec.is_terminal(c)) continue;
            for (int a = 0; a < spec.A; ++a) {
                int n = next_cell(spec, c, a);
                double q = r[n] + (spec.is_terminal(n) ? 0.0 : spec.gamma * V[n]);
                residual = std::max(residual, std::abs(q - Q[c][a]));
                Q[c][a] = q;
            }
        }
        for (int c = 0; c < C; ++c) V[c] = *std::max_element(Q[c].begin(), Q[c].end());
        if (residual < 1e-8) break;
    }
    return Q;
}

std::vector<std::vector<double>> boltzmann_expert(const std::vector<std::vector<double>>& Q,
                                                  double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    std::vector<std::vector<double>> pi(Q.size());
    for (std::size_t c = 0; c < Q.size(); ++c) {
        const std::vector<double>& q = Q[c];
        double best = *std::max_element(q.begin(), q.end());
        double sum = 0.0;
        pi[c].resize(q.size());
        for (std::size_t a = 0; a < q.size(); ++a) {
            pi[c][a] = std::exp((q[a] - best) / temperature);
            sum += pi[c][a];
        }
        for (double& p : pi[c]) p /= sum;
    }
    return pi;
}

std::vector<StateVec> base_embeddings(const EnvSpec& spec) {
    std::vector<StateVec> base(spec.cells(), StateVec(spec.m));
    for (int c = 0; c < spec.cells(); ++c) {
        Rng rng(derive_seed(derive_seed(spec.embed_seed, "embed"), static_cast<std::uint64_t>(c)));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int d = 0; d < spec.m; ++d) base[c][d] = normal(rng);
    }
    return base;
}

StateVec embed_state(const EnvSpec& spec, int cell, Rng& rng) {
    if (cell < 0 || cell >= spec.cells()) throw std::invalid_argument("cell out of range");
    Rng crng(derive_seed(derive_seed(spec.embed_seed, "embed"), static_cast<std::uint64_t>(cell)));
    std::normal_distribution<double> normal(0.0, 1.0);
    StateVec s(spec.m);
    for (int d = 0; d < spec.m; ++d) s[d] = normal(crng);
    for (int d = 0; d < spec.m; ++d) s[d] += spec.noise_sigma * normal(rng);
    return s;
}

namespace {

ActionId draw_from(const std::vector<double>& probs, Rng& rng) {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (std::size_t a = 0; a < probs.size(); ++a) {
        acc += probs[a];
        if (u < acc) return static_cast<ActionId>(a);
    }
    return static_cast<ActionId>(probs.size() - 1);
}

}  // namespace

LabeledDataset sample_dataset(const EnvSpec& spec, int per_intent, double temperature,
                              std::uint64_t seed) {
    spec.validate();
    if (per_intent < 1) throw std::invalid_argument("per_intent must be at least 1");
    std::vector<StateVec> base = base_embeddings(spec);
    LabeledDataset data;
    data.m = spec.m;
    data.A = spec.A;
    std::uint64_t root = derive_seed(seed, "sample");
    for (int k = 0; k < spec.K_true; ++k) {
        auto pi = boltzmann_expert(value_iteration(spec, k), temperature);
        for (int t = 0; t < per_intent; ++t) {
            Rng rng(derive_seed(root, (static_cast<std::uint64_t>(k) << 32) |
                                          static_cast<std::uint32_t>(t)));
            std::normal_distribution<double> normal(0.0, 1.0);
            Trajectory traj;
            traj.meta.student_id = std::to_string(k * per_intent + t);
            traj.meta.true_intent = k;
            int cell = std::uniform_int_distribution<int>(0, spec.cells() - 1)(rng);
            for (int step = 0; step < spec.horizon; ++step) {
                StateVec s = base[cell];
                for (int d = 0; d < spec.m; ++d) s[d] += spec.noise_sigma * normal(rng);
                ActionId a = draw_from(pi[cell], rng);
                int nxt = next_cell(spec, cell, a);
                traj.steps.push_back({std::move(s), a});
                traj.rewards.push_back(spec.rewards[k][nxt]);
                traj.cells.push_back(cell);
                cell = nxt;
                if (spec.is_terminal(cell)) break;
            }
            data.trajectories.push_back(std::move(traj));
        }
    }
    validate(data);
    return data;
}

Dataset rollout(const EnvSpec& spec, const PolicyModel& policy, int n, std::uint64_t seed,
                int reward_index) {
    spec.validate();
    if (n < 1) throw std::invalid_argument("n must be at least 1");
    if (policy.m != spec.m) throw std::invalid_argument("policy dimension mismatch");
    if (reward_index < 0 || reward_index >= spec.K_true)
        throw std::invalid_argument("reward index out of range");
    std::vector<StateVec> base = base_embeddings(spec);
    Dataset data;
    data.m = spec.m;
    data.A = policy.A;
    std::uint64_t root = derive_seed(seed, "rollout");
    for (int t = 0; t < n; ++t) {
        Rng rng(derive_seed(root, static_cast<std::uint64_t>(t)));
        std::normal_distribution<double> normal(0.0, 1.0);
        Trajectory traj;
        traj.meta.student_id = std::to_string(t);
        int cell = std::uniform_int_distribution<int>(0, spec.cells() - 1)(rng);
        for (int step = 0; step < spec.horizon; ++step) {
            StateVec s = base[cell];
            for (int d = 0; d < spec.m; ++d) s[d] += spec.noise_sigma * normal(rng);
            ActionId a = sample_action(policy, s, rng);
            int nxt = next_cell(spec, cell, a);
            traj.steps.push_back({std::move(s), a});
            traj.rewards.push_back(spec.rewards[reward_index][nxt]);
            traj.cells.push_back(cell);
            cell = nxt;
            if (spec.is_terminal(cell)) break;
        }
        data.trajectories.push_back(std::move(traj));
    }
    validate(data);
    return data;
}

void save_env_spec(const EnvSpec& spec, const std::string& path) {
    nlohmann::json j;
    j["width"] = spec.width;
    j["height"] = spec.height;
    j["K_true"] = spec.K_true;
    j["rewards"] = spec.rewards;
    j["gamma"] = spec.gamma;
    j["horizon"] = spec.horizon;
    j["m"] = spec.m;
    j["embed_seed"] = spec.embed_seed;
    j["noise_sigma"] = spec.noise_sigma;
    j["A"] = spec.A;
    j["terminal_cells"] = spec.terminal_cells;
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << j.dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp);
}

EnvSpec load_env_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    nlohmann::json j;
    in >> j;
    EnvSpec spec;
    spec.width = j.at("width").get<int>();
    spec.height = j.at("height").get<int>();
    spec.K_true = j.at("K_true").get<int>();
    spec.rewards = j.at("rewards").get<std::vector<std::vector<double>>>();
    spec.gamma = j.at("gamma").get<double>();
    spec.horizon = j.at("horizon").get<int>();
    spec.m = j.at("m").get<int>();
    spec.embed_seed = j.at("embed_seed").get<std::uint64_t>();
    spec.noise_sigma = j.at("noise_sigma").get<double>();
    spec.A = j.at("A").get<int>();
    spec.terminal_cells = j.at("terminal_cells").get<std::vector<int>>();
    spec.validate();
    return spec;
}

}  // namespace emedm
