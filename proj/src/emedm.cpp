#include "emedm/emedm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace emedm {

namespace {

const double kLogFloor = std::log(1e-300);

double safe_log(double x) { return std::log(std::max(x, 1e-300)); }

std::vector<double> log_priors_of(const std::vector<double>& priors) {
    std::vector<double> lp(priors.size());
    for (std::size_t j = 0; j < priors.size(); ++j) lp[j] = safe_log(priors[j]);
    return lp;
}

// Row-wise softmax of log nu_j + ll_ij with row-max subtraction.
std::vector<std::vector<double>> normalize_rows(const std::vector<std::vector<double>>& ll,
                                                const std::vector<double>& log_priors) {
    std::size_t N = ll.size(), K = log_priors.size();
    std::vector<std::vector<double>> u(N, std::vector<double>(K));
    for (std::size_t i = 0; i < N; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < K; ++j) {
            u[i][j] = log_priors[j] + ll[i][j];
            best = std::max(best, u[i][j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
            u[i][j] = std::exp(u[i][j] - best);
            sum += u[i][j];
        }
        for (std::size_t j = 0; j < K; ++j) u[i][j] /= sum;
    }
    return u;
}

double mixture_ll(const std::vector<std::vector<double>>& ll, const std::vector<double>& log_priors) {
    double total = 0.0;
    for (const std::vector<double>& row : ll) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < log_priors.size(); ++j)
            best = std::max(best, log_priors[j] + row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < log_priors.size(); ++j)
            sum += std::exp(log_priors[j] + row[j] - best);
        total += best + std::log(sum);
    }
    return total;
}

std::vector<std::vector<double>> random_responsibilities(std::size_t N, int K, Rng& rng) {
    std::exponential_distribution<double> expo(1.0);
    std::vector<std::vector<double>> u(N, std::vector<double>(K));
    for (std::size_t i = 0; i < N; ++i) {
        double sum = 0.0;
        for (int j = 0; j < K; ++j) {
            u[i][j] = expo(rng);
            sum += u[i][j];
        }
        for (int j = 0; j < K; ++j) u[i][j] /= sum;
    }
    return u;
}

void check_row_stochastic(const std::vector<std::vector<double>>& u, std::size_t N) {
    if (u.size() != N) throw std::invalid_argument("responsibility row count mismatch");
    for (const std::vector<double>& row : u) {
        double sum = 0.0;
        for (double x : row) {
            if (!(x >= 0.0)) throw std::invalid_argument("negative responsibility");
            sum += x;
        }
        if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("responsibility row does not sum to 1");
    }
}

nlohmann::json policy_to_json(const PolicyModel& p) {
    return {{"m", p.m}, {"A", p.A}, {"H", p.H}, {"params", p.params}};
}

PolicyModel policy_from_json(const nlohmann::json& j) {
    PolicyModel p(j.at("m").get<int>(), j.at("A").get<int>(), j.at("H").get<int>());
    p.params = j.at("params").get<std::vector<double>>();
    if (p.params.size() != PolicyModel(p.m, p.A, p.H).params.size())
        throw std::runtime_error("parameter vector size mismatch in cluster model");
    return p;
}

}  // namespace

void EmConfig::validate() const {
    if (K < 1) throw std::invalid_argument("K must be at least 1");
    if (max_iters < 1) throw std::invalid_argument("max_iters must be at least 1");
    if (!(loglik_tol > 0.0)) throw std::invalid_argument("loglik_tol must be positive");
    if (!(min_cluster_mass > 0.0)) throw std::invalid_argument("min_cluster_mass must be positive");
    edm.validate();
}

std::vector<std::vector<double>> e_step(const ClusterModel& clusters, const Dataset& data) {
    if (clusters.policies.empty()) throw std::invalid_argument("cluster model has no policies");
    auto ll = loglik_matrix(clusters.policies, data, ExecPolicy::Parallel);
    return normalize_rows(ll, log_priors_of(clusters.priors));
}

std::pair<std::vector<double>, std::vector<PolicyModel>> m_step(
    const std::vector<std::vector<double>>& u, const Dataset& data, const EmConfig& cfg,
    const std::vector<PolicyModel>* prev_policies, int iter) {
    std::size_t N = data.trajectories.size();
    check_row_stochastic(u, N);
    int K = static_cast<int>(u.empty() ? 0 : u[0].size());
    if (K < 1) throw std::invalid_argument("empty responsibility matrix");
    if (prev_policies && static_cast<int>(prev_policies->size()) != K)
        throw std::invalid_argument("warm start cluster count mismatch");

    std::vector<double> priors(K, 0.0);
    for (std::size_t i = 0; i < N; ++i)
        for (int j = 0; j < K; ++j) priors[j] += u[i][j];
    std::vector<double> mass = priors;
    for (int j = 0; j < K; ++j) priors[j] /= static_cast<double>(N);

    std::vector<PolicyModel> policies;
    policies.reserve(K);
    std::vector<double> weights(N);
    for (int j = 0; j < K; ++j) {
        for (std::size_t i = 0; i < N; ++i) weights[i] = u[i][j];
        EdmConfig ec = cfg.edm;
        ec.seed = derive_seed(cfg.edm.seed,
                              (static_cast<std::uint64_t>(j) << 32) | static_cast<std::uint32_t>(iter));
        const PolicyModel* warm = prev_policies ? &(*prev_policies)[j] : nullptr;
        // An effectively empty cluster keeps its previous policy untrained;
        // fit() detects the collapse and restarts with fewer clusters.
        if (mass[j] < cfg.min_cluster_mass)
            policies.push_back(warm ? *warm : PolicyModel::init(data.m, data.A, ec.hidden, ec.seed));
        else
            policies.push_back(train_edm(data, ec, &weights, warm).policy);
    }
    return {std::move(priors), std::move(policies)};
}

double total_loglik(const ClusterModel& clusters, const Dataset& data) {
    auto ll = loglik_matrix(clusters.policies, data, ExecPolicy::Parallel);
    return mixture_ll(ll, log_priors_of(clusters.priors));
}

double sum_log_responsibilities(const std::vector<std::vector<double>>& u) {
    double total = 0.0;
    for (const std::vector<double>& row : u)
        for (double x : row) total += std::max(safe_log(x), kLogFloor);
    return total;
}

ClusterModel fit(const Dataset& data, const EmConfig& cfg) {
    cfg.validate();
    validate(data);
    std::size_t N = data.trajectories.size();
    if (N < static_cast<std::size_t>(cfg.K))
        throw std::invalid_argument("fewer trajectories than clusters");

    int K = cfg.K;
    for (;;) {
        if (K == 1) {
            EdmResult r = train_edm(data, cfg.edm);
            ClusterModel cm;
            cm.K = 1;
            cm.priors = {1.0};
            cm.policies = {std::move(r.policy)};
            cm.u.assign(N, std::vector<double>{1.0});
            cm.loglik_history = {total_loglik(cm, data)};
            cm.sum_log_u_history = {0.0};
            return cm;
        }

        Rng rng = make_rng(cfg.seed, "responsibilities");
        auto u = random_responsibilities(N, K, rng);
        std::vector<double> priors;
        std::vector<PolicyModel> policies;
        std::vector<double> ll_hist, eq_hist;
        bool collapsed = false;

        for (int iter = 0; iter < cfg.max_iters; ++iter) {
            std::vector<double> mass(K, 0.0);
            for (std::size_t i = 0; i < N; ++i)
                for (int j = 0; j < K; ++j) mass[j] += u[i][j];
            if (*std::min_element(mass.begin(), mass.end()) < cfg.min_cluster_mass) {
                collapsed = true;
                break;
            }
            std::tie(priors, policies) = m_step(u, data, cfg, iter == 0 ? nullptr : &policies, iter);
            auto ll = loglik_matrix(policies, data, ExecPolicy::Parallel);
            auto lp = log_priors_of(priors);
            u = normalize_rows(ll, lp);
            ll_hist.push_back(mixture_ll(ll, lp));
            eq_hist.push_back(sum_log_responsibilities(u));
            std::size_t n = ll_hist.size();
            if (n > 1 && std::abs(ll_hist[n - 1] - ll_hist[n - 2]) < cfg.loglik_tol) break;
        }
        if (collapsed) {
            --K;
            continue;
        }
        ClusterModel cm;
        cm.K = K;
        cm.priors = std::move(priors);
        cm.policies = std::move(policies);
        cm.u = std::move(u);
        cm.loglik_history = std::move(ll_hist);
        cm.sum_log_u_history = std::move(eq_hist);
        return cm;
    }
}

int select_k(const Dataset& data, const std::vector<int>& k_candidates, const EmConfig& cfg) {
    if (k_candidates.empty()) throw std::invalid_argument("no cluster count candidates");
    std::vector<int> cand = k_candidates;
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    if (cand.front() < 1) throw std::invalid_argument("cluster count candidates must be at least 1");

    int best = cand.front();
    double prev_ll = 0.0;
    bool have = false;
    for (int K : cand) {
        if (static_cast<std::size_t>(K) > data.trajectories.size()) break;
        EmConfig c = cfg;
        c.K = K;
        ClusterModel m = fit(data, c);
        bool clean = m.K == K;
        double ll = m.loglik_history.back();
        if (!have) {
            if (!clean) break;
            best = K;
            prev_ll = ll;
            have = true;
        } else {
            if (!clean || !(ll > prev_ll + cfg.loglik_tol)) break;
            best = K;
            prev_ll = ll;
        }
    }
    return best;
}

PrefixPosterior::PrefixPosterior(const ClusterModel& clusters)
    : clusters_(&clusters), loglik_(clusters.policies.size(), 0.0) {
    if (clusters.policies.empty()) throw std::invalid_argument("cluster model has no policies");
}

void PrefixPosterior::observe(const StateVec& s, ActionId a) {
    for (std::size_t j = 0; j < loglik_.size(); ++j) {
        Forward f = forward_pass(clusters_->policies[j], s);
        loglik_[j] += std::max(f.logit[a] - f.logsumexp, kLogFloor);
    }
}

std::vector<double> PrefixPosterior::cluster_weights() const {
    std::size_t K = loglik_.size();
    std::vector<double> w(K);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < K; ++j) {
        w[j] = safe_log(clusters_->priors[j]) + loglik_[j];
        best = std::max(best, w[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
        w[j] = std::exp(w[j] - best);
        sum += w[j];
    }
    for (double& x : w) x /= sum;
    return w;
}

std::vector<double> PrefixPosterior::dist(const StateVec& s) const {
    std::vector<double> w = cluster_weights();
    std::vector<double> out(clusters_->policies[0].A, 0.0);
    for (std::size_t j = 0; j < w.size(); ++j) {
        std::vector<double> p = action_probs(clusters_->policies[j], s);
        for (std::size_t a = 0; a < out.size(); ++a) out[a] += w[j] * p[a];
    }
    return out;
}

std::vector<double> predict_action_dist(const ClusterModel& clusters,
                                        const std::vector<Step>& prefix, const StateVec& s) {
    PrefixPosterior post(clusters);
    for (const Step& st : prefix) post.observe(st.state, st.action);
    return post.dist(s);
}

void save_cluster_model(const ClusterModel& model, const std::string& path) {
    nlohmann::json j;
    j["K"] = model.K;
    j["priors"] = model.priors;
    j["policies"] = nlohmann::json::array();
    for (const PolicyModel& p : model.policies) j["policies"].push_back(policy_to_json(p));
    j["u"] = model.u;
    j["loglik_history"] = model.loglik_history;
    j["sum_log_u_history"] = model.sum_log_u_history;
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << j.dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp);
}

ClusterModel load_cluster_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    nlohmann::json j;
    in >> j;
    ClusterModel cm;
    cm.K = j.at("K").get<int>();
    cm.priors = j.at("priors").get<std::vector<double>>();
    for (const nlohmann::json& pj : j.at("policies")) cm.policies.push_back(policy_from_json(pj));
    cm.u = j.at("u").get<std::vector<std::vector<double>>>();
    cm.loglik_history = j.at("loglik_history").get<std::vector<double>>();
    cm.sum_log_u_history = j.at("sum_log_u_history").get<std::vector<double>>();
    if (cm.K != static_cast<int>(cm.policies.size()) || cm.K != static_cast<int>(cm.priors.size()))
        throw std::runtime_error("inconsistent cluster model in " + path);
    return cm;
}

void write_cluster_report(const ClusterModel& model, const Dataset& data, const std::string& path) {
    if (model.u.size() != data.trajectories.size())
        throw std::invalid_argument("responsibility rows do not match dataset");
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << "trajectory_id,argmax_cluster";
        for (int j = 0; j < model.K; ++j) out << ",u_" << j;
        out << "\n" << std::setprecision(17);
        for (std::size_t i = 0; i < model.u.size(); ++i) {
            const std::string& id = data.trajectories[i].meta.student_id;
            if (id.empty())
                out << i;
            else
                out << id;
            std::size_t arg = std::max_element(model.u[i].begin(), model.u[i].end()) - model.u[i].begin();
            out << "," << arg;
            for (double x : model.u[i]) out << "," << x;
            out << "\n";
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp);
}

}  // namespace emedm
