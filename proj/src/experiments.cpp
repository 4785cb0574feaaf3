#include "emedm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "json.hpp"

#include "emedm/dataset.hpp"
#include "emedm/rng.hpp"

namespace emedm {

namespace {

using Json = nlohmann::ordered_json;

void write_json_atomic(const Json& j, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << j.dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp);
}

Json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    Json j;
    in >> j;
    return j;
}

void check_keys(const Json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw std::runtime_error("config: " + where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw std::runtime_error("config: unknown key '" + it.key() + "' in " + where);
    }
}

const char* bc_loss_name(BcLoss v) {
    return v == BcLoss::CrossEntropy ? "cross_entropy" : "squared";
}

BcLoss bc_loss_from(const std::string& s) {
    if (s == "cross_entropy") return BcLoss::CrossEntropy;
    if (s == "squared") return BcLoss::Squared;
    throw std::runtime_error("config: unknown bc_loss '" + s + "'");
}

const char* exec_name(ExecPolicy v) { return v == ExecPolicy::Serial ? "serial" : "parallel"; }

ExecPolicy exec_from(const std::string& s) {
    if (s == "serial") return ExecPolicy::Serial;
    if (s == "parallel") return ExecPolicy::Parallel;
    throw std::runtime_error("config: unknown exec '" + s + "'");
}

const char* cql_mode_name(CqlMode v) {
    switch (v) {
        case CqlMode::Tabular: return "tabular";
        case CqlMode::Continuous: return "continuous";
        default: return "auto";
    }
}

CqlMode cql_mode_from(const std::string& s) {
    if (s == "auto") return CqlMode::Auto;
    if (s == "tabular") return CqlMode::Tabular;
    if (s == "continuous") return CqlMode::Continuous;
    throw std::runtime_error("config: unknown cql mode '" + s + "'");
}

const char* reward_kind_name(RewardKind v) {
    switch (v) {
        case RewardKind::NlgTerminal: return "nlg_terminal";
        case RewardKind::NlgTime: return "nlg_time";
        default: return "ground_truth";
    }
}

RewardKind reward_kind_from(const std::string& s) {
    if (s == "ground_truth") return RewardKind::GroundTruth;
    if (s == "nlg_terminal") return RewardKind::NlgTerminal;
    if (s == "nlg_time") return RewardKind::NlgTime;
    throw std::runtime_error("config: unknown reward kind '" + s + "'");
}

std::vector<std::vector<double>> corner_rewards(int width, int height, int K) {
    const int corners[4] = {0, width * height - 1, width - 1, width * (height - 1)};
    if (K < 1 || K > 4)
        throw std::runtime_error("config: default corner rewards support 1 to 4 intentions");
    std::vector<std::vector<double>> r(K, std::vector<double>(width * height, 0.0));
    for (int k = 0; k < K; ++k) r[k][corners[k]] = 10.0;
    return r;
}

EnvSpec parse_env(const Json& j) {
    check_keys(j, "env",
               {"width", "height", "K_true", "gamma", "horizon", "m", "embed_seed", "noise_sigma",
                "A", "terminal_cells", "rewards"});
    EnvSpec e;
    e.width = j.value("width", e.width);
    e.height = j.value("height", e.height);
    e.K_true = j.value("K_true", e.K_true);
    e.gamma = j.value("gamma", e.gamma);
    e.horizon = j.value("horizon", e.horizon);
    e.m = j.value("m", e.m);
    e.embed_seed = j.value("embed_seed", std::uint64_t{7});
    e.noise_sigma = j.value("noise_sigma", e.noise_sigma);
    e.A = j.value("A", e.A);
    e.terminal_cells = j.value("terminal_cells", std::vector<int>{});
    if (j.contains("rewards")) {
        e.rewards = j.at("rewards").get<std::vector<std::vector<double>>>();
    } else {
        e.rewards = corner_rewards(e.width, e.height, e.K_true);
    }
    e.validate();
    return e;
}

Json env_to_json(const EnvSpec& e) {
    Json j;
    j["width"] = e.width;
    j["height"] = e.height;
    j["K_true"] = e.K_true;
    j["gamma"] = e.gamma;
    j["horizon"] = e.horizon;
    j["m"] = e.m;
    j["embed_seed"] = e.embed_seed;
    j["noise_sigma"] = e.noise_sigma;
    j["A"] = e.A;
    j["terminal_cells"] = e.terminal_cells;
    j["rewards"] = e.rewards;
    return j;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

}  // namespace

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.env = default_benchmark(3);
    cfg.em.K = 3;
    cfg.em.edm = cfg.edm;
    return cfg;
}

RunConfig parse_run_config(const std::string& json_text) {
    Json j;
    try {
        j = Json::parse(json_text);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(j, "top level",
               {"seed", "tag", "jobs", "folds", "per_intent", "temperature", "methods",
                "k_candidates", "env", "edm", "em", "adv", "cql", "cql_t"});
    RunConfig cfg = default_run_config();
    cfg.seed = j.value("seed", cfg.seed);
    cfg.tag = j.value("tag", cfg.tag);
    cfg.jobs = j.value("jobs", cfg.jobs);
    cfg.folds = j.value("folds", cfg.folds);
    cfg.per_intent = j.value("per_intent", cfg.per_intent);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.methods = j.value("methods", cfg.methods);
    cfg.k_candidates = j.value("k_candidates", cfg.k_candidates);
    if (j.contains("env")) {
        cfg.env = parse_env(j.at("env"));
        cfg.has_env = true;
    }
    if (j.contains("edm")) {
        const Json& e = j.at("edm");
        check_keys(e, "edm",
                   {"epochs", "batch_size", "learning_rate", "sgld_steps", "sgld_step_size",
                    "sgld_noise", "buffer_size", "reinit_prob", "occupancy_weight", "hidden",
                    "bc_loss", "exec"});
        cfg.edm.epochs = e.value("epochs", cfg.edm.epochs);
        cfg.edm.batch_size = e.value("batch_size", cfg.edm.batch_size);
        cfg.edm.learning_rate = e.value("learning_rate", cfg.edm.learning_rate);
        cfg.edm.sgld_steps = e.value("sgld_steps", cfg.edm.sgld_steps);
        cfg.edm.sgld_step_size = e.value("sgld_step_size", cfg.edm.sgld_step_size);
        cfg.edm.sgld_noise = e.value("sgld_noise", cfg.edm.sgld_noise);
        cfg.edm.buffer_size = e.value("buffer_size", cfg.edm.buffer_size);
        cfg.edm.reinit_prob = e.value("reinit_prob", cfg.edm.reinit_prob);
        cfg.edm.occupancy_weight = e.value("occupancy_weight", cfg.edm.occupancy_weight);
        cfg.edm.hidden = e.value("hidden", cfg.edm.hidden);
        if (e.contains("bc_loss")) cfg.edm.bc_loss = bc_loss_from(e.at("bc_loss").get<std::string>());
        if (e.contains("exec")) cfg.edm.exec = exec_from(e.at("exec").get<std::string>());
    }
    if (j.contains("em")) {
        const Json& e = j.at("em");
        check_keys(e, "em", {"K", "max_iters", "loglik_tol", "min_cluster_mass"});
        cfg.em.K = e.value("K", cfg.em.K);
        cfg.em.max_iters = e.value("max_iters", cfg.em.max_iters);
        cfg.em.loglik_tol = e.value("loglik_tol", cfg.em.loglik_tol);
        cfg.em.min_cluster_mass = e.value("min_cluster_mass", cfg.em.min_cluster_mass);
    }
    if (j.contains("adv")) {
        const Json& e = j.at("adv");
        check_keys(e, "adv",
                   {"iters", "rollouts_per_iter", "disc_steps", "policy_steps", "disc_batch",
                    "disc_lr", "policy_lr", "clip", "entropy_bonus", "hidden"});
        cfg.adv.iters = e.value("iters", cfg.adv.iters);
        cfg.adv.rollouts_per_iter = e.value("rollouts_per_iter", cfg.adv.rollouts_per_iter);
        cfg.adv.disc_steps = e.value("disc_steps", cfg.adv.disc_steps);
        cfg.adv.policy_steps = e.value("policy_steps", cfg.adv.policy_steps);
        cfg.adv.disc_batch = e.value("disc_batch", cfg.adv.disc_batch);
        cfg.adv.disc_lr = e.value("disc_lr", cfg.adv.disc_lr);
        cfg.adv.policy_lr = e.value("policy_lr", cfg.adv.policy_lr);
        cfg.adv.clip = e.value("clip", cfg.adv.clip);
        cfg.adv.entropy_bonus = e.value("entropy_bonus", cfg.adv.entropy_bonus);
        cfg.adv.hidden = e.value("hidden", cfg.adv.hidden);
    }
    if (j.contains("cql")) {
        const Json& e = j.at("cql");
        check_keys(e, "cql",
                   {"alpha", "gamma", "mode", "lr", "sweeps", "epochs", "batch_size", "net_lr",
                    "hidden", "target_refresh", "exec"});
        cfg.cql.alpha = e.value("alpha", cfg.cql.alpha);
        cfg.cql.gamma = e.value("gamma", cfg.cql.gamma);
        if (e.contains("mode")) cfg.cql.mode = cql_mode_from(e.at("mode").get<std::string>());
        cfg.cql.lr = e.value("lr", cfg.cql.lr);
        cfg.cql.sweeps = e.value("sweeps", cfg.cql.sweeps);
        cfg.cql.epochs = e.value("epochs", cfg.cql.epochs);
        cfg.cql.batch_size = e.value("batch_size", cfg.cql.batch_size);
        cfg.cql.net_lr = e.value("net_lr", cfg.cql.net_lr);
        cfg.cql.hidden = e.value("hidden", cfg.cql.hidden);
        cfg.cql.target_refresh = e.value("target_refresh", cfg.cql.target_refresh);
        if (e.contains("exec")) cfg.cql.exec = exec_from(e.at("exec").get<std::string>());
    }
    if (j.contains("cql_t")) {
        const Json& e = j.at("cql_t");
        check_keys(e, "cql_t", {"kind", "time_penalty"});
        if (e.contains("kind")) cfg.cql_t_reward.kind = reward_kind_from(e.at("kind").get<std::string>());
        cfg.cql_t_reward.time_penalty = e.value("time_penalty", cfg.cql_t_reward.time_penalty);
    }
    cfg.em.edm = cfg.edm;
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
    Json j;
    j["seed"] = cfg.seed;
    j["tag"] = cfg.tag;
    j["jobs"] = cfg.jobs;
    j["folds"] = cfg.folds;
    j["per_intent"] = cfg.per_intent;
    j["temperature"] = cfg.temperature;
    if (!cfg.methods.empty()) j["methods"] = cfg.methods;
    if (!cfg.k_candidates.empty()) j["k_candidates"] = cfg.k_candidates;
    if (cfg.has_env) j["env"] = env_to_json(cfg.env);
    Json e;
    e["epochs"] = cfg.edm.epochs;
    e["batch_size"] = cfg.edm.batch_size;
    e["learning_rate"] = cfg.edm.learning_rate;
    e["sgld_steps"] = cfg.edm.sgld_steps;
    e["sgld_step_size"] = cfg.edm.sgld_step_size;
    e["sgld_noise"] = cfg.edm.sgld_noise;
    e["buffer_size"] = cfg.edm.buffer_size;
    e["reinit_prob"] = cfg.edm.reinit_prob;
    e["occupancy_weight"] = cfg.edm.occupancy_weight;
    e["hidden"] = cfg.edm.hidden;
    e["bc_loss"] = bc_loss_name(cfg.edm.bc_loss);
    e["exec"] = exec_name(cfg.edm.exec);
    j["edm"] = e;
    Json m;
    m["K"] = cfg.em.K;
    m["max_iters"] = cfg.em.max_iters;
    m["loglik_tol"] = cfg.em.loglik_tol;
    m["min_cluster_mass"] = cfg.em.min_cluster_mass;
    j["em"] = m;
    Json a;
    a["iters"] = cfg.adv.iters;
    a["rollouts_per_iter"] = cfg.adv.rollouts_per_iter;
    a["disc_steps"] = cfg.adv.disc_steps;
    a["policy_steps"] = cfg.adv.policy_steps;
    a["disc_batch"] = cfg.adv.disc_batch;
    a["disc_lr"] = cfg.adv.disc_lr;
    a["policy_lr"] = cfg.adv.policy_lr;
    a["clip"] = cfg.adv.clip;
    a["entropy_bonus"] = cfg.adv.entropy_bonus;
    a["hidden"] = cfg.adv.hidden;
    j["adv"] = a;
    Json q;
    q["alpha"] = cfg.cql.alpha;
    q["gamma"] = cfg.cql.gamma;
    q["mode"] = cql_mode_name(cfg.cql.mode);
    q["lr"] = cfg.cql.lr;
    q["sweeps"] = cfg.cql.sweeps;
    q["epochs"] = cfg.cql.epochs;
    q["batch_size"] = cfg.cql.batch_size;
    q["net_lr"] = cfg.cql.net_lr;
    q["hidden"] = cfg.cql.hidden;
    q["target_refresh"] = cfg.cql.target_refresh;
    q["exec"] = exec_name(cfg.cql.exec);
    j["cql"] = q;
    Json t;
    t["kind"] = reward_kind_name(cfg.cql_t_reward.kind);
    t["time_penalty"] = cfg.cql_t_reward.time_penalty;
    j["cql_t"] = t;
    write_json_atomic(j, path);
}

const std::vector<std::string>& all_method_names() {
    static const std::vector<std::string> names = {"bc",  "gail", "airl",  "cql",
                                                   "cql-t", "edm",  "em-edm"};
    return names;
}

std::vector<double> RawPolicyPredictor::predict_dist(const StateVec& s) {
    StateVec raw(s.size());
    for (std::size_t d = 0; d < s.size(); ++d) raw[d] = s[d] * stats_.stddev[d] + stats_.mean[d];
    return action_probs(model_, raw);
}

ClusterPredictor::ClusterPredictor(ClusterModel model) : model_(std::move(model)) {
    posterior_.emplace(model_);
}

void ClusterPredictor::begin_trajectory() { posterior_.emplace(model_); }

std::vector<double> ClusterPredictor::predict_dist(const StateVec& s) { return posterior_->dist(s); }

void ClusterPredictor::observe(const StateVec& s, ActionId a) { posterior_->observe(s, a); }

MethodHandle make_bc_handle(const RunConfig& cfg) {
    EdmConfig base = cfg.edm;
    return [base](const Dataset& train, const NormStats&, std::uint64_t seed) {
        EdmConfig c = base;
        c.seed = seed;
        return std::make_unique<PolicyPredictor>(train_bc(train, c).policy);
    };
}

MethodHandle make_edm_handle(const RunConfig& cfg) {
    EdmConfig base = cfg.edm;
    return [base](const Dataset& train, const NormStats&, std::uint64_t seed) {
        EdmConfig c = base;
        c.seed = seed;
        return std::make_unique<PolicyPredictor>(train_edm(train, c).policy);
    };
}

MethodHandle make_emedm_handle(const RunConfig& cfg) {
    EmConfig base = cfg.em;
    base.edm = cfg.edm;
    return [base](const Dataset& train, const NormStats&, std::uint64_t seed) {
        EmConfig c = base;
        c.seed = seed;
        c.edm.seed = derive_seed(seed, "edm");
        return std::make_unique<ClusterPredictor>(fit(train, c));
    };
}

MethodHandle make_gail_handle(const RunConfig& cfg) {
    EnvSpec env = cfg.env;
    AdvConfig base = cfg.adv;
    return [env, base](const Dataset& train, const NormStats& stats, std::uint64_t seed) {
        AdvConfig c = base;
        c.seed = seed;
        Dataset raw = invert_normalizer(train, stats);
        return std::make_unique<RawPolicyPredictor>(train_gail(env, raw, c).policy, stats);
    };
}

MethodHandle make_airl_handle(const RunConfig& cfg) {
    EnvSpec env = cfg.env;
    AdvConfig base = cfg.adv;
    return [env, base](const Dataset& train, const NormStats& stats, std::uint64_t seed) {
        AdvConfig c = base;
        c.seed = seed;
        Dataset raw = invert_normalizer(train, stats);
        return std::make_unique<RawPolicyPredictor>(train_airl(env, raw, c).policy, stats);
    };
}

MethodHandle make_cql_handle(const RunConfig& cfg, const RewardSpec& reward) {
    CqlConfig base = cfg.cql;
    base.mode = CqlMode::Continuous;  // feature-space prediction protocol
    return [base, reward](const Dataset& train, const NormStats&, std::uint64_t seed) {
        CqlConfig c = base;
        c.seed = seed;
        return std::make_unique<CqlPredictor>(cql_policy(train_cql(train, reward, c)));
    };
}

std::vector<MethodSpec> build_methods(const std::vector<std::string>& names, const RunConfig& cfg) {
    std::vector<MethodSpec> specs;
    for (const std::string& name : names) {
        if (name == "bc") {
            specs.push_back({name, make_bc_handle(cfg)});
        } else if (name == "edm") {
            specs.push_back({name, make_edm_handle(cfg)});
        } else if (name == "em-edm") {
            specs.push_back({name, make_emedm_handle(cfg)});
        } else if (name == "gail" || name == "airl") {
            if (!cfg.has_env)
                throw std::runtime_error("method '" + name +
                                         "' trains against a simulator; supply an environment "
                                         "spec (--env)");
            specs.push_back({name, name == "gail" ? make_gail_handle(cfg) : make_airl_handle(cfg)});
        } else if (name == "cql") {
            specs.push_back({name, make_cql_handle(cfg, RewardSpec{RewardKind::GroundTruth, 0.0})});
        } else if (name == "cql-t") {
            specs.push_back({name, make_cql_handle(cfg, cfg.cql_t_reward)});
        } else {
            throw std::runtime_error("unknown method '" + name +
                                     "' (known: bc, gail, airl, cql, cql-t, edm, em-edm)");
        }
    }
    return specs;
}

void synthesize_outcomes(Dataset& data) {
    bool missing = false;
    for (const Trajectory& t : data.trajectories)
        if (!t.meta.pretest || !t.meta.posttest) {
            missing = true;
            break;
        }
    if (!missing) return;
    const std::size_t n = data.size();
    std::vector<double> ret(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const Trajectory& t = data.trajectories[i];
        if (t.rewards.empty())
            throw std::runtime_error("cannot synthesize outcomes: trajectory " +
                                     std::to_string(i) + " carries no rewards");
        for (double r : t.rewards) ret[i] += r;
    }
    const double lo = *std::min_element(ret.begin(), ret.end());
    const double hi = *std::max_element(ret.begin(), ret.end());
    for (std::size_t i = 0; i < n; ++i) {
        data.trajectories[i].meta.pretest = 0.0;
        data.trajectories[i].meta.posttest = hi > lo ? (ret[i] - lo) / (hi - lo) : 0.5;
    }
}

namespace {

bool needs_outcomes(const std::vector<std::string>& names, const RunConfig& cfg) {
    for (const std::string& n : names)
        if (n == "cql-t" && cfg.cql_t_reward.kind != RewardKind::GroundTruth) return true;
    return false;
}

}  // namespace

Task1Result run_task1(const Dataset& data, const RunConfig& cfg) {
    const std::vector<std::string> names = cfg.methods.empty() ? all_method_names() : cfg.methods;
    Dataset d = data;
    if (needs_outcomes(names, cfg)) synthesize_outcomes(d);
    std::vector<MethodSpec> specs = build_methods(names, cfg);

    Task1Result res;
    std::vector<MethodHandle> handles;
    for (MethodSpec& s : specs) {
        res.method_names.push_back(s.name);
        handles.push_back(std::move(s.handle));
    }
    res.reports = cross_validate(handles, d, cfg.folds, cfg.seed, cfg.jobs);

    if (res.method_names.size() >= 2) {
        std::vector<std::vector<double>> acc(res.reports.size());
        for (std::size_t m = 0; m < res.reports.size(); ++m)
            for (const EvalReport& r : res.reports[m]) acc[m].push_back(r.acc);
        res.ranks = conover(acc);
    } else {
        res.ranks.mean_ranks.assign(res.method_names.size(), 1.0);
        res.ranks.pairwise_p.assign(res.method_names.size(),
                                    std::vector<double>(res.method_names.size(), 1.0));
    }
    return res;
}

void write_task1_reports(const Task1Result& res, const std::string& dir) {
    write_results_csv(res.method_names, res.reports, dir + "/results.csv");
    if (res.method_names.size() >= 2)
        write_rank_report(res.method_names, res.ranks, dir + "/rank_report.csv");
    const std::string path = dir + "/summary.csv";
    const std::string tmp = path + ".tmp";
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << "method,acc_mean,acc_std,rec_mean,rec_std,prec_mean,prec_std,f1_mean,f1_std,"
           "auc_mean,auc_std,apr_mean,apr_std,jaccard_mean,jaccard_std\n";
    for (std::size_t m = 0; m < res.method_names.size(); ++m) {
        const EvalReport mean = report_mean(res.reports[m]);
        const EvalReport sd = report_std(res.reports[m]);
        out << res.method_names[m] << ',' << fmt(mean.acc) << ',' << fmt(sd.acc) << ','
            << fmt(mean.rec) << ',' << fmt(sd.rec) << ',' << fmt(mean.prec) << ',' << fmt(sd.prec)
            << ',' << fmt(mean.f1) << ',' << fmt(sd.f1) << ',' << fmt(mean.auc) << ','
            << fmt(sd.auc) << ',' << fmt(mean.apr) << ',' << fmt(sd.apr) << ','
            << fmt(mean.jaccard) << ',' << fmt(sd.jaccard) << "\n";
    }
    out.close();
    if (!out) throw std::runtime_error("write failed: " + tmp);
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp);
}

int assign_cluster(const ClusterModel& clusters, const Trajectory& traj, const NormStats& stats) {
    PrefixPosterior posterior(clusters);
    for (const Step& st : traj.steps) {
        StateVec s = st.state;
        for (std::size_t d = 0; d < s.size(); ++d) s[d] = (s[d] - stats.mean[d]) / stats.stddev[d];
        posterior.observe(s, st.action);
    }
    const std::vector<double> w = posterior.cluster_weights();
    return static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
}

Task2Result run_task2(const Dataset& train_data, const Dataset& test_data, const RunConfig& cfg) {
    const std::vector<std::string> names = cfg.methods.empty() ? all_method_names() : cfg.methods;
    Dataset a = train_data;
    Dataset b = test_data;
    if (needs_outcomes(names, cfg)) {
        synthesize_outcomes(a);
        synthesize_outcomes(b);
    }
    std::vector<MethodSpec> specs = build_methods(names, cfg);

    Task2Result res;
    const std::uint64_t root = derive_seed(cfg.seed, "task2");
    for (std::size_t m = 0; m < specs.size(); ++m) {
        res.method_names.push_back(specs[m].name);
        res.reports.push_back(evaluate_method(specs[m].handle, a, b, derive_seed(root, m)));
    }

    const NormStats stats = fit_normalizer(a);
    Dataset an = apply_normalizer(a, stats);
    EmConfig ec = cfg.em;
    ec.edm = cfg.edm;
    ec.seed = derive_seed(cfg.seed, "task2_cluster");
    ec.edm.seed = derive_seed(ec.seed, "edm");
    res.clusters = fit(an, ec);

    res.train_counts.assign(res.clusters.K, 0);
    res.test_counts.assign(res.clusters.K, 0);
    for (const std::vector<double>& row : res.clusters.u)
        ++res.train_counts[std::max_element(row.begin(), row.end()) - row.begin()];
    for (const Trajectory& t : b.trajectories)
        ++res.test_counts[assign_cluster(res.clusters, t, stats)];

    std::vector<std::vector<double>> table(2);
    for (int k = 0; k < res.clusters.K; ++k) {
        if (res.train_counts[k] + res.test_counts[k] == 0) continue;
        table[0].push_back(static_cast<double>(res.train_counts[k]));
        table[1].push_back(static_cast<double>(res.test_counts[k]));
    }
    if (table[0].size() >= 2) {
        res.chi2 = chi2_homogeneity(table);
        res.chi2_valid = true;
    }
    return res;
}

void write_task2_reports(const Task2Result& res, const std::string& dir) {
    std::vector<std::vector<EvalReport>> wrapped;
    for (const EvalReport& r : res.reports) wrapped.push_back({r});
    write_results_csv(res.method_names, wrapped, dir + "/results.csv");

    {
        const std::string path = dir + "/cluster_distribution.csv";
        const std::string tmp = path + ".tmp";
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << "cluster,cohort_a,cohort_b\n";
        for (int k = 0; k < res.clusters.K; ++k)
            out << k << ',' << res.train_counts[k] << ',' << res.test_counts[k] << "\n";
        out.close();
        if (!out) throw std::runtime_error("write failed: " + tmp);
        if (std::rename(tmp.c_str(), path.c_str()) != 0)
            throw std::runtime_error("cannot rename " + tmp);
    }
    {
        const std::string path = dir + "/chi2.csv";
        const std::string tmp = path + ".tmp";
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << "stat,df,p,valid\n";
        out << fmt(res.chi2.stat) << ',' << res.chi2.df << ',' << fmt(res.chi2.p) << ','
            << (res.chi2_valid ? 1 : 0) << "\n";
        out.close();
        if (!out) throw std::runtime_error("write failed: " + tmp);
        if (std::rename(tmp.c_str(), path.c_str()) != 0)
            throw std::runtime_error("cannot rename " + tmp);
    }
}

void save_norm_stats(const NormStats& stats, const std::string& path) {
    Json j;
    j["mean"] = stats.mean;
    j["stddev"] = stats.stddev;
    write_json_atomic(j, path);
}

NormStats load_norm_stats(const std::string& path) {
    const Json j = read_json(path);
    NormStats stats;
    stats.mean = j.at("mean").get<std::vector<double>>();
    stats.stddev = j.at("stddev").get<std::vector<double>>();
    if (stats.mean.size() != stats.stddev.size())
        throw std::runtime_error("normalizer arrays disagree in " + path);
    return stats;
}

void save_qtable(const QTable& q, const std::string& path) {
    Json j;
    j["tabular"] = q.tabular;
    j["S"] = q.S;
    j["A"] = q.A;
    j["gamma"] = q.gamma;
    j["alpha"] = q.alpha;
    if (q.tabular) {
        j["table"] = q.table;
    } else {
        Json n;
        n["m"] = q.net.m;
        n["A"] = q.net.A;
        n["H"] = q.net.H;
        n["params"] = q.net.params;
        j["net"] = n;
    }
    write_json_atomic(j, path);
}

QTable load_qtable(const std::string& path) {
    const Json j = read_json(path);
    QTable q;
    q.tabular = j.at("tabular").get<bool>();
    q.S = j.at("S").get<int>();
    q.A = j.at("A").get<int>();
    q.gamma = j.at("gamma").get<double>();
    q.alpha = j.at("alpha").get<double>();
    if (q.tabular) {
        q.table = j.at("table").get<std::vector<std::vector<double>>>();
    } else {
        const Json& n = j.at("net");
        q.net = PolicyModel(n.at("m").get<int>(), n.at("A").get<int>(), n.at("H").get<int>());
        q.net.params = n.at("params").get<std::vector<double>>();
        if (q.net.params.size() != PolicyModel(q.net.m, q.net.A, q.net.H).params.size())
            throw std::runtime_error("parameter vector size mismatch in " + path);
    }
    return q;
}

void save_discriminator(const Discriminator& disc, const std::string& path) {
    Json j;
    j["in"] = disc.in;
    j["H"] = disc.H;
    j["params"] = disc.params;
    write_json_atomic(j, path);
}

Discriminator load_discriminator(const std::string& path) {
    const Json j = read_json(path);
    Discriminator disc(j.at("in").get<int>(), j.at("H").get<int>());
    disc.params = j.at("params").get<std::vector<double>>();
    if (disc.params.size() != Discriminator(disc.in, disc.H).params.size())
        throw std::runtime_error("parameter vector size mismatch in " + path);
    return disc;
}

}  // namespace emedm
