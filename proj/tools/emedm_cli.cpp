#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "emedm/baselines.hpp"
#include "emedm/dataset.hpp"
#include "emedm/emedm.hpp"
#include "emedm/envgen.hpp"
#include "emedm/eval.hpp"
#include "emedm/experiments.hpp"
#include "emedm/ingest.hpp"
#include "emedm/rng.hpp"

namespace fs = std::filesystem;
using namespace emedm;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::string env;
    std::uint64_t seed = 0;
    int jobs = 0;
    bool force = false;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* jobs_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c, bool with_env) {
    sub->add_option("--config", c.config, "JSON run configuration");
    c.seed_opt = sub->add_option("--seed", c.seed, "Override the config seed");
    c.jobs_opt = sub->add_option("--jobs", c.jobs, "Concurrent fold x method jobs");
    sub->add_option("--out", c.out, "Run directory (default runs/<timestamp>-<tag>)");
    sub->add_flag("--force", c.force, "Write into an existing non-empty directory");
    if (with_env) sub->add_option("--env", c.env, "Environment spec JSON for simulator-backed methods");
}

RunConfig resolve_config(const Common& c) {
    RunConfig cfg = c.config.empty() ? default_run_config() : load_run_config(c.config);
    if (c.seed_opt != nullptr && c.seed_opt->count() > 0) cfg.seed = c.seed;
    if (c.jobs_opt != nullptr && c.jobs_opt->count() > 0) cfg.jobs = c.jobs;
    if (!c.env.empty()) {
        cfg.env = load_env_spec(c.env);
        cfg.has_env = true;
    }
    cfg.em.edm = cfg.edm;
    return cfg;
}

std::string make_run_dir(const std::string& requested, const std::string& tag, bool force) {
    std::string dir = requested;
    if (dir.empty()) {
        std::time_t now = std::time(nullptr);
        char stamp[32];
        std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::gmtime(&now));
        const std::string base = std::string("runs/") + stamp + "-" + tag;
        dir = base;
        int n = 2;
        while (fs::exists(dir)) dir = base + "-" + std::to_string(n++);
    } else if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
        throw std::runtime_error("output directory " + dir + " is not empty; pass --force to reuse");
    }
    fs::create_directories(dir + "/models");
    fs::create_directories(dir + "/reports");
    return dir;
}

void write_text_atomic(const std::string& text, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << text;
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

void write_em_history(const ClusterModel& cm, const std::string& path) {
    std::string text = "iter,total_loglik,sum_log_u\n";
    for (std::size_t i = 0; i < cm.loglik_history.size(); ++i) {
        text += std::to_string(i) + "," + fmt(cm.loglik_history[i]) + "," +
                fmt(i < cm.sum_log_u_history.size() ? cm.sum_log_u_history[i] : 0.0) + "\n";
    }
    write_text_atomic(text, path);
}

void write_manifest(const std::string& method, const std::string& model, const std::string& space,
                    const std::string& path) {
    nlohmann::ordered_json j;
    j["method"] = method;
    j["model"] = model;
    j["space"] = space;
    write_text_atomic(j.dump(2) + "\n", path);
}

void print_report(const std::string& name, const EvalReport& r) {
    std::cout << name << ": acc " << r.acc << ", rec " << r.rec << ", prec " << r.prec << ", f1 "
              << r.f1 << ", auc " << r.auc << ", apr " << r.apr << ", jaccard " << r.jaccard
              << "\n";
}

int cmd_gen(const Common& common) {
    RunConfig cfg = resolve_config(common);
    cfg.has_env = true;
    const std::string dir = make_run_dir(common.out, cfg.tag, common.force);
    if (fs::exists(dir + "/data.csv") && !common.force)
        throw std::runtime_error(dir + "/data.csv exists; pass --force to overwrite");
    LabeledDataset data = sample_dataset(cfg.env, cfg.per_intent, cfg.temperature, cfg.seed);
    write_logs(data, dir + "/data.csv");
    save_env_spec(cfg.env, dir + "/env.json");
    save_run_config(cfg, dir + "/config.json");
    std::cout << "wrote " << data.size() << " trajectories (" << data.total_steps() << " steps) to "
              << dir << "/data.csv\n";
    return 0;
}

int cmd_select(const Common& common, const std::string& input) {
    RunConfig cfg = resolve_config(common);
    Dataset data = parse_logs(input);
    QlgReport report = qlg_report(data);
    Dataset good = select_good(data);
    const std::string dir = make_run_dir(common.out, cfg.tag, common.force);
    write_qlg_report(report, dir + "/reports/qlg_report.csv");
    write_logs(good, dir + "/good.csv");
    save_run_config(cfg, dir + "/config.json");
    if (good.size() == 0) std::cerr << "warning: no high-QLG trajectories in " << input << "\n";
    std::cout << "selected " << good.size() << " of " << data.size() << " trajectories into " << dir
              << "/good.csv\n";
    return 0;
}

int cmd_train(const Common& common, const std::string& method, const std::string& data_path) {
    RunConfig cfg = resolve_config(common);
    Dataset data = parse_logs(data_path);
    const std::string dir = make_run_dir(common.out, cfg.tag, common.force);
    const NormStats stats = fit_normalizer(data);
    Dataset train = apply_normalizer(data, stats);
    save_norm_stats(stats, dir + "/models/normalizer.json");
    const std::uint64_t seed = derive_seed(cfg.seed, "train");

    if (method == "bc" || method == "edm") {
        EdmConfig c = cfg.edm;
        c.seed = seed;
        EdmResult r = method == "bc" ? train_bc(train, c) : train_edm(train, c);
        save_policy(r.policy, dir + "/models/policy.json");
        write_curve_csv(r.curve, dir + "/reports/curve.csv");
        write_manifest(method, "policy.json", "normalized", dir + "/models/manifest.json");
    } else if (method == "em-edm") {
        EmConfig c = cfg.em;
        c.edm = cfg.edm;
        c.seed = seed;
        c.edm.seed = derive_seed(seed, "edm");
        if (!cfg.k_candidates.empty()) {
            c.K = select_k(train, cfg.k_candidates, c);
            std::cout << "select_k chose K = " << c.K << "\n";
        }
        ClusterModel cm = fit(train, c);
        save_cluster_model(cm, dir + "/models/cluster.json");
        write_cluster_report(cm, train, dir + "/reports/clusters.csv");
        write_em_history(cm, dir + "/reports/em_loglik.csv");
        write_manifest(method, "cluster.json", "normalized", dir + "/models/manifest.json");
        std::cout << "fitted " << cm.K << " clusters over " << train.size() << " trajectories\n";
    } else if (method == "gail" || method == "airl") {
        if (!cfg.has_env)
            throw std::runtime_error("method '" + method +
                                     "' trains against a simulator; supply an environment spec "
                                     "(--env)");
        AdvConfig c = cfg.adv;
        c.seed = seed;
        PolicyModel policy;
        Discriminator disc;
        std::vector<CurvePoint> curve;
        if (method == "gail") {
            GailResult r = train_gail(cfg.env, data, c);
            policy = std::move(r.policy);
            disc = std::move(r.disc);
            curve = std::move(r.curve);
        } else {
            AirlResult r = train_airl(cfg.env, data, c);
            policy = std::move(r.policy);
            disc = std::move(r.disc);
            curve = std::move(r.curve);
        }
        save_policy(policy, dir + "/models/policy.json");
        save_discriminator(disc, dir + "/models/discriminator.json");
        write_curve_csv(curve, dir + "/reports/curve.csv");
        write_manifest(method, "policy.json", "raw", dir + "/models/manifest.json");
    } else if (method == "cql" || method == "cql-t") {
        const RewardSpec reward =
            method == "cql" ? RewardSpec{RewardKind::GroundTruth, 0.0} : cfg.cql_t_reward;
        if (reward.kind != RewardKind::GroundTruth) synthesize_outcomes(train);
        CqlConfig c = cfg.cql;
        c.seed = seed;
        if (c.mode == CqlMode::Auto) c.mode = CqlMode::Continuous;
        QTable q = train_cql(train, reward, c);
        save_qtable(q, dir + "/models/qtable.json");
        write_curve_csv(q.curve, dir + "/reports/curve.csv");
        write_manifest(method, "qtable.json", "normalized", dir + "/models/manifest.json");
    } else {
        throw std::runtime_error("unknown method '" + method +
                                 "' (known: bc, gail, airl, cql, cql-t, edm, em-edm)");
    }
    save_run_config(cfg, dir + "/config.json");
    std::cout << "trained " << method << " on " << train.size() << " trajectories; models in "
              << dir << "/models\n";
    return 0;
}

int cmd_eval(const Common& common, const std::string& run_dir, const std::string& test_path) {
    RunConfig cfg = resolve_config(common);
    std::ifstream mf(run_dir + "/models/manifest.json");
    if (!mf) throw std::runtime_error("cannot read " + run_dir + "/models/manifest.json");
    nlohmann::json manifest;
    mf >> manifest;
    const std::string method = manifest.at("method").get<std::string>();
    const std::string model_file = manifest.at("model").get<std::string>();
    const std::string space = manifest.at("space").get<std::string>();

    const NormStats stats = load_norm_stats(run_dir + "/models/normalizer.json");
    Dataset test = parse_logs(test_path);

    std::unique_ptr<TrainedPredictor> predictor;
    const std::string model_path = run_dir + "/models/" + model_file;
    if (model_file == "cluster.json") {
        predictor = std::make_unique<ClusterPredictor>(load_cluster_model(model_path));
    } else if (model_file == "qtable.json") {
        QTable q = load_qtable(model_path);
        if (q.tabular)
            throw std::runtime_error("tabular Q-table cannot run the feature-space protocol");
        predictor = std::make_unique<CqlPredictor>(cql_policy(std::move(q)));
    } else {
        PolicyModel policy = load_policy(model_path);
        if (space == "raw")
            predictor = std::make_unique<RawPolicyPredictor>(std::move(policy), stats);
        else
            predictor = std::make_unique<PolicyPredictor>(std::move(policy));
    }

    const EvalReport r = evaluate_predictor(*predictor, test, stats);
    const std::string dir = make_run_dir(common.out, cfg.tag, common.force);
    write_results_csv({method}, {{r}}, dir + "/reports/eval.csv");
    save_run_config(cfg, dir + "/config.json");
    print_report(method, r);
    return 0;
}

int cmd_task1(const Common& common, const std::string& data_path) {
    RunConfig cfg = resolve_config(common);
    Dataset data = parse_logs(data_path);
    const std::string dir = make_run_dir(common.out, cfg.tag, common.force);
    Task1Result res = run_task1(data, cfg);
    write_task1_reports(res, dir + "/reports");
    save_run_config(cfg, dir + "/config.json");
    for (std::size_t m = 0; m < res.method_names.size(); ++m) {
        const EvalReport mean = report_mean(res.reports[m]);
        const EvalReport sd = report_std(res.reports[m]);
        std::cout << res.method_names[m] << ": acc " << mean.acc << " (" << sd.acc << "), auc "
                  << mean.auc << " (" << sd.auc << ")\n";
    }
    if (res.method_names.size() >= 2)
        std::cout << "friedman stat " << res.ranks.friedman_stat << ", p " << res.ranks.p_value
                  << "\n";
    std::cout << "reports in " << dir << "/reports\n";
    return 0;
}

int cmd_task2(const Common& common, const std::string& train_path, const std::string& test_path) {
    RunConfig cfg = resolve_config(common);
    Dataset train = parse_logs(train_path);
    Dataset test = parse_logs(test_path);
    const std::string dir = make_run_dir(common.out, cfg.tag, common.force);
    Task2Result res = run_task2(train, test, cfg);
    write_task2_reports(res, dir + "/reports");
    save_cluster_model(res.clusters, dir + "/models/cluster.json");
    save_run_config(cfg, dir + "/config.json");
    for (std::size_t m = 0; m < res.method_names.size(); ++m)
        print_report(res.method_names[m], res.reports[m]);
    if (res.chi2_valid)
        std::cout << "cluster distribution chi2 " << res.chi2.stat << ", df " << res.chi2.df
                  << ", p " << res.chi2.p << "\n";
    else
        std::cout << "cluster distribution chi2 skipped (fewer than 2 occupied clusters)\n";
    std::cout << "reports in " << dir << "/reports\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EM-EDM: multi-intention offline imitation learning"};
    app.require_subcommand(1);

    Common gen_c, select_c, train_c, eval_c, task1_c, task2_c;
    std::string select_input, train_method, train_data, eval_run, eval_test, task1_data,
        task2_train, task2_test;

    CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic labeled dataset");
    add_common(gen, gen_c, false);

    CLI::App* select = app.add_subcommand("select", "QLG-filter trajectories to the high-gain cohort");
    select->add_option("input", select_input, "Trajectory log CSV")->required();
    add_common(select, select_c, false);

    CLI::App* train = app.add_subcommand("train", "Train one method on a trajectory log");
    train->add_option("method", train_method, "bc, gail, airl, cql, cql-t, edm or em-edm")
        ->required();
    train->add_option("data", train_data, "Trajectory log CSV")->required();
    add_common(train, train_c, true);

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a trained run directory on held-out data");
    eval->add_option("run", eval_run, "Run directory produced by train")->required();
    eval->add_option("data", eval_test, "Held-out trajectory log CSV")->required();
    add_common(eval, eval_c, false);

    CLI::App* task1 = app.add_subcommand("task1", "Cross-validated method comparison with ranks");
    task1->add_option("data", task1_data, "Trajectory log CSV")->required();
    add_common(task1, task1_c, true);

    CLI::App* task2 = app.add_subcommand("task2", "Cross-cohort transfer and cluster distribution");
    task2->add_option("train", task2_train, "Training cohort CSV")->required();
    task2->add_option("test", task2_test, "Held-out cohort CSV")->required();
    add_common(task2, task2_c, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(gen_c);
        if (select->parsed()) return cmd_select(select_c, select_input);
        if (train->parsed()) return cmd_train(train_c, train_method, train_data);
        if (eval->parsed()) return cmd_eval(eval_c, eval_run, eval_test);
        if (task1->parsed()) return cmd_task1(task1_c, task1_data);
        if (task2->parsed()) return cmd_task2(task2_c, task2_train, task2_test);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
