#include "emedm/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <thread>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "emedm/rng.hpp"

namespace emedm {

namespace {

// Midranks for a score vector: ties share the average of their positions.
std::vector<double> midranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

// One-vs-rest ROC AUC from midranks of the positive class scores.
double auc_binary(const std::vector<double>& scores, const std::vector<char>& positive) {
    std::size_t p = 0;
    for (char c : positive) p += c ? 1u : 0u;
    const std::size_t neg = scores.size() - p;
    if (p == 0 || neg == 0) return 0.0;
    const std::vector<double> ranks = midranks(scores);
    double ranksum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (positive[i]) ranksum += ranks[i];
    const double pd = static_cast<double>(p);
    return (ranksum - pd * (pd + 1.0) / 2.0) / (pd * static_cast<double>(neg));
}

// Average precision with tied scores handled as one group: precision after the
// group weighted by the true positives the group contributed.
double apr_binary(const std::vector<double>& scores, const std::vector<char>& positive) {
    std::size_t p = 0;
    for (char c : positive) p += c ? 1u : 0u;
    if (p == 0) return 0.0;
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0;
    double tp = 0.0, total = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        double dtp = positive[order[i]] ? 1.0 : 0.0;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) {
            ++j;
            if (positive[order[j]]) dtp += 1.0;
        }
        tp += dtp;
        total += static_cast<double>(j - i + 1);
        ap += dtp * (tp / total);
        i = j + 1;
    }
    return ap / static_cast<double>(p);
}

struct Job {
    int method = 0;
    int fold = 0;
};

}  // namespace

EvalReport metrics(const std::vector<ActionId>& y_true, const std::vector<ActionId>& y_pred,
                   const std::vector<std::vector<double>>& y_score) {
    const std::size_t n = y_true.size();
    if (n == 0) throw std::invalid_argument("metrics: empty labels");
    if (y_pred.size() != n || y_score.size() != n)
        throw std::invalid_argument("metrics: length mismatch");
    std::set<ActionId> class_set(y_true.begin(), y_true.end());
    class_set.insert(y_pred.begin(), y_pred.end());
    const std::vector<ActionId> classes(class_set.begin(), class_set.end());

    EvalReport r;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += y_true[i] == y_pred[i] ? 1u : 0u;
    r.acc = static_cast<double>(correct) / static_cast<double>(n);

    double prec = 0.0, rec = 0.0, f1 = 0.0, jac = 0.0, auc = 0.0, apr = 0.0;
    for (ActionId c : classes) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool t = y_true[i] == c, p = y_pred[i] == c;
            tp += (t && p) ? 1u : 0u;
            fp += (!t && p) ? 1u : 0u;
            fn += (t && !p) ? 1u : 0u;
        }
        const double tpd = static_cast<double>(tp);
        const double pc = tp + fp > 0 ? tpd / static_cast<double>(tp + fp) : 0.0;
        const double rc = tp + fn > 0 ? tpd / static_cast<double>(tp + fn) : 0.0;
        prec += pc;
        rec += rc;
        f1 += pc + rc > 0.0 ? 2.0 * pc * rc / (pc + rc) : 0.0;
        jac += tp + fp + fn > 0 ? tpd / static_cast<double>(tp + fp + fn) : 0.0;

        std::vector<double> sc(n);
        std::vector<char> pos(n);
        for (std::size_t i = 0; i < n; ++i) {
            sc[i] = static_cast<std::size_t>(c) < y_score[i].size() ? y_score[i][c] : 0.0;
            pos[i] = y_true[i] == c ? 1 : 0;
        }
        auc += auc_binary(sc, pos);
        apr += apr_binary(sc, pos);
    }
    const double k = static_cast<double>(classes.size());
    r.prec = prec / k;
    r.rec = rec / k;
    r.f1 = f1 / k;
    r.jaccard = jac / k;
    r.auc = auc / k;
    r.apr = apr / k;
    return r;
}

EvalReport evaluate_predictor(TrainedPredictor& predictor, const Dataset& test,
                              const NormStats& stats) {
    std::vector<ActionId> y_true, y_pred;
    std::vector<std::vector<double>> y_score;
    for (const Trajectory& traj : test.trajectories) {
        predictor.begin_trajectory();
        for (const Step& st : traj.steps) {
            StateVec s = st.state;
            for (std::size_t d = 0; d < s.size(); ++d) s[d] = (s[d] - stats.mean[d]) / stats.stddev[d];
            std::vector<double> dist = predictor.predict_dist(s);
            if (dist.size() != static_cast<std::size_t>(test.A))
                throw std::runtime_error("evaluate_predictor: predictor returned wrong arity");
            const ActionId pred = static_cast<ActionId>(
                std::max_element(dist.begin(), dist.end()) - dist.begin());
            y_true.push_back(st.action);
            y_pred.push_back(pred);
            y_score.push_back(std::move(dist));
            predictor.observe(s, st.action);
        }
    }
    return metrics(y_true, y_pred, y_score);
}

EvalReport evaluate_method(const MethodHandle& method, const Dataset& train, const Dataset& test,
                           std::uint64_t seed) {
    const NormStats stats = fit_normalizer(train);
    Dataset train_norm = apply_normalizer(train, stats);
    auto predictor = method(train_norm, stats, seed);
    return evaluate_predictor(*predictor, test, stats);
}

std::vector<std::vector<EvalReport>> cross_validate(const std::vector<MethodHandle>& methods,
                                                    const Dataset& data, int k, std::uint64_t seed,
                                                    int jobs) {
    if (k < 2) throw std::invalid_argument("cross_validate: k must be >= 2");
    if (jobs < 1) jobs = 1;
    const std::vector<Fold> folds = kfold_split(data, k, derive_seed(seed, "folds"));
    std::vector<std::vector<EvalReport>> out(methods.size(),
                                             std::vector<EvalReport>(folds.size()));

    std::vector<Job> queue;
    for (std::size_t mi = 0; mi < methods.size(); ++mi)
        for (std::size_t fi = 0; fi < folds.size(); ++fi)
            queue.push_back({static_cast<int>(mi), static_cast<int>(fi)});

    std::atomic<std::size_t> next{0};
    std::vector<std::string> errors(queue.size());
    auto worker = [&]() {
        for (;;) {
            const std::size_t qi = next.fetch_add(1);
            if (qi >= queue.size()) return;
            const Job job = queue[qi];
            const std::uint64_t job_seed = derive_seed(
                seed, (static_cast<std::uint64_t>(job.method) << 32) |
                          static_cast<std::uint32_t>(job.fold));
            try {
                out[job.method][job.fold] = evaluate_method(
                    methods[job.method], folds[job.fold].train, folds[job.fold].test, job_seed);
            } catch (const std::exception& e) {
                errors[qi] = e.what();
            }
        }
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int nthreads = std::min<int>(jobs, static_cast<int>(queue.size()));
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const std::string& e : errors)
        if (!e.empty()) throw std::runtime_error("cross_validate: " + e);
    return out;
}

EvalReport report_mean(const std::vector<EvalReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("report_mean: empty");
    EvalReport m;
    for (const EvalReport& r : reports) {
        m.acc += r.acc;
        m.prec += r.prec;
        m.rec += r.rec;
        m.f1 += r.f1;
        m.auc += r.auc;
        m.apr += r.apr;
        m.jaccard += r.jaccard;
    }
    const double n = static_cast<double>(reports.size());
    m.acc /= n;
    m.prec /= n;
    m.rec /= n;
    m.f1 /= n;
    m.auc /= n;
    m.apr /= n;
    m.jaccard /= n;
    return m;
}

EvalReport report_std(const std::vector<EvalReport>& reports) {
    const EvalReport m = report_mean(reports);
    EvalReport s;
    if (reports.size() < 2) return s;
    for (const EvalReport& r : reports) {
        s.acc += (r.acc - m.acc) * (r.acc - m.acc);
        s.prec += (r.prec - m.prec) * (r.prec - m.prec);
        s.rec += (r.rec - m.rec) * (r.rec - m.rec);
        s.f1 += (r.f1 - m.f1) * (r.f1 - m.f1);
        s.auc += (r.auc - m.auc) * (r.auc - m.auc);
        s.apr += (r.apr - m.apr) * (r.apr - m.apr);
        s.jaccard += (r.jaccard - m.jaccard) * (r.jaccard - m.jaccard);
    }
    const double n = static_cast<double>(reports.size() - 1);
    s.acc = std::sqrt(s.acc / n);
    s.prec = std::sqrt(s.prec / n);
    s.rec = std::sqrt(s.rec / n);
    s.f1 = std::sqrt(s.f1 / n);
    s.auc = std::sqrt(s.auc / n);
    s.apr = std::sqrt(s.apr / n);
    s.jaccard = std::sqrt(s.jaccard / n);
    return s;
}

namespace {

struct FriedmanParts {
    int k = 0;          // methods
    int n = 0;          // datasets
    double a1 = 0.0;    // sum of squared ranks
    double c1 = 0.0;    // n k (k+1)^2 / 4
    double t1 = 0.0;    // friedman statistic
    std::vector<double> rank_sums;
};

FriedmanParts rank_parts(const std::vector<std::vector<double>>& scores) {
    FriedmanParts fp;
    fp.k = static_cast<int>(scores.size());
    if (fp.k < 2) throw std::invalid_argument("friedman: need at least 2 methods");
    fp.n = static_cast<int>(scores[0].size());
    for (const auto& row : scores)
        if (static_cast<int>(row.size()) != fp.n)
            throw std::invalid_argument("friedman: ragged score matrix");
    if (fp.n < 2) throw std::invalid_argument("friedman: need at least 2 datasets");

    fp.rank_sums.assign(fp.k, 0.0);
    std::vector<double> col(fp.k);
    for (int d = 0; d < fp.n; ++d) {
        for (int m = 0; m < fp.k; ++m) col[m] = scores[m][d];
        const std::vector<double> r = midranks(col);
        for (int m = 0; m < fp.k; ++m) {
            fp.rank_sums[m] += r[m];
            fp.a1 += r[m] * r[m];
        }
    }
    const double n = fp.n, k = fp.k;
    fp.c1 = n * k * (k + 1.0) * (k + 1.0) / 4.0;
    double num = 0.0;
    for (int m = 0; m < fp.k; ++m) {
        const double dev = fp.rank_sums[m] - n * (k + 1.0) / 2.0;
        num += dev * dev;
    }
    if (fp.a1 == fp.c1) {
        fp.t1 = 0.0;
    } else {
        fp.t1 = (k - 1.0) * num / (fp.a1 - fp.c1);
    }
    return fp;
}

}  // namespace

std::pair<double, double> friedman(const std::vector<std::vector<double>>& scores) {
    const FriedmanParts fp = rank_parts(scores);
    if (fp.a1 == fp.c1) return {0.0, 1.0};
    boost::math::chi_squared dist(fp.k - 1);
    const double p = boost::math::cdf(boost::math::complement(dist, fp.t1));
    return {fp.t1, p};
}

RankResult conover(const std::vector<std::vector<double>>& scores) {
    const FriedmanParts fp = rank_parts(scores);
    RankResult out;
    out.friedman_stat = fp.t1;
    if (fp.a1 == fp.c1) {
        out.p_value = 1.0;
    } else {
        boost::math::chi_squared cdist(fp.k - 1);
        out.p_value = boost::math::cdf(boost::math::complement(cdist, fp.t1));
    }
    out.mean_ranks.resize(fp.k);
    for (int m = 0; m < fp.k; ++m) out.mean_ranks[m] = fp.rank_sums[m] / fp.n;

    const double n = fp.n, k = fp.k;
    const double a = 2.0 * n * (fp.a1 - fp.c1) / ((n - 1.0) * (k - 1.0));
    const double b = 1.0 - fp.t1 / (n * (k - 1.0));
    const double df = (n - 1.0) * (k - 1.0);
    boost::math::students_t tdist(df);

    out.pairwise_p.assign(fp.k, std::vector<double>(fp.k, 1.0));
    for (int i = 0; i < fp.k; ++i) {
        for (int j = i + 1; j < fp.k; ++j) {
            const double diff = std::fabs(fp.rank_sums[i] - fp.rank_sums[j]);
            double p;
            if (diff == 0.0) {
                p = 1.0;
            } else if (b <= 0.0 || a <= 0.0) {
                p = 0.0;
            } else {
                const double t = diff / std::sqrt(a * b);
                p = 2.0 * boost::math::cdf(boost::math::complement(tdist, t));
                p = std::min(p, 1.0);
            }
            out.pairwise_p[i][j] = p;
            out.pairwise_p[j][i] = p;
        }
    }
    return out;
}

Chi2Result chi2_homogeneity(const std::vector<std::vector<double>>& table) {
    const int nrows = static_cast<int>(table.size());
    if (nrows < 2) throw std::invalid_argument("chi2_homogeneity: need at least 2 rows");
    const int ncols = static_cast<int>(table[0].size());
    if (ncols < 2) throw std::invalid_argument("chi2_homogeneity: need at least 2 columns");
    for (const auto& row : table)
        if (static_cast<int>(row.size()) != ncols)
            throw std::invalid_argument("chi2_homogeneity: ragged table");

    std::vector<double> row_sum(nrows, 0.0), col_sum(ncols, 0.0);
    double total = 0.0;
    for (int r = 0; r < nrows; ++r) {
        for (int c = 0; c < ncols; ++c) {
            if (table[r][c] < 0.0) throw std::invalid_argument("chi2_homogeneity: negative count");
            row_sum[r] += table[r][c];
            col_sum[c] += table[r][c];
            total += table[r][c];
        }
    }
    if (total <= 0.0) throw std::invalid_argument("chi2_homogeneity: empty table");

    Chi2Result res;
    res.df = (nrows - 1) * (ncols - 1);
    for (int r = 0; r < nrows; ++r) {
        for (int c = 0; c < ncols; ++c) {
            const double expect = row_sum[r] * col_sum[c] / total;
            if (expect <= 0.0) continue;
            const double d = table[r][c] - expect;
            res.stat += d * d / expect;
        }
    }
    boost::math::chi_squared dist(res.df);
    res.p = boost::math::cdf(boost::math::complement(dist, res.stat));
    return res;
}

double ari(const std::vector<int>& labels_a, const std::vector<int>& labels_b) {
    const std::size_t n = labels_a.size();
    if (labels_b.size() != n) throw std::invalid_argument("ari: length mismatch");
    if (n == 0) throw std::invalid_argument("ari: empty labels");

    std::map<std::pair<int, int>, double> cont;
    std::map<int, double> asum, bsum;
    for (std::size_t i = 0; i < n; ++i) {
        cont[{labels_a[i], labels_b[i]}] += 1.0;
        asum[labels_a[i]] += 1.0;
        bsum[labels_b[i]] += 1.0;
    }
    auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, c] : cont) sum_ij += choose2(c);
    for (const auto& [key, c] : asum) sum_a += choose2(c);
    for (const auto& [key, c] : bsum) sum_b += choose2(c);
    const double total = choose2(static_cast<double>(n));
    const double expected = sum_a * sum_b / total;
    const double maximum = 0.5 * (sum_a + sum_b);
    const double den = maximum - expected;
    if (den == 0.0) return 1.0;
    return (sum_ij - expected) / den;
}

void write_results_csv(const std::vector<std::string>& method_names,
                       const std::vector<std::vector<EvalReport>>& reports,
                       const std::string& path) {
    if (method_names.size() != reports.size())
        throw std::invalid_argument("write_results_csv: name/report mismatch");
    const std::string tmp = path + ".tmp";
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot open " + tmp);
    out << "method,fold,acc,rec,prec,f1,auc,apr,jaccard\n";
    char buf[64];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (std::size_t m = 0; m < reports.size(); ++m) {
        for (std::size_t f = 0; f < reports[m].size(); ++f) {
            const EvalReport& r = reports[m][f];
            out << method_names[m] << ',' << f << ',' << fmt(r.acc) << ',' << fmt(r.rec) << ','
                << fmt(r.prec) << ',' << fmt(r.f1) << ',' << fmt(r.auc) << ',' << fmt(r.apr) << ','
                << fmt(r.jaccard) << '\n';
        }
    }
    out.close();
    if (!out) throw std::runtime_error("write failed: " + tmp);
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed: " + path);
}

void write_rank_report(const std::vector<std::string>& method_names, const RankResult& ranks,
                       const std::string& path) {
    if (method_names.size() != ranks.mean_ranks.size())
        throw std::invalid_argument("write_rank_report: name/rank mismatch");
    const std::string tmp = path + ".tmp";
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot open " + tmp);
    char buf[64];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "friedman_stat," << fmt(ranks.friedman_stat) << "\n";
    out << "friedman_p," << fmt(ranks.p_value) << "\n";
    out << "method,mean_rank";
    for (const std::string& name : method_names) out << ",p_vs_" << name;
    out << "\n";
    for (std::size_t i = 0; i < method_names.size(); ++i) {
        out << method_names[i] << ',' << fmt(ranks.mean_ranks[i]);
        for (std::size_t j = 0; j < method_names.size(); ++j)
            out << ',' << fmt(ranks.pairwise_p[i][j]);
        out << "\n";
    }
    out.close();
    if (!out) throw std::runtime_error("write failed: " + tmp);
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed: " + path);
}

}  // namespace emedm
