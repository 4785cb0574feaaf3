#include "emedm/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace emedm {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(where + ": bad numeric field '" + s + "'");
    }
}

long parse_long(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(where + ": bad integer field '" + s + "'");
    }
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Dataset parse_logs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    std::vector<std::string> header = split_csv(line);

    if (header.size() < 4 || header[0] != "student_id" || header[1] != "step_index")
        throw std::runtime_error(path + ": header must start with student_id,step_index");
    std::size_t col = 2;
    int m = 0;
    while (col < header.size() && header[col] == "f" + std::to_string(m)) {
        ++m;
        ++col;
    }
    if (m == 0) throw std::runtime_error(path + ": no feature columns");
    if (col >= header.size() || header[col].rfind("action", 0) != 0)
        throw std::runtime_error(path + ": action column missing after features");
    int declared_A = 0;
    if (header[col].size() > 6 && header[col][6] == ':')
        declared_A = static_cast<int>(parse_long(header[col].substr(7), path + ": header"));
    ++col;
    int idx_pre = -1, idx_post = -1, idx_intent = -1, idx_reward = -1, idx_cell = -1;
    for (; col < header.size(); ++col) {
        const std::string& name = header[col];
        if (name == "pretest")
            idx_pre = static_cast<int>(col);
        else if (name == "posttest")
            idx_post = static_cast<int>(col);
        else if (name == "true_intent")
            idx_intent = static_cast<int>(col);
        else if (name == "reward")
            idx_reward = static_cast<int>(col);
        else if (name == "cell")
            idx_cell = static_cast<int>(col);
        else
            throw std::runtime_error(path + ": unknown column '" + name + "'");
    }

    struct Row {
        long step = 0;
        Step s;
        double reward = 0.0;
        bool has_reward = false;
        int cell = -1;
        bool has_cell = false;
    };
    struct Acc {
        std::vector<Row> rows;
        TrajMeta meta;
    };
    std::map<std::string, Acc> by_student;
    std::vector<std::string> order;
    int max_action = -1;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::string where = path + ":line " + std::to_string(line_no);
        std::vector<std::string> f = split_csv(line);
        if (f.size() != header.size())
            throw std::runtime_error(where + ": expected " + std::to_string(header.size()) +
                                     " fields, got " + std::to_string(f.size()));
        Row row;
        const std::string& sid = f[0];
        row.step = parse_long(f[1], where);
        row.s.state.resize(m);
        for (int d = 0; d < m; ++d) {
            row.s.state[d] = parse_double(f[2 + d], where);
            if (!std::isfinite(row.s.state[d])) throw std::runtime_error(where + ": non-finite feature");
        }
        long a = parse_long(f[2 + m], where);
        if (a < 0 || (declared_A > 0 && a >= declared_A))
            throw std::runtime_error(where + ": action " + std::to_string(a) + " out of range");
        row.s.action = static_cast<ActionId>(a);
        max_action = std::max(max_action, static_cast<int>(a));
        if (by_student.find(sid) == by_student.end()) order.push_back(sid);
        Acc& acc = by_student[sid];
        if (idx_pre >= 0 && !f[idx_pre].empty()) acc.meta.pretest = parse_double(f[idx_pre], where);
        if (idx_post >= 0 && !f[idx_post].empty()) acc.meta.posttest = parse_double(f[idx_post], where);
        if (idx_intent >= 0 && !f[idx_intent].empty())
            acc.meta.true_intent = static_cast<int>(parse_long(f[idx_intent], where));
        if (idx_reward >= 0 && !f[idx_reward].empty()) {
            row.reward = parse_double(f[idx_reward], where);
            row.has_reward = true;
        }
        if (idx_cell >= 0 && !f[idx_cell].empty()) {
            row.cell = static_cast<int>(parse_long(f[idx_cell], where));
            row.has_cell = true;
        }
        acc.meta.student_id = sid;
        acc.rows.push_back(std::move(row));
    }
    if (order.empty()) throw std::runtime_error(path + ": no data rows");

    Dataset data;
    data.m = m;
    data.A = declared_A > 0 ? declared_A : std::max(max_action + 1, 2);
    for (const std::string& sid : order) {
        Acc& acc = by_student[sid];
        std::stable_sort(acc.rows.begin(), acc.rows.end(),
                         [](const Row& a, const Row& b) { return a.step < b.step; });
        for (std::size_t i = 1; i < acc.rows.size(); ++i)
            if (acc.rows[i].step == acc.rows[i - 1].step)
                throw std::runtime_error(path + ": duplicate step_index " +
                                         std::to_string(acc.rows[i].step) + " for student " + sid);
        Trajectory traj;
        traj.meta = acc.meta;
        for (Row& row : acc.rows) {
            traj.steps.push_back(std::move(row.s));
            if (row.has_reward) traj.rewards.push_back(row.reward);
            if (row.has_cell) traj.cells.push_back(row.cell);
        }
        if (!traj.rewards.empty() && traj.rewards.size() != traj.steps.size())
            throw std::runtime_error(path + ": partial reward column for student " + sid);
        if (!traj.cells.empty() && traj.cells.size() != traj.steps.size())
            throw std::runtime_error(path + ": partial cell column for student " + sid);
        data.trajectories.push_back(std::move(traj));
    }
    validate(data);
    return data;
}

void write_logs(const Dataset& data, const std::string& path) {
    validate(data);
    bool any_intent = false, any_reward = false, any_cell = false, any_pre = false, any_post = false;
    for (const Trajectory& t : data.trajectories) {
        any_intent = any_intent || t.meta.true_intent.has_value();
        any_reward = any_reward || !t.rewards.empty();
        any_cell = any_cell || !t.cells.empty();
        any_pre = any_pre || t.meta.pretest.has_value();
        any_post = any_post || t.meta.posttest.has_value();
    }
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << "student_id,step_index";
        for (int d = 0; d < data.m; ++d) out << ",f" << d;
        out << ",action:" << data.A << ",pretest,posttest";
        if (any_intent) out << ",true_intent";
        if (any_reward) out << ",reward";
        if (any_cell) out << ",cell";
        out << "\n";
        for (const Trajectory& traj : data.trajectories) {
            for (std::size_t t = 0; t < traj.length(); ++t) {
                out << traj.meta.student_id << "," << t;
                for (double v : traj.steps[t].state) out << "," << fmt(v);
                out << "," << traj.steps[t].action;
                out << ",";
                if (traj.meta.pretest) out << fmt(*traj.meta.pretest);
                out << ",";
                if (traj.meta.posttest) out << fmt(*traj.meta.posttest);
                if (any_intent) {
                    out << ",";
                    if (traj.meta.true_intent) out << *traj.meta.true_intent;
                }
                if (any_reward) {
                    out << ",";
                    if (!traj.rewards.empty()) out << fmt(traj.rewards[t]);
                }
                if (any_cell) {
                    out << ",";
                    if (!traj.cells.empty()) out << traj.cells[t];
                }
                out << "\n";
            }
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp);
}

double nlg(double pre, double post) {
    if (!(pre >= 0.0 && pre <= 1.0) || !(post >= 0.0 && post <= 1.0))
        throw std::invalid_argument("test scores must be in [0,1]");
    if (pre == 1.0) {
        if (post == 1.0) return 0.0;
        throw std::invalid_argument("NLG undefined for pretest 1 and posttest below 1");
    }
    return (post - pre) / std::sqrt(1.0 - pre);
}

double percentile(const std::vector<double>& scores, double p) {
    if (scores.empty()) throw std::invalid_argument("empty score list");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("percentile fraction out of range");
    std::vector<double> v = scores;
    std::sort(v.begin(), v.end());
    double rank = p * static_cast<double>(v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(rank);
    if (lo + 1 >= v.size()) return v.back();
    double frac = rank - static_cast<double>(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

GroupResult percentile_groups(const std::vector<double>& scores) {
    if (scores.size() < 3) throw std::invalid_argument("need at least 3 students");
    GroupResult r;
    r.p33 = percentile(scores, 0.33);
    r.p66 = percentile(scores, 0.66);
    r.groups.reserve(scores.size());
    for (double s : scores) {
        if (s < r.p33)
            r.groups.push_back(Group::Low);
        else if (s > r.p66)
            r.groups.push_back(Group::High);
        else
            r.groups.push_back(Group::Medium);
    }
    return r;
}

QlgLabel qlg(Group pre_group, Group post_group) {
    QlgLabel label;
    label.pre_group = pre_group;
    label.post_group = post_group;
    label.high = static_cast<int>(post_group) > static_cast<int>(pre_group) ||
                 (pre_group == Group::High && post_group == Group::High);
    return label;
}

QlgReport qlg_report(const Dataset& data) {
    std::vector<double> pre, post;
    for (const Trajectory& t : data.trajectories) {
        if (!t.meta.pretest || !t.meta.posttest)
            throw std::invalid_argument("trajectory " + t.meta.student_id + " is missing test scores");
        pre.push_back(*t.meta.pretest);
        post.push_back(*t.meta.posttest);
    }
    GroupResult gpre = percentile_groups(pre);
    GroupResult gpost = percentile_groups(post);
    QlgReport report;
    report.percentiles = {gpre.p33, gpre.p66, gpost.p33, gpost.p66};
    for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
        QlgLabel label = qlg(gpre.groups[i], gpost.groups[i]);
        report.rows.push_back({data.trajectories[i].meta.student_id, pre[i], post[i],
                               label.pre_group, label.post_group, label.high});
    }
    return report;
}

Dataset select_good(const Dataset& data) {
    QlgReport report = qlg_report(data);
    Dataset out;
    out.m = data.m;
    out.A = data.A;
    out.normalization = data.normalization;
    for (std::size_t i = 0; i < data.trajectories.size(); ++i)
        if (report.rows[i].high) out.trajectories.push_back(data.trajectories[i]);
    return out;
}

const char* group_name(Group g) {
    switch (g) {
        case Group::Low: return "Low";
        case Group::Medium: return "Medium";
        default: return "High";
    }
}

void write_qlg_report(const QlgReport& report, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << "student_id,pretest,posttest,pre_group,post_group,qlg\n";
        for (const QlgRow& row : report.rows) {
            out << row.student_id << "," << fmt(row.pretest) << "," << fmt(row.posttest) << ","
                << group_name(row.pre_group) << "," << group_name(row.post_group) << ","
                << (row.high ? "High" : "Low") << "\n";
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp);
}

}  // namespace emedm
