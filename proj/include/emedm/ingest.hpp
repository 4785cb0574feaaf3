#pragma once

#include <string>
#include <vector>

#include "emedm/types.hpp"

namespace emedm {

enum class Group { Low, Medium, High };

struct QlgLabel {
    bool high = false;
    Group pre_group = Group::Low;
    Group post_group = Group::Low;
};

struct CohortPercentiles {
    double p33_pre = 0.0, p66_pre = 0.0;
    double p33_post = 0.0, p66_post = 0.0;
};

// CSV schema: student_id, step_index, f0..f{m-1}, action:A, pretest, posttest
// plus optional true_intent, reward, cell columns. Empty fields mean absent.
Dataset parse_logs(const std::string& path);
void write_logs(const Dataset& data, const std::string& path);

// (post - pre) / sqrt(1 - pre); pre = post = 1 gives 0 by convention.
double nlg(double pre, double post);

// Linear-interpolation percentile of the sorted scores at fraction p in [0,1].
double percentile(const std::vector<double>& scores, double p);

struct GroupResult {
    std::vector<Group> groups;
    double p33 = 0.0;
    double p66 = 0.0;
};

// Low below the 33rd percentile, High above the 66th, Medium in between
// (boundaries inclusive into Medium).
GroupResult percentile_groups(const std::vector<double>& scores);

// High iff the student moved up a group or stayed High.
QlgLabel qlg(Group pre_group, Group post_group);

struct QlgRow {
    std::string student_id;
    double pretest = 0.0, posttest = 0.0;
    Group pre_group = Group::Low, post_group = Group::Low;
    bool high = false;
};

struct QlgReport {
    std::vector<QlgRow> rows;
    CohortPercentiles percentiles;
};

QlgReport qlg_report(const Dataset& data);

// Keeps the High-QLG trajectories, percentile groups computed within this cohort.
Dataset select_good(const Dataset& data);

const char* group_name(Group g);

// CSV: student_id, pretest, posttest, pre_group, post_group, qlg
void write_qlg_report(const QlgReport& report, const std::string& path);

}  // namespace emedm
