#include "emedm/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace emedm {

PolicyModel::PolicyModel(int m_, int A_, int H_) : m(m_), A(A_), H(H_) {
    if (m <= 0 || A < 2 || H <= 0) throw std::invalid_argument("bad policy dimensions");
    params.assign(static_cast<std::size_t>(H) * m + H + static_cast<std::size_t>(A) * H + A, 0.0);
}

PolicyModel PolicyModel::init(int m, int A, int H, std::uint64_t seed) {
    PolicyModel model(m, A, H);
    Rng rng = make_rng(seed, "policy_init");
    double lim1 = std::sqrt(6.0 / (m + H));
    double lim2 = std::sqrt(6.0 / (H + A));
    std::uniform_real_distribution<double> u1(-lim1, lim1), u2(-lim2, lim2);
    double* w1 = model.w1();
    for (int i = 0; i < H * m; ++i) w1[i] = u1(rng);
    double* w2 = model.w2();
    for (int i = 0; i < A * H; ++i) w2[i] = u2(rng);
    return model;
}

Forward forward_pass(const PolicyModel& model, const StateVec& s) {
    if (static_cast<int>(s.size()) != model.m) throw std::invalid_argument("state dimension mismatch");
    Forward f;
    f.hidden.resize(model.H);
    const double* w1 = model.w1();
    const double* b1 = model.b1();
    for (int h = 0; h < model.H; ++h) {
        double z = b1[h];
        const double* row = w1 + static_cast<std::size_t>(h) * model.m;
        for (int i = 0; i < model.m; ++i) z += row[i] * s[i];
        f.hidden[h] = std::tanh(z);
    }
    f.logit.resize(model.A);
    const double* w2 = model.w2();
    const double* b2 = model.b2();
    for (int a = 0; a < model.A; ++a) {
        double z = b2[a];
        const double* row = w2 + static_cast<std::size_t>(a) * model.H;
        for (int h = 0; h < model.H; ++h) z += row[h] * f.hidden[h];
        f.logit[a] = z;
    }
    double zmax = *std::max_element(f.logit.begin(), f.logit.end());
    double sum = 0.0;
    f.probs.resize(model.A);
    for (int a = 0; a < model.A; ++a) {
        f.probs[a] = std::exp(f.logit[a] - zmax);
        sum += f.probs[a];
    }
    for (double& p : f.probs) p /= sum;
    f.logsumexp = zmax + std::log(sum);
    return f;
}

std::vector<double> logits(const PolicyModel& model, const StateVec& s) {
    return forward_pass(model, s).logit;
}

std::vector<double> action_probs(const PolicyModel& model, const StateVec& s) {
    return forward_pass(model, s).probs;
}

double energy(const PolicyModel& model, const StateVec& s) {
    return -forward_pass(model, s).logsumexp;
}

StateVec energy_grad_state(const PolicyModel& model, const StateVec& s) {
    Forward f = forward_pass(model, s);
    // dE/dlogit_a = -p_a; chain back through w2, tanh, w1.
    const double* w2 = model.w2();
    std::vector<double> gh(model.H, 0.0);
    for (int a = 0; a < model.A; ++a) {
        const double* row = w2 + static_cast<std::size_t>(a) * model.H;
        double d = -f.probs[a];
        for (int h = 0; h < model.H; ++h) gh[h] += row[h] * d;
    }
    for (int h = 0; h < model.H; ++h) gh[h] *= 1.0 - f.hidden[h] * f.hidden[h];
    const double* w1 = model.w1();
    StateVec gs(model.m, 0.0);
    for (int h = 0; h < model.H; ++h) {
        const double* row = w1 + static_cast<std::size_t>(h) * model.m;
        for (int i = 0; i < model.m; ++i) gs[i] += row[i] * gh[h];
    }
    return gs;
}

void backprop_logits(const PolicyModel& model, const StateVec& s, const Forward& f,
                     const std::vector<double>& dlogits, double scale, Gradient& grad) {
    if (grad.size() != model.params.size()) throw std::invalid_argument("gradient size mismatch");
    const double* w2 = model.w2();
    std::size_t off_b1 = static_cast<std::size_t>(model.H) * model.m;
    std::size_t off_w2 = off_b1 + model.H;
    std::size_t off_b2 = off_w2 + static_cast<std::size_t>(model.A) * model.H;
    std::vector<double> gh(model.H, 0.0);
    for (int a = 0; a < model.A; ++a) {
        double d = scale * dlogits[a];
        if (d == 0.0) continue;
        double* gw2 = grad.data() + off_w2 + static_cast<std::size_t>(a) * model.H;
        const double* row = w2 + static_cast<std::size_t>(a) * model.H;
        for (int h = 0; h < model.H; ++h) {
            gw2[h] += d * f.hidden[h];
            gh[h] += row[h] * d;
        }
        grad[off_b2 + a] += d;
    }
    for (int h = 0; h < model.H; ++h) {
        double d = gh[h] * (1.0 - f.hidden[h] * f.hidden[h]);
        if (d == 0.0) continue;
        double* gw1 = grad.data() + static_cast<std::size_t>(h) * model.m;
        for (int i = 0; i < model.m; ++i) gw1[i] += d * s[i];
        grad[off_b1 + h] += d;
    }
}

Gradient param_grad_logprob(const PolicyModel& model, const StateVec& s, ActionId a) {
    if (a < 0 || a >= model.A) throw std::invalid_argument("action out of range");
    Forward f = forward_pass(model, s);
    std::vector<double> dlogits(model.A);
    for (int k = 0; k < model.A; ++k) dlogits[k] = (k == a ? 1.0 : 0.0) - f.probs[k];
    Gradient grad(model.params.size(), 0.0);
    backprop_logits(model, s, f, dlogits, 1.0, grad);
    return grad;
}

ActionId sample_action(const PolicyModel& model, const StateVec& s, Rng& rng) {
    std::vector<double> p = action_probs(model, s);
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (int a = 0; a < model.A; ++a) {
        acc += p[a];
        if (u < acc) return a;
    }
    return model.A - 1;
}

void save_policy(const PolicyModel& model, const std::string& path) {
    nlohmann::json j;
    j["m"] = model.m;
    j["A"] = model.A;
    j["H"] = model.H;
    j["params"] = model.params;
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << j.dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp);
}

PolicyModel load_policy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    nlohmann::json j;
    in >> j;
    PolicyModel model(j.at("m").get<int>(), j.at("A").get<int>(), j.at("H").get<int>());
    model.params = j.at("params").get<std::vector<double>>();
    if (model.params.size() != PolicyModel(model.m, model.A, model.H).params.size())
        throw std::runtime_error("parameter vector size mismatch in " + path);
    return model;
}

}  // namespace emedm
