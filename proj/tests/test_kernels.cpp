#include <cmath>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "doctest.h"
#include "emedm/kernels.hpp"
#include "emedm/policy.hpp"
#include "emedm/rng.hpp"
#include "test_util.hpp"

using namespace emedm;
using testutil::rel_err;

namespace {

struct BatchFixture {
    std::vector<StateVec> states;
    std::vector<StepRef> batch;

    BatchFixture(int m, int A, int n, std::uint64_t seed) {
        Rng rng = make_rng(seed, "batch_fixture");
        std::uniform_real_distribution<double> feat(-1.0, 1.0);
        std::uniform_int_distribution<int> act(0, A - 1);
        states.reserve(n);
        for (int i = 0; i < n; ++i) {
            StateVec s(m);
            for (double& x : s) x = feat(rng);
            states.push_back(std::move(s));
        }
        for (int i = 0; i < n; ++i) batch.push_back({&states[i], act(rng)});
    }

    std::vector<const StateVec*> state_ptrs() const {
        std::vector<const StateVec*> ptrs;
        for (const StateVec& s : states) ptrs.push_back(&s);
        return ptrs;
    }
};

PolicyModel bias_model(int m, std::vector<double> b2) {
    PolicyModel model(m, static_cast<int>(b2.size()), 2);
    std::copy(b2.begin(), b2.end(), model.b2());
    return model;
}

}  // namespace

TEST_CASE("nll_batch of a uniform 3-action policy is ln 3") {
    PolicyModel model = bias_model(2, {0.0, 0.0, 0.0});
    BatchFixture fx(2, 3, 12, 1);
    double loss = nll_batch(model, fx.batch, ExecPolicy::Serial, nullptr);
    CHECK(loss == doctest::Approx(std::log(3.0)));
}

TEST_CASE("nll_batch of a saturated correct policy is tiny") {
    PolicyModel model = bias_model(2, {50.0, 0.0, 0.0});
    BatchFixture fx(2, 3, 8, 2);
    for (StepRef& it : fx.batch) it.a = 0;
    double loss = nll_batch(model, fx.batch, ExecPolicy::Serial, nullptr);
    CHECK(loss < 1e-3);
}

TEST_CASE("nll_batch rejects empty batches and sized-wrong gradients") {
    PolicyModel model = PolicyModel::init(2, 3, 4, 3);
    std::vector<StepRef> empty;
    CHECK_THROWS_AS(nll_batch(model, empty, ExecPolicy::Serial, nullptr), std::invalid_argument);
    BatchFixture fx(2, 3, 4, 3);
    Gradient bad(3, 0.0);
    CHECK_THROWS_AS(nll_batch(model, fx.batch, ExecPolicy::Serial, &bad), std::invalid_argument);
}

TEST_CASE("finite differences confirm the nll_batch gradient") {
    const double h = 1e-5;
    for (int inst = 0; inst < 5; ++inst) {
        PolicyModel model = PolicyModel::init(3, 3, 4, 600 + inst);
        BatchFixture fx(3, 3, 7, 40 + inst);
        Gradient grad(model.params.size(), 0.0);
        nll_batch(model, fx.batch, ExecPolicy::Serial, &grad);
        for (std::size_t p = 0; p < model.params.size(); ++p) {
            PolicyModel up = model, dn = model;
            up.params[p] += h;
            dn.params[p] -= h;
            double fd = (nll_batch(up, fx.batch, ExecPolicy::Serial, nullptr) -
                         nll_batch(dn, fx.batch, ExecPolicy::Serial, nullptr)) / (2 * h);
            CHECK(rel_err(fd, grad[p]) < 1e-4);
        }
    }
}

TEST_CASE("brier_batch hand case for a uniform binary policy") {
    PolicyModel model = bias_model(1, {0.0, 0.0});
    BatchFixture fx(1, 2, 6, 4);
    double loss = brier_batch(model, fx.batch, ExecPolicy::Serial, nullptr);
    CHECK(loss == doctest::Approx(0.5));
}

TEST_CASE("finite differences confirm the brier_batch gradient") {
    const double h = 1e-5;
    for (int inst = 0; inst < 5; ++inst) {
        PolicyModel model = PolicyModel::init(2, 3, 4, 700 + inst);
        BatchFixture fx(2, 3, 6, 50 + inst);
        Gradient grad(model.params.size(), 0.0);
        brier_batch(model, fx.batch, ExecPolicy::Serial, &grad);
        for (std::size_t p = 0; p < model.params.size(); ++p) {
            PolicyModel up = model, dn = model;
            up.params[p] += h;
            dn.params[p] -= h;
            double fd = (brier_batch(up, fx.batch, ExecPolicy::Serial, nullptr) -
                         brier_batch(dn, fx.batch, ExecPolicy::Serial, nullptr)) / (2 * h);
            CHECK(rel_err(fd, grad[p]) < 1e-4);
        }
    }
}

TEST_CASE("energy_mean_batch averages per-state energies and respects sign") {
    PolicyModel model = PolicyModel::init(3, 3, 4, 8);
    BatchFixture fx(3, 3, 9, 5);
    auto ptrs = fx.state_ptrs();
    double mean = energy_mean_batch(model, ptrs, ExecPolicy::Serial, 1.0, nullptr);
    double expect = 0.0;
    for (const StateVec& s : fx.states) expect += energy(model, s);
    expect /= static_cast<double>(fx.states.size());
    CHECK(mean == doctest::Approx(expect));

    Gradient gp(model.params.size(), 0.0), gn(model.params.size(), 0.0);
    energy_mean_batch(model, ptrs, ExecPolicy::Serial, 1.0, &gp);
    energy_mean_batch(model, ptrs, ExecPolicy::Serial, -1.0, &gn);
    for (std::size_t i = 0; i < gp.size(); ++i) CHECK(gp[i] == doctest::Approx(-gn[i]));
}

TEST_CASE("finite differences confirm the energy_mean_batch gradient") {
    const double h = 1e-5;
    for (int inst = 0; inst < 5; ++inst) {
        PolicyModel model = PolicyModel::init(3, 3, 4, 800 + inst);
        BatchFixture fx(3, 3, 8, 60 + inst);
        auto ptrs = fx.state_ptrs();
        Gradient grad(model.params.size(), 0.0);
        energy_mean_batch(model, ptrs, ExecPolicy::Serial, 1.0, &grad);
        for (std::size_t p = 0; p < model.params.size(); ++p) {
            PolicyModel up = model, dn = model;
            up.params[p] += h;
            dn.params[p] -= h;
            double fd = (energy_mean_batch(up, ptrs, ExecPolicy::Serial, 1.0, nullptr) -
                         energy_mean_batch(dn, ptrs, ExecPolicy::Serial, 1.0, nullptr)) / (2 * h);
            CHECK(rel_err(fd, grad[p]) < 1e-4);
        }
    }
}

TEST_CASE("serial and parallel kernels agree to 1e-12") {
    PolicyModel model = PolicyModel::init(4, 3, 6, 12);
    BatchFixture fx(4, 3, 101, 6);
    auto ptrs = fx.state_ptrs();

    Gradient gs(model.params.size(), 0.0), gpar(model.params.size(), 0.0);
    double ls = nll_batch(model, fx.batch, ExecPolicy::Serial, &gs);
    double lp = nll_batch(model, fx.batch, ExecPolicy::Parallel, &gpar);
    CHECK(std::fabs(ls - lp) < 1e-12);
    for (std::size_t i = 0; i < gs.size(); ++i) CHECK(std::fabs(gs[i] - gpar[i]) < 1e-12);

    gs.assign(gs.size(), 0.0);
    gpar.assign(gpar.size(), 0.0);
    ls = brier_batch(model, fx.batch, ExecPolicy::Serial, &gs);
    lp = brier_batch(model, fx.batch, ExecPolicy::Parallel, &gpar);
    CHECK(std::fabs(ls - lp) < 1e-12);
    for (std::size_t i = 0; i < gs.size(); ++i) CHECK(std::fabs(gs[i] - gpar[i]) < 1e-12);

    gs.assign(gs.size(), 0.0);
    gpar.assign(gpar.size(), 0.0);
    ls = energy_mean_batch(model, ptrs, ExecPolicy::Serial, 1.0, &gs);
    lp = energy_mean_batch(model, ptrs, ExecPolicy::Parallel, 1.0, &gpar);
    CHECK(std::fabs(ls - lp) < 1e-12);
    for (std::size_t i = 0; i < gs.size(); ++i) CHECK(std::fabs(gs[i] - gpar[i]) < 1e-12);
}

#ifdef _OPENMP
TEST_CASE("parallel kernel results do not depend on the thread count") {
    PolicyModel model = PolicyModel::init(4, 3, 6, 14);
    BatchFixture fx(4, 3, 97, 7);
    int saved = omp_get_max_threads();

    omp_set_num_threads(1);
    Gradient g1(model.params.size(), 0.0);
    double l1 = nll_batch(model, fx.batch, ExecPolicy::Parallel, &g1);

    omp_set_num_threads(4);
    Gradient g4(model.params.size(), 0.0);
    double l4 = nll_batch(model, fx.batch, ExecPolicy::Parallel, &g4);

    omp_set_num_threads(saved);
    CHECK(l1 == l4);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g4[i]);
}
#endif

TEST_CASE("traj_loglik of a uniform 3-action policy over 10 steps") {
    PolicyModel model = bias_model(2, {0.0, 0.0, 0.0});
    Trajectory traj;
    Rng rng = make_rng(3, "traj");
    std::uniform_real_distribution<double> feat(-1.0, 1.0);
    for (int t = 0; t < 10; ++t) traj.steps.push_back({{feat(rng), feat(rng)}, t % 3});
    CHECK(traj_loglik(model, traj) == doctest::Approx(-10.0 * std::log(3.0)));
}

TEST_CASE("traj_loglik of a saturated matching policy is near zero") {
    PolicyModel model = bias_model(2, {50.0, 0.0, 0.0});
    Trajectory traj;
    for (int t = 0; t < 5; ++t) traj.steps.push_back({{0.1 * t, -0.2}, 0});
    double ll = traj_loglik(model, traj);
    CHECK(ll <= 0.0);
    CHECK(ll > -1e-3);
}

TEST_CASE("traj_loglik over one step is the step log-probability") {
    PolicyModel model = PolicyModel::init(2, 3, 4, 17);
    Trajectory traj;
    traj.steps.push_back({{0.3, -0.5}, 2});
    double expect = std::log(action_probs(model, {0.3, -0.5})[2]);
    CHECK(traj_loglik(model, traj) == doctest::Approx(expect));
}

TEST_CASE("loglik_matrix matches traj_loglik per entry, serial and parallel") {
    std::vector<PolicyModel> policies;
    for (int j = 0; j < 3; ++j) policies.push_back(PolicyModel::init(3, 3, 4, 900 + j));
    Dataset data = testutil::rand_dataset(3, 3, 5, 6, 70);
    auto ll = loglik_matrix(policies, data, ExecPolicy::Serial);
    REQUIRE(ll.size() == 5);
    REQUIRE(ll[0].size() == 3);
    for (std::size_t i = 0; i < data.size(); ++i)
        for (std::size_t j = 0; j < policies.size(); ++j)
            CHECK(ll[i][j] == doctest::Approx(traj_loglik(policies[j], data.trajectories[i])));
    auto llp = loglik_matrix(policies, data, ExecPolicy::Parallel);
    for (std::size_t i = 0; i < data.size(); ++i)
        for (std::size_t j = 0; j < policies.size(); ++j) CHECK(ll[i][j] == llp[i][j]);
}

TEST_CASE("Adam bias correction gives unit-scale first steps") {
    // With a constant unit gradient mhat = vhat = 1, so every early step
    // moves the parameter by lr / (1 + eps).
    Adam opt(0.1);
    std::vector<double> params = {0.0};
    Gradient grad = {1.0};
    opt.step(params, grad);
    CHECK(params[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-12));
    opt.step(params, grad);
    CHECK(params[0] == doctest::Approx(-0.2 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("Adam rejects mismatched gradient sizes") {
    Adam opt;
    std::vector<double> params = {0.0, 0.0};
    Gradient grad = {1.0};
    CHECK_THROWS_AS(opt.step(params, grad), std::invalid_argument);
}
