#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "edgescale/daci.hpp"

using namespace edgescale;

namespace {

DaciConfig toy_config(int latent, int hidden) {
    DaciConfig cfg;
    cfg.latent = latent;
    cfg.hidden = hidden;
    return cfg;
}

DaciStepRecord toy_record(int obs_dim, Rng& rng) {
    DaciStepRecord r;
    for (int i = 0; i < obs_dim; ++i) {
        r.prev_obs.push_back(rng.uniform(0.1, 0.9));
        r.obs.push_back(rng.uniform(0.1, 0.9));
    }
    r.action = static_cast<int>(rng.uniform_index(35));
    r.phi_cv = rng.uniform(0.2, 1.0);
    r.phi_qr = rng.uniform(0.2, 1.0);
    r.ucores = rng.uniform(1.0, 8.0);
    r.tcores = 8.0;
    return r;
}

AgentObservation make_obs(int q_cv, int m, double c_cv, double tp_cv, int q_qr,
                          double c_qr, double tp_qr) {
    AgentObservation obs;
    obs.cv = ServiceSnapshot{q_cv, m, c_cv, tp_cv};
    obs.qr = ServiceSnapshot{q_qr, std::nullopt, c_qr, tp_qr};
    Workload w = default_workload();
    obs.phi_cv = service_fulfillment(config_from_snapshot(obs.cv), tp_cv, w.cv);
    obs.phi_qr = service_fulfillment(config_from_snapshot(obs.qr), tp_qr, w.qr);
    obs.free_cores = 8.0 - c_cv - c_qr;
    return obs;
}

}  // namespace

TEST_CASE("free energy: regularizer terms at their anchors") {
    DaciConfig cfg;
    DaciNets nets = DaciNets::make(4, toy_config(3, 8), 1);
    Rng rng(2);
    DaciStepRecord r = toy_record(4, rng);
    std::vector<double> eps(3, 0.0);

    r.phi_cv = 1.0;
    r.phi_qr = 1.0;
    r.ucores = 8.0;
    double balanced = daci_free_energy(nets, r, cfg, eps, 0.0);

    // equality term: 0.5 * Var{1.0, 0.5} = 0.5 * 0.0625
    r.phi_qr = 0.5;
    double skewed = daci_free_energy(nets, r, cfg, eps, 0.0);
    CHECK(skewed - balanced == doctest::Approx(0.5 * 0.0625).epsilon(1e-12));

    // utilization term: 0.1 * (1 - 4/8)^2 = 0.025
    r.phi_qr = 1.0;
    r.ucores = 4.0;
    double idle = daci_free_energy(nets, r, cfg, eps, 0.0);
    CHECK(idle - balanced == doctest::Approx(0.1 * 0.25).epsilon(1e-12));
}

TEST_CASE("free energy: KL of identical Gaussians vanishes") {
    // encoder with zero weights: same posterior for any input; transition
    // with zero weights: prior mean/logvar zero == posterior
    DaciConfig cfg;
    DaciNets nets = DaciNets::make(4, toy_config(3, 8), 3);
    for (Mlp* net : {&nets.encoder, &nets.transition, &nets.decoder})
        for (std::size_t i = 0; i < net->parameter_count(); ++i)
            net->set_parameter(i, 0.0);
    Rng rng(5);
    DaciStepRecord r = toy_record(4, rng);
    r.phi_cv = r.phi_qr = 1.0;
    r.ucores = r.tcores;
    std::vector<double> eps(3, 0.0);
    double f = daci_free_energy(nets, r, cfg, eps, 0.0);

    // all that is left is the reconstruction NLL of obs against the zero
    // decoder output
    double nll = 0.0;
    for (double o : r.obs)
        nll += 0.5 * (o * o) / (cfg.obs_sigma * cfg.obs_sigma) +
               std::log(cfg.obs_sigma) + 0.5 * std::log(2.0 * 3.14159265358979323846);
    CHECK(f == doctest::Approx(nll).epsilon(1e-9));
}

TEST_CASE("free energy: zero-information decoder reduces to its marginal NLL") {
    DaciConfig cfg;
    cfg.lambda_eq = 0.0;
    cfg.lambda_util = 0.0;
    DaciNets nets = DaciNets::make(4, toy_config(3, 8), 7);
    // zero encoder/transition kill the KL; the decoder ignores the latent
    // and emits a fixed marginal through its output biases
    for (Mlp* net : {&nets.encoder, &nets.transition, &nets.decoder})
        for (std::size_t i = 0; i < net->parameter_count(); ++i)
            net->set_parameter(i, 0.0);
    std::vector<double> marginal = {0.3, -0.1, 0.6, 0.2};
    for (std::size_t i = 0; i < 4; ++i)
        nets.decoder.set_parameter(nets.decoder.parameter_count() - 4 + i, marginal[i]);

    Rng rng(11);
    DaciStepRecord r = toy_record(4, rng);
    std::vector<double> eps(3);
    for (auto& e : eps) e = rng.normal();
    double f = daci_free_energy(nets, r, cfg, eps, 0.0);

    double nll = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        double err = r.obs[i] - marginal[i];
        nll += 0.5 * err * err / (cfg.obs_sigma * cfg.obs_sigma) +
               std::log(cfg.obs_sigma) + 0.5 * std::log(2.0 * 3.14159265358979323846);
    }
    CHECK(f == doctest::Approx(nll).epsilon(1e-9));
}

TEST_CASE("free energy gradients match finite differences") {
    DaciConfig cfg;
    cfg.lambda_eq = 0.5;
    cfg.lambda_util = 0.1;
    DaciNets nets = DaciNets::make(3, toy_config(2, 4), 13);
    Rng rng(17);
    DaciStepRecord r = toy_record(3, rng);
    std::vector<double> eps = {0.37, -0.81};

    nets.encoder.zero_grads();
    nets.transition.zero_grads();
    nets.decoder.zero_grads();
    daci_free_energy(nets, r, cfg, eps, 1.0);

    const double h = 1e-6;
    for (Mlp* net : {&nets.encoder, &nets.transition, &nets.decoder}) {
        for (std::size_t p = 0; p < net->parameter_count(); ++p) {
            double orig = net->get_parameter(p);
            net->set_parameter(p, orig + h);
            double hi = daci_free_energy(nets, r, cfg, eps, 0.0);
            net->set_parameter(p, orig - h);
            double lo = daci_free_energy(nets, r, cfg, eps, 0.0);
            net->set_parameter(p, orig);
            double fd = (hi - lo) / (2.0 * h);
            double bp = net->get_gradient(p);
            double denom = std::max({std::abs(fd), std::abs(bp), 1e-6});
            CHECK(std::abs(fd - bp) / denom < 1e-3);
        }
    }
}

TEST_CASE("kl term is non-negative across random nets") {
    DaciConfig cfg;
    cfg.lambda_eq = 0.0;
    cfg.lambda_util = 0.0;
    Rng rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        DaciNets nets = DaciNets::make(4, toy_config(3, 8), 100 + trial);
        DaciStepRecord r = toy_record(4, rng);
        std::vector<double> eps(3, 0.0);
        double with_kl = daci_free_energy(nets, r, cfg, eps, 0.0);
        // reconstruct the NLL-only part by decoding the posterior mean sample
        auto enc = nets.encoder.forward(r.obs);
        std::vector<double> mean(enc.begin(), enc.begin() + 3);
        auto dec = nets.decoder.forward(mean);
        double nll = 0.0;
        for (std::size_t i = 0; i < r.obs.size(); ++i) {
            double err = r.obs[i] - dec[i];
            nll += 0.5 * err * err / (cfg.obs_sigma * cfg.obs_sigma) +
                   std::log(cfg.obs_sigma) +
                   0.5 * std::log(2.0 * 3.14159265358979323846);
        }
        CHECK(with_kl - nll >= -1e-9);
    }
}

TEST_CASE("train step: free energy decreases on a fixed batch") {
    DaciConfig cfg;
    DaciNets nets = DaciNets::make(8, toy_config(8, 64), 29);
    Rng rng(31);
    std::vector<DaciStepRecord> data;
    for (int i = 0; i < 16; ++i) data.push_back(toy_record(8, rng));
    std::vector<const DaciStepRecord*> batch;
    for (const auto& r : data) batch.push_back(&r);

    Rng train_rng(37);
    double prev = daci_train_step(nets, batch, cfg, train_rng);
    int violations = 0;
    for (int i = 0; i < 49; ++i) {
        Rng fixed(37);  // same noise each step isolates the optimization
        double f = daci_train_step(nets, batch, cfg, fixed);
        if (f > prev) ++violations;
        prev = f;
    }
    CHECK(violations <= 5);
}

TEST_CASE("efe: identical samples mean zero epistemic term") {
    DaciConfig cfg;
    cfg.mc_samples = 4;
    Workload w = default_workload();
    DaciNets nets = DaciNets::make(8, toy_config(8, 16), 41);
    std::vector<double> mean(8, 0.1);
    std::vector<std::vector<double>> zero_eps(4, std::vector<double>(8, 0.0));
    double g = daci_efe_score(nets, mean, 0, cfg, w, zero_eps);

    cfg.beta_epi = 1000.0;  // would dominate if the disagreement were nonzero
    double g2 = daci_efe_score(nets, mean, 0, cfg, w, zero_eps);
    CHECK(g == doctest::Approx(g2).epsilon(1e-12));
}

TEST_CASE("efe: identical predictions score identically, index breaks the tie") {
    DaciConfig cfg;
    Workload w = default_workload();
    DaciNets nets = DaciNets::make(8, toy_config(8, 16), 43);
    // zero transition weights: every action yields the same prior
    for (std::size_t i = 0; i < nets.transition.parameter_count(); ++i)
        nets.transition.set_parameter(i, 0.0);
    std::vector<double> mean(8, 0.2);
    Rng rng(47);
    std::vector<std::vector<double>> eps(8, std::vector<double>(8));
    for (auto& e : eps)
        for (auto& v : e) v = rng.normal();
    double a = daci_efe_score(nets, mean, 3, cfg, w, eps);
    double b = daci_efe_score(nets, mean, 17, cfg, w, eps);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));

    DaciAgent agent(w, cfg, 51);
    for (std::size_t i = 0; i < agent.nets().transition.parameter_count(); ++i)
        agent.nets().transition.set_parameter(i, 0.0);
    AgentObservation obs = make_obs(192, 2, 2.0, 8.0, 500, 2.0, 60.0);
    agent.decide(obs, TimeSeriesStore(w));
    REQUIRE(agent.last_action().has_value());
    CHECK(agent.last_action()->index() == 0);
}

TEST_CASE("select: untrained agent is deterministic under a fixed seed") {
    Workload w = default_workload();
    AgentObservation obs = make_obs(192, 2, 2.0, 8.0, 500, 2.0, 60.0);
    DaciAgent a(w, DaciConfig{}, 61), b(w, DaciConfig{}, 61);
    TimeSeriesStore store(w);
    Assignment x = a.decide(obs, store);
    Assignment y = b.decide(obs, store);
    CHECK(x.cv.quality == y.cv.quality);
    CHECK(x.cv.cores == y.cv.cores);
    CHECK(x.qr.quality == y.qr.quality);
    CHECK(a.last_action()->index() == b.last_action()->index());
}

TEST_CASE("select: exhausted budget forbids net core claims") {
    Workload w = default_workload();
    AgentObservation obs = make_obs(192, 2, 4.0, 8.0, 500, 4.0, 60.0);
    REQUIRE(obs.free_cores == doctest::Approx(0.0));
    TimeSeriesStore store(w);
    for (int seed = 0; seed < 20; ++seed) {
        DaciAgent agent(w, DaciConfig{}, static_cast<std::uint64_t>(seed));
        agent.decide(obs, store);
        JointAction a = *agent.last_action();
        double delta = 0.0;
        if (a.cv_action() == ServiceAction::CoresUp) delta += kCoreStep;
        if (a.cv_action() == ServiceAction::CoresDown) delta -= kCoreStep;
        if (a.qr_action() == ServiceAction::CoresUp) delta += kCoreStep;
        if (a.qr_action() == ServiceAction::CoresDown) delta -= kCoreStep;
        CHECK(delta <= 1e-9);
    }
}

TEST_CASE("normalization round-trips lattice observations") {
    Workload w = default_workload();
    Rng rng(67);
    for (int i = 0; i < 100; ++i) {
        int q = 128 + 32 * static_cast<int>(rng.uniform_index(7));
        int m = 1 + static_cast<int>(rng.uniform_index(5));
        double c = 0.5 + 0.5 * static_cast<double>(rng.uniform_index(10));
        int qq = 300 + 100 * static_cast<int>(rng.uniform_index(8));
        double c2 = 0.5 + 0.5 * static_cast<double>(rng.uniform_index(5));
        AgentObservation obs = make_obs(q, m, c, 12.0, qq, c2, 48.0);
        auto x = daci_normalize(obs, w);
        CHECK(x[0] * 192.0 + 128.0 == doctest::Approx(q).epsilon(1e-9));
        CHECK(x[1] * 4.0 + 1.0 == doctest::Approx(m).epsilon(1e-9));
        CHECK(x[2] * 8.0 == doctest::Approx(c).epsilon(1e-9));
        CHECK(x[4] * 700.0 + 300.0 == doctest::Approx(qq).epsilon(1e-9));
        CHECK(x[5] * 8.0 == doctest::Approx(c2).epsilon(1e-9));
        CHECK(x[7] * 8.0 == doctest::Approx(obs.free_cores).epsilon(1e-9));
    }
}

TEST_CASE("checkpoint: three sectioned nets round trip") {
    Workload w = default_workload();
    DaciAgent agent(w, DaciConfig{}, 71);
    std::ostringstream out;
    agent.nets().save(out);
    std::istringstream in(out.str());
    DaciNets back = DaciNets::load(in);
    CHECK(back.encoder == agent.nets().encoder);
    CHECK(back.transition == agent.nets().transition);
    CHECK(back.decoder == agent.nets().decoder);
}

namespace {

// builds a transition net that emits the exact residual delta for every
// action from the given table: two rectifier units per latent dimension
// carry the positive and negative parts of the delta
void plant_exact_transition(Mlp& net, int latent,
                            const std::vector<std::vector<double>>& deltas,
                            double logvar_bias) {
    for (std::size_t i = 0; i < net.parameter_count(); ++i) net.set_parameter(i, 0.0);
    const auto& sizes = net.sizes();
    int in = sizes[0];
    int hidden = sizes[1];
    int out = sizes[2];
    REQUIRE(hidden >= 2 * latent);
    std::size_t w1 = 0;
    std::size_t b1 = static_cast<std::size_t>(in) * hidden;
    std::size_t w2 = b1 + static_cast<std::size_t>(hidden);
    std::size_t b2 = w2 + static_cast<std::size_t>(hidden) * out;
    for (int a = 0; a < 35; ++a)
        for (int d = 0; d < latent; ++d) {
            double delta = deltas[static_cast<std::size_t>(a)][static_cast<std::size_t>(d)];
            net.set_parameter(w1 + static_cast<std::size_t>(2 * d) * in + latent + a,
                              std::max(delta, 0.0));
            net.set_parameter(w1 + static_cast<std::size_t>(2 * d + 1) * in + latent + a,
                              std::max(-delta, 0.0));
        }
    for (int d = 0; d < latent; ++d) {
        net.set_parameter(w2 + static_cast<std::size_t>(d) * hidden + 2 * d, 1.0);
        net.set_parameter(w2 + static_cast<std::size_t>(d) * hidden + 2 * d + 1, -1.0);
    }
    for (int d = latent; d < out; ++d) net.set_parameter(b2 + static_cast<std::size_t>(d), logvar_bias);
}

}  // namespace

TEST_CASE("efe: a perfect model ranks the move toward the optimum above noop") {
    Workload w = default_workload();
    GroundTruthModel gt;
    gt.noise_sigma = 0.0;
    DaciConfig cfg;
    cfg.head_scale = 0.0;  // exact identity encoder/decoder
    DaciNets nets = DaciNets::make(8, cfg, 3);

    // current state: the default start, fulfillment below 1
    Assignment cur = default_initial_assignment();
    AgentObservation obs;
    obs.cv = ServiceSnapshot{cur.cv.quality, cur.cv.model_size, cur.cv.cores,
                             ground_truth_throughput(ServiceKind::CV, cur.cv, gt)};
    obs.qr = ServiceSnapshot{cur.qr.quality, std::nullopt, cur.qr.cores,
                             ground_truth_throughput(ServiceKind::QR, cur.qr, gt)};
    obs.phi_cv = service_fulfillment(cur.cv, obs.cv.throughput, w.cv);
    obs.phi_qr = service_fulfillment(cur.qr, obs.qr.throughput, w.qr);
    obs.free_cores = 8.0 - cur.total_cores();
    REQUIRE(global_fulfillment({obs.phi_cv, obs.phi_qr}) < 1.0);
    std::vector<double> x = daci_normalize(obs, w);

    // exact next-observation deltas for every joint action from this state
    std::vector<std::vector<double>> deltas;
    for (int idx = 0; idx < 35; ++idx) {
        Assignment next = apply_joint_action(obs, JointAction::from_index(idx), w);
        AgentObservation nobs;
        nobs.cv = ServiceSnapshot{next.cv.quality, next.cv.model_size, next.cv.cores,
                                  ground_truth_throughput(ServiceKind::CV, next.cv, gt)};
        nobs.qr = ServiceSnapshot{next.qr.quality, std::nullopt, next.qr.cores,
                                  ground_truth_throughput(ServiceKind::QR, next.qr, gt)};
        nobs.phi_cv = 0.0;
        nobs.phi_qr = 0.0;
        nobs.free_cores = 8.0 - next.total_cores();
        std::vector<double> nx = daci_normalize(nobs, w);
        std::vector<double> d(8);
        for (int k = 0; k < 8; ++k)
            d[static_cast<std::size_t>(k)] =
                nx[static_cast<std::size_t>(k)] - x[static_cast<std::size_t>(k)];
        deltas.push_back(std::move(d));
    }
    plant_exact_transition(nets.transition, 8, deltas, -6.0);

    // quality up on both services moves toward the oracle configuration
    std::vector<std::vector<double>> eps(8, std::vector<double>(8, 0.0));
    auto enc = nets.encoder.forward(x);
    std::vector<double> mean(enc.begin(), enc.begin() + 8);
    int toward = JointAction{1, 1}.index();  // quality+ / quality+
    int noop = JointAction{6, 4}.index();
    double g_toward = daci_efe_score(nets, mean, toward, cfg, w, eps);
    double g_noop = daci_efe_score(nets, mean, noop, cfg, w, eps);
    CHECK(g_toward < g_noop);
}
