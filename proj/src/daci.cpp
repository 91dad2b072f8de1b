#include "edgescale/daci.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

namespace edgescale {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double clamp(double v, double lo, double hi) { return std::clamp(v, lo, hi); }

struct Gaussian {
    std::vector<double> mean;
    std::vector<double> logvar;      // clamped
    std::vector<double> logvar_raw;  // pre-clamp, for the gradient mask
};

Gaussian split_gaussian(const std::vector<double>& out, const DaciConfig& cfg) {
    std::size_t latent = out.size() / 2;
    Gaussian g;
    g.mean.assign(out.begin(), out.begin() + static_cast<long>(latent));
    g.logvar_raw.assign(out.begin() + static_cast<long>(latent), out.end());
    g.logvar.resize(latent);
    for (std::size_t i = 0; i < latent; ++i)
        g.logvar[i] = clamp(g.logvar_raw[i], cfg.logvar_min, cfg.logvar_max);
    return g;
}

std::vector<double> onehot_action(int index) {
    std::vector<double> v(static_cast<std::size_t>(kJointActionCount), 0.0);
    v[static_cast<std::size_t>(index)] = 1.0;
    return v;
}

}  // namespace

namespace {

// flat index of layer `l`'s weights inside the Mlp parameter vector
std::size_t weights_offset(const std::vector<int>& sizes, std::size_t l) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < l; ++k)
        off += static_cast<std::size_t>(sizes[k]) * sizes[k + 1] +
               static_cast<std::size_t>(sizes[k + 1]);
    return off;
}

// scale a whole layer's weights, then plant an identity block: row r of the
// output reads input r. Normalized observations are non-negative, so the
// rectifier passes the identity path through untouched.
void plant_identity(Mlp& net, std::size_t layer, int rows, double scale) {
    const auto& sizes = net.sizes();
    std::size_t in = static_cast<std::size_t>(sizes[layer]);
    std::size_t out = static_cast<std::size_t>(sizes[layer + 1]);
    std::size_t off = weights_offset(sizes, layer);
    for (std::size_t o = 0; o < out; ++o)
        for (std::size_t i = 0; i < in; ++i) {
            std::size_t idx = off + o * in + i;
            net.set_parameter(idx, net.get_parameter(idx) * scale);
        }
    for (int r = 0; r < rows; ++r)
        net.set_parameter(off + static_cast<std::size_t>(r) * in +
                              static_cast<std::size_t>(r),
                          1.0);
}

void set_logvar_head(Mlp& net, int latent, double scale, double bias_init) {
    const auto& sizes = net.sizes();
    std::size_t layer = sizes.size() - 2;
    std::size_t in = static_cast<std::size_t>(sizes[layer]);
    std::size_t out = static_cast<std::size_t>(sizes.back());
    std::size_t off = weights_offset(sizes, layer);
    for (std::size_t o = static_cast<std::size_t>(latent); o < out; ++o)
        for (std::size_t i = 0; i < in; ++i) {
            std::size_t idx = off + o * in + i;
            net.set_parameter(idx, net.get_parameter(idx) * scale);
        }
    std::size_t biases = net.parameter_count() - out;
    for (std::size_t o = static_cast<std::size_t>(latent); o < out; ++o)
        net.set_parameter(biases + o, bias_init);
}

}  // namespace

DaciNets DaciNets::make(int obs_dim, const DaciConfig& config, std::uint64_t seed) {
    int latent = config.latent;
    int hidden = config.hidden;
    if (hidden < std::max(obs_dim, latent))
        throw std::domain_error("hidden width below the identity path");
    DaciNets nets{
        Mlp({obs_dim, hidden, 2 * latent}, derive_seed(seed, 21)),
        Mlp({latent + kJointActionCount, hidden, 2 * latent}, derive_seed(seed, 22)),
        Mlp({latent, hidden, obs_dim}, derive_seed(seed, 23)),
        obs_dim,
        latent,
    };
    // encoder and decoder start as near-identity maps, so reconstruction is
    // exact from the first cycle and the fulfillment read-out of decoded
    // predictions is trustworthy; the transition mean head starts near zero
    // (it is a residual on the incoming latent), so untried actions predict
    // "no change" instead of noise
    int pass = std::min(obs_dim, latent);
    plant_identity(nets.encoder, 0, obs_dim, config.head_scale);
    plant_identity(nets.encoder, 1, pass, config.head_scale);
    set_logvar_head(nets.encoder, latent, config.head_scale, config.enc_logvar_init);
    plant_identity(nets.decoder, 0, latent, config.head_scale);
    plant_identity(nets.decoder, 1, pass, config.head_scale);
    for (std::size_t layer : {std::size_t{0}, std::size_t{1}}) {
        const auto& sizes = nets.transition.sizes();
        std::size_t in = static_cast<std::size_t>(sizes[layer]);
        std::size_t out = static_cast<std::size_t>(sizes[layer + 1]);
        std::size_t off = weights_offset(sizes, layer);
        for (std::size_t o = 0; o < out; ++o)
            for (std::size_t i = 0; i < in; ++i) {
                std::size_t idx = off + o * in + i;
                nets.transition.set_parameter(
                    idx, nets.transition.get_parameter(idx) * config.head_scale);
            }
    }
    set_logvar_head(nets.transition, latent, config.head_scale,
                    config.trans_logvar_init);
    return nets;
}

void DaciNets::save(std::ostream& out) const {
    out << "daci " << obs_dim << ' ' << latent << '\n';
    out << "[encoder]\n";
    encoder.save(out);
    out << "[transition]\n";
    transition.save(out);
    out << "[decoder]\n";
    decoder.save(out);
}

DaciNets DaciNets::load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("daci ", 0) != 0)
        throw std::runtime_error("daci checkpoint: bad header");
    int obs_dim = 0, latent = 0;
    std::sscanf(line.c_str(), "daci %d %d", &obs_dim, &latent);
    auto expect = [&](const char* section) {
        if (!std::getline(in, line) || line != section)
            throw std::runtime_error(std::string("daci checkpoint: expected ") + section);
    };
    expect("[encoder]");
    Mlp encoder = Mlp::load(in);
    expect("[transition]");
    Mlp transition = Mlp::load(in);
    expect("[decoder]");
    Mlp decoder = Mlp::load(in);
    return DaciNets{std::move(encoder), std::move(transition), std::move(decoder),
                    obs_dim, latent};
}

double daci_free_energy(DaciNets& nets, const DaciStepRecord& record,
                        const DaciConfig& config, const std::vector<double>& eps,
                        double grad_weight) {
    const std::size_t latent = static_cast<std::size_t>(nets.latent);
    const std::size_t obs_dim = static_cast<std::size_t>(nets.obs_dim);
    if (record.obs.size() != obs_dim || record.prev_obs.size() != obs_dim)
        throw std::invalid_argument("observation dimension mismatch");
    if (eps.size() != latent) throw std::invalid_argument("eps dimension mismatch");
    bool grads = grad_weight != 0.0;

    auto run = [&](Mlp& net, const std::vector<double>& x) {
        return grads ? net.forward_cached(x) : net.forward(x);
    };

    // prior: transition applied to the previous posterior mean
    auto enc_prev_out = run(nets.encoder, record.prev_obs);
    Gaussian prev = split_gaussian(enc_prev_out, config);
    std::vector<double> trans_in = prev.mean;
    auto action = onehot_action(record.action);
    trans_in.insert(trans_in.end(), action.begin(), action.end());
    auto trans_out = run(nets.transition, trans_in);
    Gaussian prior = split_gaussian(trans_out, config);
    // the transition mean head is a residual on the incoming latent
    for (std::size_t i = 0; i < latent; ++i) prior.mean[i] += prev.mean[i];

    // posterior of the current observation, one reparameterized sample
    auto enc_out = run(nets.encoder, record.obs);
    Gaussian post = split_gaussian(enc_out, config);
    std::vector<double> sample(latent), sigma(latent);
    for (std::size_t i = 0; i < latent; ++i) {
        sigma[i] = std::exp(0.5 * post.logvar[i]);
        sample[i] = post.mean[i] + sigma[i] * eps[i];
    }
    auto decoded = run(nets.decoder, sample);

    // reconstruction NLL under the fixed observation std
    double nll = 0.0;
    double inv_var = 1.0 / (config.obs_sigma * config.obs_sigma);
    for (std::size_t i = 0; i < obs_dim; ++i) {
        double err = record.obs[i] - decoded[i];
        nll += 0.5 * err * err * inv_var + std::log(config.obs_sigma) + 0.5 * kLog2Pi;
    }

    // KL(posterior || prior), closed form for diagonal Gaussians
    double kl = 0.0;
    for (std::size_t i = 0; i < latent; ++i) {
        double dmean = post.mean[i] - prior.mean[i];
        kl += 0.5 * (prior.logvar[i] - post.logvar[i] +
                     (std::exp(post.logvar[i]) + dmean * dmean) *
                         std::exp(-prior.logvar[i]) -
                     1.0);
    }

    double var_phi = (record.phi_cv - record.phi_qr) * (record.phi_cv - record.phi_qr) / 4.0;
    double util = 1.0 - record.ucores / record.tcores;
    double f = nll + kl + config.lambda_eq * var_phi +
               config.lambda_util * util * util;

    if (grads) {
        // backward in reverse graph order; regularizers are constant in the
        // parameters
        std::vector<double> d_decoded(obs_dim);
        for (std::size_t i = 0; i < obs_dim; ++i)
            d_decoded[i] = grad_weight * (decoded[i] - record.obs[i]) * inv_var;
        auto d_sample = nets.decoder.backward(d_decoded);

        std::vector<double> d_enc_out(2 * latent, 0.0);
        for (std::size_t i = 0; i < latent; ++i) {
            double dmean_kl =
                grad_weight * (post.mean[i] - prior.mean[i]) * std::exp(-prior.logvar[i]);
            double dlogvar_kl =
                grad_weight * 0.5 *
                (std::exp(post.logvar[i]) * std::exp(-prior.logvar[i]) - 1.0);
            double dmean = d_sample[i] + dmean_kl;
            double dlogvar = d_sample[i] * eps[i] * 0.5 * sigma[i] + dlogvar_kl;
            bool open = post.logvar_raw[i] > config.logvar_min &&
                        post.logvar_raw[i] < config.logvar_max;
            d_enc_out[i] = dmean;
            d_enc_out[latent + i] = open ? dlogvar : 0.0;
        }
        nets.encoder.backward(d_enc_out);  // pops the record.obs pass

        std::vector<double> d_trans_out(2 * latent, 0.0);
        std::vector<double> d_prior_mean(latent, 0.0);
        for (std::size_t i = 0; i < latent; ++i) {
            double dmean_p =
                -grad_weight * (post.mean[i] - prior.mean[i]) * std::exp(-prior.logvar[i]);
            double dlogvar_p =
                grad_weight * 0.5 *
                (1.0 - (std::exp(post.logvar[i]) +
                        (post.mean[i] - prior.mean[i]) * (post.mean[i] - prior.mean[i])) *
                           std::exp(-prior.logvar[i]));
            bool open = prior.logvar_raw[i] > config.logvar_min &&
                        prior.logvar_raw[i] < config.logvar_max;
            d_prior_mean[i] = dmean_p;
            d_trans_out[i] = dmean_p;
            d_trans_out[latent + i] = open ? dlogvar_p : 0.0;
        }
        auto d_trans_in = nets.transition.backward(d_trans_out);

        std::vector<double> d_enc_prev(2 * latent, 0.0);
        for (std::size_t i = 0; i < latent; ++i)
            d_enc_prev[i] = d_trans_in[i] + d_prior_mean[i];  // residual skip path
        nets.encoder.backward(d_enc_prev);  // pops the prev_obs pass
    }
    return f;
}

double daci_train_step(DaciNets& nets, const std::vector<const DaciStepRecord*>& batch,
                       const DaciConfig& config, Rng& rng) {
    if (batch.empty()) throw std::domain_error("empty batch");
    nets.encoder.zero_grads();
    nets.transition.zero_grads();
    nets.decoder.zero_grads();
    double weight = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    std::vector<double> eps(static_cast<std::size_t>(nets.latent));
    for (const DaciStepRecord* r : batch) {
        for (auto& e : eps) e = rng.normal();
        total += daci_free_energy(nets, *r, config, eps, weight);
    }
    for (Mlp* net : {&nets.encoder, &nets.transition, &nets.decoder}) {
        net->clip_grad_norm(config.grad_clip);
        net->sgd_step(config.lr);
    }
    return total * weight;
}

namespace {

struct ObsRanges {
    double cvq_min, cvq_span, m_min, m_span, qrq_min, qrq_span, c_span, tp_span, c_phy;
};

ObsRanges obs_ranges(const Workload& w) {
    ObsRanges r{};
    r.cvq_min = w.cv.variable("quality").min;
    r.cvq_span = w.cv.variable("quality").max - r.cvq_min;
    r.m_min = w.cv.variable("model_size").min;
    r.m_span = w.cv.variable("model_size").max - r.m_min;
    r.qrq_min = w.qr.variable("quality").min;
    r.qrq_span = w.qr.variable("quality").max - r.qrq_min;
    r.c_span = w.cv.variable("cores").max;
    r.tp_span = w.cv.variable("throughput").max;
    r.c_phy = w.device.c_phy;
    return r;
}

}  // namespace

std::vector<double> daci_normalize(const AgentObservation& obs, const Workload& w) {
    ObsRanges r = obs_ranges(w);
    return {
        (obs.cv.quality - r.cvq_min) / r.cvq_span,
        (obs.cv.model_size.value_or(0) - r.m_min) / r.m_span,
        obs.cv.cores / r.c_span,
        obs.cv.throughput / r.tp_span,
        (obs.qr.quality - r.qrq_min) / r.qrq_span,
        obs.qr.cores / r.c_span,
        obs.qr.throughput / r.tp_span,
        obs.free_cores / r.c_phy,
    };
}

double daci_efe_score(DaciNets& nets, const std::vector<double>& posterior_mean,
                      int action_index, const DaciConfig& config,
                      const Workload& workload,
                      const std::vector<std::vector<double>>& eps_samples) {
    ObsRanges r = obs_ranges(workload);
    const std::size_t latent = static_cast<std::size_t>(nets.latent);

    std::vector<double> trans_in = posterior_mean;
    auto action = onehot_action(action_index);
    trans_in.insert(trans_in.end(), action.begin(), action.end());
    Gaussian prior = split_gaussian(nets.transition.forward(trans_in), config);
    for (std::size_t i = 0; i < latent; ++i) prior.mean[i] += posterior_mean[i];

    const Slo cv_q_slo{"quality", *workload.cv.variable("quality").slo_target};
    const Slo cv_m_slo{"model_size", *workload.cv.variable("model_size").slo_target};
    const Slo cv_tp_slo{"throughput", *workload.cv.variable("throughput").slo_target};
    const Slo qr_q_slo{"quality", *workload.qr.variable("quality").slo_target};
    const Slo qr_tp_slo{"throughput", *workload.qr.variable("throughput").slo_target};

    std::vector<std::vector<double>> decoded;
    decoded.reserve(eps_samples.size());
    double pragmatic = 0.0;
    std::vector<double> s(latent);
    for (const auto& eps : eps_samples) {
        for (std::size_t i = 0; i < latent; ++i)
            s[i] = prior.mean[i] + std::exp(0.5 * prior.logvar[i]) * eps[i];
        std::vector<double> o = nets.decoder.forward(s);
        // denormalize with clamping; fulfillment accepts real-valued metrics
        double q_cv = clamp(o[0] * r.cvq_span + r.cvq_min, r.cvq_min, r.cvq_min + r.cvq_span);
        double m_cv = clamp(o[1] * r.m_span + r.m_min, r.m_min, r.m_min + r.m_span);
        double c_cv = clamp(o[2] * r.c_span, 0.0, r.c_span);
        double tp_cv = clamp(o[3] * r.tp_span, 0.0, r.tp_span);
        double q_qr = clamp(o[4] * r.qrq_span + r.qrq_min, r.qrq_min, r.qrq_min + r.qrq_span);
        double c_qr = clamp(o[5] * r.c_span, 0.0, r.c_span);
        double tp_qr = clamp(o[6] * r.tp_span, 0.0, r.tp_span);

        double phi_cv = (slo_fulfillment(q_cv, cv_q_slo) + slo_fulfillment(m_cv, cv_m_slo) +
                         slo_fulfillment(tp_cv, cv_tp_slo)) /
                        3.0;
        double phi_qr =
            (slo_fulfillment(q_qr, qr_q_slo) + slo_fulfillment(tp_qr, qr_tp_slo)) / 2.0;
        double util = 1.0 - clamp(c_cv + c_qr, 0.0, r.c_phy) / r.c_phy;
        pragmatic += (1.0 - 0.5 * (phi_cv + phi_qr)) +
                     config.lambda_eq * (phi_cv - phi_qr) * (phi_cv - phi_qr) / 4.0 +
                     config.lambda_util * util * util;
        decoded.push_back(std::move(o));
    }
    pragmatic /= static_cast<double>(eps_samples.size());

    // decoded-prediction disagreement as the epistemic bonus
    double disagreement = 0.0;
    std::size_t k = decoded.size();
    if (k > 1) {
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = i + 1; j < k; ++j) {
                double d2 = 0.0;
                for (std::size_t d = 0; d < decoded[i].size(); ++d) {
                    double diff = decoded[i][d] - decoded[j][d];
                    d2 += diff * diff;
                }
                disagreement += d2;
            }
        disagreement *= 2.0 / (static_cast<double>(k) * static_cast<double>(k - 1));
    }
    return pragmatic - config.beta_epi * disagreement;
}

DaciAgent::DaciAgent(Workload workload, DaciConfig config, std::uint64_t seed)
    : workload_(std::move(workload)),
      config_(config),
      nets_(DaciNets::make(8, config, seed)),
      rng_(derive_seed(seed, 31)) {}

Assignment DaciAgent::decide(const AgentObservation& obs, const TimeSeriesStore&) {
    std::vector<double> x = daci_normalize(obs, workload_);

    // finish the previous transition and take one training step on a batch
    if (prev_action_ >= 0) {
        DaciStepRecord rec;
        rec.prev_obs = prev_obs_;
        rec.obs = x;
        rec.action = prev_action_;
        rec.phi_cv = obs.phi_cv;
        rec.phi_qr = obs.phi_qr;
        rec.ucores = obs.cv.cores + obs.qr.cores;
        rec.tcores = workload_.device.c_phy;
        replay_.push_back(std::move(rec));
        if (replay_.size() > config_.replay_capacity) replay_.pop_front();

        std::size_t batch = std::min<std::size_t>(
            static_cast<std::size_t>(config_.batch), replay_.size());
        std::vector<std::size_t> idx(replay_.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::vector<const DaciStepRecord*> chosen;
        chosen.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            std::size_t j = i + rng_.uniform_index(idx.size() - i);
            std::swap(idx[i], idx[j]);
            chosen.push_back(&replay_[idx[i]]);
        }
        last_loss_ = daci_train_step(nets_, chosen, config_, rng_);
    }

    // posterior of the current observation
    Gaussian post = split_gaussian(nets_.encoder.forward(x), config_);

    // shared noise across actions keeps identical predictions tied exactly
    std::vector<std::vector<double>> eps(static_cast<std::size_t>(config_.mc_samples));
    for (auto& e : eps) {
        e.resize(static_cast<std::size_t>(config_.latent));
        for (auto& v : e) v = rng_.normal();
    }

    auto legal = legal_actions(obs, workload_);
    JointAction best = legal.front();
    double best_score = 0.0;
    bool first = true;
    for (JointAction a : legal) {
        double g = daci_efe_score(nets_, post.mean, a.index(), config_, workload_, eps);
        if (first || g < best_score) {
            best = a;
            best_score = g;
            first = false;
        }
    }

    prev_obs_ = x;
    prev_action_ = best.index();
    last_action_ = best;
    return apply_joint_action(obs, best, workload_);
}

void DaciAgent::save_checkpoint(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    nets_.save(out);
}

void DaciAgent::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    nets_ = DaciNets::load(in);
}

}  // namespace edgescale
