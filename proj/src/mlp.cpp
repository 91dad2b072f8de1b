#include "edgescale/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "edgescale/util.hpp"

namespace edgescale {

Mlp::Mlp(std::vector<int> sizes, std::uint64_t seed) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::domain_error("Mlp needs >= 2 layers");
    Rng rng(seed);
    layers_.resize(sizes_.size() - 1);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Layer& layer = layers_[l];
        layer.in = sizes_[l];
        layer.out = sizes_[l + 1];
        if (layer.in <= 0 || layer.out <= 0)
            throw std::domain_error("Mlp layer sizes must be positive");
        double bound = std::sqrt(6.0 / (layer.in + layer.out));
        layer.w.resize(static_cast<std::size_t>(layer.in) * layer.out);
        for (auto& w : layer.w) w = rng.uniform(-bound, bound);
        layer.b.assign(static_cast<std::size_t>(layer.out), 0.0);
        layer.dw.assign(layer.w.size(), 0.0);
        layer.db.assign(layer.b.size(), 0.0);
    }
}

std::vector<double> Mlp::forward(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != input_size())
        throw std::invalid_argument("Mlp input size mismatch: got " +
                                    std::to_string(x.size()) + ", want " +
                                    std::to_string(input_size()));
    std::vector<double> a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        std::vector<double> z(static_cast<std::size_t>(layer.out));
        for (int o = 0; o < layer.out; ++o) {
            double sum = layer.b[static_cast<std::size_t>(o)];
            const double* wrow = &layer.w[static_cast<std::size_t>(o) * layer.in];
            for (int i = 0; i < layer.in; ++i) sum += wrow[i] * a[static_cast<std::size_t>(i)];
            z[static_cast<std::size_t>(o)] = sum;
        }
        bool hidden = l + 1 < layers_.size();
        if (hidden)
            for (auto& v : z) v = v > 0.0 ? v : 0.0;
        a = std::move(z);
    }
    return a;
}

std::vector<double> Mlp::forward_cached(const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != input_size())
        throw std::invalid_argument("Mlp input size mismatch");
    Tape tape;
    tape.acts.push_back(x);
    std::vector<double> a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        std::vector<double> z(static_cast<std::size_t>(layer.out));
        for (int o = 0; o < layer.out; ++o) {
            double sum = layer.b[static_cast<std::size_t>(o)];
            const double* wrow = &layer.w[static_cast<std::size_t>(o) * layer.in];
            for (int i = 0; i < layer.in; ++i) sum += wrow[i] * a[static_cast<std::size_t>(i)];
            z[static_cast<std::size_t>(o)] = sum;
        }
        tape.preacts.push_back(z);
        bool hidden = l + 1 < layers_.size();
        if (hidden)
            for (auto& v : z) v = v > 0.0 ? v : 0.0;
        tape.acts.push_back(z);
        a = std::move(z);
    }
    tapes_.push_back(std::move(tape));
    return a;
}

std::vector<double> Mlp::backward(const std::vector<double>& dout) {
    if (tapes_.empty())
        throw std::logic_error("backward without forward_cached");
    if (static_cast<int>(dout.size()) != output_size())
        throw std::invalid_argument("Mlp output gradient size mismatch");
    Tape tape = std::move(tapes_.back());
    tapes_.pop_back();
    std::vector<double> delta = dout;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        Layer& layer = layers_[li];
        bool hidden = li + 1 < layers_.size();
        if (hidden) {
            const auto& z = tape.preacts[li];
            for (int o = 0; o < layer.out; ++o)
                if (z[static_cast<std::size_t>(o)] <= 0.0)
                    delta[static_cast<std::size_t>(o)] = 0.0;
        }
        const auto& a_in = tape.acts[li];
        for (int o = 0; o < layer.out; ++o) {
            double d = delta[static_cast<std::size_t>(o)];
            layer.db[static_cast<std::size_t>(o)] += d;
            double* dwrow = &layer.dw[static_cast<std::size_t>(o) * layer.in];
            for (int i = 0; i < layer.in; ++i)
                dwrow[i] += d * a_in[static_cast<std::size_t>(i)];
        }
        std::vector<double> dprev(static_cast<std::size_t>(layer.in), 0.0);
        for (int o = 0; o < layer.out; ++o) {
            double d = delta[static_cast<std::size_t>(o)];
            const double* wrow = &layer.w[static_cast<std::size_t>(o) * layer.in];
            for (int i = 0; i < layer.in; ++i)
                dprev[static_cast<std::size_t>(i)] += d * wrow[i];
        }
        delta = std::move(dprev);
    }
    return delta;
}

void Mlp::zero_grads() {
    for (auto& layer : layers_) {
        std::fill(layer.dw.begin(), layer.dw.end(), 0.0);
        std::fill(layer.db.begin(), layer.db.end(), 0.0);
    }
}

void Mlp::sgd_step(double lr) {
    for (auto& layer : layers_) {
        for (std::size_t i = 0; i < layer.w.size(); ++i) layer.w[i] -= lr * layer.dw[i];
        for (std::size_t i = 0; i < layer.b.size(); ++i) layer.b[i] -= lr * layer.db[i];
    }
}

void Mlp::clip_grad_norm(double max_norm) {
    double sq = 0.0;
    for (const auto& layer : layers_) {
        for (double g : layer.dw) sq += g * g;
        for (double g : layer.db) sq += g * g;
    }
    double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    double scale = max_norm / norm;
    for (auto& layer : layers_) {
        for (double& g : layer.dw) g *= scale;
        for (double& g : layer.db) g *= scale;
    }
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer.w.size() + layer.b.size();
    return n;
}

namespace {

template <typename L, typename F>
decltype(auto) with_parameter(L& layers, std::size_t i, F&& f) {
    for (auto& layer : layers) {
        if (i < layer.w.size()) return f(layer.w, i);
        i -= layer.w.size();
        if (i < layer.b.size()) return f(layer.b, i);
        i -= layer.b.size();
    }
    throw std::out_of_range("Mlp parameter index");
}

}  // namespace

double Mlp::get_parameter(std::size_t i) const {
    return with_parameter(layers_, i, [](const auto& v, std::size_t k) { return v[k]; });
}

void Mlp::set_parameter(std::size_t i, double value) {
    with_parameter(layers_, i, [&](auto& v, std::size_t k) {
        v[k] = value;
        return 0.0;
    });
}

double Mlp::get_gradient(std::size_t i) const {
    for (const auto& layer : layers_) {
        if (i < layer.dw.size()) return layer.dw[i];
        i -= layer.dw.size();
        if (i < layer.db.size()) return layer.db[i];
        i -= layer.db.size();
    }
    throw std::out_of_range("Mlp gradient index");
}

void Mlp::save(std::ostream& out) const {
    out << "mlp";
    for (int s : sizes_) out << ' ' << s;
    out << '\n';
    char buf[40];
    for (const auto& layer : layers_) {
        for (double w : layer.w) {
            std::snprintf(buf, sizeof buf, "%.17g", w);
            out << buf << '\n';
        }
        for (double b : layer.b) {
            std::snprintf(buf, sizeof buf, "%.17g", b);
            out << buf << '\n';
        }
    }
}

Mlp Mlp::load(std::istream& in) {
    std::string header;
    if (!std::getline(in, header))
        throw std::runtime_error("Mlp checkpoint: missing header");
    std::istringstream hs(header);
    std::string tag;
    hs >> tag;
    if (tag != "mlp") throw std::runtime_error("Mlp checkpoint: bad header");
    std::vector<int> sizes;
    int s;
    while (hs >> s) sizes.push_back(s);
    Mlp net(sizes, 0);
    std::string line;
    for (auto& layer : net.layers_) {
        for (double& w : layer.w) {
            if (!std::getline(in, line))
                throw std::runtime_error("Mlp checkpoint: truncated weights");
            w = parse_double(trim(line));
        }
        for (double& b : layer.b) {
            if (!std::getline(in, line))
                throw std::runtime_error("Mlp checkpoint: truncated biases");
            b = parse_double(trim(line));
        }
    }
    return net;
}

bool Mlp::operator==(const Mlp& other) const {
    if (sizes_ != other.sizes_) return false;
    for (std::size_t l = 0; l < layers_.size(); ++l)
        if (layers_[l].w != other.layers_[l].w || layers_[l].b != other.layers_[l].b)
            return false;
    return true;
}

}  // namespace edgescale
