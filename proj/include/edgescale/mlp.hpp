#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "edgescale/rng.hpp"

namespace edgescale {

/// Small fully-connected network: rectifier hidden layers, linear output,
/// plain SGD. Forward/backward are hand-rolled so gradients can be checked
/// against finite differences, and checkpoints round-trip bit-identically
/// through 17-significant-digit text.
class Mlp {
public:
    // Glorot-uniform init, seed-controlled. sizes = {in, hidden..., out}.
    Mlp(std::vector<int> sizes, std::uint64_t seed);

    const std::vector<int>& sizes() const { return sizes_; }
    int input_size() const { return sizes_.front(); }
    int output_size() const { return sizes_.back(); }

    // inference-only pass
    std::vector<double> forward(const std::vector<double>& x) const;

    // training pass: pushes the activations needed by backward() onto a tape
    // stack, so several passes through the same net can nest (backward pops
    // in reverse order)
    std::vector<double> forward_cached(const std::vector<double>& x);

    // backpropagates dloss/doutput through the most recent cached pass,
    // accumulates parameter gradients, returns dloss/dinput
    std::vector<double> backward(const std::vector<double>& dout);

    void zero_grads();
    void sgd_step(double lr);
    // scales accumulated gradients so the global L2 norm is at most max_norm
    void clip_grad_norm(double max_norm);

    // flat parameter / gradient access (weights then biases, layer by layer)
    std::size_t parameter_count() const;
    double get_parameter(std::size_t i) const;
    void set_parameter(std::size_t i, double v);
    double get_gradient(std::size_t i) const;

    void save(std::ostream& out) const;
    static Mlp load(std::istream& in);

    bool operator==(const Mlp& other) const;

private:
    struct Layer {
        std::vector<double> w;  // rows x cols, row-major (out x in)
        std::vector<double> b;
        std::vector<double> dw;
        std::vector<double> db;
        int in = 0, out = 0;
    };

    struct Tape {
        std::vector<std::vector<double>> acts;     // post-activation, acts[0] = input
        std::vector<std::vector<double>> preacts;  // pre-activation per layer
    };

    std::vector<int> sizes_;
    std::vector<Layer> layers_;
    std::vector<Tape> tapes_;
};

}  // namespace edgescale
