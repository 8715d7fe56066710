#pragma once

#include <cstdint>

#include "eirehn/cells/cell.hpp"

namespace eirehn {

// Learnable parameters of the rectified exponentially decreasing gate
//   d^r = max0(beta + e^alpha - e^((alpha + alpha_t) r)),
// with beta = sigm(beta_hat), alpha = softplus(alpha_hat) and the local
// decreasing rate alpha_t = sigm(W_a [h_{t-1}; x_t; 1]) computed once per
// timestep and shared by every micro-layer.
struct ElasticGateParams {
    Tensor alpha_hat;  // [D_h], pre-softplus global decreasing rate
    Tensor beta_hat;   // [D_h], pre-sigmoid initial gating bias
    Tensor w_a;        // [D_h x (D_h + D_x + 1)], local decreasing rate weights

    ElasticGateParams() = default;
    ElasticGateParams(int hidden, int input)
        : alpha_hat({hidden}), beta_hat({hidden}), w_a({hidden, hidden + input + 1}) {}

    void append_params(std::vector<ParamRef>& out) {
        out.push_back({"gate.alpha_hat", &alpha_hat});
        out.push_back({"gate.beta_hat", &beta_hat});
        out.push_back({"gate.W_a", &w_a});
    }

    // alpha_hat starts at -2 (alpha ~ 0.127): with alpha_t near sigm(0) = 0.5
    // at the start of training, alpha >= ~0.31 drives d^1 below zero for
    // every unit, and an all-zero gate carries no gradient at all.
    void init(Rng& rng, double alpha_hat_init = -2.0, double beta_hat_init = 2.0) {
        for (size_t i = 0; i < alpha_hat.numel(); ++i) alpha_hat[i] = alpha_hat_init;
        for (size_t i = 0; i < beta_hat.numel(); ++i) beta_hat[i] = beta_hat_init;
        detail::init_uniform(w_a, rng, w_a.cols());
    }
};

// Tape-side bundle: leaves for the three parameter tensors.
struct ElasticGateLeaves {
    Value alpha_hat, beta_hat, w_a;
};

// Per-timestep precomputation reused across micro-layers.
struct ElasticGateStep {
    Expr beta;     // sigm(beta_hat)
    Expr ealpha;   // e^softplus(alpha_hat)
    Expr rate;     // softplus(alpha_hat) + alpha_t
};

inline ElasticGateStep elastic_gate_begin(Tape& tape, const ElasticGateLeaves& gp,
                                          Value h_prev, Value x) {
    Expr alpha = ex(tape, gp.alpha_hat).softplus();
    Expr alpha_t = ex(tape, tape.affine(gp.w_a, h_prev, x)).sigm();
    return {ex(tape, gp.beta_hat).sigm(), alpha.exp(), alpha + alpha_t};
}

inline Value elastic_gate_at(Tape& tape, const ElasticGateStep& step, int r) {
    (void)tape;
    return ((step.beta + step.ealpha) - step.rate.scale(static_cast<double>(r)).exp()).max0().v;
}

// Standalone form: d = max0(beta + e^alpha - e^((alpha+alpha_t) r)).
inline Value elastic_gate(Tape& tape, const ElasticGateLeaves& gp, Value h_prev, Value x,
                          int r) {
    if (r < 1) throw ContractError("elastic_gate: r must be >= 1");
    return elastic_gate_at(tape, elastic_gate_begin(tape, gp, h_prev, x), r);
}

// Global bound on the realized depth R_t over all timesteps:
//   max_i floor((1/alpha_i) log(beta_i + e^{alpha_i})),
// valid because alpha_t > 0 only steepens the decay.
inline int64_t depth_upper_bound(const ElasticGateParams& gp) {
    double best = 0.0;
    for (size_t i = 0; i < gp.alpha_hat.numel(); ++i) {
        double alpha = detail::softplus(gp.alpha_hat[i]);
        double beta = detail::sigmoid(gp.beta_hat[i]);
        best = std::max(best, std::floor(std::log(beta + std::exp(alpha)) / alpha));
    }
    constexpr double kCap = 1e18;  // denormal alpha would overflow the cast
    return static_cast<int64_t>(std::min(best, kCap));
}

}  // namespace eirehn
