#pragma once

#include "eirehn/cells/elastic_gate.hpp"

namespace eirehn {

// Weights shared by every micro-layer of the coupled-gate highway update
//   h^r = g (x) s + (1 - g) (x) h^{r-1},
//   s = tanh(W_s h^{r-1} + W_x x I{r=1} + b_s),
//   ghat = sigm(W_g h^{r-1} + W_x x I{r=1} + b_g).
// One W_x feeds both streams. This is the shared base the elastic-gate and
// hypernetwork variants extend, so those reductions are exact.
struct SharedHighwayParams {
    Tensor w_x;        // [D_h x D_x]
    Tensor w_s, w_g;   // [D_h x D_h]
    Tensor b_s, b_g;   // [D_h]

    SharedHighwayParams() = default;
    SharedHighwayParams(int hidden, int input)
        : w_x({hidden, input}), w_s({hidden, hidden}), w_g({hidden, hidden}),
          b_s({hidden}), b_g({hidden}) {}

    void append_params(std::vector<ParamRef>& out) {
        out.push_back({"W_x", &w_x});
        out.push_back({"W_s", &w_s});
        out.push_back({"W_g", &w_g});
        out.push_back({"b_s", &b_s});
        out.push_back({"b_g", &b_g});
    }

    void init(Rng& rng, int hidden, int input) {
        detail::init_uniform(w_x, rng, input);
        detail::init_uniform(w_s, rng, hidden);
        detail::init_uniform(w_g, rng, hidden);
        // biases start at zero
        b_s = Tensor::zeros({hidden});
        b_g = Tensor::zeros({hidden});
    }
};

struct SharedHighwayLeaves {
    Value w_x, w_s, w_g, b_s, b_g;

    static SharedHighwayLeaves take(std::span<const Value> leaves, size_t offset) {
        return {leaves[offset], leaves[offset + 1], leaves[offset + 2], leaves[offset + 3],
                leaves[offset + 4]};
    }
};

// Pre-activation of one shared-weight stream: W h + b (+ W_x x at r = 1).
inline Expr shared_stream_pre(Tape& tape, Value w, Value b, Value w_x, Value h, Value x,
                              int r) {
    Expr pre = ex(tape, tape.matmul(w, h)) + ex(tape, b);
    if (r == 1) pre = pre + ex(tape, tape.matmul(w_x, x));
    return pre;
}

// RHN with one shared weight set for every micro-layer and a coupled gate.
class SrhnCell : public Cell {
public:
    SrhnCell(int hidden, int input, int depth)
        : dh_(hidden), dx_(input), depth_(depth), shared_(hidden, input) {
        if (depth < 1) throw ContractError("srhn: depth must be >= 1");
    }

    std::string kind() const override { return "srhn"; }
    int input_dim() const override { return dx_; }
    int hidden_dim() const override { return dh_; }
    int depth() const { return depth_; }

    std::vector<ParamRef> parameters() override {
        std::vector<ParamRef> out;
        shared_.append_params(out);
        return out;
    }

    void init(Rng& rng) override { shared_.init(rng, dh_, dx_); }

    std::vector<Value> step(Tape& tape, std::span<const Value> leaves,
                            std::span<const Value> state, Value x,
                            StepTrace* trace) const override {
        auto lv = SharedHighwayLeaves::take(leaves, 0);
        Expr h = ex(tape, state[0]);
        for (int r = 1; r <= depth_; ++r) {
            Expr s = shared_stream_pre(tape, lv.w_s, lv.b_s, lv.w_x, h.v, x, r).tanh();
            Expr g = shared_stream_pre(tape, lv.w_g, lv.b_g, lv.w_x, h.v, x, r).sigm();
            h = g * s + (1.0 - g) * h;
        }
        if (trace) trace->realized_depth = depth_;
        return {h.v};
    }

    SharedHighwayParams& shared() { return shared_; }

private:
    int dh_, dx_, depth_;
    SharedHighwayParams shared_;
};

// SRHN plus the elastic gate: g^r = d^r (x) ghat^r, micro-loop halting when
// ||g^r||_1 reaches exact zero or r exceeds R_max.
class SrehnCell : public Cell {
public:
    SrehnCell(int hidden, int input, int r_max)
        : dh_(hidden), dx_(input), r_max_(r_max), shared_(hidden, input),
          gate_(hidden, input) {
        if (r_max < 1) throw ContractError("srehn: R_max must be >= 1");
    }

    std::string kind() const override { return "srehn"; }
    int input_dim() const override { return dx_; }
    int hidden_dim() const override { return dh_; }
    int r_max() const { return r_max_; }

    std::vector<ParamRef> parameters() override {
        std::vector<ParamRef> out;
        shared_.append_params(out);
        gate_.append_params(out);
        return out;
    }

    void init(Rng& rng) override {
        shared_.init(rng, dh_, dx_);
        gate_.init(rng);
    }

    std::vector<Value> step(Tape& tape, std::span<const Value> leaves,
                            std::span<const Value> state, Value x,
                            StepTrace* trace) const override {
        auto lv = SharedHighwayLeaves::take(leaves, 0);
        ElasticGateLeaves gl{leaves[5], leaves[6], leaves[7]};
        ElasticGateStep gate = elastic_gate_begin(tape, gl, state[0], x);

        Expr h = ex(tape, state[0]);
        int realized = 0;
        for (int r = 1;; ++r) {
            Expr s = shared_stream_pre(tape, lv.w_s, lv.b_s, lv.w_x, h.v, x, r).tanh();
            Expr ghat = shared_stream_pre(tape, lv.w_g, lv.b_g, lv.w_x, h.v, x, r).sigm();
            Expr d = ex(tape, elastic_gate_at(tape, gate, r));
            Expr g = d * ghat;
            if (trace) {
                trace->elastic.push_back(d.val());
                trace->gate.push_back(g.val());
            }
            if (g.val().sum_abs() > 0.0 && r <= r_max_) {
                h = g * s + (1.0 - g) * h;
                realized = r;
            } else {
                if (trace) trace->halted_by_gate = g.val().sum_abs() == 0.0;
                break;
            }
        }
        if (trace) trace->realized_depth = realized;
        return {h.v};
    }

    SharedHighwayParams& shared() { return shared_; }
    ElasticGateParams& gate() { return gate_; }

private:
    int dh_, dx_, r_max_;
    SharedHighwayParams shared_;
    ElasticGateParams gate_;
};

}  // namespace eirehn
