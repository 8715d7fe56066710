#pragma once

#include "eirehn/cells/srhn.hpp"

namespace eirehn {

// Hypernetwork producing the per-micro-layer dynamic weights: a small RNN
// over micro-layers whose state z feeds per-stream diagonal weight deltas
// w = P z and weight-update gates gbar = sigm(Pbar z + bbar).
struct HyperParams {
    Tensor w_zh, w_zg;        // [D_z x D_h]
    Tensor w_z;               // [D_z x D_z]
    Tensor b_z;               // [D_z]
    Tensor p_s, p_g;          // [D_h x D_z]
    Tensor pbar_s, pbar_g;    // [D_h x D_z]
    Tensor bbar_s, bbar_g;    // [D_h]

    HyperParams() = default;
    HyperParams(int hidden, int hyper)
        : w_zh({hyper, hidden}), w_zg({hyper, hidden}), w_z({hyper, hyper}), b_z({hyper}),
          p_s({hidden, hyper}), p_g({hidden, hyper}), pbar_s({hidden, hyper}),
          pbar_g({hidden, hyper}), bbar_s({hidden}), bbar_g({hidden}) {}

    void append_params(std::vector<ParamRef>& out) {
        out.push_back({"hyper.W_zh", &w_zh});
        out.push_back({"hyper.W_zg", &w_zg});
        out.push_back({"hyper.W_z", &w_z});
        out.push_back({"hyper.b_z", &b_z});
        out.push_back({"hyper.P_s", &p_s});
        out.push_back({"hyper.P_g", &p_g});
        out.push_back({"hyper.Pbar_s", &pbar_s});
        out.push_back({"hyper.Pbar_g", &pbar_g});
        out.push_back({"hyper.bbar_s", &bbar_s});
        out.push_back({"hyper.bbar_g", &bbar_g});
    }

    void init(Rng& rng, int hidden, int hyper) {
        detail::init_uniform(w_zh, rng, hidden);
        detail::init_uniform(w_zg, rng, hidden);
        detail::init_uniform(w_z, rng, hyper);
        b_z = Tensor::zeros({hyper});
        detail::init_uniform(p_s, rng, hyper);
        detail::init_uniform(p_g, rng, hyper);
        detail::init_uniform(pbar_s, rng, hyper);
        detail::init_uniform(pbar_g, rng, hyper);
        bbar_s = Tensor::zeros({hidden});
        bbar_g = Tensor::zeros({hidden});
    }

    // Zeroing every hypernetwork tensor removes the dynamic path entirely;
    // the cell then reduces to SREHN exactly.
    void zero() {
        for (Tensor* t : {&w_zh, &w_zg, &w_z, &b_z, &p_s, &p_g, &pbar_s, &pbar_g,
                          &bbar_s, &bbar_g})
            *t = Tensor::zeros(t->shape());
    }
};

struct HyperLeaves {
    Value w_zh, w_zg, w_z, b_z, p_s, p_g, pbar_s, pbar_g, bbar_s, bbar_g;

    static HyperLeaves take(std::span<const Value> leaves, size_t o) {
        return {leaves[o], leaves[o + 1], leaves[o + 2], leaves[o + 3], leaves[o + 4],
                leaves[o + 5], leaves[o + 6], leaves[o + 7], leaves[o + 8], leaves[o + 9]};
    }
};

struct HyperStepOut {
    Value z;              // next hypernetwork state
    Value w_s, w_g;       // diagonal weight deltas per stream
    Value gbar_s, gbar_g; // weight-update gates per stream
};

// z = tanh(W_zh s_prev + W_zg ghat_prev + W_z z_prev + b_z), then the
// per-stream projections.
inline HyperStepOut hyper_step(Tape& tape, const HyperLeaves& hp, Value s_prev, Value g_prev,
                               Value z_prev) {
    Expr z = (ex(tape, tape.matmul(hp.w_zh, s_prev)) + ex(tape, tape.matmul(hp.w_zg, g_prev)) +
              ex(tape, tape.matmul(hp.w_z, z_prev)) + ex(tape, hp.b_z))
                 .tanh();
    Value w_s = tape.matmul(hp.p_s, z.v);
    Value w_g = tape.matmul(hp.p_g, z.v);
    Value gbar_s = tape.sigm(tape.add(tape.matmul(hp.pbar_s, z.v), hp.bbar_s));
    Value gbar_g = tape.sigm(tape.add(tape.matmul(hp.pbar_g, z.v), hp.bbar_g));
    return {z.v, w_s, w_g, gbar_s, gbar_g};
}

struct GatedResidualOut {
    Value value;       // activated stream output
    Value accum_next;  // accumulated diagonal after adding w_new
};

// One stream of the dynamic-weight residual computation. accum holds the
// per-unit diagonal of the accumulated weight updates (the base dense
// matrix applies at every layer on its own); the new delta is mixed in
// through the weight-update gate:
//   pre = base_w h + gbar (x) (accum (x) h) + (1-gbar) (x) (w_new (x) h)
//         + W_x x I{r=1} + b
//   value = tanh(pre) for the residual stream, sigm(pre) for the gating
//   stream; accum' = accum + w_new.
inline GatedResidualOut gated_residual(Tape& tape, Value base_w, Value bias, Value w_x,
                                       Value accum, Value w_new, Value gbar, Value h_in,
                                       Value x, int r, bool sigmoid_stream) {
    if (r < 1) throw ContractError("gated_residual: r must be >= 1");
    Expr h = ex(tape, h_in);
    Expr gb = ex(tape, gbar);
    Expr dyn = gb * (ex(tape, accum) * h) + (1.0 - gb) * (ex(tape, w_new) * h);
    Expr pre = ex(tape, tape.matmul(base_w, h_in)) + dyn + ex(tape, bias);
    if (r == 1) pre = pre + ex(tape, tape.matmul(w_x, x));
    Value value = sigmoid_stream ? tape.sigm(pre.v) : tape.tanh(pre.v);
    Value accum_next = tape.add(accum, w_new);
    return {value, accum_next};
}

// The full cell: shared highway base, elastic gate, and hypernetwork-driven
// dynamic diagonal weights, stepped with the adaptive-depth micro-loop.
// All micro-layer state (hypernetwork state, diagonal accumulators) resets
// at each timestep.
class EirehnCell : public Cell {
public:
    EirehnCell(int hidden, int input, int hyper, int r_max)
        : dh_(hidden), dx_(input), dz_(hyper), r_max_(r_max), shared_(hidden, input),
          gate_(hidden, input), hyper_(hidden, hyper) {
        if (r_max < 1) throw ContractError("eirehn: R_max must be >= 1");
        if (hyper < 1) throw ContractError("eirehn: D_z must be >= 1");
    }

    // Default hypernetwork size: half the hidden size, rounded up.
    EirehnCell(int hidden, int input, int r_max)
        : EirehnCell(hidden, input, (hidden + 1) / 2, r_max) {}

    std::string kind() const override { return "eirehn"; }
    int input_dim() const override { return dx_; }
    int hidden_dim() const override { return dh_; }
    int hyper_dim() const { return dz_; }
    int r_max() const { return r_max_; }

    std::vector<ParamRef> parameters() override {
        std::vector<ParamRef> out;
        shared_.append_params(out);
        gate_.append_params(out);
        hyper_.append_params(out);
        return out;
    }

    void init(Rng& rng) override {
        shared_.init(rng, dh_, dx_);
        gate_.init(rng);
        hyper_.init(rng, dh_, dz_);
    }

    std::vector<Value> step(Tape& tape, std::span<const Value> leaves,
                            std::span<const Value> state, Value x,
                            StepTrace* trace) const override {
        auto lv = SharedHighwayLeaves::take(leaves, 0);
        ElasticGateLeaves gl{leaves[5], leaves[6], leaves[7]};
        HyperLeaves hl = HyperLeaves::take(leaves, 8);

        // r = 0 state: previous residual/gating/hyper states are zero, the
        // diagonal accumulators start from the base matrix alone.
        Value s_prev = tape.zero_vec(dh_);
        Value g_prev = tape.zero_vec(dh_);
        Value z_prev = tape.zero_vec(dz_);
        Value accum_s = tape.zero_vec(dh_);
        Value accum_g = tape.zero_vec(dh_);

        ElasticGateStep gate = elastic_gate_begin(tape, gl, state[0], x);

        Expr h = ex(tape, state[0]);
        int realized = 0;
        for (int r = 1;; ++r) {
            HyperStepOut hs = hyper_step(tape, hl, s_prev, g_prev, z_prev);
            GatedResidualOut rs = gated_residual(tape, lv.w_s, lv.b_s, lv.w_x, accum_s,
                                                 hs.w_s, hs.gbar_s, h.v, x, r, false);
            GatedResidualOut rg = gated_residual(tape, lv.w_g, lv.b_g, lv.w_x, accum_g,
                                                 hs.w_g, hs.gbar_g, h.v, x, r, true);
            Expr d = ex(tape, elastic_gate_at(tape, gate, r));
            Expr g = d * ex(tape, rg.value);

            if (!tape.val(g.v).all_finite() || !tape.val(rs.value).all_finite())
                throw NumericalError("eirehn_step: non-finite at micro-layer r=" +
                                     std::to_string(r));
            if (trace) {
                trace->elastic.push_back(d.val());
                trace->gate.push_back(g.val());
                trace->hyper.push_back(tape.val(hs.z));
            }

            if (g.val().sum_abs() > 0.0 && r <= r_max_) {
                h = g * ex(tape, rs.value) + (1.0 - g) * h;
                realized = r;
                s_prev = rs.value;
                g_prev = rg.value;
                z_prev = hs.z;
                accum_s = rs.accum_next;
                accum_g = rg.accum_next;
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
    HyperParams& hyper() { return hyper_; }

private:
    int dh_, dx_, dz_, r_max_;
    SharedHighwayParams shared_;
    ElasticGateParams gate_;
    HyperParams hyper_;
};

}  // namespace eirehn
