#pragma once

#include "eirehn/cells/cell.hpp"

namespace eirehn {

// Vanilla recurrence: h_t = tanh(W_R [h_{t-1}; x_t; 1]).
class RnnCell : public Cell {
public:
    RnnCell(int hidden, int input)
        : dh_(hidden), dx_(input), w_({hidden, hidden + input + 1}) {}

    std::string kind() const override { return "rnn"; }
    int input_dim() const override { return dx_; }
    int hidden_dim() const override { return dh_; }

    std::vector<ParamRef> parameters() override { return {{"W_R", &w_}}; }

    void init(Rng& rng) override { detail::init_uniform(w_, rng, w_.cols()); }

    std::vector<Value> step(Tape& tape, std::span<const Value> leaves,
                            std::span<const Value> state, Value x,
                            StepTrace* trace) const override {
        Value h = tape.tanh(tape.affine(leaves[0], state[0], x));
        if (trace) trace->realized_depth = 1;
        return {h};
    }

    Tensor& weights() { return w_; }

private:
    int dh_, dx_;
    Tensor w_;
};

// LSTM with the combined weight matrix, row blocks ordered (a, i, f, o):
//   c_t = f (x) c_{t-1} + i (x) a,   h_t = o (x) tanh(c_t).
class LstmCell : public Cell {
public:
    LstmCell(int hidden, int input)
        : dh_(hidden), dx_(input), w_({4 * hidden, hidden + input + 1}) {}

    std::string kind() const override { return "lstm"; }
    int input_dim() const override { return dx_; }
    int hidden_dim() const override { return dh_; }
    int state_parts() const override { return 2; }

    std::vector<ParamRef> parameters() override { return {{"W_L", &w_}}; }

    void init(Rng& rng) override { detail::init_uniform(w_, rng, w_.cols()); }

    std::vector<Value> initial_state(Tape& tape) const override {
        return {tape.zero_vec(dh_), tape.zero_vec(dh_)};
    }

    std::vector<Value> step(Tape& tape, std::span<const Value> leaves,
                            std::span<const Value> state, Value x,
                            StepTrace* trace) const override {
        Value pre = tape.affine(leaves[0], state[0], x);
        Expr a = ex(tape, tape.rows(pre, 0, dh_)).tanh();
        Expr i = ex(tape, tape.rows(pre, dh_, dh_)).sigm();
        Expr f = ex(tape, tape.rows(pre, 2 * dh_, dh_)).sigm();
        Expr o = ex(tape, tape.rows(pre, 3 * dh_, dh_)).sigm();
        Expr c = f * ex(tape, state[1]) + i * a;
        Expr h = o * c.tanh();
        if (trace) trace->realized_depth = 1;
        return {h.v, c.v};
    }

    Tensor& weights() { return w_; }

private:
    int dh_, dx_;
    Tensor w_;
};

// Fixed-depth recurrent highway cell, independent transform/carry gates,
// per-layer combined weights W_H^r with row blocks (s, t, c). The input is
// injected only at the first micro-layer; deeper layers see a zero input
// through the same column block.
class RhnCell : public Cell {
public:
    RhnCell(int hidden, int input, int depth) : dh_(hidden), dx_(input), depth_(depth) {
        if (depth < 1) throw ContractError("rhn: depth must be >= 1");
        for (int r = 0; r < depth; ++r) w_.emplace_back(Tensor({3 * hidden, hidden + input + 1}));
    }

    std::string kind() const override { return "rhn"; }
    int input_dim() const override { return dx_; }
    int hidden_dim() const override { return dh_; }
    int depth() const { return depth_; }

    std::vector<ParamRef> parameters() override {
        std::vector<ParamRef> out;
        for (int r = 0; r < depth_; ++r) out.push_back({"W_H." + std::to_string(r + 1), &w_[r]});
        return out;
    }

    void init(Rng& rng) override {
        for (auto& w : w_) detail::init_uniform(w, rng, w.cols());
    }

    std::vector<Value> step(Tape& tape, std::span<const Value> leaves,
                            std::span<const Value> state, Value x,
                            StepTrace* trace) const override {
        Expr h = ex(tape, state[0]);
        Value zero_x = tape.zero_vec(dx_);
        for (int r = 0; r < depth_; ++r) {
            Value pre = tape.affine(leaves[r], h.v, r == 0 ? x : zero_x);
            Expr s = ex(tape, tape.rows(pre, 0, dh_)).tanh();
            Expr t = ex(tape, tape.rows(pre, dh_, dh_)).sigm();
            Expr c = ex(tape, tape.rows(pre, 2 * dh_, dh_)).sigm();
            h = t * s + c * h;
        }
        if (trace) trace->realized_depth = depth_;
        return {h.v};
    }

    Tensor& layer_weights(int r) { return w_[r]; }

private:
    int dh_, dx_, depth_;
    std::vector<Tensor> w_;
};

}  // namespace eirehn
