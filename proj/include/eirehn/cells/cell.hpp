#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "eirehn/errors.hpp"
#include "eirehn/rng.hpp"
#include "eirehn/tape.hpp"
#include "eirehn/tensor.hpp"

namespace eirehn {

// Named view of one learnable tensor.
struct ParamRef {
    std::string name;
    Tensor* tensor = nullptr;
};

// Per-timestep diagnostics for cells with adaptive recurrence depth.
// gate/elastic/hyper hold every computed micro-layer including the one
// that triggered the halt, so gate.size() is realized_depth or
// realized_depth + 1.
struct StepTrace {
    int realized_depth = 0;
    std::vector<Tensor> gate;     // g^r = d^r (x) ghat^r
    std::vector<Tensor> elastic;  // d^r
    std::vector<Tensor> hyper;    // z^r
    bool halted_by_gate = false;  // ||g||_1 hit exact zero before r exceeded R_max
};

// State transition model h_t = S(h_{t-1}, x_t). State is a small vector of
// tape values: one hidden part for most cells, hidden plus cell state for
// the LSTM. Parameters are plain tensors bound to a tape as leaves in
// parameters() order before stepping.
class Cell {
public:
    virtual ~Cell() = default;

    virtual std::string kind() const = 0;
    virtual int input_dim() const = 0;
    virtual int hidden_dim() const = 0;
    virtual int state_parts() const { return 1; }

    virtual std::vector<ParamRef> parameters() = 0;
    virtual void init(Rng& rng) = 0;

    virtual std::vector<Value> initial_state(Tape& tape) const {
        return {tape.zero_vec(hidden_dim())};
    }

    virtual std::vector<Value> step(Tape& tape, std::span<const Value> leaves,
                                    std::span<const Value> state, Value x,
                                    StepTrace* trace) const = 0;
};

inline std::vector<Value> bind_leaves(Tape& tape, std::span<const ParamRef> params) {
    std::vector<Value> leaves;
    leaves.reserve(params.size());
    for (const ParamRef& p : params) leaves.push_back(tape.leaf(*p.tensor));
    return leaves;
}

inline long long count_parameters(std::span<const ParamRef> params) {
    long long n = 0;
    for (const ParamRef& p : params) n += static_cast<long long>(p.tensor->numel());
    return n;
}

struct Unrolled {
    std::vector<Value> hidden;          // h_1 .. h_T (top of the state)
    std::vector<StepTrace> traces;      // filled when requested
};

// Threads state through a sequence of inputs. Throws on an empty sequence;
// numerical errors from a step are re-raised with the timestep attached.
inline Unrolled unroll(Tape& tape, const Cell& cell, std::span<const Value> leaves,
                       std::span<const Value> xs, bool want_traces = false) {
    if (xs.empty()) throw ContractError("unroll: empty input sequence");
    Unrolled out;
    out.hidden.reserve(xs.size());
    std::vector<Value> state = cell.initial_state(tape);
    for (size_t t = 0; t < xs.size(); ++t) {
        StepTrace trace;
        try {
            state = cell.step(tape, leaves, state, xs[t], want_traces ? &trace : nullptr);
        } catch (const NumericalError& e) {
            throw NumericalError("t=" + std::to_string(t + 1) + ": " + e.what());
        }
        out.hidden.push_back(state[0]);
        if (want_traces) out.traces.push_back(std::move(trace));
    }
    return out;
}

// L stacked cells: layer l consumes layer l-1's hidden sequence. Parameter
// names gain a "layer<l>." prefix so serialization stays unambiguous.
class Stack {
public:
    explicit Stack(std::vector<std::unique_ptr<Cell>> layers) : layers_(std::move(layers)) {
        if (layers_.empty()) throw ContractError("stack: needs at least one layer");
        for (size_t l = 1; l < layers_.size(); ++l)
            if (layers_[l]->input_dim() != layers_[l - 1]->hidden_dim())
                throw ShapeError("stack: layer " + std::to_string(l) + " input dim mismatch");
        for (auto& layer : layers_) param_counts_.push_back(layer->parameters().size());
    }

    size_t depth() const { return layers_.size(); }
    Cell& layer(size_t l) { return *layers_[l]; }
    const Cell& layer(size_t l) const { return *layers_[l]; }
    int input_dim() const { return layers_.front()->input_dim(); }
    int hidden_dim() const { return layers_.back()->hidden_dim(); }

    std::vector<ParamRef> parameters() {
        std::vector<ParamRef> out;
        for (size_t l = 0; l < layers_.size(); ++l)
            for (ParamRef& p : layers_[l]->parameters())
                out.push_back({"layer" + std::to_string(l) + "." + p.name, p.tensor});
        return out;
    }

    void init(Rng& rng) {
        for (size_t l = 0; l < layers_.size(); ++l) {
            Rng layer_rng = rng.child(l);
            layers_[l]->init(layer_rng);
        }
    }

    struct StackUnrolled {
        std::vector<Value> hidden;                      // top layer h_1..h_T
        std::vector<std::vector<StepTrace>> traces;     // [layer][t]
    };

    StackUnrolled unroll(Tape& tape, std::span<const Value> leaves,
                         std::span<const Value> xs, bool want_traces = false) const {
        StackUnrolled out;
        std::vector<Value> inputs(xs.begin(), xs.end());
        size_t offset = 0;
        for (size_t l = 0; l < layers_.size(); ++l) {
            Unrolled u = eirehn::unroll(tape, *layers_[l],
                                        leaves.subspan(offset, param_counts_[l]),
                                        inputs, want_traces);
            offset += param_counts_[l];
            inputs = u.hidden;
            if (want_traces) out.traces.push_back(std::move(u.traces));
            if (l + 1 == layers_.size()) out.hidden = std::move(inputs);
        }
        return out;
    }

private:
    std::vector<std::unique_ptr<Cell>> layers_;
    std::vector<size_t> param_counts_;
};

namespace detail {

// uniform(-s, s) with s = 1/sqrt(fan_in); the standing initialization for
// every dense weight block, bias columns included.
inline void init_uniform(Tensor& t, Rng& rng, int fan_in) {
    double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-s, s);
}

}  // namespace detail

}  // namespace eirehn
