#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "eirehn/cells.hpp"
#include "eirehn/datasets/har.hpp"
#include "eirehn/datasets/lm.hpp"
#include "eirehn/synthgen.hpp"
#include "eirehn/train.hpp"

namespace eirehn {

// depth == 0 picks the cell's default (1 for fixed-depth cells, 10 for the
// elastic ones); dz == 0 picks ceil(dh / 2) for the hypernetwork.
inline std::unique_ptr<Cell> make_cell(const std::string& kind, int dh, int dx, int dz,
                                       int depth) {
    if (kind == "rnn") return std::make_unique<RnnCell>(dh, dx);
    if (kind == "lstm") return std::make_unique<LstmCell>(dh, dx);
    if (kind == "rhn") return std::make_unique<RhnCell>(dh, dx, depth > 0 ? depth : 1);
    if (kind == "srhn") return std::make_unique<SrhnCell>(dh, dx, depth > 0 ? depth : 1);
    if (kind == "srehn") return std::make_unique<SrehnCell>(dh, dx, depth > 0 ? depth : 10);
    if (kind == "eirehn")
        return std::make_unique<EirehnCell>(dh, dx, dz > 0 ? dz : (dh + 1) / 2,
                                            depth > 0 ? depth : 10);
    throw ContractError("unknown cell kind '" + kind + "'");
}

inline bool is_elastic(const std::string& kind) { return kind == "srehn" || kind == "eirehn"; }

// Realized-depth aggregation over step traces.
struct DepthStats {
    double mean = 0.0;
    double stddev = 0.0;
    long long count = 0;
    std::map<int, long long> histogram;

    void add(int depth) {
        ++count;
        ++histogram[depth];
        sum_ += depth;
        sum_sq_ += static_cast<double>(depth) * depth;
    }

    void finalize() {
        if (count == 0) return;
        mean = sum_ / static_cast<double>(count);
        stddev = std::sqrt(std::max(0.0, sum_sq_ / static_cast<double>(count) - mean * mean));
    }

private:
    double sum_ = 0.0, sum_sq_ = 0.0;
};

// ---- synthetic next-step regression ---------------------------------------

// Single recurrent layer plus a linear readout; predicts x_{t+1} from the
// hidden state after consuming x_t. The loss is the per-element mean over
// all (t, dimension) pairs.
class RegressionProblem : public Problem {
public:
    RegressionProblem(std::unique_ptr<Cell> cell, SynthSplits splits)
        : cell_(std::move(cell)), splits_(std::move(splits)),
          w_out_({2, cell_->hidden_dim()}), b_out_({2}) {}

    void init(Rng& rng) {
        Rng cell_rng = rng.child(1);
        cell_->init(cell_rng);
        Rng head_rng = rng.child(2);
        detail::init_uniform(w_out_, head_rng, cell_->hidden_dim());
        b_out_ = Tensor::zeros({2});
    }

    Cell& cell() { return *cell_; }
    const SynthSplits& splits() const { return splits_; }

    size_t train_count() const override { return splits_.train.size(); }

    std::vector<ParamRef> parameters() override {
        std::vector<ParamRef> out;
        for (ParamRef& p : cell_->parameters()) out.push_back({"cell." + p.name, p.tensor});
        out.push_back({"head.W_out", &w_out_});
        out.push_back({"head.b_out", &b_out_});
        return out;
    }

    Value item_loss(Tape& tape, std::span<const Value> leaves, size_t item) const override {
        return sequence_loss(tape, leaves, splits_.train[item], nullptr);
    }

    std::vector<std::pair<std::string, double>> eval_metrics(const std::string& split) override {
        DepthStats depth;
        double mse = split_mse(pick(split), &depth);
        std::vector<std::pair<std::string, double>> out{{"mse", mse}};
        if (is_elastic(cell_->kind())) {
            out.emplace_back("mean_depth", depth.mean);
            out.emplace_back("depth_std", depth.stddev);
        }
        return out;
    }

    double split_mse(const std::vector<SequenceSample>& data, DepthStats* depth = nullptr) {
        double total = 0.0;
        long long elems = 0;
        for (const SequenceSample& s : data) {
            Tape tape;
            std::vector<Value> leaves = bind_leaves(tape, parameters());
            Value loss = sequence_loss(tape, leaves, s, depth);
            total += tape.val(loss)[0] * static_cast<double>((s.xs.size() - 1) * 2);
            elems += static_cast<long long>((s.xs.size() - 1) * 2);
        }
        if (depth) depth->finalize();
        return total / static_cast<double>(elems);
    }

    DepthStats depth_stats(const std::vector<SequenceSample>& data) {
        DepthStats depth;
        split_mse(data, &depth);
        return depth;
    }

private:
    const std::vector<SequenceSample>& pick(const std::string& split) const {
        if (split == "train") return splits_.train;
        if (split == "val") return splits_.val;
        if (split == "test") return splits_.test;
        throw ContractError("regression: unknown split '" + split + "'");
    }

    Value sequence_loss(Tape& tape, std::span<const Value> leaves, const SequenceSample& s,
                        DepthStats* depth) const {
        auto pairs = regression_pairs(s);
        size_t cell_params = leaves.size() - 2;
        Value w_out = leaves[cell_params];
        Value b_out = leaves[cell_params + 1];

        std::vector<Value> xs;
        xs.reserve(pairs.size());
        for (auto& [x, _] : pairs) xs.push_back(tape.leaf(*x));
        Unrolled u = unroll(tape, *cell_, leaves.first(cell_params), xs, depth != nullptr);
        if (depth)
            for (const StepTrace& tr : u.traces) depth->add(tr.realized_depth);

        Expr total = ex(tape, tape.constant(0.0));
        for (size_t t = 0; t < pairs.size(); ++t) {
            Expr pred = ex(tape, tape.matmul(w_out, u.hidden[t])) + ex(tape, b_out);
            Expr err = pred - ex(tape, tape.leaf(*pairs[t].second));
            total = total + (err * err).sum();
        }
        return total.scale(1.0 / (static_cast<double>(pairs.size()) * 2.0)).v;
    }

    std::unique_ptr<Cell> cell_;
    SynthSplits splits_;
    Tensor w_out_, b_out_;
};

// ---- human-activity classification -----------------------------------------

// Stacked recurrent layers over the windowed inertial signal; a six-class
// softmax readout on the top layer's last hidden state. A validation slice
// is carved from the tail of the training split for model selection.
class HarProblem : public Problem {
public:
    HarProblem(Stack stack, HarData data, double val_fraction = 0.1)
        : stack_(std::move(stack)), data_(std::move(data)),
          w_c_({6, stack_.hidden_dim()}), b_c_({6}) {
        size_t n_val = static_cast<size_t>(data_.train.size() * val_fraction);
        n_train_ = data_.train.size() - n_val;
    }

    void init(Rng& rng) {
        Rng stack_rng = rng.child(1);
        stack_.init(stack_rng);
        Rng head_rng = rng.child(2);
        detail::init_uniform(w_c_, head_rng, stack_.hidden_dim());
        b_c_ = Tensor::zeros({6});
    }

    Stack& stack() { return stack_; }

    size_t train_count() const override { return n_train_; }

    std::vector<ParamRef> parameters() override {
        std::vector<ParamRef> out = stack_.parameters();
        out.push_back({"head.W_c", &w_c_});
        out.push_back({"head.b_c", &b_c_});
        return out;
    }

    Value item_loss(Tape& tape, std::span<const Value> leaves, size_t item) const override {
        return sample_loss(tape, leaves, data_.train[item], nullptr, nullptr);
    }

    bool lower_is_better() const override { return false; }  // selection on accuracy

    std::vector<std::pair<std::string, double>> eval_metrics(const std::string& split) override {
        std::vector<const HarSample*> samples;
        if (split == "val") {
            for (size_t i = n_train_; i < data_.train.size(); ++i)
                samples.push_back(&data_.train[i]);
        } else if (split == "test") {
            for (const HarSample& s : data_.test) samples.push_back(&s);
        } else if (split == "train") {
            for (size_t i = 0; i < n_train_; ++i) samples.push_back(&data_.train[i]);
        } else {
            throw ContractError("har: unknown split '" + split + "'");
        }

        DepthStats depth;
        bool elastic = is_elastic(stack_.layer(0).kind());
        double ce = 0.0;
        long long correct = 0;
        for (const HarSample* s : samples) {
            Tape tape;
            std::vector<Value> leaves = bind_leaves(tape, parameters());
            int pred = -1;
            Value loss = sample_loss(tape, leaves, *s, &pred, elastic ? &depth : nullptr);
            ce += tape.val(loss)[0];
            correct += pred == s->label;
        }
        depth.finalize();
        double n = static_cast<double>(samples.size());
        std::vector<std::pair<std::string, double>> out{
            {"accuracy", static_cast<double>(correct) / n}, {"cross_entropy", ce / n}};
        if (elastic) {
            out.emplace_back("mean_depth", depth.mean);
            out.emplace_back("depth_std", depth.stddev);
        }
        return out;
    }

private:
    Value sample_loss(Tape& tape, std::span<const Value> leaves, const HarSample& s,
                      int* pred_out, DepthStats* depth) const {
        std::vector<Value> xs;
        xs.reserve(s.signal.rows());
        for (int t = 0; t < s.signal.rows(); ++t) {
            Tensor step({s.signal.cols()});
            for (int c = 0; c < s.signal.cols(); ++c) step[c] = s.signal.at(t, c);
            xs.push_back(tape.leaf(std::move(step)));
        }
        size_t head_at = leaves.size() - 2;
        Stack::StackUnrolled u =
            stack_.unroll(tape, leaves.first(head_at), xs, depth != nullptr);
        if (depth)
            for (const auto& layer : u.traces)
                for (const StepTrace& tr : layer) depth->add(tr.realized_depth);
        Value logits = classify_head(tape, u.hidden.back(), leaves[head_at],
                                     leaves[head_at + 1]);
        if (pred_out) {
            const Tensor& l = tape.val(logits);
            *pred_out = static_cast<int>(std::max_element(l.data(), l.data() + l.numel()) -
                                         l.data());
        }
        return tape.ce_loss(logits, s.label);
    }

    Stack stack_;
    HarData data_;
    size_t n_train_ = 0;
    Tensor w_c_, b_c_;
};

// ---- language modeling with tied embeddings ---------------------------------

// Training items are non-overlapping windows (the truncated-BPTT length)
// starting from a zero state; evaluation threads the state through the
// whole split stream in order, detached between chunks.
class LmProblem : public Problem {
public:
    LmProblem(std::unique_ptr<Cell> cell, Corpus corpus, int window = 35)
        : cell_(std::move(cell)), corpus_(std::move(corpus)), window_(window),
          head_(cell_->hidden_dim(), corpus_.vocab.size()) {
        if (cell_->input_dim() != cell_->hidden_dim())
            throw ContractError("lm: cell input dim must equal hidden dim (embedding width)");
        size_t usable = corpus_.train.size() > 0 ? corpus_.train.size() - 1 : 0;
        n_windows_ = usable / window_;
    }

    void init(Rng& rng) {
        Rng cell_rng = rng.child(1);
        cell_->init(cell_rng);
        Rng head_rng = rng.child(2);
        head_.init(head_rng, cell_->hidden_dim());
    }

    Cell& cell() { return *cell_; }
    const Corpus& corpus() const { return corpus_; }
    Tensor& embedding() { return head_.u; }

    size_t train_count() const override { return n_windows_; }

    std::vector<ParamRef> parameters() override {
        std::vector<ParamRef> out;
        for (ParamRef& p : cell_->parameters()) out.push_back({"cell." + p.name, p.tensor});
        out.push_back({"head.U", &head_.u});
        return out;
    }

    Value item_loss(Tape& tape, std::span<const Value> leaves, size_t item) const override {
        size_t start = item * window_;
        Value u = leaves.back();
        std::span<const Value> cell_leaves = leaves.first(leaves.size() - 1);
        std::vector<Value> state = cell_->initial_state(tape);
        Expr total = ex(tape, tape.constant(0.0));
        for (int k = 0; k < window_; ++k) {
            int tok = corpus_.train[start + k];
            int target = corpus_.train[start + k + 1];
            Value x = lm_embed(tape, u, tok, corpus_.vocab.size());
            state = cell_->step(tape, cell_leaves, state, x, nullptr);
            total = total + ex(tape, tape.ce_loss(lm_logits(tape, u, state[0]), target));
        }
        return total.scale(1.0 / window_).v;
    }

    struct StreamEval {
        double cross_entropy = 0.0;
        double ppl = 0.0;
        DepthStats depth;
    };

    StreamEval eval_stream(const std::vector<int>& stream, bool want_depth) {
        if (stream.size() < 2) throw ContractError("lm eval: stream too short");
        constexpr size_t kChunk = 256;
        StreamEval out;
        std::vector<Tensor> carried;
        double total_ce = 0.0;
        size_t pos = 0;
        const size_t targets = stream.size() - 1;
        bool elastic = want_depth && is_elastic(cell_->kind());
        while (pos < targets) {
            size_t len = std::min(kChunk, targets - pos);
            Tape tape;
            std::vector<Value> leaves = bind_leaves(tape, parameters());
            Value u = leaves.back();
            std::span<const Value> cell_leaves(leaves.data(), leaves.size() - 1);
            std::vector<Value> state;
            if (carried.empty()) {
                state = cell_->initial_state(tape);
            } else {
                for (const Tensor& t : carried) state.push_back(tape.leaf(t));
            }
            for (size_t k = 0; k < len; ++k) {
                Value x = lm_embed(tape, u, stream[pos + k], corpus_.vocab.size());
                StepTrace trace;
                state = cell_->step(tape, cell_leaves, state, x, elastic ? &trace : nullptr);
                if (elastic) out.depth.add(trace.realized_depth);
                Value ce = tape.ce_loss(lm_logits(tape, u, state[0]), stream[pos + k + 1]);
                total_ce += tape.val(ce)[0];
            }
            carried.clear();
            for (Value v : state) carried.push_back(tape.val(v));
            pos += len;
        }
        out.cross_entropy = total_ce / static_cast<double>(targets);
        out.ppl = perplexity(total_ce, targets);
        out.depth.finalize();
        return out;
    }

    std::vector<std::pair<std::string, double>> eval_metrics(const std::string& split) override {
        const std::vector<int>* stream = nullptr;
        if (split == "train") stream = &corpus_.train;
        else if (split == "val") stream = &corpus_.val;
        else if (split == "test") stream = &corpus_.test;
        else throw ContractError("lm: unknown split '" + split + "'");
        bool elastic = is_elastic(cell_->kind());
        StreamEval ev = eval_stream(*stream, elastic);
        std::vector<std::pair<std::string, double>> out{
            {"cross_entropy", ev.cross_entropy}, {"perplexity", ev.ppl}};
        if (elastic) {
            out.emplace_back("mean_depth", ev.depth.mean);
            out.emplace_back("depth_std", ev.depth.stddev);
        }
        return out;
    }

private:
    std::unique_ptr<Cell> cell_;
    Corpus corpus_;
    int window_;
    LmHead head_;
    size_t n_windows_ = 0;
};

}  // namespace eirehn
