#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "eirehn/cells/cell.hpp"
#include "eirehn/errors.hpp"
#include "eirehn/rng.hpp"
#include "eirehn/serialize.hpp"
#include "eirehn/tape.hpp"

namespace eirehn {

// ---- losses (tape-side plus plain helpers) ------------------------------

// Mean over all elements of the squared difference.
inline Value mse_loss(Tape& tape, Value pred, Value target) {
    if (!tape.val(pred).same_shape(tape.val(target)))
        throw ShapeError("mse_loss: " + tape.val(pred).shape_str() + " vs " +
                         tape.val(target).shape_str());
    Expr d = ex(tape, pred) - ex(tape, target);
    return (d * d).mean().v;
}

inline double mse_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target))
        throw ShapeError("mse_loss: " + pred.shape_str() + " vs " + target.shape_str());
    double acc = 0.0;
    for (size_t i = 0; i < pred.numel(); ++i) {
        double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.numel());
}

// -log softmax(logits)[label]; the stable fused form lives on the tape.
inline Value cross_entropy_loss(Tape& tape, Value logits, int label) {
    return tape.ce_loss(logits, label);
}

// ---- Adam ----------------------------------------------------------------

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with bias correction; one state instance per run.
class Adam {
public:
    Adam(AdamConfig cfg, std::span<const ParamRef> params) : cfg_(cfg) {
        for (const ParamRef& p : params) {
            m_.emplace_back(Tensor::zeros(p.tensor->shape()));
            v_.emplace_back(Tensor::zeros(p.tensor->shape()));
        }
    }

    long step_count() const { return step_; }

    void update(std::span<const ParamRef> params, std::span<const Tensor> grads) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw ContractError("adam: parameter/gradient count mismatch");
        ++step_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
        double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
        for (size_t p = 0; p < params.size(); ++p) {
            Tensor& t = *params[p].tensor;
            const Tensor& g = grads[p];
            if (!g.all_finite())
                throw NumericalError("adam: non-finite gradient for '" + params[p].name + "'");
            for (size_t i = 0; i < t.numel(); ++i) {
                double gi = g[i];
                m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * gi;
                v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * gi * gi;
                double mhat = m_[p][i] / bc1;
                double vhat = v_[p][i] / bc2;
                t[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
            }
        }
    }

private:
    AdamConfig cfg_;
    long step_ = 0;
    std::vector<Tensor> m_, v_;
};

// ---- metrics --------------------------------------------------------------

struct MetricsRecord {
    std::string run;
    uint64_t seed = 0;
    int epoch = 0;
    std::string split;
    std::string metric;  // mse | accuracy | cross_entropy | perplexity | mean_depth | ...
    double value = 0.0;
    double seconds = 0.0;
};

inline std::string metrics_csv_header() { return "run,seed,epoch,split,metric,value,seconds"; }

inline std::string to_csv(const MetricsRecord& r) {
    return r.run + "," + std::to_string(r.seed) + "," + std::to_string(r.epoch) + "," +
           r.split + "," + r.metric + "," + format_double(r.value) + "," +
           format_double(r.seconds);
}

// CSV sink; seconds is the only non-reproducible column.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path) : os_(path) {
        if (!os_) throw IoError("metrics: cannot open '" + path + "'");
        os_ << metrics_csv_header() << "\n";
    }

    void write(const MetricsRecord& r) { os_ << to_csv(r) << "\n"; }

    void flush() { os_.flush(); }

private:
    std::ofstream os_;
};

// ---- training loop ---------------------------------------------------------

struct TrainConfig {
    int batch_size = 20;
    int epochs = 100;
    double learning_rate = 0.01;
    uint64_t seed = 0;
    double clip_norm = 0.0;  // global-norm gradient clip; 0 disables
    int eval_every = 1;      // epochs between validation passes
    int jobs = 1;            // worker threads per mini-batch

    void validate() const {
        if (batch_size < 1 || epochs < 1 || learning_rate < 0)
            throw ContractError("train config: need batch_size>=1, epochs>=1, lr>=0");
    }
};

// What the epoch loop needs from a task: item count, parameters, a per-item
// scalar loss on a caller-supplied tape, and split metrics. The first
// metric returned by eval_metrics is the model-selection metric.
class Problem {
public:
    virtual ~Problem() = default;
    virtual size_t train_count() const = 0;
    virtual std::vector<ParamRef> parameters() = 0;
    virtual Value item_loss(Tape& tape, std::span<const Value> leaves, size_t item) const = 0;
    virtual std::vector<std::pair<std::string, double>> eval_metrics(
        const std::string& split) = 0;
    virtual bool lower_is_better() const { return true; }
};

struct TrainResult {
    std::vector<MetricsRecord> records;
    std::vector<Tensor> best_params;  // parameters() order, at best validation metric
    double best_val = 0.0;
    int best_epoch = 0;
    double final_train_loss = 0.0;
};

namespace detail {

// Per-item gradients are computed on private tapes (possibly in parallel)
// and reduced in item order, so results do not depend on the job count.
inline double batch_gradients(const Problem& prob, std::span<const ParamRef> params,
                              std::span<const size_t> items, int jobs,
                              std::vector<Tensor>& grads_out) {
    const size_t n = items.size();
    std::vector<std::vector<Tensor>> item_grads(n);
    std::vector<double> item_loss(n);
    std::vector<std::string> worker_error(std::max(jobs, 1));

    auto run_range = [&](size_t lo, size_t hi, int worker) {
        try {
            for (size_t i = lo; i < hi; ++i) {
                Tape tape;
                std::vector<Value> leaves = bind_leaves(tape, params);
                Value loss = prob.item_loss(tape, leaves, items[i]);
                item_loss[i] = tape.val(loss)[0];
                tape.backward(loss);
                item_grads[i].reserve(leaves.size());
                for (Value l : leaves) item_grads[i].push_back(tape.grad(l));
            }
        } catch (const std::exception& e) {
            worker_error[worker] = e.what();
        }
    };

    if (jobs <= 1 || n < 2) {
        run_range(0, n, 0);
    } else {
        int workers = std::min<int>(jobs, static_cast<int>(n));
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            size_t lo = n * w / workers, hi = n * (w + 1) / workers;
            pool.emplace_back(run_range, lo, hi, w);
        }
        for (auto& th : pool) th.join();
    }
    for (const std::string& err : worker_error)
        if (!err.empty()) throw NumericalError(err);

    grads_out.clear();
    for (const ParamRef& p : params) grads_out.emplace_back(Tensor::zeros(p.tensor->shape()));
    double total = 0.0;
    const double inv = 1.0 / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) {
        total += item_loss[i];
        for (size_t p = 0; p < grads_out.size(); ++p)
            for (size_t k = 0; k < grads_out[p].numel(); ++k)
                grads_out[p][k] += inv * item_grads[i][p][k];
    }
    return total * inv;
}

inline void clip_global_norm(std::vector<Tensor>& grads, double clip) {
    if (clip <= 0.0) return;
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (size_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
    double norm = std::sqrt(sq);
    if (norm <= clip) return;
    double s = clip / norm;
    for (Tensor& g : grads)
        for (size_t i = 0; i < g.numel(); ++i) g[i] *= s;
}

}  // namespace detail

// Mini-batch epochs with per-epoch shuffling, validation-cadence
// evaluation, and best-checkpoint retention. Throws NumericalError with
// the epoch/batch location if the loss diverges.
inline TrainResult train_epochs(Problem& prob, const TrainConfig& cfg,
                                const std::string& run_id, MetricsWriter* sink = nullptr) {
    cfg.validate();
    if (prob.train_count() == 0) throw ContractError("train: empty training split");

    constexpr uint64_t kShuffleStream = 0x51;
    std::vector<ParamRef> params = prob.parameters();
    Adam adam({.lr = cfg.learning_rate}, params);
    Rng shuffle_rng(derive_seed(cfg.seed, kShuffleStream));

    auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    TrainResult result;
    auto emit = [&](int epoch, const std::string& split, const std::string& metric,
                    double value) {
        MetricsRecord r{run_id, cfg.seed, epoch, split, metric, value, elapsed()};
        if (sink) sink->write(r);
        result.records.push_back(std::move(r));
    };

    std::vector<size_t> order(prob.train_count());
    std::iota(order.begin(), order.end(), size_t{0});

    bool have_best = false;
    auto consider = [&](int epoch) {
        auto metrics = prob.eval_metrics("val");
        for (const auto& [name, value] : metrics) emit(epoch, "val", name, value);
        if (metrics.empty()) return;
        double score = metrics.front().second;
        bool better = !have_best || (prob.lower_is_better() ? score < result.best_val
                                                            : score > result.best_val);
        if (better) {
            have_best = true;
            result.best_val = score;
            result.best_epoch = epoch;
            result.best_params.clear();
            for (const ParamRef& p : params) result.best_params.push_back(*p.tensor);
        }
    };

    std::vector<Tensor> grads;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // Fisher-Yates under the run seed
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

        double epoch_loss = 0.0;
        size_t batches = 0;
        for (size_t off = 0; off < order.size(); off += cfg.batch_size, ++batches) {
            size_t len = std::min<size_t>(cfg.batch_size, order.size() - off);
            double loss;
            try {
                loss = detail::batch_gradients(prob, params,
                                               std::span<const size_t>(order).subspan(off, len),
                                               cfg.jobs, grads);
            } catch (const std::exception& e) {
                throw NumericalError("train: epoch " + std::to_string(epoch) + " batch " +
                                     std::to_string(batches) + ": " + e.what());
            }
            if (!std::isfinite(loss))
                throw NumericalError("train: divergence at epoch " + std::to_string(epoch) +
                                     " batch " + std::to_string(batches));
            detail::clip_global_norm(grads, cfg.clip_norm);
            adam.update(params, grads);
            epoch_loss += loss;
        }
        epoch_loss /= static_cast<double>(std::max<size_t>(batches, 1));
        result.final_train_loss = epoch_loss;
        emit(epoch, "train", "loss", epoch_loss);
        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) consider(epoch);
    }
    return result;
}

// Restores a parameter snapshot taken by train_epochs.
inline void restore_params(std::span<const ParamRef> params, std::span<const Tensor> snapshot) {
    if (params.size() != snapshot.size())
        throw ContractError("restore: parameter count mismatch");
    for (size_t i = 0; i < params.size(); ++i) *params[i].tensor = snapshot[i];
}

}  // namespace eirehn
