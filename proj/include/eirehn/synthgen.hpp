#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "eirehn/errors.hpp"
#include "eirehn/rng.hpp"
#include "eirehn/serialize.hpp"
#include "eirehn/tensor.hpp"

namespace eirehn {

// Settings of the planar-rotation synthetic generator. The latent state is
// rotated and squashed R_t times per step, with R_t itself a function of
// the previous latent norm, so good next-step prediction genuinely needs
// input-dependent recurrence depth.
struct SynthConfig {
    int n = 10000;               // sample count
    int t = 21;                  // sequence length
    int r_max = 10;              // depth scale of the generator
    double theta = 0.5235987755982988;  // rotation angle, pi/6
    double noise_sigma = 0.1;    // micro-step noise covariance scale
    uint64_t seed = 0;

    void validate() const {
        if (n < 1 || t < 1 || r_max < 1 || noise_sigma < 0)
            throw ContractError("synth config: need n>=1, t>=1, r_max>=1, noise_sigma>=0");
    }
};

// One generated sequence. depths and hidden are generator-side diagnostics
// and are never fed to models.
struct SequenceSample {
    std::vector<Tensor> xs;      // T observed 2-vectors
    std::vector<int> depths;     // latent R_t per step
    std::vector<Tensor> hidden;  // latent h_t per step
};

// Depth rule: round((R_max - 1) * ||h||^2) + 1, half away from zero.
inline int synth_depth(const SynthConfig& cfg, double h0, double h1) {
    double norm2 = h0 * h0 + h1 * h1;
    return static_cast<int>(std::llround((cfg.r_max - 1) * norm2)) + 1;
}

// Runs the generator recurrence from a given initial latent state. Noise
// draws come from rng in a fixed order: two normals per micro-layer. The
// default noise_sigma = 0.1 reproduces per-component std sqrt(0.1), i.e.
// covariance 0.1 * I; other values scale the draw linearly.
inline SequenceSample generate_one(const SynthConfig& cfg, double h0, double h1, Rng& rng) {
    const double c = std::cos(cfg.theta), s = std::sin(cfg.theta);
    const double noise_std = std::sqrt(0.1) * (cfg.noise_sigma / 0.1);
    SequenceSample out;
    out.xs.reserve(cfg.t);
    double a = h0, b = h1;
    for (int t = 1; t <= cfg.t; ++t) {
        int depth = synth_depth(cfg, a, b);
        for (int r = 0; r < depth; ++r) {
            double na = noise_std * rng.normal();
            double nb = noise_std * rng.normal();
            double ra = c * a - s * b + na;
            double rb = s * a + c * b + nb;
            a = std::tanh(ra);
            b = std::tanh(rb);
        }
        double scalef = static_cast<double>(depth) / cfg.r_max;
        out.xs.push_back(Tensor::vec(
            {scalef * std::tanh(a + b), scalef * std::tanh(a - b)}));
        out.depths.push_back(depth);
        out.hidden.push_back(Tensor::vec({a, b}));
    }
    return out;
}

// Full dataset; sample i draws through its own derived seed, so parallel
// and serial generation agree.
inline std::vector<SequenceSample> generate(const SynthConfig& cfg) {
    cfg.validate();
    std::vector<SequenceSample> out;
    out.reserve(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
        Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(i)));
        double h0 = rng.uniform(-1.0, 1.0);
        double h1 = rng.uniform(-1.0, 1.0);
        out.push_back(generate_one(cfg, h0, h1, rng));
    }
    return out;
}

struct SynthSplits {
    std::vector<SequenceSample> train, val, test;
};

// Deterministic split in generation order; samples are already i.i.d.
inline SynthSplits split(std::vector<SequenceSample> data, size_t n_train, size_t n_val,
                         size_t n_test) {
    if (n_train + n_val + n_test != data.size())
        throw ContractError("split: sizes sum to " + std::to_string(n_train + n_val + n_test) +
                            " but dataset has " + std::to_string(data.size()));
    SynthSplits out;
    auto it = std::make_move_iterator(data.begin());
    out.train.assign(it, it + n_train);
    out.val.assign(it + n_train, it + n_train + n_val);
    out.test.assign(it + n_train + n_val, it + n_train + n_val + n_test);
    return out;
}

// Next-step regression view: input x_t predicts target x_{t+1}.
inline std::vector<std::pair<const Tensor*, const Tensor*>> regression_pairs(
    const SequenceSample& s) {
    if (s.xs.size() < 2) throw ContractError("regression_pairs: needs T >= 2");
    std::vector<std::pair<const Tensor*, const Tensor*>> out;
    out.reserve(s.xs.size() - 1);
    for (size_t t = 0; t + 1 < s.xs.size(); ++t) out.emplace_back(&s.xs[t], &s.xs[t + 1]);
    return out;
}

// Columnar text export. Layout: a header with the config, then per sample
// T rows of "x0 x1 depth h0 h1" at 17 significant digits; values round-trip
// bit-exactly.
inline void export_dataset(std::ostream& os, const SynthConfig& cfg,
                           const std::vector<SequenceSample>& data) {
    os << "eirehn-synth 1\n";
    os << "n " << cfg.n << " t " << cfg.t << " rmax " << cfg.r_max << " theta "
       << format_double(cfg.theta) << " noise " << format_double(cfg.noise_sigma) << " seed "
       << cfg.seed << "\n";
    for (const SequenceSample& s : data) {
        for (size_t t = 0; t < s.xs.size(); ++t)
            os << format_double(s.xs[t][0]) << ' ' << format_double(s.xs[t][1]) << ' '
               << s.depths[t] << ' ' << format_double(s.hidden[t][0]) << ' '
               << format_double(s.hidden[t][1]) << "\n";
    }
}

inline void export_dataset(const std::string& path, const SynthConfig& cfg,
                           const std::vector<SequenceSample>& data) {
    std::ofstream os(path);
    if (!os) throw IoError("synth export: cannot open '" + path + "'");
    export_dataset(os, cfg, data);
    if (!os) throw IoError("synth export: write failed for '" + path + "'");
}

inline std::pair<SynthConfig, std::vector<SequenceSample>> import_dataset(std::istream& is) {
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != "eirehn-synth" || version != 1)
        throw DataError("synth import: bad header");
    SynthConfig cfg;
    std::string k_n, k_t, k_r, k_th, k_no, k_seed;
    if (!(is >> k_n >> cfg.n >> k_t >> cfg.t >> k_r >> cfg.r_max >> k_th >> cfg.theta >>
          k_no >> cfg.noise_sigma >> k_seed >> cfg.seed) ||
        k_n != "n" || k_t != "t" || k_r != "rmax" || k_th != "theta" || k_no != "noise" ||
        k_seed != "seed")
        throw DataError("synth import: bad config line");
    cfg.validate();
    std::vector<SequenceSample> data(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
        SequenceSample& s = data[i];
        for (int t = 0; t < cfg.t; ++t) {
            double x0, x1, h0, h1;
            int depth;
            if (!(is >> x0 >> x1 >> depth >> h0 >> h1))
                throw DataError("synth import: truncated at sample " + std::to_string(i));
            s.xs.push_back(Tensor::vec({x0, x1}));
            s.depths.push_back(depth);
            s.hidden.push_back(Tensor::vec({h0, h1}));
        }
    }
    return {cfg, std::move(data)};
}

inline std::pair<SynthConfig, std::vector<SequenceSample>> import_dataset(
    const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("synth import: cannot open '" + path + "'");
    return import_dataset(is);
}

}  // namespace eirehn
