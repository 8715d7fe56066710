#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <sstream>

#include "eirehn/synthgen.hpp"

using namespace eirehn;

TEST_CASE("generator recurrence matches the scripted oracle") {
    // Frozen from an independent script of the generation recurrence with
    // h0 = (1, 0), zero noise, theta = pi/6, R_max = 10.
    SynthConfig cfg;
    cfg.t = 2;
    cfg.noise_sigma = 0.0;
    Rng rng(0);  // unused at zero noise
    SequenceSample s = generate_one(cfg, 1.0, 0.0, rng);

    CHECK(s.depths[0] == 10);
    CHECK(s.hidden[0][0] == Catch::Approx(0.2125305310502604).margin(1e-15));
    CHECK(s.hidden[0][1] == Catch::Approx(-0.3463458989344442).margin(1e-15));
    CHECK(s.xs[0][0] == Catch::Approx(-0.13302232369699712).margin(1e-15));
    CHECK(s.xs[0][1] == Catch::Approx(0.5071433143735327).margin(1e-15));

    CHECK(s.depths[1] == 2);
    CHECK(s.xs[1][0] == Catch::Approx(0.07240782355390017).margin(1e-15));
    CHECK(s.xs[1][1] == Catch::Approx(0.07041117395426544).margin(1e-15));
}

TEST_CASE("zero state with zero noise is a fixed point") {
    SynthConfig cfg;
    cfg.t = 3;
    cfg.noise_sigma = 0.0;
    Rng rng(0);
    SequenceSample s = generate_one(cfg, 0.0, 0.0, rng);
    for (int t = 0; t < 3; ++t) {
        CHECK(s.depths[t] == 1);
        CHECK(s.xs[t] == Tensor::vec({0.0, 0.0}));
    }
}

TEST_CASE("rounding is half away from zero") {
    SynthConfig cfg;
    // (R_max-1)*||h||^2 = 9 * 0.5^2 * 2 = 4.5 -> rounds to 5, depth 6
    double h = 0.5;
    CHECK(synth_depth(cfg, h, h) == 6);
}

TEST_CASE("generation is deterministic and seed-sensitive") {
    SynthConfig cfg;
    cfg.n = 20;
    cfg.t = 8;
    cfg.seed = 99;
    auto a = generate(cfg);
    auto b = generate(cfg);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i)
        for (int t = 0; t < cfg.t; ++t) REQUIRE(a[i].xs[t] == b[i].xs[t]);

    cfg.seed = 100;
    auto c = generate(cfg);
    bool any_diff = false;
    for (size_t i = 0; i < a.size() && !any_diff; ++i)
        for (int t = 0; t < cfg.t && !any_diff; ++t) any_diff = !(a[i].xs[t] == c[i].xs[t]);
    CHECK(any_diff);
}

TEST_CASE("invalid configs are rejected") {
    SynthConfig cfg;
    cfg.n = 0;
    CHECK_THROWS_AS(generate(cfg), ContractError);
    cfg.n = 1;
    cfg.noise_sigma = -0.1;
    CHECK_THROWS_AS(generate(cfg), ContractError);
}

TEST_CASE("split") {
    SynthConfig cfg;
    cfg.n = 100;
    cfg.t = 3;
    auto data = generate(cfg);
    SECTION("exact sizes") {
        SynthSplits s = split(std::move(data), 80, 10, 10);
        CHECK(s.train.size() == 80);
        CHECK(s.val.size() == 10);
        CHECK(s.test.size() == 10);
    }
    SECTION("all-train split") {
        SynthSplits s = split(std::move(data), 100, 0, 0);
        CHECK(s.train.size() == 100);
        CHECK(s.test.empty());
    }
    SECTION("bad sizes rejected") {
        CHECK_THROWS_AS(split(std::move(data), 90, 10, 10), ContractError);
    }
}

TEST_CASE("regression pairs") {
    SynthConfig cfg;
    cfg.n = 1;
    cfg.t = 21;
    auto data = generate(cfg);
    auto pairs = regression_pairs(data[0]);
    CHECK(pairs.size() == 20);
    for (size_t t = 0; t < pairs.size(); ++t) {
        CHECK(pairs[t].first == &data[0].xs[t]);
        CHECK(pairs[t].second == &data[0].xs[t + 1]);
    }

    SequenceSample too_short;
    too_short.xs.push_back(Tensor::vec({0, 0}));
    CHECK_THROWS_AS(regression_pairs(too_short), ContractError);
}

TEST_CASE("rotation is orthonormal: zero-noise norms are tanh-contracted only") {
    // With sigma = 0, ||Rot h|| = ||h||; tanh then contracts, so the norm
    // never grows across a step.
    SynthConfig cfg;
    cfg.t = 30;
    cfg.noise_sigma = 0.0;
    Rng rng(0);
    SequenceSample s = generate_one(cfg, 0.9, -0.3, rng);
    double prev = std::sqrt(0.9 * 0.9 + 0.3 * 0.3);
    for (int t = 0; t < cfg.t; ++t) {
        double n = std::sqrt(s.hidden[t][0] * s.hidden[t][0] + s.hidden[t][1] * s.hidden[t][1]);
        CHECK(n <= prev + 1e-12);
        prev = n;
    }
}

TEST_CASE("depth distribution spans the full range", "[property]") {
    SynthConfig cfg;
    cfg.n = 2000;
    cfg.t = 21;
    cfg.seed = 7;
    auto data = generate(cfg);
    std::set<int> seen;
    int max_depth = 0;
    double max_abs_x = 0.0;
    for (const auto& s : data)
        for (int t = 0; t < cfg.t; ++t) {
            seen.insert(s.depths[t]);
            max_depth = std::max(max_depth, s.depths[t]);
            max_abs_x = std::max({max_abs_x, std::abs(s.xs[t][0]), std::abs(s.xs[t][1])});
            CHECK(s.depths[t] >= 1);
            // unclamped rule: depth can exceed R_max, capped by ||h||^2 < 2
            CHECK(s.depths[t] <= 2 * (cfg.r_max - 1) + 1);
            CHECK(std::abs(s.xs[t][0]) <=
                  static_cast<double>(s.depths[t]) / cfg.r_max + 1e-15);
        }
    for (int d = 1; d <= cfg.r_max; ++d) {
        INFO("depth " << d);
        CHECK(seen.count(d) == 1);
    }
    // Observed extremes on this scan (42k steps): depths reach past R_max
    // through the unclamped rule and |x| stays under R_t / R_max.
    CHECK(max_depth > cfg.r_max);
    CHECK(max_abs_x < 2.0);
}

TEST_CASE("export and import round-trip bit-exactly") {
    SynthConfig cfg;
    cfg.n = 12;
    cfg.t = 5;
    cfg.seed = 31;
    auto data = generate(cfg);

    std::ostringstream os;
    export_dataset(os, cfg, data);
    std::istringstream is(os.str());
    auto [cfg2, data2] = import_dataset(is);

    CHECK(cfg2.n == cfg.n);
    CHECK(cfg2.t == cfg.t);
    CHECK(cfg2.r_max == cfg.r_max);
    CHECK(cfg2.theta == cfg.theta);
    CHECK(cfg2.seed == cfg.seed);
    REQUIRE(data2.size() == data.size());
    for (size_t i = 0; i < data.size(); ++i)
        for (int t = 0; t < cfg.t; ++t) {
            CHECK(data2[i].xs[t] == data[i].xs[t]);
            CHECK(data2[i].depths[t] == data[i].depths[t]);
            CHECK(data2[i].hidden[t] == data[i].hidden[t]);
        }

    // re-export reproduces the byte stream
    std::ostringstream os2;
    export_dataset(os2, cfg2, data2);
    CHECK(os2.str() == os.str());

    SECTION("truncated stream is a data error") {
        std::string cut = os.str().substr(0, os.str().size() / 2);
        std::istringstream bad(cut);
        CHECK_THROWS_AS(import_dataset(bad), DataError);
    }
}
