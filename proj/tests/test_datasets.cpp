#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "eirehn/datasets/har.hpp"
#include "eirehn/datasets/lm.hpp"
#include "eirehn/grad_check.hpp"
#include "eirehn/models.hpp"

using namespace eirehn;
namespace fs = std::filesystem;

namespace {

// Minimal copy of the published directory layout: 9 windowed signal files
// per split plus a label file.
struct HarFixture {
    fs::path root;

    HarFixture(int n_train, int n_test, int window) {
        root = fs::temp_directory_path() /
               ("eirehn_har_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        Rng rng(7);
        write_split("train", n_train, window, rng);
        write_split("test", n_test, window, rng);
    }

    ~HarFixture() { fs::remove_all(root); }

    void write_split(const std::string& split, int n, int window, Rng& rng) {
        fs::path sig = root / split / "Inertial Signals";
        fs::create_directories(sig);
        int ch_idx = 0;
        for (const std::string& ch : har_detail::channel_names()) {
            std::ofstream os(sig / (ch + "_" + split + ".txt"));
            for (int i = 0; i < n; ++i) {
                for (int t = 0; t < window; ++t)
                    // channel-tagged values so stacking order is checkable
                    os << (t ? " " : "") << ch_idx + rng.uniform(0, 0.001);
                os << "\n";
            }
            ++ch_idx;
        }
        std::ofstream ys(root / split / ("y_" + split + ".txt"));
        for (int i = 0; i < n; ++i) ys << (i % 6) + 1 << "\n";
    }

    static int& counter() {
        static int c = 0;
        return c;
    }
};

}  // namespace

TEST_CASE("har loader reads the published layout") {
    HarFixture fx(6, 3, 4);
    HarData data = load_har(fx.root.string());
    CHECK(data.train.size() == 6);
    CHECK(data.test.size() == 3);
    CHECK(data.window == 4);
    CHECK(data.channels == 9);
    // labels shifted to 0-based
    CHECK(data.train[0].label == 0);
    CHECK(data.train[5].label == 5);
    // channel c lands in column c
    for (int c = 0; c < 9; ++c)
        CHECK(data.train[0].signal.at(2, c) == Catch::Approx(c).margin(0.01));
}

TEST_CASE("har loader error paths") {
    SECTION("missing file names the expected path") {
        HarFixture fx(2, 1, 4);
        fs::remove(fx.root / "train" / "Inertial Signals" / "body_gyro_y_train.txt");
        CHECK_THROWS_WITH(load_har(fx.root.string()),
                          Catch::Matchers::ContainsSubstring("body_gyro_y_train.txt"));
    }
    SECTION("label count mismatch is an integrity error") {
        HarFixture fx(3, 1, 4);
        std::ofstream ys(fx.root / "train" / "y_train.txt");
        ys << "1\n2\n";  // only two labels for three rows
        ys.close();
        CHECK_THROWS_AS(load_har(fx.root.string()), DataError);
    }
    SECTION("empty directory raises before any partial dataset") {
        fs::path empty = fs::temp_directory_path() / "eirehn_har_empty";
        fs::create_directories(empty);
        CHECK_THROWS_AS(load_har(empty.string()), IoError);
        fs::remove_all(empty);
    }
}

TEST_CASE("har standardization uses train statistics") {
    HarFixture fx(8, 4, 6);
    HarData data = load_har(fx.root.string());
    standardize(data);
    for (int c = 0; c < data.channels; ++c) {
        double mean = 0;
        long long n = 0;
        for (const HarSample& s : data.train)
            for (int t = 0; t < data.window; ++t) {
                mean += s.signal.at(t, c);
                ++n;
            }
        mean /= n;
        CHECK(mean == Catch::Approx(0.0).margin(1e-9));
    }
}

TEST_CASE("classify_head") {
    SECTION("zero weights give uniform logits") {
        Tape tape;
        Value h = tape.leaf(Tensor::vec({0.5, -0.5, 0.25}));
        Value w = tape.leaf(Tensor::zeros({6, 3}));
        Value b = tape.leaf(Tensor::zeros({6}));
        Value logits = classify_head(tape, h, w, b);
        CHECK(tape.val(logits) == Tensor::zeros({6}));
        CHECK(tape.val(logits).shape() == std::vector<int>{6});
    }
    SECTION("gradient flows from the loss through the cell") {
        Rng rng(19);
        RnnCell cell(3, 2);
        cell.init(rng);
        Tensor w_c({6, 3}), b_c({6});
        detail::init_uniform(w_c, rng, 3);
        Tensor x1({2}), x2({2});
        for (int i = 0; i < 2; ++i) {
            x1[i] = rng.uniform(-1, 1);
            x2[i] = rng.uniform(-1, 1);
        }

        auto f = [&](Tape& tape, std::span<const Value> leaves) {
            std::vector<Value> xs{tape.leaf(x1), tape.leaf(x2)};
            Unrolled u = unroll(tape, cell, leaves.first(1), xs);
            Value logits = classify_head(tape, u.hidden.back(), leaves[1], leaves[2]);
            return tape.ce_loss(logits, 4);
        };
        GradCheckResult r = grad_check(f, {cell.weights(), w_c, b_c});
        CHECK(r.max_rel_err < 1e-6);
    }
}

TEST_CASE("tied embedding forward") {
    SECTION("zero embedding gives zero logits and uniform softmax") {
        Tape tape;
        Value u = tape.leaf(Tensor::zeros({4, 9}));
        Value e = lm_embed(tape, u, 3, 9);
        CHECK(tape.val(e) == Tensor::zeros({4}));
        Value logits = lm_logits(tape, u, tape.leaf(Tensor::vec({1, 2, 3, 4})));
        CHECK(tape.val(logits) == Tensor::zeros({9}));
        CHECK(tape.val(logits).shape() == std::vector<int>{9});
    }
    SECTION("token id out of range") {
        Tape tape;
        Value u = tape.leaf(Tensor::zeros({4, 9}));
        CHECK_THROWS_AS(lm_embed(tape, u, 9, 9), ContractError);
    }
    SECTION("softmax of logits sums to one within 1e-12") {
        Rng rng(23);
        Tensor u({5, 12});
        detail::init_uniform(u, rng, 5);
        Tape tape;
        Value uv = tape.leaf(u);
        Tensor h({5});
        for (int i = 0; i < 5; ++i) h[i] = rng.uniform(-2, 2);
        const Tensor& logits = tape.val(lm_logits(tape, uv, tape.leaf(h)));
        double mx = logits[0];
        for (size_t i = 1; i < logits.numel(); ++i) mx = std::max(mx, logits[i]);
        double z = 0;
        for (size_t i = 0; i < logits.numel(); ++i) z += std::exp(logits[i] - mx);
        double total = 0;
        for (size_t i = 0; i < logits.numel(); ++i) total += std::exp(logits[i] - mx) / z;
        CHECK(total == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("tied gradient equals the sum of untied-twin gradients", "[oracle]") {
    // h = tanh(W U[:,tok]); loss = ce(U^T h). The tied U gradient must be
    // the embedding-side gradient plus the output-side gradient of an
    // untied twin evaluated at the same values.
    Rng rng(29);
    const int dh = 3, vocab = 5, tok = 2, label = 4;
    Tensor u({dh, vocab}), w({dh, dh});
    detail::init_uniform(u, rng, dh);
    detail::init_uniform(w, rng, dh);

    Tensor tied_grad, in_grad, out_grad;
    {
        Tape tape;
        Value uv = tape.leaf(u), wv = tape.leaf(w);
        Value h = tape.tanh(tape.matmul(wv, lm_embed(tape, uv, tok, vocab)));
        Value loss = tape.ce_loss(lm_logits(tape, uv, h), label);
        tape.backward(loss);
        tied_grad = tape.grad(uv);
    }
    {
        Tape tape;
        Value u_in = tape.leaf(u), u_out = tape.leaf(u), wv = tape.leaf(w);
        Value h = tape.tanh(tape.matmul(wv, lm_embed(tape, u_in, tok, vocab)));
        Value loss = tape.ce_loss(lm_logits(tape, u_out, h), label);
        tape.backward(loss);
        in_grad = tape.grad(u_in);
        out_grad = tape.grad(u_out);
    }
    for (size_t i = 0; i < tied_grad.numel(); ++i)
        CHECK(tied_grad[i] == Catch::Approx(in_grad[i] + out_grad[i]).margin(1e-15));
}

TEST_CASE("perplexity") {
    CHECK(perplexity(0.0, 100) == 1.0);
    CHECK(perplexity(std::log(30.0) * 50, 50) == Catch::Approx(30.0).margin(1e-9));
    CHECK(perplexity(4.19325 * 7, 7) == Catch::Approx(66.2).margin(0.05));
    CHECK_THROWS_AS(perplexity(1.0, 0), ContractError);
}

TEST_CASE("toy corpus") {
    Corpus a = toy_corpus(5);
    SECTION("deterministic under the seed") {
        Corpus b = toy_corpus(5);
        CHECK(a.train == b.train);
        CHECK(a.val == b.val);
        CHECK(a.test == b.test);
        Corpus c = toy_corpus(6);
        CHECK(a.train != c.train);
    }
    SECTION("split sizes and vocab bounds") {
        CHECK(a.train.size() == 80000);
        CHECK(a.val.size() == 10000);
        CHECK(a.test.size() == 10000);
        CHECK(a.vocab.size() <= 50);
        for (int t : a.train) {
            REQUIRE(t >= 0);
            REQUIRE(t < a.vocab.size());
        }
    }
    SECTION("vocab bijectivity") {
        for (int i = 0; i < a.vocab.size(); ++i)
            CHECK(a.vocab.lookup(a.vocab.id_to_tok[i]) == i);
        CHECK(a.vocab.lookup("never-a-token") == a.vocab.unk_id);
    }
    SECTION("markov structure is learnable: trigram counts beat unigram") {
        // the generator is order-2, so a two-token-context table is the
        // right learnability proxy
        size_t v = a.vocab.size();
        std::vector<double> uni(v, 1.0), tri(v * v * v, 1.0);
        std::vector<double> ctx(v * v, static_cast<double>(v));
        for (size_t i = 0; i + 2 < a.train.size(); ++i) {
            uni[a.train[i]] += 1;
            tri[(a.train[i] * v + a.train[i + 1]) * v + a.train[i + 2]] += 1;
            ctx[a.train[i] * v + a.train[i + 1]] += 1;
        }
        double uni_total = static_cast<double>(a.train.size()) + v;
        double ce_uni = 0, ce_tri = 0;
        for (size_t i = 0; i + 2 < a.val.size(); ++i) {
            ce_uni += -std::log(uni[a.val[i + 2]] / uni_total);
            ce_tri += -std::log(tri[(a.val[i] * v + a.val[i + 1]) * v + a.val[i + 2]] /
                                ctx[a.val[i] * v + a.val[i + 1]]);
        }
        CHECK(ce_tri < 0.6 * ce_uni);
    }
}

TEST_CASE("unigram baseline perplexity is near the vocabulary scale") {
    Corpus c = toy_corpus(5);
    double ppl = unigram_perplexity(c.train, c.val, c.vocab.size());
    CHECK(ppl > 3.0);
    CHECK(ppl < 40.0);
}

TEST_CASE("ptb-format loader") {
    fs::path dir = fs::temp_directory_path() / "eirehn_ptb_fixture";
    fs::create_directories(dir);
    {
        std::ofstream tr(dir / "ptb.train.txt");
        tr << "the cat sat\nthe dog sat\n";
        std::ofstream va(dir / "ptb.valid.txt");
        va << "the bird sat\n";
        std::ofstream te(dir / "ptb.test.txt");
        te << "a cat\n";
    }
    Corpus c = load_ptb(dir.string());
    // 3 tokens + eos per train line
    CHECK(c.train.size() == 8);
    CHECK(c.val.size() == 4);
    // "bird" unseen in train -> unk
    CHECK(c.val[1] == c.vocab.unk_id);
    // eos terminates every line
    CHECK(c.train[3] == c.vocab.lookup("</s>"));
    fs::remove_all(dir);

    CHECK_THROWS_AS(load_ptb("/nonexistent-dir"), IoError);
}

TEST_CASE("lm problem wires tied parameters once") {
    Corpus c = toy_corpus(9, 2000);
    LmProblem prob(make_cell("eirehn", 8, 8, 4, 3), std::move(c));
    Rng rng(9);
    prob.init(rng);
    auto params = prob.parameters();
    int u_count = 0;
    for (const ParamRef& p : params) u_count += p.name == "head.U";
    CHECK(u_count == 1);

    // a short window loss is finite and positive
    Tape tape;
    auto leaves = bind_leaves(tape, params);
    Value loss = prob.item_loss(tape, leaves, 0);
    CHECK(std::isfinite(tape.val(loss)[0]));
    CHECK(tape.val(loss)[0] > 0.0);
}
