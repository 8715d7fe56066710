#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "eirehn/cells.hpp"
#include "eirehn/grad_check.hpp"
#include "eirehn/rng.hpp"

namespace eirehn {

struct SuiteResult {
    std::string name;
    bool pass = false;
    std::string detail;  // worst observed values, counts
};

namespace verify_detail {

inline Tensor random_vec(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
    Tensor t({n});
    for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Gate parameters spread wide enough to exercise zero, shallow, and deep
// regimes.
inline ElasticGateParams random_gate(Rng& rng, int dh, int dx) {
    ElasticGateParams gp(dh, dx);
    for (size_t i = 0; i < gp.alpha_hat.numel(); ++i) gp.alpha_hat[i] = rng.uniform(-3.0, 1.0);
    for (size_t i = 0; i < gp.beta_hat.numel(); ++i) gp.beta_hat[i] = rng.uniform(-3.0, 3.0);
    for (size_t i = 0; i < gp.w_a.numel(); ++i) gp.w_a[i] = rng.uniform(-1.0, 1.0);
    return gp;
}

}  // namespace verify_detail

// Tape gradients of a scalar loss over a T-step unrolled EI-REHN sequence
// against central finite differences over every parameter element.
inline SuiteResult gradcheck_suite(int dh, int dz, int dx, int r_max, int steps, int n_seeds,
                                   double tol = 1e-4, uint64_t seed = 2024) {
    double worst = 0.0;
    for (int s = 0; s < n_seeds; ++s) {
        EirehnCell cell(dh, dx, dz, r_max);
        Rng rng(derive_seed(seed, s));
        cell.init(rng);
        std::vector<Tensor> xs;
        for (int t = 0; t < steps; ++t) xs.push_back(verify_detail::random_vec(rng, dx));

        std::vector<ParamRef> refs = cell.parameters();
        std::vector<Tensor> params;
        for (const ParamRef& p : refs) params.push_back(*p.tensor);

        auto loss_fn = [&](Tape& tape, std::span<const Value> leaves) -> Value {
            std::vector<Value> xvals;
            for (const Tensor& x : xs) xvals.push_back(tape.leaf(x));
            Unrolled u = unroll(tape, cell, leaves, xvals);
            Expr total = ex(tape, tape.constant(0.0));
            for (Value h : u.hidden) {
                Expr e = ex(tape, h);
                total = total + (e * e).sum();
            }
            return total.scale(1.0 / static_cast<double>(u.hidden.size())).v;
        };

        GradCheckResult r = grad_check(loss_fn, params);
        worst = std::max(worst, r.max_rel_err);
    }
    std::ostringstream os;
    os << "max_rel_err=" << worst << " over " << n_seeds << " seeds (tol " << tol << ")";
    return {"gradcheck", worst < tol, os.str()};
}

// d^{r+1} <= d^r elementwise, and exact zeros absorb.
inline SuiteResult gate_monotonic_suite(int n_draws, int dh = 6, int dx = 3, int r_span = 12,
                                        uint64_t seed = 2024) {
    long long violations = 0;
    double worst_gap = 0.0;
    for (int i = 0; i < n_draws; ++i) {
        Rng rng(derive_seed(seed, i));
        ElasticGateParams gp = verify_detail::random_gate(rng, dh, dx);
        Tensor h = verify_detail::random_vec(rng, dh);
        Tensor x = verify_detail::random_vec(rng, dx);

        Tape tape;
        ElasticGateLeaves gl{tape.leaf(gp.alpha_hat), tape.leaf(gp.beta_hat), tape.leaf(gp.w_a)};
        ElasticGateStep step = elastic_gate_begin(tape, gl, tape.leaf(h), tape.leaf(x));
        Tensor prev;
        for (int r = 1; r <= r_span; ++r) {
            Tensor d = tape.val(elastic_gate_at(tape, step, r));
            if (r > 1) {
                for (size_t k = 0; k < d.numel(); ++k) {
                    if (d[k] > prev[k]) {
                        ++violations;
                        worst_gap = std::max(worst_gap, d[k] - prev[k]);
                    }
                    if (prev[k] == 0.0 && d[k] != 0.0) ++violations;
                }
            }
            prev = d;
        }
    }
    std::ostringstream os;
    os << violations << " violations over " << n_draws << " draws, worst_gap=" << worst_gap;
    return {"gate-monotonic", violations == 0, os.str()};
}

// Realized depth never exceeds min(R_max, the alpha/beta bound).
inline SuiteResult depth_bound_suite(int n_draws, int dh = 6, int dx = 3, int dz = 3,
                                     int r_max = 8, uint64_t seed = 2024) {
    long long violations = 0;
    int deepest = 0;
    for (int i = 0; i < n_draws; ++i) {
        Rng rng(derive_seed(seed, i));
        EirehnCell cell(dh, dx, dz, r_max);
        cell.init(rng);
        cell.gate() = verify_detail::random_gate(rng, dh, dx);
        Tensor h = verify_detail::random_vec(rng, dh);
        Tensor x = verify_detail::random_vec(rng, dx);

        Tape tape;
        std::vector<Value> leaves = bind_leaves(tape, cell.parameters());
        StepTrace trace;
        cell.step(tape, leaves, std::vector<Value>{tape.leaf(h)}, tape.leaf(x), &trace);
        int64_t bound = std::min<int64_t>(r_max, depth_upper_bound(cell.gate()));
        deepest = std::max(deepest, trace.realized_depth);
        if (trace.realized_depth > bound) ++violations;
        // trace consistency: a halt below R_max must come from a zero gate
        if (trace.realized_depth < r_max && !trace.halted_by_gate) ++violations;
    }
    std::ostringstream os;
    os << violations << " violations over " << n_draws << " draws, deepest=" << deepest;
    return {"depth-bound", violations == 0, os.str()};
}

// Units whose gate is zero at every executed micro-layer must carry the
// previous hidden state bit-exactly.
inline SuiteResult passthrough_suite(int n_draws, int dh = 6, int dx = 3, int dz = 3,
                                     int r_max = 8, uint64_t seed = 2024) {
    long long checked = 0, violations = 0;
    for (int i = 0; i < n_draws; ++i) {
        Rng rng(derive_seed(seed, i));
        EirehnCell cell(dh, dx, dz, r_max);
        cell.init(rng);
        cell.gate() = verify_detail::random_gate(rng, dh, dx);
        // pin half the units to a dead gate so pass-through paths exist
        for (int k = 0; k < dh; k += 2) cell.gate().beta_hat[k] = -60.0;

        Tensor h = verify_detail::random_vec(rng, dh);
        Tensor x = verify_detail::random_vec(rng, dx);
        Tape tape;
        std::vector<Value> leaves = bind_leaves(tape, cell.parameters());
        StepTrace trace;
        std::vector<Value> out =
            cell.step(tape, leaves, std::vector<Value>{tape.leaf(h)}, tape.leaf(x), &trace);
        const Tensor& h_next = tape.val(out[0]);

        for (int k = 0; k < dh; ++k) {
            bool all_zero = true;
            for (int r = 0; r < trace.realized_depth; ++r)
                if (trace.gate[r][k] != 0.0) all_zero = false;
            if (!all_zero) continue;
            ++checked;
            if (h_next[k] != h[k]) ++violations;
        }
    }
    std::ostringstream os;
    os << violations << " violations over " << checked << " pass-through units";
    return {"pass-through", violations == 0 && checked > 0, os.str()};
}

// EI-REHN with a zeroed hypernetwork and the weight-update gate forced to
// one must match SREHN.
inline SuiteResult reduction_suite(int n_inputs, int dh = 6, int dx = 3, int r_max = 6,
                                   double tol = 1e-12, uint64_t seed = 2024) {
    double worst = 0.0;
    for (int i = 0; i < n_inputs; ++i) {
        Rng rng(derive_seed(seed, i));
        SrehnCell srehn(dh, dx, r_max);
        srehn.init(rng);

        EirehnCell ei(dh, dx, std::max(1, dh / 2), r_max);
        Rng dummy(0);
        ei.init(dummy);
        ei.shared() = srehn.shared();
        ei.gate() = srehn.gate();
        ei.hyper().zero();
        // sigm(40) rounds to exactly 1.0, so the accumulated-weight branch
        // is selected with weight one and the (zero) delta branch with zero.
        ei.hyper().bbar_s = Tensor::full({dh}, 40.0);
        ei.hyper().bbar_g = Tensor::full({dh}, 40.0);

        Tensor h = verify_detail::random_vec(rng, dh);
        Tensor x = verify_detail::random_vec(rng, dx);

        auto run = [&](Cell& cell) {
            Tape tape;
            std::vector<Value> leaves = bind_leaves(tape, cell.parameters());
            std::vector<Value> out =
                cell.step(tape, leaves, std::vector<Value>{tape.leaf(h)}, tape.leaf(x), nullptr);
            return tape.val(out[0]);
        };
        Tensor a = run(ei), b = run(srehn);
        for (int k = 0; k < dh; ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
    }
    std::ostringstream os;
    os << "max_abs_diff=" << worst << " over " << n_inputs << " inputs (tol " << tol << ")";
    return {"reduction", worst <= tol, os.str()};
}

}  // namespace eirehn
