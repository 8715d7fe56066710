// Experiment runner: dataset generation, training, evaluation, property
// verification, and report aggregation for the elastic recurrent highway
// cells. Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
// failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eirehn/models.hpp"
#include "eirehn/verify.hpp"

namespace fs = std::filesystem;
using namespace eirehn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct SynthGenArgs {
    std::string out;
    int n = 10000, t = 21, r_max = 10;
    double theta = 0.5235987755982988, noise = 0.1;
    uint64_t seed = 0;
};

int cmd_synth_gen(const SynthGenArgs& a) {
    if (a.t < 2) {
        std::cerr << "synth-gen: --t must be >= 2 (next-step regression needs a target)\n";
        return kExitUsage;
    }
    SynthConfig cfg;
    cfg.n = a.n;
    cfg.t = a.t;
    cfg.r_max = a.r_max;
    cfg.theta = a.theta;
    cfg.noise_sigma = a.noise;
    cfg.seed = a.seed;
    auto data = generate(cfg);
    export_dataset(a.out, cfg, data);
    std::cout << "wrote " << a.n << " sequences (T=" << a.t << ", R_max=" << a.r_max
              << ") to " << a.out << "\n";
    return kExitOk;
}

struct ExperimentArgs {
    std::string task = "synthetic";            // synthetic | har | lm-toy
    std::string cell = "eirehn";               // rnn | lstm | rhn | srhn | srehn | eirehn
    int dh = 10, dz = 0, layers = 1, depth = 0;
    std::string data;                          // dataset file or root
    std::string out = ".";
    int batch = 20, epochs = 100;
    double lr = 0.01, clip = 0.0;
    uint64_t seed = 0;
    int seeds = 1;
    int eval_every = 1;
    int jobs = 1;
    int window = 35;                           // truncated-BPTT length for LM
    uint64_t corpus_seed = 0;                  // toy-corpus identity, shared across runs
};

std::string run_name(const ExperimentArgs& a, uint64_t seed) {
    std::string name = a.task + "-" + a.cell + "-dh" + std::to_string(a.dh);
    if (a.depth > 0) name += "-r" + std::to_string(a.depth);
    if (a.layers > 1) name += "-l" + std::to_string(a.layers);
    return name + "-seed" + std::to_string(seed);
}

std::map<std::string, std::string> checkpoint_meta(const ExperimentArgs& a, uint64_t seed,
                                                   int dx) {
    return {{"task", a.task},
            {"cell", a.cell},
            {"dh", std::to_string(a.dh)},
            {"dz", std::to_string(a.dz)},
            {"dx", std::to_string(dx)},
            {"layers", std::to_string(a.layers)},
            {"depth", std::to_string(a.depth)},
            {"window", std::to_string(a.window)},
            {"corpus_seed", std::to_string(a.corpus_seed)},
            {"seed", std::to_string(seed)}};
}

std::unique_ptr<Problem> build_problem(const ExperimentArgs& a, int* dx_out) {
    if (a.task == "synthetic") {
        if (a.data.empty() || !fs::exists(a.data))
            throw IoError("train: synthetic task needs --data <file from synth-gen>" +
                          (a.data.empty() ? std::string() : " (missing: " + a.data + ")"));
        auto [cfg, data] = import_dataset(a.data);
        size_t n = data.size();
        size_t n_val = n / 10, n_test = n / 10;
        SynthSplits splits = split(std::move(data), n - n_val - n_test, n_val, n_test);
        *dx_out = 2;
        return std::make_unique<RegressionProblem>(make_cell(a.cell, a.dh, 2, a.dz, a.depth),
                                                   std::move(splits));
    }
    if (a.task == "har") {
        if (a.data.empty() || !fs::exists(a.data))
            throw IoError("train: har task needs --data <dataset root with train/ and test/>" +
                          (a.data.empty() ? std::string() : " (missing: " + a.data + ")"));
        HarData data = load_har(a.data);
        standardize(data);
        *dx_out = data.channels;
        std::vector<std::unique_ptr<Cell>> cells;
        for (int l = 0; l < std::max(a.layers, 1); ++l)
            cells.push_back(
                make_cell(a.cell, a.dh, l == 0 ? data.channels : a.dh, a.dz, a.depth));
        return std::make_unique<HarProblem>(Stack(std::move(cells)), std::move(data));
    }
    if (a.task == "lm-toy") {
        Corpus corpus = a.data.empty() ? toy_corpus(a.corpus_seed) : load_ptb(a.data);
        *dx_out = a.dh;
        return std::make_unique<LmProblem>(make_cell(a.cell, a.dh, a.dh, a.dz, a.depth),
                                           std::move(corpus), a.window);
    }
    throw ContractError("unknown task '" + a.task + "'");
}

void init_problem(Problem& prob, const ExperimentArgs& a, uint64_t seed) {
    Rng rng(derive_seed(seed, 0x1417));
    if (a.task == "synthetic") dynamic_cast<RegressionProblem&>(prob).init(rng);
    else if (a.task == "har") dynamic_cast<HarProblem&>(prob).init(rng);
    else dynamic_cast<LmProblem&>(prob).init(rng);
}

int cmd_train(const ExperimentArgs& a) {
    fs::create_directories(a.out);
    struct RunOutcome {
        uint64_t seed;
        std::vector<std::pair<std::string, double>> test_metrics;
    };
    std::vector<RunOutcome> outcomes;

    for (int k = 0; k < a.seeds; ++k) {
        uint64_t seed = a.seed + static_cast<uint64_t>(k);
        int dx = 0;
        std::unique_ptr<Problem> prob = build_problem(a, &dx);
        init_problem(*prob, a, seed);

        TrainConfig cfg;
        cfg.batch_size = a.batch;
        cfg.epochs = a.epochs;
        cfg.learning_rate = a.lr;
        cfg.seed = seed;
        cfg.clip_norm = a.clip;
        cfg.eval_every = a.eval_every;
        cfg.jobs = a.jobs;

        std::string name = run_name(a, seed);
        MetricsWriter writer((fs::path(a.out) / (name + ".csv")).string());
        TrainResult res = train_epochs(*prob, cfg, name, &writer);

        std::vector<ParamRef> params = prob->parameters();
        if (!res.best_params.empty()) restore_params(params, res.best_params);
        RunOutcome outcome{seed, prob->eval_metrics("test")};
        for (const auto& [metric, value] : outcome.test_metrics)
            writer.write({name, seed, res.best_epoch, "test", metric, value, 0.0});
        writer.flush();

        write_checkpoint((fs::path(a.out) / (name + ".ckpt")).string(),
                         checkpoint_meta(a, seed, dx), params);
        std::cout << name << ": best val " << format_double(res.best_val) << " at epoch "
                  << res.best_epoch;
        for (const auto& [metric, value] : outcome.test_metrics)
            std::cout << ", test " << metric << " " << format_double(value);
        std::cout << "\n";
        outcomes.push_back(std::move(outcome));
    }

    if (a.seeds > 1) {
        // Table-style aggregate: mean +/- std per test metric across seeds
        std::ofstream os(fs::path(a.out) /
                         (run_name(a, a.seed) + "-x" + std::to_string(a.seeds) +
                          "-summary.csv"));
        os << "metric,mean,std,runs\n";
        std::cout << "aggregate over " << a.seeds << " seeds:\n";
        for (size_t m = 0; m < outcomes[0].test_metrics.size(); ++m) {
            const std::string& metric = outcomes[0].test_metrics[m].first;
            double sum = 0, sum_sq = 0;
            for (const RunOutcome& o : outcomes) {
                sum += o.test_metrics[m].second;
                sum_sq += o.test_metrics[m].second * o.test_metrics[m].second;
            }
            double mean = sum / a.seeds;
            double var = std::max(0.0, sum_sq / a.seeds - mean * mean);
            os << metric << ',' << format_double(mean) << ',' << format_double(std::sqrt(var))
               << ',' << a.seeds << "\n";
            std::cout << "  " << metric << " = " << format_double(mean) << " +/- "
                      << format_double(std::sqrt(var)) << "\n";
        }
    }
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string split = "test";
    std::string depth_hist;
};

int cmd_eval(const EvalArgs& e) {
    Checkpoint ck = read_checkpoint(e.checkpoint);
    ExperimentArgs a;
    a.task = ck.meta_at("task");
    a.cell = ck.meta_at("cell");
    a.dh = std::stoi(ck.meta_at("dh"));
    a.dz = std::stoi(ck.meta_at("dz"));
    a.layers = std::stoi(ck.meta_at("layers"));
    a.depth = std::stoi(ck.meta_at("depth"));
    a.window = std::stoi(ck.meta_at("window"));
    a.corpus_seed = std::stoull(ck.meta_at("corpus_seed"));
    a.data = e.data;

    int dx = 0;
    std::unique_ptr<Problem> prob = build_problem(a, &dx);
    std::vector<ParamRef> params = prob->parameters();
    assign_params(ck, params);

    for (const auto& [metric, value] : prob->eval_metrics(e.split))
        std::cout << e.split << " " << metric << " " << format_double(value) << "\n";

    if (!e.depth_hist.empty()) {
        if (!is_elastic(a.cell)) {
            std::cerr << "eval: --depth-hist needs an elastic cell (srehn/eirehn)\n";
            return kExitUsage;
        }
        DepthStats stats;
        if (a.task == "synthetic") {
            auto& rp = dynamic_cast<RegressionProblem&>(*prob);
            const auto& split_data = e.split == "train"  ? rp.splits().train
                                     : e.split == "val" ? rp.splits().val
                                                        : rp.splits().test;
            stats = rp.depth_stats(split_data);
        } else if (a.task == "lm-toy") {
            auto& lp = dynamic_cast<LmProblem&>(*prob);
            const auto& stream = e.split == "train"  ? lp.corpus().train
                                 : e.split == "val" ? lp.corpus().val
                                                    : lp.corpus().test;
            stats = lp.eval_stream(stream, true).depth;
        } else {
            std::cerr << "eval: --depth-hist not wired for task '" << a.task << "'\n";
            return kExitUsage;
        }
        std::ofstream os(e.depth_hist);
        os << "depth,count\n";
        for (const auto& [depth, count] : stats.histogram) os << depth << ',' << count << "\n";
        std::cout << "depth histogram written to " << e.depth_hist << " (mean "
                  << format_double(stats.mean) << ", std " << format_double(stats.stddev)
                  << ")\n";
    }
    return kExitOk;
}

struct VerifyArgs {
    std::vector<std::string> suites{"all"};
    int dh = 4, dz = 2, dx = 2, r_max = 3, t = 3;
    int seeds = 10;
    int draws = 1000;
    uint64_t seed = 2024;
};

int cmd_verify(const VerifyArgs& v) {
    static const std::set<std::string> known{"gradcheck", "gates", "depth-bound",
                                             "pass-through", "reduction", "all"};
    std::set<std::string> wanted;
    for (const std::string& s : v.suites) {
        if (!known.count(s)) {
            std::cerr << "verify: unknown suite '" << s << "'\n";
            return kExitUsage;
        }
        if (s == "all") {
            wanted = {"gradcheck", "gates", "depth-bound", "pass-through", "reduction"};
        } else {
            wanted.insert(s);
        }
    }

    std::vector<SuiteResult> results;
    if (wanted.count("gradcheck"))
        results.push_back(gradcheck_suite(v.dh, v.dz, v.dx, v.r_max, v.t, v.seeds, 1e-4,
                                          v.seed));
    if (wanted.count("gates"))
        results.push_back(gate_monotonic_suite(v.draws, 6, 3, 12, v.seed));
    if (wanted.count("depth-bound"))
        results.push_back(depth_bound_suite(v.draws, 6, 3, 3, 8, v.seed));
    if (wanted.count("pass-through"))
        results.push_back(passthrough_suite(v.draws, 6, 3, 3, 8, v.seed));
    if (wanted.count("reduction"))
        results.push_back(reduction_suite(100, 6, 3, 6, 1e-12, v.seed));

    bool all_pass = true;
    for (const SuiteResult& r : results) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
        all_pass = all_pass && r.pass;
    }
    return all_pass ? kExitOk : kExitNumeric;
}

struct ReportArgs {
    std::string metrics_dir;
    std::string out = "summary.csv";
    std::vector<double> gate_alpha;
    std::vector<double> gate_beta;
    int gate_r_max = 10;
    std::string gate_out = "gate_curves.csv";
};

int cmd_report(const ReportArgs& r) {
    bool did_anything = false;

    if (!r.metrics_dir.empty()) {
        if (!fs::is_directory(r.metrics_dir)) {
            std::cerr << "report: metrics dir '" << r.metrics_dir << "' not found\n";
            return kExitData;
        }
        // run name without its -seedN suffix -> metric -> values across seeds
        std::map<std::string, std::map<std::string, std::vector<double>>> table;
        size_t files = 0;
        for (const auto& entry : fs::directory_iterator(r.metrics_dir)) {
            if (entry.path().extension() != ".csv") continue;
            std::ifstream is(entry.path());
            std::string line;
            if (!std::getline(is, line) || line.rfind("run,seed,epoch", 0) != 0) continue;
            ++files;
            while (std::getline(is, line)) {
                std::istringstream ls(line);
                std::string run, seed, epoch, split, metric, value;
                if (!std::getline(ls, run, ',') || !std::getline(ls, seed, ',') ||
                    !std::getline(ls, epoch, ',') || !std::getline(ls, split, ',') ||
                    !std::getline(ls, metric, ',') || !std::getline(ls, value, ','))
                    continue;
                if (split != "test") continue;
                std::string group = run.substr(0, run.rfind("-seed"));
                table[group][metric].push_back(std::stod(value));
            }
        }
        if (files == 0) {
            std::cerr << "report: no metrics CSVs under '" << r.metrics_dir << "'\n";
            return kExitData;
        }
        std::ofstream os(r.out);
        os << "run,metric,mean,std,runs\n";
        for (const auto& [group, metrics] : table)
            for (const auto& [metric, values] : metrics) {
                double sum = 0, sum_sq = 0;
                for (double v : values) {
                    sum += v;
                    sum_sq += v * v;
                }
                double mean = sum / values.size();
                double sd = std::sqrt(std::max(0.0, sum_sq / values.size() - mean * mean));
                os << group << ',' << metric << ',' << format_double(mean) << ','
                   << format_double(sd) << ',' << values.size() << "\n";
                std::cout << group << " " << metric << " = " << format_double(mean)
                          << " +/- " << format_double(sd) << " (" << values.size()
                          << " runs)\n";
            }
        std::cout << "summary written to " << r.out << "\n";
        did_anything = true;
    }

    if (!r.gate_alpha.empty()) {
        if (r.gate_alpha.size() != r.gate_beta.size()) {
            std::cerr << "report: --gate-alpha and --gate-beta need matching lengths\n";
            return kExitUsage;
        }
        // global upper-bound curves d(r) at alpha_t = 0
        std::ofstream os(r.gate_out);
        os << "alpha,beta,r,d\n";
        for (size_t i = 0; i < r.gate_alpha.size(); ++i) {
            double alpha = r.gate_alpha[i], beta = r.gate_beta[i];
            for (int rr = 1; rr <= r.gate_r_max; ++rr) {
                double d = std::max(beta + std::exp(alpha) - std::exp(alpha * rr), 0.0);
                os << format_double(alpha) << ',' << format_double(beta) << ',' << rr << ','
                   << format_double(d) << "\n";
            }
        }
        std::cout << "gate curves written to " << r.gate_out << "\n";
        did_anything = true;
    }

    if (!did_anything) {
        std::cerr << "report: nothing to do (give --metrics-dir and/or --gate-alpha)\n";
        return kExitUsage;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"elastic recurrent highway network experiments"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "config file; sections [synth-gen], [train], ... mirror the flags");

    SynthGenArgs sg;
    CLI::App* c_gen = app.add_subcommand("synth-gen", "generate a synthetic dataset file");
    c_gen->configurable();
    c_gen->fallthrough();
    c_gen->add_option("--out", sg.out, "output dataset path")->required();
    c_gen->add_option("--n", sg.n, "sample count");
    c_gen->add_option("--t", sg.t, "sequence length");
    c_gen->add_option("--rmax", sg.r_max, "generator depth scale");
    c_gen->add_option("--theta", sg.theta, "rotation angle (radians)");
    c_gen->add_option("--noise", sg.noise, "noise covariance scale");
    c_gen->add_option("--seed", sg.seed, "generation seed");

    ExperimentArgs tr;
    CLI::App* c_train =
        app.add_subcommand("train", "train a model and write metrics/checkpoint");
    c_train->configurable();
    c_train->fallthrough();
    c_train->add_option("--task", tr.task, "synthetic | har | lm-toy")
        ->check(CLI::IsMember({"synthetic", "har", "lm-toy"}));
    c_train->add_option("--cell", tr.cell, "recurrent cell")
        ->check(CLI::IsMember({"rnn", "lstm", "rhn", "srhn", "srehn", "eirehn"}));
    c_train->add_option("--dh", tr.dh, "hidden size");
    c_train->add_option("--dz", tr.dz, "hypernetwork size (0 = dh/2 rounded up)");
    c_train->add_option("--layers", tr.layers, "stacked layers");
    c_train->add_option("--depth", tr.depth,
                        "R for fixed cells, R_max for elastic (0 = default)");
    c_train->add_option("--data", tr.data, "dataset file (synthetic) or root (har/ptb)");
    c_train->add_option("--out", tr.out, "output directory");
    c_train->add_option("--batch", tr.batch, "mini-batch size");
    c_train->add_option("--epochs", tr.epochs, "training epochs");
    c_train->add_option("--lr", tr.lr, "learning rate");
    c_train->add_option("--clip", tr.clip, "global-norm gradient clip (0 = off)");
    c_train->add_option("--seed", tr.seed, "base seed");
    c_train->add_option("--seeds", tr.seeds, "number of runs, seeds seed..seed+N-1");
    c_train->add_option("--eval-every", tr.eval_every, "epochs between validation passes");
    c_train->add_option("--jobs", tr.jobs, "worker threads per mini-batch");
    c_train->add_option("--window", tr.window, "truncated-BPTT window (lm-toy)");
    c_train->add_option("--corpus-seed", tr.corpus_seed, "toy-corpus seed (lm-toy)");

    EvalArgs ev;
    CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    c_eval->configurable();
    c_eval->fallthrough();
    c_eval->add_option("--checkpoint", ev.checkpoint, "checkpoint path")->required();
    c_eval->add_option("--data", ev.data, "dataset file or root (as in train)");
    c_eval->add_option("--split", ev.split, "train | val | test")
        ->check(CLI::IsMember({"train", "val", "test"}));
    c_eval->add_option("--depth-hist", ev.depth_hist, "write a depth,count CSV here");

    VerifyArgs vf;
    CLI::App* c_verify = app.add_subcommand("verify", "run property suites");
    c_verify->configurable();
    c_verify->fallthrough();
    c_verify->add_option("--suite", vf.suites,
                         "gradcheck | gates | depth-bound | pass-through | reduction | all");
    c_verify->add_option("--dh", vf.dh, "hidden size (gradcheck)");
    c_verify->add_option("--dz", vf.dz, "hypernetwork size (gradcheck)");
    c_verify->add_option("--dx", vf.dx, "input size (gradcheck)");
    c_verify->add_option("--rmax", vf.r_max, "R_max (gradcheck)");
    c_verify->add_option("--t", vf.t, "sequence length (gradcheck)");
    c_verify->add_option("--seeds", vf.seeds, "gradcheck seeds");
    c_verify->add_option("--draws", vf.draws, "random draws for property suites");
    c_verify->add_option("--seed", vf.seed, "suite seed");

    ReportArgs rp;
    CLI::App* c_report = app.add_subcommand("report", "aggregate metrics and emit plot data");
    c_report->configurable();
    c_report->fallthrough();
    c_report->add_option("--metrics-dir", rp.metrics_dir, "directory of metrics CSVs");
    c_report->add_option("--out", rp.out, "summary CSV path");
    c_report->add_option("--gate-alpha", rp.gate_alpha, "alpha values for gate curves");
    c_report->add_option("--gate-beta", rp.gate_beta, "beta values for gate curves");
    c_report->add_option("--gate-rmax", rp.gate_r_max, "curve depth span");
    c_report->add_option("--gate-out", rp.gate_out, "gate-curve CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (c_gen->parsed()) return cmd_synth_gen(sg);
        if (c_train->parsed()) return cmd_train(tr);
        if (c_eval->parsed()) return cmd_eval(ev);
        if (c_verify->parsed()) return cmd_verify(vf);
        if (c_report->parsed()) return cmd_report(rp);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitUsage;
}
