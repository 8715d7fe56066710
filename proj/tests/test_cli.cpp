#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const char* cli = EIREHN_CLI_PATH;

struct Workdir {
    fs::path dir;
    Workdir() {
        dir = fs::temp_directory_path() / ("eirehn_cli_" + std::to_string(::getpid()) + "_" +
                                           std::to_string(next()++));
        fs::create_directories(dir);
    }
    ~Workdir() { fs::remove_all(dir); }
    std::string operator/(const std::string& p) const { return (dir / p).string(); }
    static int& next() {
        static int c = 0;
        return c;
    }
};

int run(const std::string& args) {
    int rc = std::system((std::string(cli) + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// metrics CSV with the per-row wall-clock column blanked
std::string metrics_without_seconds(const std::string& path) {
    std::ifstream is(path);
    std::string line, out;
    while (std::getline(is, line)) {
        size_t cut = line.rfind(',');
        out += line.substr(0, cut) + "\n";
    }
    return out;
}

}  // namespace

TEST_CASE("synth-gen is byte-identical under one seed") {
    Workdir wd;
    REQUIRE(run("synth-gen --out " + (wd / "a.txt") + " --n 50 --seed 7") == 0);
    REQUIRE(run("synth-gen --out " + (wd / "b.txt") + " --n 50 --seed 7") == 0);
    CHECK(slurp(wd / "a.txt") == slurp(wd / "b.txt"));
    REQUIRE(run("synth-gen --out " + (wd / "c.txt") + " --n 50 --seed 8") == 0);
    CHECK(slurp(wd / "a.txt") != slurp(wd / "c.txt"));
}

TEST_CASE("synth-gen rejects T too short for regression") {
    Workdir wd;
    CHECK(run("synth-gen --out " + (wd / "x.txt") + " --n 5 --t 1") == 1);
}

TEST_CASE("usage errors exit with code 1") {
    CHECK(run("no-such-command") == 1);
    CHECK(run("train --task bogus") == 1);
    CHECK(run("verify --suite bogus") == 1);
    CHECK(run("eval") == 1);  // --checkpoint required
}

TEST_CASE("train on missing data exits with the data code") {
    Workdir wd;
    CHECK(run("train --task har --data /nonexistent --out " + (wd / "r")) == 2);
    CHECK(run("train --task synthetic --out " + (wd / "r")) == 2);
}

TEST_CASE("train writes metrics, checkpoint, and reproduces itself") {
    Workdir wd;
    REQUIRE(run("synth-gen --out " + (wd / "ds.txt") + " --n 40 --t 8 --seed 3") == 0);
    std::string common = "train --task synthetic --cell eirehn --dh 4 --dz 2 --depth 3 "
                         "--data " + (wd / "ds.txt") + " --epochs 2 --batch 10 --seed 5 ";
    REQUIRE(run(common + "--out " + (wd / "r1")) == 0);
    REQUIRE(run(common + "--out " + (wd / "r2")) == 0);

    std::string name = "synthetic-eirehn-dh4-r3-seed5";
    REQUIRE(fs::exists(wd.dir / "r1" / (name + ".csv")));
    REQUIRE(fs::exists(wd.dir / "r1" / (name + ".ckpt")));

    // identical metrics modulo the seconds column
    CHECK(metrics_without_seconds(wd / ("r1/" + name + ".csv")) ==
          metrics_without_seconds(wd / ("r2/" + name + ".csv")));
    // checkpoints byte-identical (no timestamps inside)
    CHECK(slurp(wd / ("r1/" + name + ".ckpt")) == slurp(wd / ("r2/" + name + ".ckpt")));

    SECTION("eval reloads the checkpoint") {
        CHECK(run("eval --checkpoint " + (wd / ("r1/" + name + ".ckpt")) + " --data " +
                  (wd / "ds.txt") + " --split test") == 0);
    }
    SECTION("lr 0 still exits cleanly") {
        CHECK(run(common + "--lr 0 --out " + (wd / "r0")) == 0);
    }
}

TEST_CASE("multi-seed training aggregates a summary") {
    Workdir wd;
    REQUIRE(run("synth-gen --out " + (wd / "ds.txt") + " --n 30 --t 6 --seed 11") == 0);
    REQUIRE(run("train --task synthetic --cell srhn --dh 4 --depth 2 --data " +
                (wd / "ds.txt") + " --epochs 2 --batch 10 --seed 1 --seeds 3 --out " +
                (wd / "runs")) == 0);
    for (int s = 1; s <= 3; ++s)
        CHECK(fs::exists(wd.dir / "runs" /
                         ("synthetic-srhn-dh4-r2-seed" + std::to_string(s) + ".csv")));
    std::string summary = slurp(wd / "runs/synthetic-srhn-dh4-r2-seed1-x3-summary.csv");
    CHECK(summary.rfind("metric,mean,std,runs", 0) == 0);
    CHECK(summary.find("mse,") != std::string::npos);

    SECTION("report aggregates the same runs") {
        REQUIRE(run("report --metrics-dir " + (wd / "runs") + " --out " +
                    (wd / "summary.csv")) == 0);
        std::string rep = slurp(wd / "summary.csv");
        CHECK(rep.find("synthetic-srhn-dh4-r2,mse,") != std::string::npos);
    }
}

TEST_CASE("report gate curves hit the arithmetic anchor points") {
    Workdir wd;
    REQUIRE(run("report --gate-alpha 0.6931471805599453 --gate-beta 0.5 --gate-rmax 3 "
                "--gate-out " + (wd / "g.csv")) == 0);
    std::string got = slurp(wd / "g.csv");
    CHECK(got.find(",0.5,1,0.5") != std::string::npos);   // d(1) = beta = 0.5
    CHECK(got.find(",0.5,2,0") != std::string::npos);     // d(2) clipped to 0
    CHECK(run("report --metrics-dir /nonexistent") == 2);
    CHECK(run("report") == 1);
}

TEST_CASE("verify suites pass at reduced draw counts") {
    CHECK(run("verify --suite gates --suite reduction --draws 100") == 0);
    CHECK(run("verify --suite gradcheck --seeds 2") == 0);
}

TEST_CASE("config file supplies flags with command line overriding") {
    Workdir wd;
    {
        std::ofstream os(wd / "gen.ini");
        os << "[synth-gen]\nn=25\nseed=9\nout=" << (wd / "from-config.txt") << "\n";
    }
    REQUIRE(run("synth-gen --config " + (wd / "gen.ini")) == 0);
    REQUIRE(fs::exists(wd.dir / "from-config.txt"));
    // command line wins over the file
    REQUIRE(run("synth-gen --config " + (wd / "gen.ini") + " --out " +
                (wd / "override.txt")) == 0);
    CHECK(fs::exists(wd.dir / "override.txt"));
    CHECK(slurp(wd / "from-config.txt") == slurp(wd / "override.txt"));
}
