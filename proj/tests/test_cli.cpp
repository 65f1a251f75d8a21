#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

#ifndef KAKEYA_LAB_BIN
#define KAKEYA_LAB_BIN "kakeya_lab"
#endif

namespace {

int run(const std::string& args) {
    std::string cmd = std::string(KAKEYA_LAB_BIN) + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("gen writes the arrangement with the right record count") {
    REQUIRE(run("gen --j 3 --r 1 --t 2 --counts 40,40,40 --R 64 --seed 7 --out cli_a.tubes") ==
            0);
    std::ifstream is("cli_a.tubes");
    REQUIRE(is.good());
    int lines = 0;
    std::string line;
    while (std::getline(is, line)) ++lines;
    CHECK(lines == 1 + 120);  // header + tube records
}

TEST_CASE("gen is byte-identical for a repeated seed") {
    REQUIRE(run("gen --j 2 --r 1 --t 1 --counts 10,10,10 --R 8 --seed 5 --out cli_b1.tubes") ==
            0);
    REQUIRE(run("gen --j 2 --r 1 --t 1 --counts 10,10,10 --R 8 --seed 5 --out cli_b2.tubes") ==
            0);
    CHECK(slurp("cli_b1.tubes") == slurp("cli_b2.tubes"));
    REQUIRE(run("gen --j 2 --r 1 --t 1 --counts 10,10,10 --R 8 --seed 6 --out cli_b3.tubes") ==
            0);
    CHECK(slurp("cli_b1.tubes") != slurp("cli_b3.tubes"));
}

TEST_CASE("gen rejects r > j with nonzero exit") {
    CHECK(run("gen --j 1 --r 3 --out cli_bad.tubes") != 0);
}

TEST_CASE("eval runs on a generated arrangement") {
    REQUIRE(run("gen --j 2 --r 1 --t 1 --counts 30,30,30 --R 8 --seed 2 --out cli_c.tubes") ==
            0);
    CHECK(run("eval --in cli_c.tubes --grid-h 0.5") == 0);
    CHECK(run("eval --in missing_file.tubes") == 2);
}

TEST_CASE("decompose emits the profile CSV header") {
    REQUIRE(run("gen --j 2 --r 1 --t 1 --counts 60,60,60 --R 8 --seed 3 --out cli_d.tubes") ==
            0);
    REQUIRE(run("decompose --in cli_d.tubes --out cli_prof.csv --bdump cli_cells.txt") == 0);
    auto csv = slurp("cli_prof.csv");
    CHECK(csv.rfind("s,M,N,E,F,", 0) == 0);
    auto cells = slurp("cli_cells.txt");
    CHECK(cells.find("unit cells") != std::string::npos);
}

TEST_CASE("verify subcommand exit-status contract") {
    CHECK(run("verify --check lw") == 0);
    CHECK(run("verify --check lw --theta 0.5") == 0);
    REQUIRE(run("gen --j 2 --r 1 --t 1 --counts 60,60,60 --R 8 --seed 3 --out cli_e.tubes") ==
            0);
    CHECK(run("verify --check cord --in cli_e.tubes") == 0);
    CHECK(run("verify --check gtem --in cli_e.tubes --C 4") == 0);
}

TEST_CASE("sweep writes a CSV with the fit line") {
    REQUIRE(run("sweep --j 0..1 --r 0..0 --t 0..1 --trials 1 --seed 1 --out cli_sweep.csv") ==
            0);
    auto csv = slurp("cli_sweep.csv");
    CHECK(csv.rfind("r,j,t,R,theta,seed,", 0) == 0);
    CHECK(csv.find("# fit:") != std::string::npos);
}

TEST_CASE("config file values load and unknown keys are rejected") {
    {
        std::ofstream os("cli_gen.conf");
        os << "j=3\nr=1\nt=1\ncounts=12,12,12\nR=8\nseed=9\nout=cli_f.tubes\n";
    }
    CHECK(run("gen --config cli_gen.conf") == 0);
    std::ifstream is("cli_f.tubes");
    int lines = 0;
    std::string line;
    while (std::getline(is, line)) ++lines;
    CHECK(lines == 1 + 36);
    // flags override the config file
    CHECK(run("gen --config cli_gen.conf --counts 5,5,5 --out cli_g.tubes") == 0);
    std::ifstream is2("cli_g.tubes");
    lines = 0;
    while (std::getline(is2, line)) ++lines;
    CHECK(lines == 1 + 15);

    {
        std::ofstream os("cli_bad.conf");
        os << "j=2\nnonsense_key=1\n";
    }
    CHECK(run("gen --config cli_bad.conf") != 0);
}
