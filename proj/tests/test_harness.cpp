#include "mamorl/config.hpp"
#include "mamorl/harness.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace mamorl;
using namespace mamorl::harness;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(# smallest useful grid
variants = aa, ip
seeds = 3
[env]
kind = spread
max_steps = 5
[train]
batch = 4
warmup_steps = 5
episodes = 3
critic_width = 16
gpi_candidates = 2
checkpoint_every = 2
[eval]
n_states = 2
grid_divisions = 2
episodes_per_point = 1
)";

fs::path fresh_dir(const std::string& stem) {
    const fs::path p = fs::temp_directory_path() / (stem + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Episode log with the wall-clock column removed.
std::vector<std::vector<std::string>> without_wall(const fs::path& path) {
    auto rows = read_csv(path);
    for (auto& r : rows) r.pop_back();
    return rows;
}

ExperimentConfig tiny(const fs::path& dir) {
    auto c = parse_config(kTiny);
    c.output_dir = dir.string();
    return c;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MAMORL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("empty config gives defaults") {
    const auto c = parse_config("");
    CHECK(c.train.gamma == 0.99);
    CHECK(c.train.tau == 0.005);
    CHECK(c.env.kind == env::EnvKind::kSpread);
    CHECK(c.variants == std::vector<train::Algorithm>{train::Algorithm::kAa});
    CHECK(c == ExperimentConfig{});
}

TEST_CASE("config parse errors carry line numbers") {
    try {
        parse_config("[train]\n# ok\ngamma = 1.5\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find("gamma") != std::string::npos);
    }
    try {
        parse_config("[env]\nn_agents = 2\nbogus = 1\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(parse_config("[nowhere]\n"), ParseError);
    CHECK_THROWS_AS(parse_config("[train]\ngamma = 0.9\ngamma = 0.8\n"), ParseError);
    CHECK_THROWS_AS(parse_config("[train]\nbatch = many\n"), ParseError);
    CHECK_THROWS_AS(parse_config("no equals sign\n"), ParseError);
    // gp needs random preferences while the default case is observation-driven.
    CHECK_THROWS_AS(parse_config("variants = gp\n"), ParseError);
    CHECK_NOTHROW(parse_config("variants = gp\n[preference]\ncase = random\n"));
}

TEST_CASE("config round trip") {
    const auto c = parse_config(kTiny);
    CHECK(c.variants.size() == 2);
    CHECK(c.seeds == std::vector<std::uint64_t>{3});
    CHECK(c.env.max_steps == 5);
    CHECK(c.train.checkpoint_every == 2);
    CHECK(parse_config(serialize(c)) == c);

    auto d = c;
    d.train.gamma = 0.123456789012345;
    d.env.dt = 0.25;
    CHECK(parse_config(serialize(d)) == d);
    CHECK_FALSE(parse_config(serialize(d)) == c);
}

TEST_CASE("format_double round trips") {
    for (const double v : {0.1, -1e-300, 123456.789, 1.0 / 3.0}) {
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("sample std and summaries") {
    CHECK(sample_std({1.0}, 1.0) == 0.0);
    CHECK(sample_std({1.0, 3.0}, 2.0) == doctest::Approx(std::sqrt(2.0)));
    RunOutcome a{train::Algorithm::kAa, 0, true, "", -2.0, 0.0, 5.0, 3, {}};
    RunOutcome b{train::Algorithm::kAa, 1, true, "", -4.0, 0.0, 7.0, 3, {}};
    RunOutcome c{train::Algorithm::kAa, 2, false, "boom", 0.0, 0.0, 0.0, 0, {}};
    const auto rows = summarize({train::Algorithm::kAa, train::Algorithm::kIp}, {a, b, c});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].n_ok == 2);
    CHECK(rows[0].n_failed == 1);
    CHECK(rows[0].gu_mean == doctest::Approx(-3.0));
    CHECK(rows[0].hv_std == doctest::Approx(std::sqrt(2.0)));
    CHECK(rows[1].n_ok == 0);
}

TEST_CASE("front csv round trip") {
    metrics::ParetoFront f;
    f.ref = Eigen::Vector2d(-1.5, -2.25);
    f.points = {Eigen::Vector2d(0.1, -0.3), Eigen::Vector2d(-1.0 / 3.0, 0.7)};
    const fs::path dir = fresh_dir("mamorl_front");
    fs::create_directories(dir);
    write_front_csv((dir / "f.csv").string(), f);
    const auto g = read_front_csv((dir / "f.csv").string());
    CHECK(g.ref == f.ref);
    CHECK(g.points == f.points);
    CHECK(slurp(dir / "f.csv").rfind(kSchemaHeader, 0) == 0);
    {
        std::ofstream out(dir / "bad.csv");
        out << "x,y\n1,2\n";
    }
    CHECK_THROWS_AS(read_front_csv((dir / "bad.csv").string()), ParseError);
    fs::remove_all(dir);
}

TEST_CASE("grid run writes every artefact") {
    const fs::path dir = fresh_dir("mamorl_grid");
    const auto outcomes = run_grid(tiny(dir), {});
    REQUIRE(outcomes.size() == 2);
    for (const auto& o : outcomes) CHECK(o.ok);

    for (const char* cell : {"aa_seed3", "ip_seed3"}) {
        CHECK(fs::exists(dir / (std::string(cell) + ".csv")));
        CHECK(fs::exists(dir / (std::string(cell) + "_front.csv")));
        CHECK(fs::exists(dir / (std::string(cell) + ".ckpt")));
        const auto log = read_csv(dir / (std::string(cell) + ".csv"));
        REQUIRE(log.size() == 4);
        CHECK(log[0] == std::vector<std::string>{"variant", "seed", "episode", "env_steps", "return_0",
                                                 "return_1", "mean_loss", "sigma", "wall_ms"});
    }
    CHECK(fs::exists(dir / "config.cfg"));
    CHECK(load_config((dir / "config.cfg").string()) == tiny(dir));

    // Summary agrees with a recomputation from the per-run metrics.
    const auto metrics_rows = read_csv(dir / "metrics.csv");
    REQUIRE(metrics_rows.size() == 3);
    CHECK(metrics_rows[0][0] == "variant");
    std::map<std::string, double> gu;
    for (std::size_t r = 1; r < metrics_rows.size(); ++r) {
        CHECK(metrics_rows[r].back() == "ok");
        gu[metrics_rows[r][0]] = std::stod(metrics_rows[r][2]);
    }
    const auto summary = read_csv(dir / "summary.csv");
    REQUIRE(summary.size() == 3);
    for (std::size_t r = 1; r < summary.size(); ++r) {
        CHECK(std::stod(summary[r][3]) == gu.at(summary[r][0]));
        CHECK(summary[r][1] == "1");
    }

    // A second run refuses to overwrite unless forced.
    CHECK_THROWS_AS(run_grid(tiny(dir), {}), OutputDirError);
    GridOptions force;
    force.force = true;
    force.jobs = 2;
    const fs::path again = fresh_dir("mamorl_grid_again");
    run_grid(tiny(again), force);
    for (const char* cell : {"aa_seed3", "ip_seed3"}) {
        CHECK(without_wall(dir / (std::string(cell) + ".csv")) ==
              without_wall(again / (std::string(cell) + ".csv")));
        CHECK(slurp(dir / (std::string(cell) + "_front.csv")) ==
              slurp(again / (std::string(cell) + "_front.csv")));
        CHECK(slurp(dir / (std::string(cell) + ".ckpt")) ==
              slurp(again / (std::string(cell) + ".ckpt")));
    }
    CHECK(slurp(dir / "metrics.csv") == slurp(again / "metrics.csv"));
    CHECK_NOTHROW(run_grid(tiny(dir), force));
    fs::remove_all(dir);
    fs::remove_all(again);
}

TEST_CASE("output directory override") {
    const fs::path dir = fresh_dir("mamorl_env_out");
    auto c = tiny(fresh_dir("mamorl_unused"));
    c.variants = {train::Algorithm::kIp};
    ::setenv("MAMORL_OUT", dir.string().c_str(), 1);
    CHECK(resolve_output_dir(c) == dir.string());
    run_grid(c, {});
    ::unsetenv("MAMORL_OUT");
    CHECK(fs::exists(dir / "summary.csv"));
    CHECK_FALSE(fs::exists(c.output_dir));
    fs::remove_all(dir);
}

TEST_CASE("seed override") {
    const fs::path dir = fresh_dir("mamorl_override");
    auto c = tiny(dir);
    c.variants = {train::Algorithm::kIp};
    GridOptions o;
    o.seed_override = 11;
    const auto out = run_grid(c, o);
    REQUIRE(out.size() == 1);
    CHECK(out[0].seed == 11);
    CHECK(fs::exists(dir / "ip_seed11.csv"));
    fs::remove_all(dir);
}

TEST_CASE("gradient suite") {
    const auto reports = gradient_suite(1);
    CHECK(reports.size() == 4);
    for (const auto& r : reports) {
        CAPTURE(r.network);
        CHECK(r.max_error < 1e-4);
    }
}

TEST_CASE("command line exit codes") {
    const fs::path dir = fresh_dir("mamorl_cli");
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "tiny.cfg");
        out << kTiny << "[experiment]\noutput_dir = " << (dir / "out").string() << "\n";
    }
    {
        std::ofstream out(dir / "broken.cfg");
        out << "[train]\ngamma = 2\n";
    }
    const std::string cfg = (dir / "tiny.cfg").string();

    CHECK(run_cli("gradcheck --seeds 1") == 0);
    CHECK(run_cli("--no-such-flag") == 2);
    CHECK(run_cli("train") == 2);
    CHECK(run_cli("train --config " + (dir / "broken.cfg").string()) == 2);
    CHECK(run_cli("evaluate --config " + cfg + " --checkpoint " + (dir / "missing.ckpt").string()) ==
          2);
    CHECK(run_cli("metrics --front " + (dir / "missing.csv").string()) == 2);

    REQUIRE(run_cli("train --config " + cfg) == 0);
    CHECK(fs::exists(dir / "out" / "summary.csv"));
    CHECK(run_cli("train --config " + cfg) == 2);
    CHECK(run_cli("train --force --config " + cfg) == 0);
    CHECK(run_cli("evaluate --config " + cfg + " --variant aa --checkpoint " +
                  (dir / "out" / "aa_seed3.ckpt").string() + " --output " +
                  (dir / "eval.csv").string()) == 0);
    const auto eval = read_csv(dir / "eval.csv");
    REQUIRE(eval.size() == 2);
    CHECK(eval[1][0] == "aa");
    CHECK(run_cli("metrics --front " + (dir / "out" / "aa_seed3_front.csv").string()) == 0);
    fs::remove_all(dir);
}
