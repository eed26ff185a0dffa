#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "battkit_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string("\"") + BATTKIT_CLI + "\" " + args + " >>\"" +
                            (workdir() / "log.txt").string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string path(const std::string& rel) { return "\"" + (workdir() / rel).string() + "\""; }

// Calibration ladder at 25 degC, one fast charge, one small pack.
void write_scenario() {
    std::ofstream out(workdir() / "scenario.json");
    out << R"({"seed": 3,
  "charge_grid": [{"prefix": "cal", "temperatures": [25], "c_rates": [0.3333], "start_socs": [0.05],
                   "lli": [0, 0.04, 0.08, 0.12, 0.16, 0.2], "dt": 5}],
  "charges": [{"id": "fast", "temperature": 25, "c_rate": 2.0, "start_soc": 0.05, "lli": 0.05, "dt": 2},
              {"id": "probe", "temperature": 25, "c_rate": 0.5, "start_soc": 0.1, "lli": 0.1, "dt": 5}],
  "packs": [{"id": "pack", "sensors": 6, "days": 1.0, "dt": 60}]})";
}

bool synthesized() {
    static const bool ok = [] {
        write_scenario();
        return run("synth --scenario " + path("scenario.json") + " --out " + path("data")) == 0;
    }();
    return ok;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 2") {
    CHECK(run("") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("soh estimate --input x.csv") == 2);
    CHECK(run("ingest --out " + path("nowhere")) == 2);
    CHECK(run("ingest --input x.csv --out " + path("o") + " --seed notanumber") == 2);
}

TEST_CASE("module errors exit with 1") {
    CHECK(run("ingest --input " + path("does_not_exist.csv") + " --out " + path("bad")) == 1);
    std::ofstream(workdir() / "bad.json") << "{\"ingest\": {\"nonsense_key\": 1}}";
    REQUIRE(synthesized());
    CHECK(run("ingest --input " + path("data/T25/probe.csv") + " --config " + path("bad.json") + " --out " +
              path("bad")) != 0);
}

TEST_CASE("synth, ingest and soh pipeline") {
    REQUIRE(synthesized());
    CHECK(fs::exists(workdir() / "data/truth/ground_truth.json"));
    CHECK(run("ingest --input " + path("data/T25/probe.csv") + " --out " + path("ingest")) == 0);
    CHECK(fs::exists(workdir() / "ingest/clean.csv"));
    CHECK(fs::exists(workdir() / "ingest/report.json"));

    CHECK(run("soh calibrate --data " + path("data") + " --out " + path("cal")) == 0);
    REQUIRE(fs::exists(workdir() / "cal/lut.txt"));
    CHECK(run("soh estimate --input " + path("data/T25/probe.csv") + " --lut " + path("cal/lut.txt") + " --out " +
              path("est")) == 0);
    CHECK(slurp(workdir() / "est/report.json").find("\"estimated\"") != std::string::npos);

    // A 2C charge is refused by the gate.
    CHECK(run("soh estimate --input " + path("data/T25/fast.csv") + " --lut " + path("cal/lut.txt") + " --out " +
              path("est_fast")) == 3);
    CHECK(slurp(workdir() / "est_fast/report.json").find("c-rate") != std::string::npos);

    CHECK(run("soh curves --input " + path("data/T25/probe.csv") + " --out " + path("curves")) == 0);
    CHECK(fs::exists(workdir() / "curves/segment0.dv.txt"));
}

TEST_CASE("thermal replay is deterministic and watch continues it") {
    REQUIRE(synthesized());
    const auto input = path("data/thermal/pack.csv");
    REQUIRE(run("thermal replay --input " + input + " --out " + path("r1")) == 0);
    REQUIRE(run("thermal replay --input " + input + " --out " + path("r2")) == 0);
    for (const char* f : {"verdicts.jsonl", "state.json", "report.json", "timeline.txt"})
        CHECK(slurp(workdir() / "r1" / f) == slurp(workdir() / "r2" / f));
    CHECK(run("thermal watch --input " + input + " --out " + path("r1")) == 0);
    // Without a saved state, watch starts from scratch and writes one.
    CHECK(run("thermal watch --input " + input + " --state " + path("w/fresh.json") + " --out " + path("w")) == 0);
    CHECK(fs::exists(workdir() / "w/fresh.json"));
}

TEST_CASE("report collects run reports and renders plots") {
    REQUIRE(synthesized());
    REQUIRE(run("soh curves --input " + path("data/T25/probe.csv") + " --out " + path("rep/curves")) == 0);
    CHECK(run("report --input " + path("rep") + " --svg --out " + path("rep")) == 0);
    CHECK(fs::exists(workdir() / "rep/summary.json"));
    CHECK(fs::exists(workdir() / "rep/curves/segment0.dv.svg"));
}

}
