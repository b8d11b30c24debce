#include <catch2/catch_amalgamated.hpp>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

// End-to-end checks that spawn the installed binary (path via SPARSETRACK_BIN).

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("sparsetrack_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static inline int counter = 0;
};

std::string binary() {
    const char* bin = std::getenv("SPARSETRACK_BIN");
    REQUIRE(bin != nullptr);
    return bin;
}

struct RunResult {
    int exit_code;
    std::string out;
    std::string err;
};

RunResult run(const std::string& args, const fs::path& workdir) {
    const fs::path out_file = workdir / "stdout.txt";
    const fs::path err_file = workdir / "stderr.txt";
    const std::string cmd = "cd '" + workdir.string() + "' && '" + binary() + "' " +
                            args + " > '" + out_file.string() + "' 2> '" +
                            err_file.string() + "'";
    const int raw = std::system(cmd.c_str());
    RunResult res;
    res.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    res.out = slurp(out_file);
    res.err = slurp(err_file);
    return res;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("synth is deterministic per seed and writes the planted weights") {
    TempDir tmp;
    auto r1 = run("synth --n 10 --d 60 --sparse-k 4 --noise 0.001 --seed 9 --out a.csv", tmp.path);
    REQUIRE(r1.exit_code == 0);
    auto r2 = run("synth --n 10 --d 60 --sparse-k 4 --noise 0.001 --seed 9 --out b.csv", tmp.path);
    REQUIRE(r2.exit_code == 0);
    REQUIRE(read_file(tmp.path / "a.csv") == read_file(tmp.path / "b.csv"));
    REQUIRE(read_file(tmp.path / "a_truth.csv") == read_file(tmp.path / "b_truth.csv"));

    // ground truth has exactly sparse-k rows and the weights sum to one
    std::ifstream truth(tmp.path / "a_truth.csv");
    std::string line;
    std::getline(truth, line);
    int rows = 0;
    double sum = 0.0;
    while (std::getline(truth, line)) {
        if (line.empty()) continue;
        ++rows;
        sum += std::stod(line.substr(line.find(',') + 1));
    }
    REQUIRE(rows == 4);
    REQUIRE(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("noiseless synth data is exactly replicable by a full solve") {
    TempDir tmp;
    REQUIRE(run("synth --n 8 --d 80 --sparse-k 3 --noise 0 --seed 4 --out clean.csv",
                tmp.path).exit_code == 0);
    auto solve = run("solve --data clean.csv --target INDEX --method full --out full_run",
                     tmp.path);
    REQUIRE(solve.exit_code == 0);
    std::ifstream summary(tmp.path / "full_run" / "summary.json");
    nlohmann::json j;
    summary >> j;
    REQUIRE(j["objective"].get<double>() < 1e-10);
}

TEST_CASE("solve writes a weights file with at most K rows and exits 0") {
    TempDir tmp;
    REQUIRE(run("synth --n 10 --d 100 --sparse-k 4 --noise 0.002 --seed 31 --out s.csv",
                tmp.path).exit_code == 0);
    auto solve = run("solve --data s.csv --target INDEX --method dcc --k 4 "
                     "--a 2000 --eps 0.01 --out run", tmp.path);
    REQUIRE(solve.exit_code == 0);
    REQUIRE(solve.out.find("objective") != std::string::npos);
    REQUIRE(solve.out.find("exact_cardinality") != std::string::npos);

    int weight_rows = 0;
    for (const auto& entry : fs::directory_iterator(tmp.path / "run")) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("weights_", 0) == 0) {
            std::ifstream in(entry.path());
            std::string line;
            std::getline(in, line);
            while (std::getline(in, line))
                if (!line.empty()) ++weight_rows;
        }
    }
    REQUIRE(weight_rows >= 1);
    REQUIRE(weight_rows <= 4);
}

TEST_CASE("solve with --k 0 exits 2 with a machine-readable error code") {
    TempDir tmp;
    REQUIRE(run("synth --n 6 --d 50 --sparse-k 2 --noise 0 --seed 2 --out s.csv",
                tmp.path).exit_code == 0);
    auto solve = run("solve --data s.csv --target INDEX --method dcc --k 0 --out run",
                     tmp.path);
    REQUIRE(solve.exit_code == 2);
    REQUIRE(solve.err.find("error_code=InfeasibleConstraintConfig") != std::string::npos);
}

TEST_CASE("solve with --a auto records the searched steepness and conditions") {
    TempDir tmp;
    REQUIRE(run("synth --n 12 --d 90 --sparse-k 4 --noise 0.001 --seed 8 --out s.csv",
                tmp.path).exit_code == 0);
    auto solve = run("solve --data s.csv --target INDEX --method dcc --k 4 "
                     "--a auto --eps 0.01 --out run", tmp.path);
    REQUIRE(solve.exit_code == 0);
    std::ifstream summary(tmp.path / "run" / "summary.json");
    nlohmann::json j;
    summary >> j;
    // auto resolves to the minimal steepness for (N, eps); all conditions hold
    const double recorded_a = std::stod(j["config"]["a"].get<std::string>());
    const double expected = std::log(12.0 / 0.01 - 1.0) / 0.01;
    REQUIRE(std::abs(recorded_a - expected) / expected < 1e-4);
    REQUIRE(j["conditions"]["c0"].get<bool>());
    REQUIRE(j["conditions"]["c1"].get<bool>());
    REQUIRE(j["conditions"]["c2"].get<bool>());
    REQUIRE(j["conditions"]["min_a_overall"].get<double>() == recorded_a);
}

TEST_CASE("backtest from a config file writes tracking rows for every hold day") {
    TempDir tmp;
    REQUIRE(run("synth --n 8 --d 260 --sparse-k 3 --noise 0.002 --seed 77 --out bt.csv",
                tmp.path).exit_code == 0);
    {
        std::ofstream cfg(tmp.path / "run.ini");
        cfg << "data_path = bt.csv\n"
            << "target = INDEX\n"
            << "method = dcc\n"
            << "k = 3\n"
            << "a = 2000\n"
            << "eps = 0.01\n"
            << "lookback_days = 126\n"
            << "rebalance_days = 63\n"
            << "output_dir = bt_out\n";
    }
    auto bt = run("backtest --config run.ini", tmp.path);
    REQUIRE(bt.exit_code == 0);

    std::ifstream tracking(tmp.path / "bt_out" / "tracking.csv");
    std::string line;
    std::getline(tracking, line);
    int rows = 0;
    while (std::getline(tracking, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == 260 - 126);  // hold days partition the post-lookback span
}

TEST_CASE("backtest with lookback larger than the data exits 2") {
    TempDir tmp;
    REQUIRE(run("synth --n 6 --d 100 --sparse-k 2 --noise 0 --seed 3 --out s.csv",
                tmp.path).exit_code == 0);
    auto bt = run("backtest --data s.csv --target INDEX --method full "
                  "--lookback 252 --rebalance 63 --out o", tmp.path);
    REQUIRE(bt.exit_code == 2);
    REQUIRE(bt.err.find("error_code=InsufficientData") != std::string::npos);
}

TEST_CASE("backtest --method all writes one summary row and directory per method") {
    TempDir tmp;
    REQUIRE(run("synth --n 8 --d 200 --sparse-k 3 --noise 0.002 --seed 13 --out s.csv",
                tmp.path).exit_code == 0);
    auto bt = run("backtest --data s.csv --target INDEX --method all --k 3 --a 2000 "
                  "--eps 0.01 --lookback 126 --rebalance 42 --out multi", tmp.path);
    REQUIRE(bt.exit_code == 0);
    for (const std::string method : {"dcc", "forward", "backward", "full"}) {
        REQUIRE(bt.out.find(method) != std::string::npos);
        REQUIRE(fs::exists(tmp.path / "multi" / method / "summary.json"));
        REQUIRE(fs::exists(tmp.path / "multi" / method / "tracking.csv"));
    }
}

TEST_CASE("check-conditions agrees with the published thresholds") {
    TempDir tmp;
    auto at70 = run("check-conditions --n 100 --eps 1e-4 --a 70", tmp.path);
    REQUIRE(at70.exit_code == 0);
    REQUIRE(at70.out.find("c2 true") != std::string::npos);

    auto at14 = run("check-conditions --n 100 --eps 1e-4 --a 14", tmp.path);
    REQUIRE(at14.exit_code == 0);
    REQUIRE(at14.out.find("c0 false") != std::string::npos);
    REQUIRE(at14.out.find("c2 false") != std::string::npos);

    auto searched = run("check-conditions --n 100 --eps 1e-4", tmp.path);
    REQUIRE(searched.exit_code == 0);
    const auto pos = searched.out.find("min_a ");
    REQUIRE(pos != std::string::npos);
    const double min_a = std::stod(searched.out.substr(pos + 6));
    REQUIRE(min_a >= 1.38e5);
    REQUIRE(min_a <= 1.39e5);
}

TEST_CASE("check-conditions --scan emits a conditions CSV") {
    TempDir tmp;
    auto scan = run("check-conditions --n 100 --eps 1e-4 --scan 10:200000:25 "
                    "--scan-out grid.csv", tmp.path);
    REQUIRE(scan.exit_code == 0);
    std::ifstream in(tmp.path / "grid.csv");
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "a,c0,c1,c2,e");
    int rows = 0;
    bool saw_all_true = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
        if (line.find(",1,1,1,") != std::string::npos) saw_all_true = true;
    }
    REQUIRE(rows == 25);
    REQUIRE(saw_all_true);  // the top of the grid exceeds the minimal steepness
}

TEST_CASE("check-conditions rejects a malformed scan range") {
    TempDir tmp;
    auto bad = run("check-conditions --n 100 --eps 1e-4 --scan 5:4:10", tmp.path);
    REQUIRE(bad.exit_code == 2);
    REQUIRE(bad.err.find("error_code=ConfigError") != std::string::npos);
}

TEST_CASE("unknown flags are hard errors") {
    TempDir tmp;
    auto bad = run("solve --data x.csv --target I --definitely-not-a-flag 3", tmp.path);
    REQUIRE(bad.exit_code == 2);
}

TEST_CASE("rerunning a backtest reproduces byte-identical artifacts") {
    TempDir tmp;
    REQUIRE(run("synth --n 8 --d 220 --sparse-k 3 --noise 0.002 --seed 55 --out s.csv",
                tmp.path).exit_code == 0);
    const std::string flags = "backtest --data s.csv --target INDEX --method dcc --k 3 "
                              "--a 2000 --eps 0.01 --lookback 126 --rebalance 63";
    REQUIRE(run(flags + " --out r1", tmp.path).exit_code == 0);
    REQUIRE(run(flags + " --out r2", tmp.path).exit_code == 0);

    for (const auto& entry : fs::directory_iterator(tmp.path / "r1")) {
        const std::string name = entry.path().filename().string();
        const fs::path other = tmp.path / "r2" / name;
        REQUIRE(fs::exists(other));
        if (name == "summary.json") {
            // identical up to wall-clock fields
            std::ifstream a(entry.path()), b(other);
            nlohmann::json ja, jb;
            a >> ja;
            b >> jb;
            ja.erase("per_rebalance_wall_time");
            ja.erase("total_fit_wall_time");
            jb.erase("per_rebalance_wall_time");
            jb.erase("total_fit_wall_time");
            REQUIRE(ja == jb);
        } else {
            REQUIRE(read_file(entry.path()) == read_file(other));
        }
    }
}
