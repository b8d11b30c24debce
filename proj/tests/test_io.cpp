#include "sparsetrack/io.hpp"

#include "sparsetrack/synth.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

using namespace sparsetrack;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("sparsetrack_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static inline int counter = 0;
};

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

}  // namespace

TEST_CASE("load_prices_csv reads a clean file with no fills") {
    TempDir tmp;
    const fs::path file = tmp.path / "prices.csv";
    write_file(file,
               "date,AAA,BBB\n"
               "2020-01-02,100,50\n"
               "2020-01-03,101,51\n"
               "2020-01-06,102,52\n");
    const PriceTable t = load_prices_csv(file);
    REQUIRE(t.values.rows() == 3);
    REQUIRE(t.values.cols() == 2);
    REQUIRE(t.tickers == std::vector<std::string>{"AAA", "BBB"});
    REQUIRE(t.report.fills.empty());
    REQUIRE(t.report.dropped_rows.empty());
    REQUIRE(t.values(2, 1) == 52.0);
}

TEST_CASE("load_prices_csv forward-fills mid-series blanks and reports them") {
    TempDir tmp;
    const fs::path file = tmp.path / "prices.csv";
    write_file(file,
               "date,AAA,BBB\n"
               "2020-01-02,100,50\n"
               "2020-01-03,101,\n"
               "2020-01-06,102,52\n");
    const PriceTable t = load_prices_csv(file);
    REQUIRE(t.values(1, 1) == 50.0);  // filled from the previous row
    REQUIRE(t.report.fills.size() == 1);
    REQUIRE(t.report.fills[0] == std::make_pair(std::string("2020-01-03"),
                                                std::string("BBB")));
}

TEST_CASE("load_prices_csv drops leading rows that cannot be completed") {
    TempDir tmp;
    const fs::path file = tmp.path / "prices.csv";
    write_file(file,
               "date,AAA,BBB\n"
               "2020-01-02,,50\n"
               "2020-01-03,101,51\n"
               "2020-01-06,102,52\n");
    const PriceTable t = load_prices_csv(file);
    REQUIRE(t.values.rows() == 2);
    REQUIRE(t.dates.front() == "2020-01-03");
    REQUIRE(t.report.dropped_rows == std::vector<std::string>{"2020-01-02"});
}

TEST_CASE("load_prices_csv error cases") {
    TempDir tmp;
    const fs::path empty = tmp.path / "empty.csv";
    write_file(empty, "");
    REQUIRE_THROWS_AS(load_prices_csv(empty), EmptyFile);

    const fs::path header_only = tmp.path / "header.csv";
    write_file(header_only, "date,AAA\n");
    REQUIRE_THROWS_AS(load_prices_csv(header_only), EmptyFile);

    const fs::path bad_number = tmp.path / "bad.csv";
    write_file(bad_number, "date,AAA\n2020-01-02,abc\n");
    REQUIRE_THROWS_AS(load_prices_csv(bad_number), ParseError);

    const fs::path bad_date = tmp.path / "bad_date.csv";
    write_file(bad_date, "date,AAA\n01/02/2020,100\n");
    REQUIRE_THROWS_AS(load_prices_csv(bad_date), ParseError);

    const fs::path gap = tmp.path / "gap.csv";
    write_file(gap, "date,AAA,BBB\n2020-01-02,100,\n2020-01-03,101,\n");
    REQUIRE_THROWS_AS(load_prices_csv(gap), UnfixableLeadingGap);

    const fs::path missing = tmp.path / "nope.csv";
    REQUIRE_THROWS_AS(load_prices_csv(missing), IoError);
}

TEST_CASE("to_returns computes simple returns and keeps column order") {
    TempDir tmp;
    const fs::path file = tmp.path / "prices.csv";
    write_file(file,
               "date,IDX,AAA,BBB\n"
               "2020-01-02,100,100,200\n"
               "2020-01-03,101,110,200\n"
               "2020-01-06,102,121,190\n");
    const PriceTable t = load_prices_csv(file);
    const ReturnsPanel panel = to_returns(t, "IDX");
    REQUIRE(panel.tickers == std::vector<std::string>{"AAA", "BBB"});
    REQUIRE(panel.days() == 2);
    REQUIRE_THAT(panel.returns(0, 0), Catch::Matchers::WithinAbs(0.10, 1e-15));
    REQUIRE_THAT(panel.returns(1, 0), Catch::Matchers::WithinAbs(0.10, 1e-15));
    REQUIRE_THAT(panel.returns(0, 1), Catch::Matchers::WithinAbs(0.0, 1e-15));
    REQUIRE_THAT(panel.target(0), Catch::Matchers::WithinAbs(0.01, 1e-15));
    REQUIRE(panel.dates == std::vector<std::string>{"2020-01-03", "2020-01-06"});
}

TEST_CASE("to_returns guards against non-positive prices and missing targets") {
    TempDir tmp;
    const fs::path file = tmp.path / "prices.csv";
    write_file(file,
               "date,IDX,AAA,BBB\n"
               "2020-01-02,100,100,200\n"
               "2020-01-03,101,0,200\n");
    const PriceTable t = load_prices_csv(file);
    REQUIRE_THROWS_AS(to_returns(t, "IDX"), NonPositivePrice);
    REQUIRE_THROWS_AS(to_returns(t, "NOPE"), ConfigError);
}

TEST_CASE("constant prices give zero returns") {
    TempDir tmp;
    const fs::path file = tmp.path / "prices.csv";
    write_file(file,
               "date,IDX,AAA,BBB\n"
               "2020-01-02,100,50,75\n"
               "2020-01-03,100,50,75\n"
               "2020-01-06,100,50,75\n");
    const ReturnsPanel panel = to_returns(load_prices_csv(file), "IDX");
    REQUIRE(panel.returns.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(panel.target.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("write_report emits the documented files for a solve") {
    TempDir tmp;
    SynthSpec spec;
    spec.n_stocks = 6;
    spec.n_days = 40;
    spec.sparse_k = 2;
    spec.seed = 5;
    const SynthPanel sp = make_synth_panel(spec);
    const SolveReport rep = full_replication(sp.panel);

    ReportContext ctx;
    ctx.config_echo["method"] = "full";
    const auto files = write_report(rep, sp.panel, tmp.path, ctx);
    REQUIRE(files.size() == 3);
    for (const auto& f : files) REQUIRE(fs::exists(f));

    std::ifstream weights(files[0]);
    std::string header;
    std::getline(weights, header);
    REQUIRE(header == "ticker,weight");
    int rows = 0;
    std::string line;
    while (std::getline(weights, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == rep.exact_cardinality);

    std::ifstream tracking(files[1]);
    std::getline(tracking, header);
    REQUIRE(header == "date,tracking_level,target_level,abs_error");

    std::ifstream summary(files[2]);
    nlohmann::json j;
    summary >> j;
    REQUIRE(j.contains("objective"));
    REQUIRE(j.contains("mae"));
    REQUIRE(j["config"]["method"] == "full");
}

TEST_CASE("tracking.csv round-trips the series at full precision") {
    TempDir tmp;
    SynthSpec spec;
    spec.n_stocks = 8;
    spec.n_days = 300;
    spec.sparse_k = 3;
    spec.noise = 0.001;
    spec.seed = 11;
    const SynthPanel sp = make_synth_panel(spec);
    const Schedule sched = make_schedule(sp.panel.days(), 126, 63);
    BacktestParams params;
    params.method = Method::full;
    const BacktestResult res = run_backtest(sp.panel, params, sched);
    write_report(res, sp.panel.tickers, tmp.path, {});

    const TrackingSeries series = read_tracking_csv(tmp.path / "tracking.csv");
    const Vector expect_tr = levels_from_returns(res.tracking);
    const Vector expect_tg = levels_from_returns(res.target);
    REQUIRE(series.tracking_level.size() == res.tracking.size());
    for (Eigen::Index t = 0; t < series.tracking_level.size(); ++t) {
        REQUIRE(series.tracking_level(t) == expect_tr(t + 1));
        REQUIRE(series.target_level(t) == expect_tg(t + 1));
    }
    REQUIRE(series.dates == res.eval_dates);
}

TEST_CASE("backtest report writes one weights file per rebalance, nonzero rows only") {
    TempDir tmp;
    SynthSpec spec;
    spec.n_stocks = 10;
    spec.n_days = 300;
    spec.sparse_k = 3;
    spec.noise = 0.001;
    spec.seed = 19;
    const SynthPanel sp = make_synth_panel(spec);
    const Schedule sched = make_schedule(sp.panel.days(), 126, 63);
    BacktestParams params;
    params.method = Method::backward;
    params.k = 3;
    const BacktestResult res = run_backtest(sp.panel, params, sched);
    const auto files = write_report(res, sp.panel.tickers, tmp.path, {});
    // weights files + tracking.csv + summary.json
    REQUIRE(files.size() == res.weights_per_rebalance.size() + 2);
    for (size_t i = 0; i < res.weights_per_rebalance.size(); ++i) {
        std::ifstream in(files[i]);
        std::string line;
        std::getline(in, line);
        int rows = 0;
        while (std::getline(in, line))
            if (!line.empty()) ++rows;
        REQUIRE(rows == cardinality_exact(res.weights_per_rebalance[i]));
    }
}

TEST_CASE("reports are byte-stable across reruns") {
    TempDir tmp;
    SynthSpec spec;
    spec.n_stocks = 8;
    spec.n_days = 260;
    spec.sparse_k = 3;
    spec.noise = 0.002;
    spec.seed = 23;
    const SynthPanel sp = make_synth_panel(spec);
    const Schedule sched = make_schedule(sp.panel.days(), 126, 63);
    BacktestParams params;
    params.method = Method::dcc;
    params.dcc = DccParams(2000.0, 1e-2, 3);
    params.solver.warn_on_condition_failure = false;

    ReportContext ctx;
    ctx.include_wall_times = false;  // wall clocks are environmental
    const BacktestResult r1 = run_backtest(sp.panel, params, sched);
    const BacktestResult r2 = run_backtest(sp.panel, params, sched);
    const auto files1 = write_report(r1, sp.panel.tickers, tmp.path / "run1", ctx);
    const auto files2 = write_report(r2, sp.panel.tickers, tmp.path / "run2", ctx);
    REQUIRE(files1.size() == files2.size());
    for (size_t i = 0; i < files1.size(); ++i) {
        std::ifstream a(files1[i], std::ios::binary), b(files2[i], std::ios::binary);
        const std::string ca((std::istreambuf_iterator<char>(a)),
                             std::istreambuf_iterator<char>());
        const std::string cb((std::istreambuf_iterator<char>(b)),
                             std::istreambuf_iterator<char>());
        REQUIRE(ca == cb);
    }
}

TEST_CASE("load_config parses keys, comments and defaults") {
    TempDir tmp;
    const fs::path data = tmp.path / "prices.csv";
    write_file(data, "date,IDX,AAA\n2020-01-02,100,1\n2020-01-03,101,2\n");
    const fs::path cfg_path = tmp.path / "run.ini";
    write_file(cfg_path,
               "# sample run\n"
               "data_path = " + data.string() + "\n"
               "target = IDX\n"
               "method = dcc\n"
               "k = 4\n"
               "a = auto\n"
               "eps = 0.01\n"
               "lookback_days = 63   # trailing window\n"
               "rebalance_days = 21\n");
    const RunConfig cfg = load_config(cfg_path);
    REQUIRE(cfg.k == 4);
    REQUIRE(cfg.a == "auto");
    REQUIRE(cfg.eps == 0.01);
    REQUIRE(cfg.lookback_days == 63);
    REQUIRE(cfg.rebalance_days == 21);
    REQUIRE(cfg.jobs == 1);           // default
    REQUIRE(cfg.seed == 0);           // default
    REQUIRE(cfg.output_dir == "out"); // default
}

TEST_CASE("load_config rejects unknown keys, bad values and missing data paths") {
    TempDir tmp;
    const fs::path cfg_path = tmp.path / "run.ini";
    write_file(cfg_path, "mystery_key = 1\n");
    REQUIRE_THROWS_AS(load_config(cfg_path), ConfigError);
    write_file(cfg_path, "k = notanumber\n");
    REQUIRE_THROWS_AS(load_config(cfg_path), ConfigError);
    write_file(cfg_path, "data_path = /no/such/file.csv\n");
    REQUIRE_THROWS_AS(load_config(cfg_path), ConfigError);
}

TEST_CASE("synthetic prices survive an ingestion round trip") {
    TempDir tmp;
    SynthSpec spec;
    spec.n_stocks = 7;
    spec.n_days = 50;
    spec.sparse_k = 3;
    spec.noise = 0.0;
    spec.seed = 77;
    const SynthPanel sp = make_synth_panel(spec);
    const auto [prices_path, truth_path] =
        write_synth_csv(tmp.path / "synth.csv", sp.prices, sp.index_prices,
                        sp.price_dates, sp.panel.tickers, sp.truth);
    const ReturnsPanel loaded = to_returns(load_prices_csv(prices_path), "INDEX");
    REQUIRE(loaded.days() == sp.panel.days());
    REQUIRE(loaded.stocks() == sp.panel.stocks());
    REQUIRE((loaded.returns - sp.panel.returns).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((loaded.target - sp.panel.target).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(fs::exists(truth_path));
}
