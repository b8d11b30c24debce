#include "sparsetrack/model.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace sparsetrack;

namespace {

ReturnsPanel tiny_panel() {
    ReturnsPanel p;
    p.returns = Matrix::Zero(2, 2);
    p.returns << 0.01, -0.02, 0.005, 0.015;
    p.target = Vector::Zero(2);
    p.target << 0.002, 0.003;
    p.dates = {"2020-01-02", "2020-01-03"};
    p.tickers = {"AAA", "BBB"};
    return p;
}

}  // namespace

TEST_CASE("validate_panel accepts a well-formed panel unchanged") {
    const ReturnsPanel p = tiny_panel();
    const ReturnsPanel& same = validate_panel(p);
    REQUIRE(&same == &p);
    REQUIRE(same.returns(1, 1) == 0.015);
}

TEST_CASE("validate_panel reports the exact non-finite entry") {
    ReturnsPanel p;
    p.returns = Matrix::Constant(6, 8, 0.001);
    p.returns(3, 5) = std::numeric_limits<double>::quiet_NaN();
    p.target = Vector::Constant(6, 0.001);
    p.dates = {"2020-01-02", "2020-01-03", "2020-01-06",
               "2020-01-07", "2020-01-08", "2020-01-09"};
    p.tickers.assign(8, "T");
    try {
        validate_panel(p);
        FAIL("expected NonFiniteEntry");
    } catch (const NonFiniteEntry& e) {
        REQUIRE(e.row() == 3);
        REQUIRE(e.col() == 5);
    }
}

TEST_CASE("validate_panel rejects a short target series") {
    ReturnsPanel p = tiny_panel();
    p.target = Vector::Constant(1, 0.001);
    REQUIRE_THROWS_AS(validate_panel(p), DimensionMismatch);
}

TEST_CASE("validate_panel rejects non-increasing dates") {
    ReturnsPanel p = tiny_panel();
    p.dates = {"2020-01-03", "2020-01-03"};
    REQUIRE_THROWS_AS(validate_panel(p), NonMonotonicDates);
    p.dates = {"2020-01-03", "2020-01-02"};
    REQUIRE_THROWS_AS(validate_panel(p), NonMonotonicDates);
}

TEST_CASE("validate_panel rejects degenerate shapes") {
    ReturnsPanel p = tiny_panel();
    p.returns = Matrix::Zero(2, 1);
    p.tickers = {"AAA"};
    REQUIRE_THROWS_AS(validate_panel(p), DimensionMismatch);
}

TEST_CASE("WeightVector enforces its invariants on random constructions") {
    std::mt19937_64 rng(7);
    std::exponential_distribution<double> expo(1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 30);
        Vector w(n);
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += (w(i) = expo(rng));
        w /= s;
        const WeightVector wv(w);
        REQUIRE(std::abs(wv.values().sum() - 1.0) <= kFeasibilityTol);
        REQUIRE(wv.values().minCoeff() >= -kFeasibilityTol);
    }
}

TEST_CASE("WeightVector rejects bad inputs") {
    Vector w(3);
    w << 0.5, 0.5, 0.1;  // sums to 1.1
    REQUIRE_THROWS_AS(WeightVector(w), DomainError);
    w << 0.6, 0.6, -0.2;  // negative entry
    REQUIRE_THROWS_AS(WeightVector(w), DomainError);
    w << 0.5, 0.25, 0.25;
    REQUIRE_NOTHROW(WeightVector(w));
    REQUIRE_THROWS_AS(WeightVector(w, 0.7), DomainError);  // eps out of range
}

TEST_CASE("DccParams validates its fields") {
    REQUIRE_THROWS_AS(DccParams(-1.0, 1e-4, 5), DomainError);
    REQUIRE_THROWS_AS(DccParams(0.0, 1e-4, 5), DomainError);
    REQUIRE_THROWS_AS(DccParams(100.0, 0.0, 5), DomainError);
    REQUIRE_THROWS_AS(DccParams(100.0, 0.5, 5), DomainError);
    REQUIRE_THROWS_AS(DccParams(100.0, 1e-4, 0), InfeasibleConstraintConfig);

    const DccParams ok(100.0, 1e-4, 5);
    REQUIRE_NOTHROW(ok.validate_for(6));
    REQUIRE_THROWS_AS(ok.validate_for(5), InfeasibleConstraintConfig);
    REQUIRE_THROWS_AS(ok.validate_for(4), InfeasibleConstraintConfig);
}

TEST_CASE("slice_panel keeps rows and labels aligned") {
    ReturnsPanel p;
    p.returns = Matrix::Random(10, 3);
    p.target = Vector::Random(10);
    for (int i = 0; i < 10; ++i)
        p.dates.push_back("2020-01-" + std::string(i < 9 ? "0" : "") + std::to_string(i + 1));
    p.tickers = {"A", "B", "C"};
    const ReturnsPanel s = slice_panel(p, 3, 8);
    REQUIRE(s.days() == 5);
    REQUIRE(s.dates.front() == p.dates[3]);
    REQUIRE(s.dates.back() == p.dates[7]);
    REQUIRE(s.returns(0, 0) == p.returns(3, 0));
    REQUIRE(s.target(4) == p.target(7));
}
