#pragma once

// Synthetic market generator: stock returns driven by a common market factor
// plus idiosyncratic noise, and a target index that is an exactly k-sparse
// weighted combination of the stocks plus optional Gaussian noise.
// Deterministic per seed.

#include "sparsetrack/model.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace sparsetrack {

struct SynthSpec {
    int n_stocks = 20;
    int n_days = 252;          // number of return rows (prices have one more)
    int sparse_k = 5;          // support size of the planted index weights
    double noise = 0.0;        // stddev of daily index noise
    std::uint64_t seed = 0;
    double market_vol = 0.009;   // common factor shared by every stock
    double sector_vol = 0.008;   // factor shared within a sector group
    double idio_vol = 0.0015;    // small: sector members are near-substitutes
    int sector_size = 6;         // stocks per sector; near-substitutes
    double unique_frac = 0.25;   // tail fraction of volatile single-name stocks
    double unique_vol = 0.022;   // personal factor vol of those names
    double drift = 0.0002;
};

struct SynthPanel {
    ReturnsPanel panel;
    Vector truth;              // planted index weights, exactly sparse_k nonzero
    Matrix prices;             // (n_days + 1) x n_stocks
    Vector index_prices;       // length n_days + 1
    std::vector<std::string> price_dates;
};

namespace detail {

// Weekday sequence starting 2018-01-02; purely synthetic trading calendar.
inline std::vector<std::string> synthetic_dates(int count) {
    std::vector<std::string> dates;
    dates.reserve(static_cast<size_t>(count));
    int y = 2018, m = 1, d = 1;
    int weekday = 0;  // 2018-01-01 was a Monday
    static const int mdays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    auto leap = [](int year) {
        return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    };
    while (static_cast<int>(dates.size()) < count) {
        ++d;
        weekday = (weekday + 1) % 7;
        int dm = mdays[m - 1] + ((m == 2 && leap(y)) ? 1 : 0);
        if (d > dm) {
            d = 1;
            if (++m > 12) {
                m = 1;
                ++y;
            }
        }
        if (weekday < 5) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%04u-%02u-%02u", static_cast<unsigned>(y),
                          static_cast<unsigned>(m) % 100u, static_cast<unsigned>(d) % 100u);
            dates.emplace_back(buf);
        }
    }
    return dates;
}

}  // namespace detail

inline SynthPanel make_synth_panel(const SynthSpec& spec) {
    if (spec.n_stocks < 2 || spec.n_days < 2)
        throw DomainError("synthetic panel needs n_stocks >= 2 and n_days >= 2");
    if (spec.sparse_k < 1 || spec.sparse_k > spec.n_stocks)
        throw DomainError("sparse_k must lie in [1, n_stocks]");
    if (spec.noise < 0.0) throw DomainError("noise stddev must be >= 0");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // Two stock classes: sector members (near-substitutes sharing a sector
    // factor) and a tail of volatile single names, each driven by its own
    // factor. The latter carry small index weights but large tracking impact.
    const int n = spec.n_stocks, d = spec.n_days;
    const int n_unique = static_cast<int>(spec.unique_frac * n);
    const int n_sectored = n - n_unique;
    const int sectors =
        std::max(1, (n_sectored + spec.sector_size - 1) / spec.sector_size);
    Vector beta(n), own_vol(n);
    std::vector<int> sector_of(static_cast<size_t>(n), -1);
    for (int i = 0; i < n; ++i) {
        beta(i) = 0.4 + 1.2 * unif(rng);
        if (i < n_sectored) {
            sector_of[static_cast<size_t>(i)] = i % sectors;
            own_vol(i) = spec.idio_vol;
        } else {
            own_vol(i) = spec.unique_vol * (0.75 + 0.5 * unif(rng));
        }
    }
    Vector sector_beta(n);
    for (int i = 0; i < n; ++i) sector_beta(i) = 0.6 + 0.8 * unif(rng);

    Matrix returns(d, n);
    Vector sector_shock(sectors);
    for (int t = 0; t < d; ++t) {
        const double market = spec.market_vol * gauss(rng);
        for (int s = 0; s < sectors; ++s) sector_shock(s) = spec.sector_vol * gauss(rng);
        for (int i = 0; i < n; ++i) {
            double r = spec.drift + beta(i) * market + own_vol(i) * gauss(rng);
            const int sec = sector_of[static_cast<size_t>(i)];
            if (sec >= 0) r += sector_beta(i) * sector_shock(sec);
            returns(t, i) = r;
        }
    }

    // Planted index: cap-weighted flavor. Large-cap sector names carry most
    // of the mass (concentrated), volatile single names enter with small
    // weights; when a class is absent from the universe the other absorbs it.
    Vector truth = Vector::Zero(n);
    std::exponential_distribution<double> expo(1.0);
    {
        std::vector<int> sectored_ids, unique_ids;
        for (int i = 0; i < n_sectored; ++i) sectored_ids.push_back(i);
        for (int i = n_sectored; i < n; ++i) unique_ids.push_back(i);
        std::shuffle(sectored_ids.begin(), sectored_ids.end(), rng);
        std::shuffle(unique_ids.begin(), unique_ids.end(), rng);
        int k_unique = std::min<int>(spec.sparse_k / 2, static_cast<int>(unique_ids.size()));
        int k_sector = std::min<int>(spec.sparse_k - k_unique,
                                     static_cast<int>(sectored_ids.size()));
        k_unique = spec.sparse_k - k_sector;
        const double unique_mass = k_sector > 0 && k_unique > 0 ? 0.2 : (k_sector ? 0.0 : 1.0);
        if (k_sector > 0) {
            Vector part(k_sector);
            double mass = 0.0;
            for (int j = 0; j < k_sector; ++j) {
                const double e = expo(rng);
                mass += (part(j) = 0.15 + e * e);  // squared: concentrated large caps
            }
            for (int j = 0; j < k_sector; ++j)
                truth(sectored_ids[static_cast<size_t>(j)]) =
                    (1.0 - unique_mass) * part(j) / mass;
        }
        if (k_unique > 0) {
            Vector part(k_unique);
            double mass = 0.0;
            for (int j = 0; j < k_unique; ++j) mass += (part(j) = 0.5 + expo(rng));
            for (int j = 0; j < k_unique; ++j)
                truth(unique_ids[static_cast<size_t>(j)]) = unique_mass * part(j) / mass;
        }
    }

    Vector target = returns * truth;
    if (spec.noise > 0.0)
        for (int t = 0; t < d; ++t) target(t) += spec.noise * gauss(rng);

    SynthPanel out;
    out.truth = truth;
    out.price_dates = detail::synthetic_dates(d + 1);

    out.prices.resize(d + 1, n);
    out.prices.row(0).setConstant(100.0);
    out.index_prices.resize(d + 1);
    out.index_prices(0) = 100.0;
    for (int t = 0; t < d; ++t) {
        for (int i = 0; i < n; ++i)
            out.prices(t + 1, i) = out.prices(t, i) * (1.0 + returns(t, i));
        out.index_prices(t + 1) = out.index_prices(t) * (1.0 + target(t));
    }

    out.panel.returns = std::move(returns);
    out.panel.target = std::move(target);
    out.panel.dates.assign(out.price_dates.begin() + 1, out.price_dates.end());
    out.panel.tickers.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "S%03d", i);
        out.panel.tickers.emplace_back(buf);
    }
    validate_panel(out.panel);
    return out;
}

}  // namespace sparsetrack
