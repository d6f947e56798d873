#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "actirisk/numeric.hpp"
#include "actirisk/survival.hpp"
#include "actirisk/synth.hpp"
#include "actirisk/tracks.hpp"

using namespace actirisk;
using namespace actirisk::synth;

namespace {

SynthConfig small_config(std::uint64_t seed = 1) {
    SynthConfig c;
    c.n_per_domain = 200;
    c.seed = seed;
    return c;
}

double track_mean(const std::vector<tracks::DayRecord>& days) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& d : days) {
        for (const double m : d.minutes) s += m;
        n += d.minutes.size();
    }
    return s / static_cast<double>(n);
}

// Two-sample Kolmogorov-Smirnov p-value (asymptotic).
double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j]) ++i;
        else ++j;
        const double fa = static_cast<double>(i) / a.size();
        const double fb = static_cast<double>(j) / b.size();
        d = std::max(d, std::fabs(fa - fb));
    }
    const double ne = static_cast<double>(a.size()) * b.size() / (a.size() + b.size());
    const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) {
        p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    }
    return std::clamp(p, 0.0, 1.0);
}

} // namespace

TEST_CASE("generate_population is deterministic under the seed") {
    const SynthConfig c = small_config(7);
    const auto a = generate_population(c);
    const auto b = generate_population(c);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].age == b[i].age);
        CHECK(a[i].frailty == b[i].frailty);
        CHECK(a[i].event_age == b[i].event_age);
        CHECK(a[i].morbid == b[i].morbid);
    }
    // ids are disjoint across domains
    for (const auto& s : a) {
        CHECK((s.domain == 0 ? s.id[0] == 's' : s.id[0] == 't'));
    }
}

TEST_CASE("morbidity incidence grows at the configured Gompertz rate") {
    SynthConfig c;
    c.n_per_domain = 25000;
    c.seed = 11;
    c.frailty_sd = 0.3; // mild heterogeneity so selection does not bend the slope
    c.smoking_offset_current = 0.0;
    c.smoking_offset_quit = 0.0;
    c.source_ages = {45.0, 5, {1, 1, 1, 1, 1, 1, 1, 1}};
    c.target_ages = c.source_ages;
    const auto pop = generate_population(c);

    // Incidence rate per person-year inside [50,60) and [60,70), counted from
    // the morbidity onset ages of the whole cohort (onsets are from birth).
    double events_50 = 0.0, events_60 = 0.0;
    for (const auto& s : pop) {
        if (s.morbidity_onset_age >= 50.0 && s.morbidity_onset_age < 60.0) ++events_50;
        if (s.morbidity_onset_age >= 60.0 && s.morbidity_onset_age < 70.0) ++events_60;
    }
    double at_risk_50 = 0.0, at_risk_60 = 0.0; // person-years, rectangle approximation
    for (const auto& s : pop) {
        at_risk_50 += std::clamp(s.morbidity_onset_age - 50.0, 0.0, 10.0);
        at_risk_60 += std::clamp(s.morbidity_onset_age - 60.0, 0.0, 10.0);
    }
    const double ratio = (events_60 / at_risk_60) / (events_50 / at_risk_50);
    const double expect = std::exp(10.0 * c.gamma_morbidity);
    CHECK(ratio == doctest::Approx(expect).epsilon(0.15));
}

TEST_CASE("prevalence is monotone across age bins") {
    SynthConfig c;
    c.n_per_domain = 20000;
    c.seed = 13;
    c.source_ages = {45.0, 5, {1, 1, 1, 1, 1, 1, 1, 1}};
    c.target_ages = c.source_ages;
    const auto pop = generate_population(c);
    std::array<double, 8> morbid{}, total{};
    for (const auto& s : pop) {
        const int bin = static_cast<int>((s.age - 45.0) / 5.0);
        if (bin < 0 || bin >= 8) continue;
        total[static_cast<std::size_t>(bin)] += 1.0;
        if (s.morbid) morbid[static_cast<std::size_t>(bin)] += 1.0;
    }
    double prev = -1.0;
    for (int b = 0; b < 8; ++b) {
        const double p = morbid[static_cast<std::size_t>(b)] / total[static_cast<std::size_t>(b)];
        CHECK(p >= prev - 0.02); // allow sampling wiggle
        prev = p;
    }
}

TEST_CASE("fitting generated mortality recovers the configured slope") {
    SynthConfig c;
    c.n_per_domain = 5000; // 10000 subjects over both domains
    c.seed = 17;
    const auto pop = generate_population(c);
    std::vector<survival::SurvivalRecord> records;
    for (const auto& s : pop) {
        records.push_back({s.id, s.age, s.event_age, s.event_observed, {}});
    }
    const auto fit = survival::fit_cox_gompertz(records, {});
    CHECK(std::fabs(fit.gamma - c.gamma_mortality) / c.gamma_mortality < 0.10);
}

TEST_CASE("frailty-activity link") {
    SynthConfig c = small_config(19);
    c.n_per_domain = 400;
    SUBCASE("kappa = 0 decouples activity from frailty") {
        c.kappa_frailty = 0.0;
        c.shape_frailty_minutes = 0.0;
        c.target_bad_day_rate = 0.0;
        c.target_amplitude_rescale = 1.0;
        c.target_plateau_rate = 0.0;
        const auto pop = generate_population(c);
        std::vector<double> low, high;
        for (const auto& s : pop) {
            if (s.domain != 0) continue;
            (s.frailty < 0.0 ? low : high).push_back(track_mean(generate_tracks(s, c)));
        }
        CHECK(ks_two_sample_p(low, high) > 0.01);
    }
    SUBCASE("higher frailty quartile is less active when kappa > 0") {
        const auto pop = generate_population(c);
        std::vector<std::pair<double, double>> fm; // (frailty, mean steps)
        for (const auto& s : pop) {
            if (s.domain != 0) continue;
            fm.emplace_back(s.frailty, track_mean(generate_tracks(s, c)));
        }
        std::sort(fm.begin(), fm.end());
        const std::size_t q = fm.size() / 4;
        double lo = 0.0, hi = 0.0;
        for (std::size_t i = 0; i < q; ++i) {
            lo += fm[i].second;
            hi += fm[fm.size() - 1 - i].second;
        }
        CHECK(hi < lo); // top frailty quartile moves less
    }
}

TEST_CASE("track generation is deterministic and day-quality artifacts hit the configured rate") {
    SynthConfig c = small_config(23);
    c.n_per_domain = 300;
    const auto pop = generate_population(c);

    const auto& subject = pop.front();
    const auto t1 = generate_tracks(subject, c);
    const auto t2 = generate_tracks(subject, c);
    REQUIRE(t1.size() == t2.size());
    for (std::size_t i = 0; i < t1.size(); ++i) CHECK(t1[i].minutes == t2[i].minutes);

    long bad_target = 0, n_target = 0, bad_source = 0, n_source = 0;
    for (const auto& s : pop) {
        for (const auto& day : generate_tracks(s, c)) {
            const bool bad = !tracks::filter_day(day).good;
            if (s.domain == 1) {
                ++n_target;
                bad_target += bad;
            } else {
                ++n_source;
                bad_source += bad;
            }
        }
    }
    const double excess = static_cast<double>(bad_target) / n_target -
                          static_cast<double>(bad_source) / n_source;
    CHECK(excess == doctest::Approx(c.target_bad_day_rate).epsilon(0.42));
    CHECK(std::fabs(excess - c.target_bad_day_rate) < 0.05);
}

TEST_CASE("zeroed domain shift makes domains indistinguishable to a feature probe") {
    SynthConfig c;
    c.n_per_domain = 500;
    c.seed = 29;
    c.source_ages = {45.0, 5, {1, 1, 1, 1}};
    c.target_ages = c.source_ages; // identical ages so only the shift could differ
    c.target_bad_day_rate = 0.0;
    c.target_amplitude_rescale = 1.0;
    c.target_plateau_rate = 0.0;
    const auto pop = generate_population(c);

    std::vector<int> labels;
    std::vector<std::vector<double>> features;
    for (const auto& s : pop) {
        const auto days = generate_tracks(s, c);
        double mean = track_mean(days);
        double nonzero = 0.0, change = 0.0;
        for (const auto& d : days) {
            for (std::size_t m = 0; m < d.minutes.size(); ++m) {
                if (d.minutes[m] != 0.0) ++nonzero;
                if (m > 0 && std::fabs(d.minutes[m] - d.minutes[m - 1]) > 1.0) ++change;
            }
        }
        labels.push_back(s.domain);
        features.push_back({mean, nonzero / days.size(), change / days.size()});
    }
    // Hold out every fourth subject.
    std::vector<int> train_labels, test_labels;
    std::vector<std::vector<double>> train_x, test_x;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i % 4 == 0) {
            test_labels.push_back(labels[i]);
            test_x.push_back(features[i]);
        } else {
            train_labels.push_back(labels[i]);
            train_x.push_back(features[i]);
        }
    }
    const auto fit = survival::fit_logistic(train_labels, train_x, {"mean", "nonzero", "change"});
    long correct = 0;
    for (std::size_t i = 0; i < test_labels.size(); ++i) {
        double eta = fit.intercept;
        for (std::size_t j = 0; j < fit.beta.size(); ++j) eta += fit.beta[j] * test_x[i][j];
        if ((eta > 0.0 ? 1 : 0) == test_labels[i]) ++correct;
    }
    const double acc = static_cast<double>(correct) / test_labels.size();
    CHECK(acc <= 0.55);
}

TEST_CASE("raw accel fixture feeds the step counter") {
    SynthConfig c = small_config(31);
    const auto pop = generate_population(c);
    const auto track = generate_raw_accel(pop.front(), c, 2);
    CHECK(accel::validate_raw_track(track).accepted);
    const auto mt = accel::detect_steps(track);
    REQUIRE(mt.steps.size() == 2);
    long total = mt.steps[0] + mt.steps[1];
    CHECK(total > 0);
}
