#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <span>

#include "actirisk/rng.hpp"
#include "actirisk/tracks.hpp"

using namespace actirisk;
using namespace actirisk::tracks;

namespace {

DayRecord day_with(std::vector<std::pair<int, double>> values, int index = 0) {
    DayRecord d = DayRecord::zeros("s", index);
    for (const auto& [m, v] : values) d.minutes[static_cast<std::size_t>(m)] = v;
    return d;
}

// A day sitting exactly at every accept threshold: 150 nonzero minutes,
// 45 adjacent changes with |delta| > 1, 10 distinct values.
DayRecord threshold_day() {
    DayRecord d = DayRecord::zeros("s", 0);
    for (int m = 1000; m < 1150; ++m) d.minutes[static_cast<std::size_t>(m)] = 2.0;
    d.minutes[1000] = 4.0; // entry 0->4 and 4->2 give two changes
    const double spike_values[] = {5, 6, 7, 8, 9, 10, 11};
    for (int k = 0; k < 21; ++k) {
        d.minutes[static_cast<std::size_t>(1005 + 5 * k)] = spike_values[k % 7];
    }
    return d;
}

DayRecord random_good_day(Rng& rng) {
    DayRecord d = DayRecord::zeros("s", 0);
    for (int m = 400; m < 1100; ++m) {
        d.minutes[static_cast<std::size_t>(m)] = static_cast<double>(rng.poisson(6.0));
    }
    return d;
}

} // namespace

TEST_CASE("filter_day rules") {
    const DayRecord zero = DayRecord::zeros("s", 0);
    const auto qz = filter_day(zero);
    CHECK_FALSE(qz.good);
    CHECK(std::find(qz.reasons.begin(), qz.reasons.end(), DayReject::nonzero_minutes) !=
          qz.reasons.end());

    const auto qt = filter_day(threshold_day());
    CHECK(qt.good); // thresholds are inclusive on the accept side

    DayRecord constant = DayRecord::zeros("s", 0);
    for (int m = 0; m < 200; ++m) constant.minutes[static_cast<std::size_t>(m)] = 5.0;
    const auto qc = filter_day(constant);
    CHECK_FALSE(qc.good);
    CHECK(std::find(qc.reasons.begin(), qc.reasons.end(), DayReject::distinct_values) !=
          qc.reasons.end());
}

TEST_CASE("threshold day construction is exact") {
    const DayRecord d = threshold_day();
    int nonzero = 0, changes = 0;
    std::set<double> distinct;
    for (int m = 0; m < kMinutesPerDay; ++m) {
        if (d.minutes[static_cast<std::size_t>(m)] != 0.0) ++nonzero;
        distinct.insert(d.minutes[static_cast<std::size_t>(m)]);
        if (m > 0 &&
            std::fabs(d.minutes[static_cast<std::size_t>(m)] -
                      d.minutes[static_cast<std::size_t>(m - 1)]) > 1.0) {
            ++changes;
        }
    }
    CHECK(nonzero == 150);
    CHECK(changes == 45);
    CHECK(distinct.size() == 10);
}

TEST_CASE("filter_day is invariant under day reversal") {
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        DayRecord d = random_good_day(rng);
        DayRecord r = d;
        std::reverse(r.minutes.begin(), r.minutes.end());
        const auto qa = filter_day(d);
        const auto qb = filter_day(r);
        CHECK(qa.good == qb.good);
        CHECK(qa.reasons == qb.reasons);
    }
}

TEST_CASE("bin_day") {
    DayRecord constant = DayRecord::zeros("s", 0);
    for (auto& m : constant.minutes) m = 4.0;
    for (const double b : bin_day(constant)) CHECK(b == doctest::Approx(4.0));

    DayRecord first_bin = DayRecord::zeros("s", 0);
    for (int m = 0; m < 15; ++m) first_bin.minutes[static_cast<std::size_t>(m)] = 15.0;
    const auto bins = bin_day(first_bin);
    CHECK(bins[0] == doctest::Approx(15.0));
    for (int k = 1; k < kBinsPerDay; ++k) CHECK(bins[static_cast<std::size_t>(k)] == 0.0);

    DayRecord ramp = DayRecord::zeros("s", 0);
    for (int m = 0; m < kMinutesPerDay; ++m) ramp.minutes[static_cast<std::size_t>(m)] = m;
    const auto rbins = bin_day(ramp);
    for (int k = 0; k < kBinsPerDay; ++k) {
        // closed-form mean of 15 consecutive integers starting at 15k
        CHECK(rbins[static_cast<std::size_t>(k)] == doctest::Approx(15.0 * k + 7.0));
    }
}

TEST_CASE("bin_day preserves the day mean") {
    Rng rng(11);
    for (int rep = 0; rep < 10; ++rep) {
        const DayRecord d = random_good_day(rng);
        const auto bins = bin_day(d);
        double bin_mean = 0.0;
        for (const double b : bins) bin_mean += b;
        bin_mean /= kBinsPerDay;
        double minute_mean = 0.0;
        for (const double m : d.minutes) minute_mean += m;
        minute_mean /= kMinutesPerDay;
        CHECK(bin_mean == doctest::Approx(minute_mean).epsilon(1e-12));
    }
}

TEST_CASE("extract_week_slices greedy rule") {
    Rng rng(13);
    SUBCASE("seven consecutive good days") {
        std::vector<DayRecord> days;
        for (int i = 0; i < 7; ++i) {
            DayRecord d = random_good_day(rng);
            d.day_index = i;
            days.push_back(std::move(d));
        }
        const auto slices = extract_week_slices(days);
        REQUIRE(slices.size() == 1);
        CHECK(slices[0].source_window_days == 7);
    }
    SUBCASE("good days 0-3 and 8-10 with a bad middle") {
        std::vector<DayRecord> days;
        for (int i = 0; i <= 10; ++i) {
            DayRecord d = (i >= 4 && i <= 7) ? DayRecord::zeros("s", i) : random_good_day(rng);
            d.day_index = i;
            days.push_back(std::move(d));
        }
        const auto slices = extract_week_slices(days);
        REQUIRE(slices.size() == 1);
        CHECK(slices[0].source_window_days == 11);
        CHECK(slices[0].day_indices == std::array<int, 7>{0, 1, 2, 3, 8, 9, 10});
    }
    SUBCASE("seven good days over fifteen calendar days yield nothing") {
        std::vector<DayRecord> days;
        const int good_at[] = {0, 3, 5, 7, 9, 11, 14};
        for (int i = 0; i <= 14; ++i) {
            const bool good = std::find(std::begin(good_at), std::end(good_at), i) !=
                              std::end(good_at);
            DayRecord d = good ? random_good_day(rng) : DayRecord::zeros("s", i);
            d.day_index = i;
            days.push_back(std::move(d));
        }
        // window would be 15 > 14
        CHECK(extract_week_slices(days).empty());
    }
}

TEST_CASE("extract_week_slices: slices are day-disjoint and window-bounded") {
    Rng rng(17);
    for (int rep = 0; rep < 15; ++rep) {
        std::vector<DayRecord> days;
        const int n = 20 + static_cast<int>(rng.below(30));
        for (int i = 0; i < n; ++i) {
            DayRecord d =
                rng.uniform() < 0.7 ? random_good_day(rng) : DayRecord::zeros("s", i);
            d.day_index = i;
            days.push_back(std::move(d));
        }
        const auto slices = extract_week_slices(days);
        std::set<int> used;
        for (const auto& s : slices) {
            CHECK(s.source_window_days >= 7);
            CHECK(s.source_window_days <= 14);
            CHECK(s.day_indices.back() - s.day_indices.front() + 1 == s.source_window_days);
            for (const int d : s.day_indices) {
                CHECK(used.insert(d).second); // never shared between slices
            }
        }
    }
}

TEST_CASE("low_activity_screen") {
    std::vector<DayRecord> zeros(7, DayRecord::zeros("s", 0));
    CHECK_FALSE(low_activity_screen(std::span<const DayRecord>(zeros)));

    std::vector<double> minutes(7 * 1440, 0.0);
    for (int i = 0; i < 250; ++i) minutes[static_cast<std::size_t>(i)] = 4.0;
    CHECK(low_activity_screen(minutes)); // exactly 250 at the threshold passes

    std::vector<double> heavy(7 * 1440, 0.0);
    for (int i = 0; i < 249; ++i) heavy[static_cast<std::size_t>(i)] = 100.0;
    CHECK_FALSE(low_activity_screen(heavy)); // count matters, not volume
}

TEST_CASE("mean_log_activity") {
    DayRecord ones = DayRecord::zeros("s", 0);
    for (auto& m : ones.minutes) m = 1.0;
    std::vector<DayRecord> days{ones};
    CHECK(mean_log_activity(days) == doctest::Approx(0.0));

    DayRecord es = DayRecord::zeros("s", 0);
    for (auto& m : es.minutes) m = std::exp(1.0);
    days = {es};
    CHECK(mean_log_activity(days) == doctest::Approx(1.0));

    DayRecord half = DayRecord::zeros("s", 0);
    for (int m = 0; m < 720; ++m) half.minutes[static_cast<std::size_t>(m)] = 2.0;
    days = {half};
    CHECK(mean_log_activity(days) == doctest::Approx(0.0));

    days = {DayRecord::zeros("s", 0)};
    CHECK(mean_log_activity(days) == doctest::Approx(std::log(0.1)));

    CHECK_THROWS_AS(mean_log_activity({}), ValidationError);
}
