#pragma once

#include <array>
#include <bitset>
#include <span>
#include <string>
#include <vector>

#include "actirisk/common.hpp"

namespace actirisk::tracks {

inline constexpr int kMinutesPerDay = 1440;
inline constexpr int kBinsPerDay = 96;
inline constexpr int kDaysPerSlice = 7;
inline constexpr int kMaxSliceWindowDays = 14;

// One calendar day of steps-per-minute. Missing minutes hold 0 and are marked
// in the mask (diagnostics only; all quality rules see them as zeros).
struct DayRecord {
    std::string subject_id;
    int day_index = 0;
    std::vector<double> minutes;       // exactly 1440
    std::bitset<kMinutesPerDay> missing;

    static DayRecord zeros(std::string subject_id, int day_index);
    void validate() const;
};

struct DayQualityParams {
    int min_nonzero_minutes = 150;
    int min_significant_changes = 45;
    int min_distinct_values = 10;
    double change_threshold = 1.0;
};

enum class DayReject {
    nonzero_minutes,
    significant_changes,
    distinct_values,
};

struct DayQuality {
    bool good = false;
    std::vector<DayReject> reasons;
};

const char* to_string(DayReject r);

// A day is good when it has at least min_nonzero_minutes non-zero minutes,
// at least min_significant_changes adjacent changes with |delta| > threshold,
// and at least min_distinct_values distinct step values.
DayQuality filter_day(const DayRecord& day, const DayQualityParams& params = {});

// Seven accepted days binned to 96 fifteen-minute means each.
struct WeekSlice {
    std::string subject_id;
    int slice_index = 0;
    std::array<std::array<double, kBinsPerDay>, kDaysPerSlice> days{};
    int source_window_days = 0;               // calendar span the 7 days came from
    std::array<int, kDaysPerSlice> day_indices{};

    void validate() const;
};

// Greedy left-to-right extraction of non-overlapping 7-good-day slices, each
// drawn from a window of at most 14 calendar days. Bad days are skipped but
// consume calendar span. Input must be sorted by day_index.
std::vector<WeekSlice> extract_week_slices(std::span<const DayRecord> days,
                                           const DayQualityParams& params = {});

// Mean steps/min over each quarter-hour: bin k = mean of minutes [15k, 15k+15).
std::array<double, kBinsPerDay> bin_day(const DayRecord& day);

// NHANES-style screen: fails when fewer than min_active_minutes minutes have
// at least min_steps steps.
bool low_activity_screen(std::span<const double> minutes, int min_active_minutes = 250,
                         double min_steps = 4.0);
bool low_activity_screen(std::span<const DayRecord> days, int min_active_minutes = 250,
                         double min_steps = 4.0);

// Natural log of the mean steps-per-minute over all (unbinned) accepted
// minutes; zero-activity subjects get the log(0.1) floor.
double mean_log_activity(std::span<const DayRecord> accepted_days);

} // namespace actirisk::tracks
