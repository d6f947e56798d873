#include "actirisk/tracks.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace actirisk::tracks {

DayRecord DayRecord::zeros(std::string subject_id, int day_index) {
    DayRecord d;
    d.subject_id = std::move(subject_id);
    d.day_index = day_index;
    d.minutes.assign(kMinutesPerDay, 0.0);
    return d;
}

void DayRecord::validate() const {
    if (minutes.size() != kMinutesPerDay) {
        throw ValidationError("DayRecord: expected 1440 minutes, got " +
                              std::to_string(minutes.size()));
    }
    for (const double m : minutes) {
        if (!std::isfinite(m) || m < 0.0) {
            throw ValidationError("DayRecord: minutes must be finite and non-negative");
        }
    }
}

const char* to_string(DayReject r) {
    switch (r) {
        case DayReject::nonzero_minutes: return "nonzero minutes";
        case DayReject::significant_changes: return "significant changes";
        case DayReject::distinct_values: return "distinct values";
    }
    return "?";
}

DayQuality filter_day(const DayRecord& day, const DayQualityParams& params) {
    day.validate();
    int nonzero = 0;
    int changes = 0;
    std::set<double> distinct;
    for (int m = 0; m < kMinutesPerDay; ++m) {
        const double v = day.minutes[m];
        if (v != 0.0) ++nonzero;
        distinct.insert(v);
        if (m > 0 && std::fabs(v - day.minutes[m - 1]) > params.change_threshold) ++changes;
    }
    DayQuality q;
    if (nonzero < params.min_nonzero_minutes) q.reasons.push_back(DayReject::nonzero_minutes);
    if (changes < params.min_significant_changes) {
        q.reasons.push_back(DayReject::significant_changes);
    }
    if (static_cast<int>(distinct.size()) < params.min_distinct_values) {
        q.reasons.push_back(DayReject::distinct_values);
    }
    q.good = q.reasons.empty();
    return q;
}

void WeekSlice::validate() const {
    if (source_window_days < kDaysPerSlice || source_window_days > kMaxSliceWindowDays) {
        throw ValidationError("WeekSlice: source_window_days out of [7,14]");
    }
    for (const auto& day : days) {
        for (const double v : day) {
            if (!std::isfinite(v) || v < 0.0) {
                throw ValidationError("WeekSlice: values must be finite and non-negative");
            }
        }
    }
}

std::array<double, kBinsPerDay> bin_day(const DayRecord& day) {
    day.validate();
    std::array<double, kBinsPerDay> bins{};
    for (int k = 0; k < kBinsPerDay; ++k) {
        double s = 0.0;
        for (int m = 15 * k; m < 15 * (k + 1); ++m) s += day.minutes[m];
        bins[k] = s / 15.0;
    }
    return bins;
}

std::vector<WeekSlice> extract_week_slices(std::span<const DayRecord> days,
                                           const DayQualityParams& params) {
    for (std::size_t i = 1; i < days.size(); ++i) {
        if (days[i].day_index <= days[i - 1].day_index) {
            throw ValidationError("extract_week_slices: days must be sorted by day_index");
        }
    }
    std::vector<char> good(days.size());
    for (std::size_t i = 0; i < days.size(); ++i) good[i] = filter_day(days[i], params).good;

    std::vector<WeekSlice> slices;
    std::size_t start = 0;
    while (start < days.size()) {
        if (!good[start]) {
            ++start;
            continue;
        }
        std::vector<std::size_t> chosen;
        chosen.push_back(start);
        std::size_t j = start + 1;
        while (j < days.size() && chosen.size() < kDaysPerSlice) {
            if (good[j]) chosen.push_back(j);
            ++j;
        }
        if (chosen.size() < kDaysPerSlice) break; // not enough good days left
        const int window =
            days[chosen.back()].day_index - days[chosen.front()].day_index + 1;
        if (window <= kMaxSliceWindowDays) {
            WeekSlice slice;
            slice.subject_id = days[chosen.front()].subject_id;
            slice.slice_index = static_cast<int>(slices.size());
            slice.source_window_days = window;
            for (int d = 0; d < kDaysPerSlice; ++d) {
                slice.days[d] = bin_day(days[chosen[d]]);
                slice.day_indices[d] = days[chosen[d]].day_index;
            }
            slices.push_back(std::move(slice));
            start = chosen.back() + 1; // slices never share days
        } else {
            ++start; // window bound exceeded; retry from the next good day
        }
    }
    return slices;
}

bool low_activity_screen(std::span<const double> minutes, int min_active_minutes,
                         double min_steps) {
    int active = 0;
    for (const double m : minutes) {
        if (m >= min_steps && ++active >= min_active_minutes) return true;
    }
    return false;
}

bool low_activity_screen(std::span<const DayRecord> days, int min_active_minutes,
                         double min_steps) {
    int active = 0;
    for (const auto& day : days) {
        for (const double m : day.minutes) {
            if (m >= min_steps && ++active >= min_active_minutes) return true;
        }
    }
    return false;
}

double mean_log_activity(std::span<const DayRecord> accepted_days) {
    if (accepted_days.empty()) throw ValidationError("mean_log_activity: no data");
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& day : accepted_days) {
        day.validate();
        for (const double m : day.minutes) total += m;
        count += day.minutes.size();
    }
    const double mean = total / static_cast<double>(count);
    if (mean <= 0.0) return std::log(0.1);
    return std::log(mean);
}

} // namespace actirisk::tracks
