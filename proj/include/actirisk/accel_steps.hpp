#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "actirisk/common.hpp"
#include "actirisk/csv.hpp"

namespace actirisk::accel {

struct AccelSample {
    std::int64_t t_ms = 0;
    double ax = 0.0, ay = 0.0, az = 0.0;
};

// Tri-axial acceleration stream in g units at a nominal 100 Hz.
struct RawAccelTrack {
    std::string subject_id;
    std::vector<AccelSample> samples;
    double nominal_rate_hz = 100.0;
    int integrity_errors = 0;
};

struct StepParams {
    double min_separation_ms = 250.0;
    double min_prominence_g = 0.2;
    double max_width_ms = 500.0;

    void validate() const {
        if (min_separation_ms <= 0 || min_prominence_g <= 0 || max_width_ms <= 0) {
            throw ValidationError("StepParams: all thresholds must be strictly positive");
        }
    }
};

enum class TrackReject {
    none,
    empty,
    too_many_integrity_errors,
    discontinuity,
    non_monotone,
};

struct TrackValidation {
    bool accepted = false;
    std::vector<TrackReject> reasons; // every rule that fired, in order
    std::string detail;
};

const char* to_string(TrackReject r);

// Rejects tracks with more integrity errors than allowed, internal timestamp
// gaps above max_gap_ms, or non-monotone timestamps. Empty tracks get their
// own rejection reason.
TrackValidation validate_raw_track(const RawAccelTrack& track, int max_errors = 10,
                                   std::int64_t max_gap_ms = 1000);

// Euclidean norm of the three axes, timestamps unchanged.
std::vector<std::pair<std::int64_t, double>> magnitude_series(const RawAccelTrack& track);

struct MinuteTrack {
    std::string subject_id;
    std::vector<int> steps;          // one entry per minute from track start
    bool last_minute_partial = false;
};

// Counts steps as peaks of the acceleration-magnitude excess over a rolling
// 1 s median baseline. A peak is one maximal run of samples with excess >=
// min_prominence_g; it counts if the run spans at most max_width_ms and its
// apex is at least min_separation_ms after the previously accepted apex
// (earlier peak wins). Each accepted apex lands in the minute containing it,
// minutes aligned to track start.
MinuteTrack detect_steps(const RawAccelTrack& track, const StepParams& params = {});

// CSV I/O: raw input `t_ms,ax_g,ay_g,az_g`, minute output `subject_id,minute_index,steps`.
RawAccelTrack read_raw_track_csv(const std::filesystem::path& path, const std::string& subject_id,
                                 int integrity_errors = 0);
void append_minute_track_csv(CsvWriter& writer, const MinuteTrack& track);

} // namespace actirisk::accel
