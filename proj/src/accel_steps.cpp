#include "actirisk/accel_steps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace actirisk::accel {

const char* to_string(TrackReject r) {
    switch (r) {
        case TrackReject::none: return "none";
        case TrackReject::empty: return "empty";
        case TrackReject::too_many_integrity_errors: return "too many integrity errors";
        case TrackReject::discontinuity: return "discontinuity";
        case TrackReject::non_monotone: return "non-monotone timestamps";
    }
    return "?";
}

TrackValidation validate_raw_track(const RawAccelTrack& track, int max_errors,
                                   std::int64_t max_gap_ms) {
    TrackValidation v;
    if (track.samples.empty()) {
        v.reasons.push_back(TrackReject::empty);
        v.detail = "empty track";
        return v;
    }
    if (track.integrity_errors > max_errors) {
        v.reasons.push_back(TrackReject::too_many_integrity_errors);
        v.detail = std::to_string(track.integrity_errors) + " integrity errors > " +
                   std::to_string(max_errors);
    }
    bool monotone = true;
    bool gap = false;
    for (std::size_t i = 1; i < track.samples.size(); ++i) {
        const std::int64_t dt = track.samples[i].t_ms - track.samples[i - 1].t_ms;
        if (dt <= 0) monotone = false;
        if (dt > max_gap_ms) gap = true;
    }
    if (gap) v.reasons.push_back(TrackReject::discontinuity);
    if (!monotone) v.reasons.push_back(TrackReject::non_monotone);
    v.accepted = v.reasons.empty();
    if (v.detail.empty() && !v.accepted) v.detail = to_string(v.reasons.front());
    return v;
}

std::vector<std::pair<std::int64_t, double>> magnitude_series(const RawAccelTrack& track) {
    std::vector<std::pair<std::int64_t, double>> out;
    out.reserve(track.samples.size());
    for (const auto& s : track.samples) {
        out.emplace_back(s.t_ms, std::sqrt(s.ax * s.ax + s.ay * s.ay + s.az * s.az));
    }
    return out;
}

namespace {

// Rolling median of magnitude over a centered window of +/- half_ms.
// Two-pointer window over the (time-sorted) samples with a multiset.
std::vector<double> rolling_median(const std::vector<std::pair<std::int64_t, double>>& mag,
                                   std::int64_t half_ms) {
    const std::size_t n = mag.size();
    std::vector<double> out(n);
    std::multiset<double> window;
    std::size_t lo = 0, hi = 0; // window covers [lo, hi)
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t t = mag[i].first;
        while (hi < n && mag[hi].first <= t + half_ms) window.insert(mag[hi++].second);
        while (mag[lo].first < t - half_ms) window.erase(window.find(mag[lo++].second));
        const std::size_t k = window.size();
        auto it = window.begin();
        std::advance(it, (k - 1) / 2);
        if (k % 2 == 1) {
            out[i] = *it;
        } else {
            const double a = *it;
            out[i] = 0.5 * (a + *std::next(it));
        }
    }
    return out;
}

} // namespace

MinuteTrack detect_steps(const RawAccelTrack& track, const StepParams& params) {
    params.validate();
    if (track.samples.empty()) throw ValidationError("detect_steps: empty track");

    const auto mag = magnitude_series(track);
    const auto baseline = rolling_median(mag, 500);
    const std::size_t n = mag.size();

    const std::int64_t t_last = mag.back().first;
    const std::int64_t period_ms =
        static_cast<std::int64_t>(std::llround(1000.0 / track.nominal_rate_hz));
    const std::size_t minutes = static_cast<std::size_t>(t_last / 60000) + 1;

    MinuteTrack out;
    out.subject_id = track.subject_id;
    out.steps.assign(minutes, 0);
    out.last_minute_partial =
        (t_last + std::max<std::int64_t>(period_ms, 1)) < static_cast<std::int64_t>(minutes) * 60000;

    std::int64_t last_apex = std::numeric_limits<std::int64_t>::min() / 2;
    std::size_t i = 0;
    while (i < n) {
        if (mag[i].second - baseline[i] < params.min_prominence_g) {
            ++i;
            continue;
        }
        // Maximal run of above-threshold excess; apex = max excess, earliest on ties.
        std::size_t j = i;
        std::size_t apex = i;
        double apex_excess = mag[i].second - baseline[i];
        while (j + 1 < n && mag[j + 1].second - baseline[j + 1] >= params.min_prominence_g) {
            ++j;
            const double e = mag[j].second - baseline[j];
            if (e > apex_excess) {
                apex_excess = e;
                apex = j;
            }
        }
        const std::int64_t width = mag[j].first - mag[i].first;
        if (width <= static_cast<std::int64_t>(params.max_width_ms)) {
            const std::int64_t apex_t = mag[apex].first;
            if (apex_t - last_apex >= static_cast<std::int64_t>(params.min_separation_ms)) {
                out.steps[static_cast<std::size_t>(apex_t / 60000)] += 1;
                last_apex = apex_t;
            }
        }
        i = j + 1;
    }
    return out;
}

RawAccelTrack read_raw_track_csv(const std::filesystem::path& path, const std::string& subject_id,
                                 int integrity_errors) {
    CsvReader reader(path);
    if (reader.header() != "t_ms,ax_g,ay_g,az_g") {
        throw ValidationError("raw accel CSV " + path.string() +
                              ": expected header t_ms,ax_g,ay_g,az_g");
    }
    RawAccelTrack track;
    track.subject_id = subject_id;
    track.integrity_errors = integrity_errors;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        if (f.size() != 4) throw ValidationError("raw accel CSV: expected 4 fields");
        AccelSample s;
        s.t_ms = parse_int(f[0], "t_ms");
        s.ax = parse_double(f[1], "ax_g");
        s.ay = parse_double(f[2], "ay_g");
        s.az = parse_double(f[3], "az_g");
        if (!std::isfinite(s.ax) || !std::isfinite(s.ay) || !std::isfinite(s.az)) {
            throw ValidationError("raw accel CSV: non-finite sample");
        }
        track.samples.push_back(s);
    }
    return track;
}

void append_minute_track_csv(CsvWriter& writer, const MinuteTrack& track) {
    for (std::size_t m = 0; m < track.steps.size(); ++m) {
        writer.row({track.subject_id, std::to_string(m), std::to_string(track.steps[m])});
    }
}

} // namespace actirisk::accel
