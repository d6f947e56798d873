#include "actirisk/synth.hpp"

#include <algorithm>
#include <cmath>

#include "actirisk/rng.hpp"
#include "actirisk/survival.hpp"

namespace actirisk::synth {

void SynthConfig::validate() const {
    if (n_per_domain < 1) throw ValidationError("SynthConfig: n_per_domain must be >= 1");
    if (!(gamma_morbidity > 0.0) || !(gamma_mortality > 0.0)) {
        throw ValidationError("SynthConfig: Gompertz slopes must be positive");
    }
    if (frailty_sd < 0.0) throw ValidationError("SynthConfig: frailty_sd must be >= 0");
    if (p_smoking_never < 0.0 || p_smoking_quit < 0.0 ||
        p_smoking_never + p_smoking_quit > 1.0) {
        throw ValidationError("SynthConfig: smoking probabilities must be a sub-distribution");
    }
    if (!(followup_max_years >= followup_min_years) || followup_min_years <= 0.0) {
        throw ValidationError("SynthConfig: bad follow-up window");
    }
    if (source_ages.bin_weights.empty() || target_ages.bin_weights.empty()) {
        throw ValidationError("SynthConfig: age mixtures need at least one bin");
    }
    if (base_cadence <= 0.0) throw ValidationError("SynthConfig: base_cadence must be positive");
    if (days_source < 1 || days_target < 1) {
        throw ValidationError("SynthConfig: track lengths must be >= 1 day");
    }
    if (target_bad_day_rate < 0.0 || target_bad_day_rate > 1.0 ||
        target_plateau_rate < 0.0 || target_plateau_rate > 1.0) {
        throw ValidationError("SynthConfig: rates must lie in [0,1]");
    }
    if (target_amplitude_rescale <= 0.0) {
        throw ValidationError("SynthConfig: amplitude rescale must be positive");
    }
    if (plateau_min_minutes < 1 || plateau_max_minutes < plateau_min_minutes) {
        throw ValidationError("SynthConfig: bad plateau length range");
    }
}

namespace {

double sample_age(const AgeMixture& mix, Rng& rng) {
    double total = 0.0;
    for (const double w : mix.bin_weights) {
        if (w < 0.0) throw ValidationError("AgeMixture: negative weight");
        total += w;
    }
    if (total <= 0.0) throw ValidationError("AgeMixture: weights sum to zero");
    double u = rng.uniform() * total;
    std::size_t bin = 0;
    for (; bin + 1 < mix.bin_weights.size(); ++bin) {
        if (u < mix.bin_weights[bin]) break;
        u -= mix.bin_weights[bin];
    }
    return mix.lo + mix.bin_years * (static_cast<double>(bin) + rng.uniform());
}

// Amplitude of the subject's activity profile (midday Poisson mean).
double subject_amplitude(const Subject& s, const SynthConfig& c) {
    return c.base_cadence *
           std::exp(-c.kappa_frailty * s.frailty -
                    c.kappa_age_per_decade * (s.age - 60.0) / 10.0);
}

struct DayProfile {
    int wake_minute;
    int active_minutes;
};

DayProfile subject_profile(const Subject& s, const SynthConfig& c, Rng& rng) {
    DayProfile p;
    p.wake_minute = static_cast<int>(std::lround(rng.normal(420.0, 25.0)));
    const double len = 960.0 - c.shape_frailty_minutes * s.frailty + rng.normal(0.0, 40.0);
    p.active_minutes = static_cast<int>(std::clamp(len, 240.0, 1380.0));
    p.wake_minute = std::clamp(p.wake_minute, 0, tracks::kMinutesPerDay - p.active_minutes - 1);
    return p;
}

} // namespace

std::vector<Subject> generate_population(const SynthConfig& config) {
    config.validate();
    std::vector<Subject> out;
    out.reserve(static_cast<std::size_t>(config.n_per_domain) * 2);
    for (int domain = 0; domain < 2; ++domain) {
        const AgeMixture& mix = domain == 0 ? config.source_ages : config.target_ages;
        for (int i = 0; i < config.n_per_domain; ++i) {
            Rng rng(derive_seed(derive_seed(config.seed, "population"),
                                static_cast<std::uint64_t>(domain) * 0x10000000ULL +
                                    static_cast<std::uint64_t>(i)));
            Subject s;
            s.id = (domain == 0 ? "s" : "t") + std::to_string(100000 + i).substr(1);
            s.domain = domain;
            s.age = sample_age(mix, rng);
            s.sex = rng.uniform() < 0.5 ? 0 : 1;
            const double u_smoke = rng.uniform();
            if (u_smoke < config.p_smoking_never) {
                s.smoking = kSmokingNever;
            } else if (u_smoke < config.p_smoking_never + config.p_smoking_quit) {
                s.smoking = kSmokingQuit;
            } else {
                s.smoking = kSmokingCurrent;
            }
            double f = rng.normal(0.0, config.frailty_sd);
            if (s.smoking == kSmokingCurrent) f += config.smoking_offset_current;
            if (s.smoking == kSmokingQuit) f += config.smoking_offset_quit;
            s.frailty = f;

            // Morbidity onset from birth; prevalent flag at recording time.
            s.morbidity_onset_age = survival::sample_gompertz_event_age(
                config.gompertz_a_morbidity + f, config.gamma_morbidity, 0.0,
                rng.exponential());
            s.morbid = s.morbidity_onset_age <= s.age;

            // Death conditional on being alive at entry (left truncation).
            s.followup_years = rng.uniform(config.followup_min_years, config.followup_max_years);
            const double death_age = survival::sample_gompertz_event_age(
                config.gompertz_a_mortality + f, config.gamma_mortality, s.age,
                rng.exponential());
            const double censor_age = s.age + s.followup_years;
            s.event_observed = death_age <= censor_age;
            s.event_age = std::min(death_age, censor_age);
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<tracks::DayRecord> generate_tracks(const Subject& subject,
                                               const SynthConfig& config) {
    config.validate();
    Rng rng(derive_seed(derive_seed(config.seed, "tracks"), derive_seed(0, subject.id)));
    const double amplitude = subject_amplitude(subject, config);
    const DayProfile profile = subject_profile(subject, config, rng);
    const int n_days = subject.domain == 0 ? config.days_source : config.days_target;
    const bool is_target = subject.domain == 1;

    std::vector<tracks::DayRecord> days;
    days.reserve(static_cast<std::size_t>(n_days));
    for (int d = 0; d < n_days; ++d) {
        tracks::DayRecord day = tracks::DayRecord::zeros(subject.id, d);
        const double day_factor = std::exp(rng.normal(0.0, config.day_noise_sd));
        for (int m = 0; m < profile.active_minutes; ++m) {
            const int minute = profile.wake_minute + m;
            if (rng.uniform() < config.p_idle_minute) continue;
            const double phase =
                static_cast<double>(m) / static_cast<double>(profile.active_minutes);
            const double bump = std::pow(std::sin(M_PI * phase), 0.7);
            const double lambda = amplitude * day_factor * bump;
            day.minutes[static_cast<std::size_t>(minute)] = rng.poisson(lambda);
        }

        if (is_target) {
            // Interpolation plateaus: replace a run with its rounded mean.
            if (rng.uniform() < config.target_plateau_rate) {
                const int len = config.plateau_min_minutes +
                                static_cast<int>(rng.below(static_cast<std::uint64_t>(
                                    config.plateau_max_minutes - config.plateau_min_minutes + 1)));
                const int latest = profile.wake_minute +
                                   std::max(1, profile.active_minutes - len);
                const int start = profile.wake_minute +
                                  static_cast<int>(rng.below(static_cast<std::uint64_t>(
                                      std::max(1, latest - profile.wake_minute))));
                double mean = 0.0;
                int count = 0;
                for (int m = start; m < start + len && m < tracks::kMinutesPerDay; ++m) {
                    mean += day.minutes[static_cast<std::size_t>(m)];
                    ++count;
                }
                if (count > 0) {
                    const double value = std::round(mean / count);
                    for (int m = start; m < start + len && m < tracks::kMinutesPerDay; ++m) {
                        day.minutes[static_cast<std::size_t>(m)] = value;
                    }
                }
            }
            // Device amplitude rescale with integer re-quantization.
            if (config.target_amplitude_rescale != 1.0) {
                for (double& v : day.minutes) {
                    v = std::round(v * config.target_amplitude_rescale);
                }
            }
            // Bad days: casual carrying leaves only scattered observations.
            if (rng.uniform() < config.target_bad_day_rate) {
                const int keep = 20 + static_cast<int>(rng.below(80));
                std::vector<double> kept(static_cast<std::size_t>(tracks::kMinutesPerDay), 0.0);
                for (int k = 0; k < keep; ++k) {
                    const auto m = rng.below(static_cast<std::uint64_t>(tracks::kMinutesPerDay));
                    kept[static_cast<std::size_t>(m)] = day.minutes[static_cast<std::size_t>(m)];
                }
                day.minutes = std::move(kept);
                day.missing.set(); // almost everything is interpolation filler
            }
        }
        days.push_back(std::move(day));
    }
    return days;
}

accel::RawAccelTrack generate_raw_accel(const Subject& subject, const SynthConfig& config,
                                        int n_minutes) {
    config.validate();
    if (n_minutes < 1) throw ValidationError("generate_raw_accel: n_minutes must be >= 1");
    Rng rng(derive_seed(derive_seed(config.seed, "raw-accel"), derive_seed(0, subject.id)));
    const double cadence = std::min(40.0, subject_amplitude(subject, config));

    accel::RawAccelTrack track;
    track.subject_id = subject.id;
    track.nominal_rate_hz = 100.0;
    const int n_samples = n_minutes * 60 * 100;
    track.samples.reserve(static_cast<std::size_t>(n_samples));

    // One bump per step, ~120 ms wide and 0.4 g tall, on the 1 g gravity line.
    std::vector<double> bump_until(static_cast<std::size_t>(n_samples), 0.0);
    for (int minute = 0; minute < n_minutes; ++minute) {
        const int steps = rng.poisson(cadence);
        for (int s2 = 0; s2 < steps; ++s2) {
            const int at = minute * 6000 + static_cast<int>(rng.below(6000 - 20));
            for (int k = 0; k < 12; ++k) {
                bump_until[static_cast<std::size_t>(at + k)] = 0.4;
            }
        }
    }
    for (int i = 0; i < n_samples; ++i) {
        accel::AccelSample smp;
        smp.t_ms = static_cast<std::int64_t>(i) * 10;
        const double mag = 1.0 + bump_until[static_cast<std::size_t>(i)] +
                           rng.normal(0.0, 0.01);
        // Random but smooth-ish orientation: put the magnitude on one axis mix.
        smp.ax = mag * 0.26726124191242440;
        smp.ay = mag * 0.53452248382484879;
        smp.az = mag * 0.80178372573727319; // (1,2,3)/sqrt(14) direction
        track.samples.push_back(smp);
    }
    return track;
}

} // namespace actirisk::synth
