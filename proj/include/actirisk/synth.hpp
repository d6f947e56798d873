#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "actirisk/accel_steps.hpp"
#include "actirisk/common.hpp"
#include "actirisk/tracks.hpp"

namespace actirisk::synth {

inline constexpr int kSmokingNever = 0;
inline constexpr int kSmokingQuit = 1;
inline constexpr int kSmokingCurrent = 2;

// Age mixture over 5-year bins starting at `lo`; weights need not be normalized.
struct AgeMixture {
    double lo = 45.0;
    int bin_years = 5;
    std::vector<double> bin_weights;

    double hi() const { return lo + bin_years * static_cast<double>(bin_weights.size()); }
};

struct SynthConfig {
    int n_per_domain = 1000;
    std::uint64_t seed = 0;

    // Defaults: source concentrated 55-75, target 45-65.
    AgeMixture source_ages{55.0, 5, {1.0, 1.0, 1.0, 1.0}};
    AgeMixture target_ages{45.0, 5, {1.0, 1.0, 1.0, 1.0}};

    // Gompertz hazards exp(a + gamma*t + frailty).
    double gompertz_a_morbidity = -6.9;
    double gamma_morbidity = 0.059;
    double gompertz_a_mortality = -10.6;
    double gamma_mortality = 0.10;

    double frailty_sd = 0.7;
    double smoking_offset_current = 0.6;  // added to frailty
    double smoking_offset_quit = 0.1;
    double p_smoking_never = 0.5;
    double p_smoking_quit = 0.25;         // rest are current smokers

    double followup_min_years = 0.5;
    double followup_max_years = 3.0;

    // Activity model: Poisson minute counts under a day bump profile whose
    // amplitude and active-window length both shrink with frailty.
    double base_cadence = 9.0;            // midday steps/min at frailty 0, age 60
    double kappa_frailty = 0.35;          // amplitude ~ exp(-kappa_frailty * f)
    double kappa_age_per_decade = 0.12;   // amplitude decline per decade over 60
    double shape_frailty_minutes = 70.0;  // active-window shrink per frailty unit
    double day_noise_sd = 0.25;           // lognormal day-level factor
    double p_idle_minute = 0.25;

    int days_source = 8;
    int days_target = 21;

    // Target-domain (phone-style) artifacts.
    double target_bad_day_rate = 0.12;
    double target_amplitude_rescale = 0.85; // 1.0 disables
    double target_plateau_rate = 0.5;       // per-day probability
    int plateau_min_minutes = 45;
    int plateau_max_minutes = 150;

    void validate() const;
};

struct Subject {
    std::string id;
    int domain = 0;               // 0 source, 1 target
    double age = 0.0;             // entry age at activity recording
    int sex = 0;                  // 0/1
    int smoking = kSmokingNever;
    bool morbid = false;          // diseased at recording time (the DANN label)
    double frailty = 0.0;         // includes the smoking offset
    double morbidity_onset_age = 0.0;
    // Mortality event relative to entry, censored at entry + followup.
    double event_age = 0.0;
    bool event_observed = false;
    double followup_years = 0.0;
};

// Fully seeded-deterministic population; per-subject rng streams.
std::vector<Subject> generate_population(const SynthConfig& config);

// Steps-per-minute days for one subject; target-domain tracks get the
// configured sparsity, amplitude-rescale and plateau artifacts.
std::vector<tracks::DayRecord> generate_tracks(const Subject& subject, const SynthConfig& config);

// Short raw-acceleration fixture: gravity baseline plus one bump per step at
// the subject's cadence, suitable for exercising the step counter.
accel::RawAccelTrack generate_raw_accel(const Subject& subject, const SynthConfig& config,
                                        int n_minutes);

} // namespace actirisk::synth
