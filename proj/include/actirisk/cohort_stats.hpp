#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include "actirisk/common.hpp"
#include "actirisk/survival.hpp"

namespace actirisk::stats {

// Inclusive ICD-10 category range within one letter block, e.g. I10-I15.
struct Icd10Range {
    char letter = 'A';
    int lo = 0;
    int hi = 0;
};

struct ConditionCatalog {
    std::vector<std::pair<std::string, std::vector<Icd10Range>>> conditions;

    // hypertension I10-I15, arthritis M00-M25, cancer C00-C99, diabetes
    // E10-E14, CHD I20-I25, MI {I21,I22}, angina {I20}, stroke I60-I64,
    // emphysema {J43,J44}, CHF {I50}.
    static ConditionCatalog default_catalog();
};

// True iff any code's 3-character category falls in a catalog range, or any
// self-reported catalog condition is flagged. Codes may carry sub-class
// suffixes (I21.4); they are truncated to the category. Malformed codes and
// unknown self-report names raise ValidationError.
bool morbidity_label(std::span<const std::string> icd10_codes,
                     const std::set<std::string>& self_reports,
                     const ConditionCatalog& catalog);

struct ScoredSubject {
    std::string id;
    double age = 0.0;
    int sex = 0;
    double score = 0.0;
};

// Risk acceleration: score minus the mean score of the subject's
// (sex x 5-year age bin) cohort. Singleton cohorts map to 0.
std::vector<double> detrend_risk(std::span<const ScoredSubject> subjects, int bin_years = 5);

enum class MwMode { exact, normal_approx, automatic };

struct MwResult {
    double u = 0.0;          // U statistic of the first sample, midranks for ties
    double p = 1.0;          // two-sided
    bool exact = false;
    bool degenerate = false; // all pooled values identical
};

// Exact p by full enumeration of the C(n+m, n) group assignments when
// n+m <= 16 (automatic mode), otherwise tie-corrected normal approximation
// with continuity correction.
MwResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                        MwMode mode = MwMode::automatic);

struct GroupComparison {
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    double mean_diff = 0.0;      // mean_A - mean_B of detrended scores
    double delta_hs_years = 0.0; // -beta_r * mean_diff / gamma
    double u_statistic = 0.0;
    double p_value = 1.0;
};

// Converts a detrended-risk difference into equivalent healthspan years under
// the Gompertz law and attaches the Mann-Whitney p-value. beta_r is the
// fitted risk-score coefficient, gamma the fitted age slope.
GroupComparison healthspan_shift(std::span<const double> group_a_detrended,
                                 std::span<const double> group_b_detrended, double beta_r,
                                 double gamma);

struct WeeklyScoredSubject {
    std::string id;
    double age = 0.0;
    int sex = 0;
    int group = 0; // 0 or 1
    std::vector<double> weekly_scores;
};

// For each window k: average each subject's first min(k, available) weekly
// scores, detrend by age/sex, Mann-Whitney between the two groups, and emit
// (window, -log10 p). Errors when more than half the subjects lack a window.
std::vector<std::pair<int, double>> averaging_curve(
    std::span<const WeeklyScoredSubject> subjects, const std::vector<int>& windows);

double pearson_r(std::span<const double> x, std::span<const double> y);

} // namespace actirisk::stats
