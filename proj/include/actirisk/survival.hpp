#pragma once

#include <span>
#include <string>
#include <vector>

#include "actirisk/common.hpp"

namespace actirisk::survival {

// One subject interval [entry_age, exit_age) with left truncation at entry.
struct SurvivalRecord {
    std::string subject_id;
    double entry_age = 0.0;
    double exit_age = 0.0;
    bool event = false;               // true = occurred, false = censored
    std::vector<double> covariates;   // aligned with the covariate_names of a fit
};

// Proportional-hazards fit with Gompertz baseline: h(t|x) = exp(a + g*t + b'x).
struct CoxGompertzFit {
    double intercept = 0.0;
    double gamma = 0.0;               // age slope, per year
    double gamma_se = 0.0;
    std::vector<std::string> covariate_names;
    std::vector<double> beta;         // on the original covariate scale
    std::vector<double> beta_se;
    std::vector<double> cov_mean;     // standardization record
    std::vector<double> cov_sd;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
    std::size_t n = 0;
    std::size_t events = 0;
    std::vector<double> ll_trace; // likelihood after each Newton iteration

    // gamma*entry_age + b'x: the per-subject log-hazard up to the shared intercept.
    double linear_predictor(const SurvivalRecord& r) const;
};

// Newton maximization of the censored-data log-likelihood with analytic
// gradient/Hessian, step halving and ridge fallback. Covariates are
// standardized internally and reported back on the original scale.
// Converged when the gradient max-norm drops below 1e-8 (at most 100 iterations).
CoxGompertzFit fit_cox_gompertz(std::span<const SurvivalRecord> records,
                                const std::vector<std::string>& covariate_names);

// Chi-square LR test of nested against full; df = covariate count difference.
double likelihood_ratio_test(const CoxGompertzFit& nested, const CoxGompertzFit& full);

// Hazard ratio per `per_sd` standard deviations of the covariate in the fitted
// sample (per-1-SD reporting convention).
double hazard_ratio(const CoxGompertzFit& fit, const std::string& covariate, double per_sd = 1.0);

// ln 2 / gamma.
double doubling_time(double gamma);

// Expected event age: integral of S(t) = exp(-exp(a + b'x)(e^{gt}-1)/g) from 0,
// adaptive quadrature at relative tolerance 1e-8.
double gompertz_mean_time(const CoxGompertzFit& fit, const std::vector<double>& covariates);

struct LogisticFit {
    double intercept = 0.0;
    std::vector<std::string> covariate_names;
    std::vector<double> beta;
    std::vector<double> beta_se;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> linear_predictors; // log-odds per subject, intercept included
};

LogisticFit fit_logistic(std::span<const int> labels,
                         const std::vector<std::vector<double>>& covariates,
                         const std::vector<std::string>& covariate_names);

// Fits both models on the same cohort (logistic label = event flag, with
// entry age as an extra covariate) and compares per-subject linear predictors.
struct EquivalenceReport {
    double prevalence = 0.0;
    std::size_t n = 0;
    double predictor_correlation = 0.0;
    std::vector<std::string> coefficient_names; // "age" then the covariates
    std::vector<double> cox_coefficients;
    std::vector<double> logistic_coefficients;
    std::vector<double> relative_difference;
};

EquivalenceReport rare_event_equivalence(std::span<const SurvivalRecord> records,
                                         const std::vector<std::string>& covariate_names);

// Inverse-transform Gompertz event time with hazard u * e^{g t}, conditional
// on survival to entry_age (exact left truncation).
double sample_gompertz_event_age(double log_u, double gamma, double entry_age, double unit_exp);

} // namespace actirisk::survival
