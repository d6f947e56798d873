#include "actirisk/survival.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "actirisk/numeric.hpp"

namespace actirisk::survival {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Delta(g) = (e^{g t1} - e^{g t0}) / g and its first two g-derivatives,
// with series fallbacks near g = 0.
struct CumHazParts {
    double delta;
    double d1;
    double d2;
};

CumHazParts cumhaz_parts(double g, double t0, double t1) {
    CumHazParts p{};
    if (std::fabs(g) < 1e-8) {
        const double m1 = t1 - t0;
        const double m2 = (t1 * t1 - t0 * t0) / 2.0;
        const double m3 = (t1 * t1 * t1 - t0 * t0 * t0) / 3.0;
        const double m4 = (t1 * t1 * t1 * t1 - t0 * t0 * t0 * t0) / 4.0;
        p.delta = m1 + g * m2 + g * g * m3 / 2.0;
        p.d1 = m2 + g * m3;
        p.d2 = m3 + g * m4;
        return p;
    }
    const double e1 = std::exp(g * t1);
    const double e0 = std::exp(g * t0);
    const double f = e1 - e0;
    const double f1 = t1 * e1 - t0 * e0;
    const double f2 = t1 * t1 * e1 - t0 * t0 * e0;
    p.delta = f / g;
    p.d1 = f1 / g - f / (g * g);
    p.d2 = f2 / g - 2.0 * f1 / (g * g) + 2.0 * f / (g * g * g);
    return p;
}

struct Standardized {
    MatrixXd z;                 // n x p
    std::vector<double> mean;
    std::vector<double> sd;
};

Standardized standardize(std::span<const SurvivalRecord> records, std::size_t p) {
    const std::size_t n = records.size();
    Standardized s;
    s.z.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    s.mean.assign(p, 0.0);
    s.sd.assign(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        double m = 0.0;
        for (const auto& r : records) m += r.covariates[j];
        m /= static_cast<double>(n);
        double ss = 0.0;
        for (const auto& r : records) ss += (r.covariates[j] - m) * (r.covariates[j] - m);
        const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        if (!(sd > 0.0)) {
            throw ValidationError("fit: covariate " + std::to_string(j) +
                                  " has zero variance");
        }
        s.mean[j] = m;
        s.sd[j] = sd;
        for (std::size_t i = 0; i < n; ++i) {
            s.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                (records[i].covariates[j] - m) / sd;
        }
    }
    return s;
}

void collinearity_guard(const MatrixXd& z) {
    if (z.cols() < 2) return;
    const MatrixXd gram = (z.transpose() * z) / static_cast<double>(z.rows());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
    const double max_eig = es.eigenvalues().maxCoeff();
    const double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < 1e-10 * std::max(max_eig, 1.0)) {
        throw ValidationError("fit: collinear covariates (condition number check failed)");
    }
}

// Solve (-hessian + ridge I) step = grad with escalating ridge.
VectorXd ascent_step(const MatrixXd& neg_hessian, const VectorXd& grad) {
    double ridge = 0.0;
    for (int attempt = 0; attempt < 14; ++attempt) {
        MatrixXd m = neg_hessian;
        if (ridge > 0.0) m.diagonal().array() += ridge;
        const Eigen::LLT<MatrixXd> llt(m);
        if (llt.info() == Eigen::Success) {
            const VectorXd step = llt.solve(grad);
            if (step.allFinite()) return step;
        }
        ridge = ridge == 0.0 ? 1e-10 : ridge * 100.0;
    }
    throw NumericError("fit_cox_gompertz: singular Hessian");
}

} // namespace

double CoxGompertzFit::linear_predictor(const SurvivalRecord& r) const {
    if (r.covariates.size() != beta.size()) {
        throw ValidationError("linear_predictor: covariate count mismatch");
    }
    double lp = gamma * r.entry_age;
    for (std::size_t j = 0; j < beta.size(); ++j) lp += beta[j] * r.covariates[j];
    return lp;
}

CoxGompertzFit fit_cox_gompertz(std::span<const SurvivalRecord> records,
                                const std::vector<std::string>& covariate_names) {
    const std::size_t n = records.size();
    const std::size_t p = covariate_names.size();
    if (n == 0) throw ValidationError("fit_cox_gompertz: no records");
    std::size_t events = 0;
    for (const auto& r : records) {
        if (r.covariates.size() != p) {
            throw ValidationError("fit_cox_gompertz: record covariate count mismatch");
        }
        if (!(r.exit_age > r.entry_age)) {
            throw ValidationError("fit_cox_gompertz: require exit_age > entry_age");
        }
        if (r.event) ++events;
    }
    if (events == 0) throw ValidationError("fit_cox_gompertz: zero events");
    if (events < 2) throw ValidationError("fit_cox_gompertz: fewer than 2 events");

    Standardized st;
    if (p > 0) {
        st = standardize(records, p);
        collinearity_guard(st.z);
    }

    // theta = [a, gamma, beta_std...]
    const std::size_t dim = 2 + p;
    VectorXd theta = VectorXd::Zero(static_cast<Eigen::Index>(dim));
    theta(1) = 0.05;
    {
        double total_delta = 0.0;
        for (const auto& r : records) {
            total_delta += cumhaz_parts(theta(1), r.entry_age, r.exit_age).delta;
        }
        theta(0) = std::log(static_cast<double>(events)) - std::log(total_delta);
    }

    const auto log_lik = [&](const VectorXd& th) {
        const double a = th(0), g = th(1);
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& r = records[i];
            double bz = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                bz += th(static_cast<Eigen::Index>(2 + j)) *
                      st.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            }
            const double u = std::exp(a + bz);
            const auto parts = cumhaz_parts(g, r.entry_age, r.exit_age);
            if (r.event) ll += a + g * r.exit_age + bz;
            ll -= u * parts.delta;
        }
        return ll;
    };

    const auto grad_hess = [&](const VectorXd& th, VectorXd& grad, MatrixXd& hess) {
        const double a = th(0), g = th(1);
        grad.setZero(static_cast<Eigen::Index>(dim));
        hess.setZero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
        for (std::size_t i = 0; i < n; ++i) {
            const auto& r = records[i];
            double bz = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                bz += th(static_cast<Eigen::Index>(2 + j)) *
                      st.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            }
            const double u = std::exp(a + bz);
            const auto parts = cumhaz_parts(g, r.entry_age, r.exit_age);
            const double h = u * parts.delta;       // cumulative hazard over the interval
            const double hd1 = u * parts.d1;
            const double hd2 = u * parts.d2;
            const double d = r.event ? 1.0 : 0.0;

            grad(0) += d - h;
            grad(1) += d * r.exit_age - hd1;
            hess(0, 0) -= h;
            hess(0, 1) -= hd1;
            hess(1, 1) -= hd2;
            for (std::size_t j = 0; j < p; ++j) {
                const double zj = st.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                grad(static_cast<Eigen::Index>(2 + j)) += zj * (d - h);
                hess(0, static_cast<Eigen::Index>(2 + j)) -= zj * h;
                hess(1, static_cast<Eigen::Index>(2 + j)) -= zj * hd1;
                for (std::size_t k = j; k < p; ++k) {
                    const double zk =
                        st.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
                    hess(static_cast<Eigen::Index>(2 + j), static_cast<Eigen::Index>(2 + k)) -=
                        zj * zk * h;
                }
            }
        }
        // mirror the upper triangle
        for (std::size_t r2 = 0; r2 < dim; ++r2) {
            for (std::size_t c2 = r2 + 1; c2 < dim; ++c2) {
                hess(static_cast<Eigen::Index>(c2), static_cast<Eigen::Index>(r2)) =
                    hess(static_cast<Eigen::Index>(r2), static_cast<Eigen::Index>(c2));
            }
        }
    };

    double ll = log_lik(theta);
    if (!std::isfinite(ll)) throw NumericError("fit_cox_gompertz: non-finite initial likelihood");

    std::vector<double> ll_trace{ll};
    VectorXd grad;
    MatrixXd hess;
    bool converged = false;
    int iter = 0;
    for (; iter < 100; ++iter) {
        grad_hess(theta, grad, hess);
        if (grad.lpNorm<Eigen::Infinity>() < 1e-8) {
            converged = true;
            break;
        }
        const VectorXd step = ascent_step(-hess, grad);
        // Step halving keeps the likelihood non-decreasing.
        double scale = 1.0;
        bool improved = false;
        for (int h = 0; h < 50; ++h) {
            const VectorXd cand = theta + scale * step;
            const double cand_ll = log_lik(cand);
            if (std::isfinite(cand_ll) && cand_ll >= ll - 1e-12 * std::fabs(ll)) {
                theta = cand;
                ll = cand_ll;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) break;
        ll_trace.push_back(ll);
    }
    if (!converged) {
        grad_hess(theta, grad, hess);
        converged = grad.lpNorm<Eigen::Infinity>() < 1e-8;
    }
    if (!converged) {
        throw NumericError("fit_cox_gompertz: did not converge in 100 iterations");
    }

    // Standard errors from the inverse observed information.
    grad_hess(theta, grad, hess);
    MatrixXd info = -hess;
    VectorXd se = VectorXd::Zero(static_cast<Eigen::Index>(dim));
    {
        Eigen::LLT<MatrixXd> llt(info);
        if (llt.info() == Eigen::Success) {
            const MatrixXd cov =
                llt.solve(MatrixXd::Identity(static_cast<Eigen::Index>(dim),
                                             static_cast<Eigen::Index>(dim)));
            for (std::size_t j = 0; j < dim; ++j) {
                se(static_cast<Eigen::Index>(j)) =
                    std::sqrt(std::max(0.0, cov(static_cast<Eigen::Index>(j),
                                                static_cast<Eigen::Index>(j))));
            }
        }
    }

    CoxGompertzFit fit;
    fit.covariate_names = covariate_names;
    fit.gamma = theta(1);
    fit.gamma_se = se(1);
    fit.log_likelihood = ll;
    fit.iterations = iter;
    fit.converged = converged;
    fit.ll_trace = std::move(ll_trace);
    fit.n = n;
    fit.events = events;
    fit.beta.resize(p);
    fit.beta_se.resize(p);
    fit.cov_mean.resize(p);
    fit.cov_sd.resize(p);
    double intercept = theta(0);
    for (std::size_t j = 0; j < p; ++j) {
        const double bs = theta(static_cast<Eigen::Index>(2 + j));
        fit.beta[j] = bs / st.sd[j];
        fit.beta_se[j] = se(static_cast<Eigen::Index>(2 + j)) / st.sd[j];
        fit.cov_mean[j] = st.mean[j];
        fit.cov_sd[j] = st.sd[j];
        intercept -= bs * st.mean[j] / st.sd[j];
    }
    fit.intercept = intercept;
    return fit;
}

double likelihood_ratio_test(const CoxGompertzFit& nested, const CoxGompertzFit& full) {
    if (nested.n != full.n || nested.events != full.events) {
        throw ValidationError("likelihood_ratio_test: fits are not over the same records");
    }
    for (const auto& name : nested.covariate_names) {
        if (std::find(full.covariate_names.begin(), full.covariate_names.end(), name) ==
            full.covariate_names.end()) {
            throw ValidationError("likelihood_ratio_test: '" + name +
                                  "' missing from the full model");
        }
    }
    const int df = static_cast<int>(full.covariate_names.size()) -
                   static_cast<int>(nested.covariate_names.size());
    if (df < 0) throw ValidationError("likelihood_ratio_test: models are not nested");
    const double stat = 2.0 * (full.log_likelihood - nested.log_likelihood);
    if (stat < -1e-8) {
        throw NumericError("likelihood_ratio_test: full model likelihood below nested "
                           "(optimizer failure)");
    }
    if (df == 0) return 1.0; // identical covariate sets
    return chi_square_upper_tail(std::max(stat, 0.0), df);
}

double hazard_ratio(const CoxGompertzFit& fit, const std::string& covariate, double per_sd) {
    const auto it =
        std::find(fit.covariate_names.begin(), fit.covariate_names.end(), covariate);
    if (it == fit.covariate_names.end()) {
        throw ValidationError("hazard_ratio: unknown covariate '" + covariate + "'");
    }
    const std::size_t j = static_cast<std::size_t>(it - fit.covariate_names.begin());
    return std::exp(fit.beta[j] * fit.cov_sd[j] * per_sd);
}

double doubling_time(double gamma) {
    if (!(gamma > 0.0)) throw ValidationError("doubling_time: gamma must be positive");
    return std::log(2.0) / gamma;
}

double gompertz_mean_time(const CoxGompertzFit& fit, const std::vector<double>& covariates) {
    if (!(fit.gamma > 0.0)) throw ValidationError("gompertz_mean_time: gamma must be positive");
    if (covariates.size() != fit.beta.size()) {
        throw ValidationError("gompertz_mean_time: covariate count mismatch");
    }
    double lp = fit.intercept;
    for (std::size_t j = 0; j < covariates.size(); ++j) lp += fit.beta[j] * covariates[j];
    const double u = std::exp(lp);
    const double g = fit.gamma;
    const auto survival_fn = [&](double t) {
        return std::exp(-u * std::expm1(g * t) / g);
    };
    // Beyond t_max the survival is below e^-60; the tail adds nothing at 1e-8.
    const double t_max = std::log1p(60.0 * g / u) / g;
    return adaptive_simpson(survival_fn, 0.0, t_max, 1e-8);
}

LogisticFit fit_logistic(std::span<const int> labels,
                         const std::vector<std::vector<double>>& covariates,
                         const std::vector<std::string>& covariate_names) {
    const std::size_t n = labels.size();
    const std::size_t p = covariate_names.size();
    if (n == 0 || covariates.size() != n) {
        throw ValidationError("fit_logistic: labels/covariates size mismatch");
    }
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw ValidationError("fit_logistic: labels must be 0/1");
        }
        if (covariates[i].size() != p) {
            throw ValidationError("fit_logistic: covariate count mismatch");
        }
        positives += static_cast<std::size_t>(labels[i]);
    }
    if (positives == 0 || positives == n) {
        throw ValidationError("fit_logistic: both classes must be present");
    }

    // Standardize columns; design is [1, z...].
    std::vector<double> mean(p, 0.0), sd(p, 1.0);
    MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p + 1));
    for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (std::size_t j = 0; j < p; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += covariates[i][j];
        m /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            ss += (covariates[i][j] - m) * (covariates[i][j] - m);
        }
        const double s = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        if (!(s > 0.0)) {
            throw ValidationError("fit_logistic: covariate '" + covariate_names[j] +
                                  "' has zero variance");
        }
        mean[j] = m;
        sd[j] = s;
        for (std::size_t i = 0; i < n; ++i) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) =
                (covariates[i][j] - m) / s;
        }
    }
    if (p >= 2) collinearity_guard(x.rightCols(static_cast<Eigen::Index>(p)));

    const auto log_lik = [&](const VectorXd& b) {
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double eta = x.row(static_cast<Eigen::Index>(i)).dot(b);
            // y*eta - log(1 + e^eta), computed stably
            const double softplus = eta > 0.0 ? eta + std::log1p(std::exp(-eta))
                                              : std::log1p(std::exp(eta));
            ll += labels[i] * eta - softplus;
        }
        return ll;
    };

    VectorXd b = VectorXd::Zero(static_cast<Eigen::Index>(p + 1));
    double ll = log_lik(b);
    bool converged = false;
    int iter = 0;
    for (; iter < 100; ++iter) {
        VectorXd grad = VectorXd::Zero(static_cast<Eigen::Index>(p + 1));
        MatrixXd info = MatrixXd::Zero(static_cast<Eigen::Index>(p + 1),
                                       static_cast<Eigen::Index>(p + 1));
        for (std::size_t i = 0; i < n; ++i) {
            const auto xi = x.row(static_cast<Eigen::Index>(i));
            const double pr = logistic(xi.dot(b));
            grad += xi.transpose() * (labels[i] - pr);
            info += xi.transpose() * xi * (pr * (1.0 - pr));
        }
        if (grad.lpNorm<Eigen::Infinity>() < 1e-8) {
            converged = true;
            break;
        }
        const VectorXd step = ascent_step(info, grad);
        double scale = 1.0;
        bool improved = false;
        for (int h = 0; h < 50; ++h) {
            const VectorXd cand = b + scale * step;
            const double cand_ll = log_lik(cand);
            if (std::isfinite(cand_ll) && cand_ll >= ll - 1e-12 * std::fabs(ll)) {
                b = cand;
                ll = cand_ll;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) break;
        if (b.tail(static_cast<Eigen::Index>(p)).lpNorm<Eigen::Infinity>() > 30.0) {
            throw NumericError("fit_logistic: complete separation suspected "
                               "(standardized coefficient above 30)");
        }
    }
    if (!converged) {
        throw NumericError("fit_logistic: did not converge in 100 iterations");
    }

    LogisticFit fit;
    fit.covariate_names = covariate_names;
    fit.log_likelihood = ll;
    fit.iterations = iter;
    fit.converged = converged;
    fit.beta.resize(p);
    fit.beta_se.assign(p, 0.0);
    double intercept = b(0);
    for (std::size_t j = 0; j < p; ++j) {
        fit.beta[j] = b(static_cast<Eigen::Index>(j + 1)) / sd[j];
        intercept -= b(static_cast<Eigen::Index>(j + 1)) * mean[j] / sd[j];
    }
    fit.intercept = intercept;
    fit.linear_predictors.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        fit.linear_predictors[i] = x.row(static_cast<Eigen::Index>(i)).dot(b);
    }
    return fit;
}

EquivalenceReport rare_event_equivalence(std::span<const SurvivalRecord> records,
                                         const std::vector<std::string>& covariate_names) {
    const CoxGompertzFit cox = fit_cox_gompertz(records, covariate_names);

    std::vector<int> labels;
    std::vector<std::vector<double>> xs;
    labels.reserve(records.size());
    xs.reserve(records.size());
    for (const auto& r : records) {
        labels.push_back(r.event ? 1 : 0);
        std::vector<double> row;
        row.reserve(1 + r.covariates.size());
        row.push_back(r.entry_age);
        row.insert(row.end(), r.covariates.begin(), r.covariates.end());
        xs.push_back(std::move(row));
    }
    std::vector<std::string> logit_names;
    logit_names.push_back("age");
    logit_names.insert(logit_names.end(), covariate_names.begin(), covariate_names.end());
    const LogisticFit logit = fit_logistic(labels, xs, logit_names);

    EquivalenceReport rep;
    rep.n = records.size();
    rep.prevalence = static_cast<double>(cox.events) / static_cast<double>(cox.n);
    std::vector<double> cox_lp(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        cox_lp[i] = cox.linear_predictor(records[i]);
    }
    rep.predictor_correlation = pearson_correlation(cox_lp, logit.linear_predictors);

    // Both coefficient vectors follow logit_names order: age, then covariates.
    rep.coefficient_names = logit_names;
    rep.cox_coefficients.push_back(cox.gamma);
    rep.cox_coefficients.insert(rep.cox_coefficients.end(), cox.beta.begin(), cox.beta.end());
    rep.logistic_coefficients = logit.beta;
    rep.relative_difference.resize(rep.cox_coefficients.size());
    for (std::size_t j = 0; j < rep.cox_coefficients.size(); ++j) {
        const double c = rep.cox_coefficients[j];
        const double l = rep.logistic_coefficients[j];
        rep.relative_difference[j] =
            std::fabs(c - l) / std::max({std::fabs(c), std::fabs(l), 1e-12});
    }
    return rep;
}

double sample_gompertz_event_age(double log_u, double gamma, double entry_age, double unit_exp) {
    if (!(gamma > 0.0)) throw ValidationError("sample_gompertz_event_age: gamma must be positive");
    if (unit_exp < 0.0) throw ValidationError("sample_gompertz_event_age: negative exponential");
    // H(t) - H(t0) = E  =>  e^{g t} = e^{g t0} + g E / u
    const double base = std::exp(gamma * entry_age);
    return std::log(base + gamma * unit_exp * std::exp(-log_u)) / gamma;
}

} // namespace actirisk::survival
