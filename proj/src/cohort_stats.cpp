#include "actirisk/cohort_stats.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "actirisk/numeric.hpp"

namespace actirisk::stats {

ConditionCatalog ConditionCatalog::default_catalog() {
    ConditionCatalog c;
    c.conditions = {
        {"hypertension", {{'I', 10, 15}}},
        {"arthritis", {{'M', 0, 25}}},
        {"cancer", {{'C', 0, 99}}},
        {"diabetes", {{'E', 10, 14}}},
        {"chd", {{'I', 20, 25}}},
        {"mi", {{'I', 21, 21}, {'I', 22, 22}}},
        {"angina", {{'I', 20, 20}}},
        {"stroke", {{'I', 60, 64}}},
        {"emphysema", {{'J', 43, 43}, {'J', 44, 44}}},
        {"chf", {{'I', 50, 50}}},
    };
    return c;
}

namespace {

// Truncate a code like "I21.4" or "I214" to its category and split it.
std::pair<char, int> parse_icd10_category(const std::string& code) {
    if (code.size() < 3 || !std::isalpha(static_cast<unsigned char>(code[0])) ||
        !std::isdigit(static_cast<unsigned char>(code[1])) ||
        !std::isdigit(static_cast<unsigned char>(code[2]))) {
        throw ValidationError("morbidity_label: malformed ICD-10 code '" + code + "'");
    }
    const char letter =
        static_cast<char>(std::toupper(static_cast<unsigned char>(code[0])));
    const int num = (code[1] - '0') * 10 + (code[2] - '0');
    return {letter, num};
}

} // namespace

bool morbidity_label(std::span<const std::string> icd10_codes,
                     const std::set<std::string>& self_reports,
                     const ConditionCatalog& catalog) {
    // Validate everything before answering so malformed input always errors.
    std::vector<std::pair<char, int>> categories;
    categories.reserve(icd10_codes.size());
    for (const auto& code : icd10_codes) categories.push_back(parse_icd10_category(code));
    for (const auto& name : self_reports) {
        const bool known = std::any_of(
            catalog.conditions.begin(), catalog.conditions.end(),
            [&](const auto& c) { return c.first == name; });
        if (!known) {
            throw ValidationError("morbidity_label: unknown self-report condition '" + name + "'");
        }
    }
    if (!self_reports.empty()) return true;
    for (const auto& [letter, num] : categories) {
        for (const auto& [name, ranges] : catalog.conditions) {
            for (const auto& r : ranges) {
                if (r.letter == letter && num >= r.lo && num <= r.hi) return true;
            }
        }
    }
    return false;
}

std::vector<double> detrend_risk(std::span<const ScoredSubject> subjects, int bin_years) {
    if (bin_years <= 0) throw ValidationError("detrend_risk: bin_years must be positive");
    std::map<std::pair<int, int>, std::pair<double, int>> cohorts; // (sex,bin) -> (sum, count)
    for (const auto& s : subjects) {
        if (!std::isfinite(s.age) || !std::isfinite(s.score)) {
            throw ValidationError("detrend_risk: non-finite age or score for " + s.id);
        }
        const int bin = static_cast<int>(std::floor(s.age / bin_years));
        auto& [sum, count] = cohorts[{s.sex, bin}];
        sum += s.score;
        count += 1;
    }
    std::vector<double> out;
    out.reserve(subjects.size());
    for (const auto& s : subjects) {
        const int bin = static_cast<int>(std::floor(s.age / bin_years));
        const auto& [sum, count] = cohorts.at({s.sex, bin});
        out.push_back(s.score - sum / count);
    }
    return out;
}

namespace {

// Midranks of the pooled sample; also reports tie group sizes.
std::vector<double> midranks(const std::vector<double>& pooled,
                             std::vector<std::size_t>& tie_sizes) {
    const std::size_t n = pooled.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        const double r = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
        tie_sizes.push_back(j - i + 1);
        i = j + 1;
    }
    return rank;
}

double u_from_rank_sum(double rank_sum_a, std::size_t na) {
    return rank_sum_a - static_cast<double>(na) * (static_cast<double>(na) + 1.0) / 2.0;
}

// Exact two-sided p: share of the C(n+m, na) assignments whose U deviates from
// nm/2 by at least as much as the observed U (on the fixed pooled midranks).
double exact_two_sided_p(const std::vector<double>& pooled_ranks, std::size_t na,
                         double u_observed) {
    const std::size_t n = pooled_ranks.size();
    const double center = static_cast<double>(na) * static_cast<double>(n - na) / 2.0;
    const double dev = std::fabs(u_observed - center) - 1e-9;

    std::vector<std::size_t> comb(na);
    for (std::size_t i = 0; i < na; ++i) comb[i] = i;
    std::uint64_t total = 0;
    std::uint64_t extreme = 0;
    while (true) {
        double rs = 0.0;
        for (const std::size_t idx : comb) rs += pooled_ranks[idx];
        const double u = u_from_rank_sum(rs, na);
        ++total;
        if (std::fabs(u - center) >= dev) ++extreme;
        // next combination in lexicographic order
        std::size_t k = na;
        while (k > 0 && comb[k - 1] == n - na + k - 1) --k;
        if (k == 0) break;
        ++comb[k - 1];
        for (std::size_t j = k; j < na; ++j) comb[j] = comb[j - 1] + 1;
    }
    return static_cast<double>(extreme) / static_cast<double>(total);
}

} // namespace

MwResult mann_whitney_u(std::span<const double> a, std::span<const double> b, MwMode mode) {
    if (a.empty() || b.empty()) throw ValidationError("mann_whitney_u: both groups must be non-empty");
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());

    std::vector<std::size_t> tie_sizes;
    const std::vector<double> pooled_ranks = midranks(pooled, tie_sizes);

    const std::size_t na = a.size(), nb = b.size(), n = na + nb;
    double rank_sum_a = 0.0;
    for (std::size_t i = 0; i < na; ++i) rank_sum_a += pooled_ranks[i];

    MwResult res;
    res.u = u_from_rank_sum(rank_sum_a, na);

    if (tie_sizes.size() == 1) {
        // every pooled value identical
        res.degenerate = true;
        res.p = 1.0;
        res.exact = mode != MwMode::normal_approx;
        return res;
    }

    const bool use_exact =
        mode == MwMode::exact || (mode == MwMode::automatic && n <= 16);
    if (use_exact) {
        if (n > 28) {
            throw ValidationError("mann_whitney_u: exact mode limited to n+m <= 28");
        }
        res.exact = true;
        res.p = exact_two_sided_p(pooled_ranks, na, res.u);
        return res;
    }

    const double mean_u = static_cast<double>(na) * static_cast<double>(nb) / 2.0;
    double tie_term = 0.0;
    for (const std::size_t t : tie_sizes) {
        const double td = static_cast<double>(t);
        tie_term += td * td * td - td;
    }
    const double nd = static_cast<double>(n);
    const double var_u = static_cast<double>(na) * static_cast<double>(nb) / 12.0 *
                         ((nd + 1.0) - tie_term / (nd * (nd - 1.0)));
    if (var_u <= 0.0) {
        res.degenerate = true;
        res.p = 1.0;
        return res;
    }
    const double diff = res.u - mean_u;
    const double cc = diff > 0.0 ? -0.5 : (diff < 0.0 ? 0.5 : 0.0); // continuity correction
    const double z = (diff + cc) / std::sqrt(var_u);
    res.p = std::min(1.0, 2.0 * normal_cdf(-std::fabs(z)));
    return res;
}

GroupComparison healthspan_shift(std::span<const double> group_a_detrended,
                                 std::span<const double> group_b_detrended, double beta_r,
                                 double gamma) {
    if (!(gamma > 0.0)) throw ValidationError("healthspan_shift: gamma must be positive");
    if (group_a_detrended.empty() || group_b_detrended.empty()) {
        throw ValidationError("healthspan_shift: both groups must be non-empty");
    }
    GroupComparison cmp;
    cmp.n_a = group_a_detrended.size();
    cmp.n_b = group_b_detrended.size();
    cmp.mean_diff = mean_of(group_a_detrended) - mean_of(group_b_detrended);
    cmp.delta_hs_years = -beta_r * cmp.mean_diff / gamma;
    const MwResult mw = mann_whitney_u(group_a_detrended, group_b_detrended);
    cmp.u_statistic = mw.u;
    cmp.p_value = mw.p;
    return cmp;
}

std::vector<std::pair<int, double>> averaging_curve(
    std::span<const WeeklyScoredSubject> subjects, const std::vector<int>& windows) {
    if (windows.empty()) throw ValidationError("averaging_curve: no windows");
    bool has0 = false, has1 = false;
    for (const auto& s : subjects) {
        if (s.group == 0) has0 = true;
        else if (s.group == 1) has1 = true;
        else throw ValidationError("averaging_curve: group labels must be 0 or 1");
        if (s.weekly_scores.empty()) {
            throw ValidationError("averaging_curve: subject " + s.id + " has no weekly scores");
        }
    }
    if (!has0 || !has1) throw ValidationError("averaging_curve: need two groups");

    std::vector<std::pair<int, double>> out;
    out.reserve(windows.size());
    for (const int k : windows) {
        if (k < 1) throw ValidationError("averaging_curve: window must be >= 1");
        std::size_t lacking = 0;
        for (const auto& s : subjects) {
            if (s.weekly_scores.size() < static_cast<std::size_t>(k)) ++lacking;
        }
        if (2 * lacking > subjects.size()) {
            throw ValidationError("averaging_curve: window " + std::to_string(k) +
                                  " exceeds available weeks for more than half the subjects");
        }
        std::vector<ScoredSubject> scored;
        scored.reserve(subjects.size());
        for (const auto& s : subjects) {
            const std::size_t take =
                std::min(s.weekly_scores.size(), static_cast<std::size_t>(k));
            double m = 0.0;
            for (std::size_t i = 0; i < take; ++i) m += s.weekly_scores[i];
            scored.push_back({s.id, s.age, s.sex, m / static_cast<double>(take)});
        }
        const std::vector<double> detrended = detrend_risk(scored);
        std::vector<double> ga, gb;
        for (std::size_t i = 0; i < subjects.size(); ++i) {
            (subjects[i].group == 0 ? ga : gb).push_back(detrended[i]);
        }
        const MwResult mw = mann_whitney_u(ga, gb);
        out.emplace_back(k, -std::log10(std::max(mw.p, 1e-300)));
    }
    return out;
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
    return pearson_correlation(x, y);
}

} // namespace actirisk::stats
