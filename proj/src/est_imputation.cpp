#include <algorithm>
#include <climits>
#include <cmath>
#include <limits>
#include <map>
#include <optional>

#include "policysim/estimators.hpp"
#include "policysim/numerics.hpp"
#include "policysim/rng.hpp"

// Two-stage and imputation estimators. Both fit unit and year effects on the
// untreated observations (never-treated states plus pre-adoption rows of
// treated states) and then measure treated outcomes against the implied
// counterfactual:
//   - two-stage: the adjusted outcome is regressed on event-time dummies plus
//     the covariate over actively treated rows (the covariate enters stage 2,
//     not stage 1);
//   - imputation: stage 1 includes the covariate, and the per-row gaps are
//     averaged by event time with equal weights.
// Uncertainty for both comes from a state-clustered nonparametric bootstrap
// that re-runs both stages on each draw.

namespace policysim {

namespace {

constexpr int kNoEvent = INT_MIN;

struct Row {
    int unit = 0;      // cluster id within the working sample
    int year_idx = 0;  // 0-based year
    double y = 0.0;
    double x = 0.0;
    int event = kNoEvent;  // binned event time; kNoEvent for never treated
};

struct Stage1 {
    std::vector<double> alpha;  // per unit; NaN when unidentified
    std::vector<double> delta;  // per year index
    double beta = 0.0;
    std::string failure;        // non-empty when the fit is undefined
    bool ok() const { return failure.empty(); }
};

// Fixed-effect fit on untreated rows (event <= 0). Demeans to get the
// covariate slope, then recovers the unit/year levels by back-substitution
// sweeps. Units without untreated rows get NaN intercepts.
Stage1 fit_stage1(const std::vector<Row>& rows, int n_units, int n_years, bool with_covariate) {
    Stage1 out;
    out.alpha.assign(n_units, std::numeric_limits<double>::quiet_NaN());
    out.delta.assign(n_years, 0.0);

    std::vector<int> unit_count(n_units, 0), year_count(n_years, 0);
    std::vector<const Row*> untreated;
    untreated.reserve(rows.size());
    double scale = 1.0;
    for (const auto& r : rows) {
        if (r.event != kNoEvent && r.event >= 1) continue;
        untreated.push_back(&r);
        unit_count[r.unit] += 1;
        year_count[r.year_idx] += 1;
        scale = std::max(scale, std::abs(r.y));
    }
    for (int t = 0; t < n_years; ++t) {
        if (year_count[t] == 0) {
            out.failure = "year index " + std::to_string(t) + " has no untreated observations";
            return out;
        }
    }
    const std::size_t m = untreated.size();

    double beta = 0.0;
    if (with_covariate) {
        std::vector<double> yt(m), xt(m);
        for (std::size_t i = 0; i < m; ++i) {
            yt[i] = untreated[i]->y;
            xt[i] = untreated[i]->x;
        }
        std::vector<double> usum(n_units), tsum(n_years);
        auto demean = [&](std::vector<double>& v) {
            for (int sweep = 0; sweep < 10000; ++sweep) {
                double max_change = 0.0;
                std::fill(usum.begin(), usum.end(), 0.0);
                for (std::size_t i = 0; i < m; ++i) usum[untreated[i]->unit] += v[i];
                for (int u = 0; u < n_units; ++u) {
                    if (unit_count[u] > 0) usum[u] /= unit_count[u];
                    max_change = std::max(max_change, std::abs(usum[u]));
                }
                for (std::size_t i = 0; i < m; ++i) v[i] -= usum[untreated[i]->unit];
                std::fill(tsum.begin(), tsum.end(), 0.0);
                for (std::size_t i = 0; i < m; ++i) tsum[untreated[i]->year_idx] += v[i];
                for (int t = 0; t < n_years; ++t) {
                    tsum[t] /= year_count[t];
                    max_change = std::max(max_change, std::abs(tsum[t]));
                }
                for (std::size_t i = 0; i < m; ++i) v[i] -= tsum[untreated[i]->year_idx];
                if (max_change < 1e-11 * scale) break;
            }
        };
        demean(yt);
        demean(xt);
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            sxy += xt[i] * yt[i];
            sxx += xt[i] * xt[i];
        }
        beta = sxx > 1e-12 * scale * scale ? sxy / sxx : 0.0;
    }
    out.beta = beta;

    // Level recovery on R = y - beta * x by alternating means.
    std::vector<double> alpha(n_units, 0.0), delta(n_years, 0.0);
    std::vector<double> r(m);
    for (std::size_t i = 0; i < m; ++i) r[i] = untreated[i]->y - beta * untreated[i]->x;
    for (int sweep = 0; sweep < 10000; ++sweep) {
        double max_change = 0.0;
        std::vector<double> acc(n_units, 0.0);
        for (std::size_t i = 0; i < m; ++i) acc[untreated[i]->unit] += r[i] - delta[untreated[i]->year_idx];
        for (int u = 0; u < n_units; ++u) {
            if (unit_count[u] == 0) continue;
            const double next = acc[u] / unit_count[u];
            max_change = std::max(max_change, std::abs(next - alpha[u]));
            alpha[u] = next;
        }
        std::vector<double> acc_t(n_years, 0.0);
        for (std::size_t i = 0; i < m; ++i) acc_t[untreated[i]->year_idx] += r[i] - alpha[untreated[i]->unit];
        for (int t = 0; t < n_years; ++t) {
            const double next = acc_t[t] / year_count[t];
            max_change = std::max(max_change, std::abs(next - delta[t]));
            delta[t] = next;
        }
        if (max_change < 1e-12 * scale) break;
    }
    for (int u = 0; u < n_units; ++u) {
        if (unit_count[u] > 0) out.alpha[u] = alpha[u];
    }
    out.delta = delta;
    return out;
}

struct StageEstimates {
    std::map<int, double> tau;  // binned event time -> estimate
    std::string failure;
    bool ok() const { return failure.empty(); }
};

// Runs both stages for one working sample (full data or a bootstrap draw).
StageEstimates run_stages(const std::vector<Row>& rows, int n_units, int n_years,
                          bool covariate_in_stage1) {
    StageEstimates out;
    const Stage1 s1 = fit_stage1(rows, n_units, n_years, covariate_in_stage1);
    if (!s1.ok()) {
        out.failure = s1.failure;
        return out;
    }

    if (covariate_in_stage1) {
        // Imputation: equal-weighted average gaps per event time.
        std::map<int, double> sums;
        std::map<int, int> counts;
        for (const auto& r : rows) {
            if (r.event == kNoEvent || r.event < 1) continue;
            if (std::isnan(s1.alpha[r.unit])) continue;  // unit has no pre rows
            const double gap = r.y - s1.alpha[r.unit] - s1.delta[r.year_idx] - s1.beta * r.x;
            sums[r.event] += gap;
            counts[r.event] += 1;
        }
        if (sums.empty()) {
            out.failure = "no imputable treated rows";
            return out;
        }
        for (const auto& [e, sum] : sums) out.tau[e] = sum / counts[e];
        return out;
    }

    // Two-stage: regress the adjusted outcome on event dummies + covariate
    // over actively treated rows.
    std::vector<const Row*> treated;
    std::vector<int> events;
    for (const auto& r : rows) {
        if (r.event == kNoEvent || r.event < 1) continue;
        if (std::isnan(s1.alpha[r.unit])) continue;
        treated.push_back(&r);
        if (std::find(events.begin(), events.end(), r.event) == events.end())
            events.push_back(r.event);
    }
    if (treated.empty()) {
        out.failure = "no treated rows for stage 2";
        return out;
    }
    std::sort(events.begin(), events.end());
    const int n = static_cast<int>(treated.size());
    const int p = static_cast<int>(events.size());
    MatrixXd X = MatrixXd::Zero(n, p + 1);
    VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        const auto& r = *treated[i];
        const int col = static_cast<int>(std::lower_bound(events.begin(), events.end(), r.event) -
                                         events.begin());
        X(i, col) = 1.0;
        X(i, p) = r.x;
        y[i] = r.y - s1.alpha[r.unit] - s1.delta[r.year_idx];
    }
    const FitResult fit = ols(X, y);
    for (int c = 0; c < p; ++c) {
        if (std::find(fit.dropped.begin(), fit.dropped.end(), c) != fit.dropped.end()) continue;
        out.tau[events[c]] = fit.coefficients[c];
    }
    return out;
}

std::vector<Row> build_rows(const PanelDataset& data, const TreatmentSchedule& schedule,
                            const EventWindow& window) {
    std::vector<Row> rows;
    rows.reserve(data.observations().size());
    for (const auto& o : data.observations()) {
        Row r;
        r.unit = data.state_index(o.state);
        r.year_idx = o.year - data.year_min();
        r.y = o.outcome;
        r.x = o.covariate;
        const auto adoption = schedule.adoption_year(o.state);
        if (adoption) {
            const int e = o.year - *adoption + 1;
            r.event = e >= window.max_lag ? window.max_lag : (e <= window.min_lead ? window.min_lead : e);
        }
        rows.push_back(r);
    }
    return rows;
}

EstimatorResult run_bootstrap_estimator(const std::string& id, const PanelDataset& data,
                                        const TreatmentSchedule& schedule, const EventWindow& window,
                                        int bootstrap_reps, std::uint64_t bootstrap_seed,
                                        bool covariate_in_stage1) {
    window.validate();
    if (schedule.n_treated() == 0) throw DesignError("no treated states");
    if (schedule.n_treated() >= data.n_states()) throw DesignError("no control states");
    if (!data.balanced()) throw DesignError(id + ": panel must be balanced");

    const int n_units = data.n_states();
    const int n_years = data.n_years();
    const std::vector<Row> rows = build_rows(data, schedule, window);

    const StageEstimates point = run_stages(rows, n_units, n_years, covariate_in_stage1);
    if (!point.ok()) throw DesignError(id + ": " + point.failure);

    EstimatorResult res;
    res.estimator_id = id;

    // State-clustered bootstrap of both stages. Draws without a never-treated
    // state (or otherwise degenerate) are redrawn; the RNG advances
    // deterministically either way.
    std::map<int, std::vector<double>> draws_by_event;
    Rng rng(bootstrap_seed);
    const int max_attempts = bootstrap_reps * 10;
    int successes = 0, attempts = 0;
    std::vector<Row> brows(rows.size());
    while (successes < bootstrap_reps && attempts < max_attempts) {
        ++attempts;
        std::size_t pos = 0;
        bool any_control = false;
        for (int copy = 0; copy < n_units; ++copy) {
            const int src = rng.uniform_int(0, n_units - 1);
            const std::size_t base = static_cast<std::size_t>(src) * n_years;
            for (int t = 0; t < n_years; ++t) {
                brows[pos] = rows[base + t];
                brows[pos].unit = copy;
                ++pos;
            }
            if (rows[base].event == kNoEvent) any_control = true;
        }
        if (!any_control) continue;
        const StageEstimates est = run_stages(brows, n_units, n_years, covariate_in_stage1);
        if (!est.ok()) continue;
        ++successes;
        for (const auto& [e, v] : est.tau) draws_by_event[e].push_back(v);
    }
    if (successes < bootstrap_reps) {
        res.note("bootstrap: only " + std::to_string(successes) + " of " +
                 std::to_string(bootstrap_reps) + " draws usable");
    }

    for (const auto& [e, tau] : point.tau) {
        double se = std::numeric_limits<double>::quiet_NaN();
        const auto it = draws_by_event.find(e);
        if (it != draws_by_event.end() && it->second.size() >= 2) {
            const auto& v = it->second;
            double mean = 0.0;
            for (double t : v) mean += t;
            mean /= static_cast<double>(v.size());
            double ss = 0.0;
            for (double t : v) ss += (t - mean) * (t - mean);
            se = std::sqrt(ss / (static_cast<double>(v.size()) - 1.0));
        } else {
            res.note("event " + std::to_string(e) + ": bootstrap SE unavailable");
        }
        res.effects[e] = make_event_estimate(tau, se);
    }
    return res;
}

}  // namespace

EstimatorResult did_two_stage(const PanelDataset& data, const TreatmentSchedule& schedule,
                              const EventWindow& window, int bootstrap_reps,
                              std::uint64_t bootstrap_seed) {
    return run_bootstrap_estimator("did_2s", data, schedule, window, bootstrap_reps, bootstrap_seed,
                                   /*covariate_in_stage1=*/false);
}

EstimatorResult did_imputation(const PanelDataset& data, const TreatmentSchedule& schedule,
                               const EventWindow& window, int bootstrap_reps,
                               std::uint64_t bootstrap_seed) {
    return run_bootstrap_estimator("did_imp", data, schedule, window, bootstrap_reps, bootstrap_seed,
                                   /*covariate_in_stage1=*/true);
}

}  // namespace policysim
