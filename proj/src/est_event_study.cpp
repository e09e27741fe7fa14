#include <algorithm>
#include <climits>
#include <cmath>
#include <map>

#include "policysim/estimators.hpp"
#include "policysim/numerics.hpp"

// Event-study estimators on the full panel: the plain two-way fixed effects
// specification and the cohort-interaction-weighted variant. Both absorb
// unit and year effects, omit event time -1 as the reference period, bin
// leads at min_lead and lags at max_lag, and cluster by state.

namespace policysim {

namespace {

struct PanelArrays {
    std::vector<int> unit;            // state index per row
    std::vector<int> year;            // calendar year per row
    std::vector<int> cohort;          // cohort index per row, -1 for never treated
    std::vector<int> event;           // binned event time; INT_MIN for never treated
    VectorXd y;
    VectorXd x;
    int n_rows = 0;
};

constexpr int kNoEvent = INT_MIN;

int bin_event(int e, const EventWindow& w) {
    if (e <= w.min_lead) return w.min_lead;
    if (e >= w.max_lag) return w.max_lag;
    return e;
}

PanelArrays flatten(const PanelDataset& data, const TreatmentSchedule& schedule,
                    const EventWindow& window, const CohortTable& cohorts) {
    PanelArrays a;
    const auto& obs = data.observations();
    a.n_rows = static_cast<int>(obs.size());
    a.unit.resize(a.n_rows);
    a.year.resize(a.n_rows);
    a.cohort.assign(a.n_rows, -1);
    a.event.assign(a.n_rows, kNoEvent);
    a.y.resize(a.n_rows);
    a.x.resize(a.n_rows);

    std::map<int, int> cohort_of_year;
    for (std::size_t c = 0; c < cohorts.cohorts.size(); ++c) {
        cohort_of_year[cohorts.cohorts[c].adoption_year] = static_cast<int>(c);
    }

    for (int i = 0; i < a.n_rows; ++i) {
        const auto& o = obs[i];
        a.unit[i] = data.state_index(o.state);
        a.year[i] = o.year;
        a.y[i] = o.outcome;
        a.x[i] = o.covariate;
        const auto adoption = schedule.adoption_year(o.state);
        if (adoption) {
            a.cohort[i] = cohort_of_year.at(*adoption);
            a.event[i] = bin_event(o.year - *adoption + 1, window);
        }
    }
    return a;
}

// Dummy column ordering shared by both designs: post lags first so that in
// degenerate designs the deterministic leftmost-kept collinearity rule
// sacrifices an anticipation dummy, not an effect of interest.
std::vector<int> dummy_event_order(const EventWindow& w) {
    std::vector<int> order;
    for (int j = 1; j <= w.max_lag; ++j) order.push_back(j);
    for (int j = w.min_lead; j <= -2; ++j) order.push_back(j);
    order.push_back(0);
    return order;
}

struct AbsorbedFit {
    FitResult fit;
    MatrixXd vcov;
    MatrixXd design;  // demeaned
};

AbsorbedFit fit_two_way(const PanelArrays& a, const MatrixXd& dummies, int n_states, int n_years) {
    const int extra_cols = 1;  // covariate
    MatrixXd X(a.n_rows, dummies.cols() + extra_cols);
    X.leftCols(dummies.cols()) = dummies;
    X.col(dummies.cols()) = a.x;

    MatrixXd all(a.n_rows, X.cols() + 1);
    all.leftCols(X.cols()) = X;
    all.col(X.cols()) = a.y;
    const MatrixXd demeaned = absorb_two_way(all, a.unit, a.year);

    AbsorbedFit out;
    out.design = demeaned.leftCols(X.cols());
    const VectorXd yd = demeaned.col(X.cols());
    out.fit = ols(out.design, yd);
    // Degrees of freedom spent on the absorbed two-way effects.
    const int absorbed = n_states + n_years - 1;
    out.fit.dof -= absorbed;
    ClusterSpec clusters{a.unit};
    out.vcov = cluster_robust_vcov(out.fit, out.design, clusters, ClusterCorrection::CR1, absorbed);
    return out;
}

void require_controls(const TreatmentSchedule& schedule, const PanelDataset& data) {
    if (schedule.n_treated() == 0) throw DesignError("no treated states");
    if (schedule.n_treated() >= data.n_states()) throw DesignError("no control states");
}

}  // namespace

EstimatorResult did_event_study(const PanelDataset& data, const TreatmentSchedule& schedule,
                                const EventWindow& window) {
    window.validate();
    require_controls(schedule, data);
    const CohortTable cohorts = build_cohort_table(data, schedule);
    const PanelArrays a = flatten(data, schedule, window, cohorts);

    const std::vector<int> order = dummy_event_order(window);
    std::vector<int> used_events;
    std::vector<int> col_of_event;
    for (int e : order) {
        bool any = false;
        for (int i = 0; i < a.n_rows && !any; ++i) any = a.event[i] == e;
        if (any) used_events.push_back(e);
    }
    MatrixXd dummies = MatrixXd::Zero(a.n_rows, static_cast<Eigen::Index>(used_events.size()));
    for (std::size_t c = 0; c < used_events.size(); ++c) {
        for (int i = 0; i < a.n_rows; ++i) {
            if (a.event[i] == used_events[c]) dummies(i, c) = 1.0;
        }
    }

    const AbsorbedFit f = fit_two_way(a, dummies, data.n_states(), data.n_years());

    EstimatorResult res;
    res.estimator_id = "did_es";
    for (std::size_t c = 0; c < used_events.size(); ++c) {
        const int e = used_events[c];
        const bool kept = std::find(f.fit.dropped.begin(), f.fit.dropped.end(),
                                    static_cast<int>(c)) == f.fit.dropped.end();
        if (!kept) {
            res.note("event " + std::to_string(e) + ": dummy collinear, absorbed into reference");
            continue;
        }
        const double est = f.fit.coefficients[c];
        const double se = std::sqrt(std::max(0.0, f.vcov(c, c)));
        if (e == 0) {
            res.note("event 0 anticipation coefficient: " + std::to_string(est));
            continue;
        }
        res.effects[e] = make_event_estimate(est, se);
    }
    return res;
}

EstimatorResult did_interaction_weighted(const PanelDataset& data,
                                         const TreatmentSchedule& schedule,
                                         const EventWindow& window) {
    window.validate();
    require_controls(schedule, data);
    const CohortTable cohorts = build_cohort_table(data, schedule);
    const PanelArrays a = flatten(data, schedule, window, cohorts);
    const int n_cohorts = static_cast<int>(cohorts.cohorts.size());

    // Cohort x binned-event interaction dummies, post effects first.
    struct Cell {
        int cohort;
        int event;
    };
    std::vector<Cell> cells;
    for (int e : dummy_event_order(window)) {
        for (int c = 0; c < n_cohorts; ++c) {
            bool any = false;
            for (int i = 0; i < a.n_rows && !any; ++i) {
                any = a.cohort[i] == c && a.event[i] == e;
            }
            if (any) cells.push_back({c, e});
        }
    }
    MatrixXd dummies = MatrixXd::Zero(a.n_rows, static_cast<Eigen::Index>(cells.size()));
    for (std::size_t k = 0; k < cells.size(); ++k) {
        for (int i = 0; i < a.n_rows; ++i) {
            if (a.cohort[i] == cells[k].cohort && a.event[i] == cells[k].event) dummies(i, k) = 1.0;
        }
    }

    const AbsorbedFit f = fit_two_way(a, dummies, data.n_states(), data.n_years());

    // Aggregate cohort coefficients with size shares at each event time.
    EstimatorResult res;
    res.estimator_id = "did_ht";
    std::map<int, std::vector<std::size_t>> cells_at_event;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const bool kept = std::find(f.fit.dropped.begin(), f.fit.dropped.end(),
                                    static_cast<int>(k)) == f.fit.dropped.end();
        if (!kept) {
            res.note("cohort " + std::to_string(cohorts.cohorts[cells[k].cohort].adoption_year) +
                     " event " + std::to_string(cells[k].event) + ": dummy collinear, dropped");
            continue;
        }
        cells_at_event[cells[k].event].push_back(k);
    }

    for (const auto& [e, members] : cells_at_event) {
        double n_total = 0.0;
        for (std::size_t k : members) {
            n_total += static_cast<double>(cohorts.cohorts[cells[k].cohort].state_indices.size());
        }
        double est = 0.0;
        VectorXd grad = VectorXd::Zero(f.fit.coefficients.size());
        for (std::size_t k : members) {
            const double share =
                static_cast<double>(cohorts.cohorts[cells[k].cohort].state_indices.size()) / n_total;
            est += share * f.fit.coefficients[k];
            grad[k] = share;
        }
        const double var = grad.transpose() * f.vcov * grad;
        if (e == 0) {
            res.note("event 0 anticipation aggregate: " + std::to_string(est));
            continue;
        }
        res.effects[e] = make_event_estimate(est, std::sqrt(std::max(0.0, var)));
    }
    return res;
}

}  // namespace policysim
