#pragma once

// The seven time-varying policy-effect estimators. Each maps an augmented
// panel plus a treatment schedule to per-event-time estimates with 95%
// normal CIs. Event time -1 is the omitted reference period everywhere; the
// event-0 anticipation coefficient is estimated where a design defines it
// but reported only through diagnostics.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "policysim/panel.hpp"

namespace policysim {

inline constexpr double kZ975 = 1.959964;

struct EventEstimate {
    double estimate = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

EventEstimate make_event_estimate(double estimate, double se);

struct EstimatorResult {
    std::string estimator_id;
    std::map<int, EventEstimate> effects;  // keys: leads <= -2 and lags >= 1
    bool converged = true;
    std::vector<std::string> diagnostics;

    void note(const std::string& msg) { diagnostics.push_back(msg); }
};

// Adoption-year cohorts and their size shares at each event time.
struct CohortTable {
    struct Cohort {
        int adoption_year = 0;
        std::vector<int> state_indices;
    };
    std::vector<Cohort> cohorts;  // ascending adoption year
    int year_min = 0;
    int year_max = 0;

    bool observed(std::size_t cohort, int event_t) const {
        const int year = cohorts[cohort].adoption_year + event_t - 1;
        return year >= year_min && year <= year_max;
    }
    // Cohort-size share among cohorts observed at event_t; 0 when unobserved.
    double share(std::size_t cohort, int event_t) const;
};

CohortTable build_cohort_table(const PanelDataset& data, const TreatmentSchedule& schedule);

struct EstimatorOptions {
    std::optional<EventWindow> window;  // default: spanning window, no binning
    double ascm_nu = 0.5;
    double ascm_ridge_lambda = 0.1;
    int ar_outcome_lags = 1;
    int ar_treatment_lags = 5;
    int bootstrap_reps = 200;
    std::uint64_t bootstrap_seed = 1;
};

// Two-way fixed effects event study with state-clustered CR1 errors.
EstimatorResult did_event_study(const PanelDataset& data, const TreatmentSchedule& schedule,
                                const EventWindow& window);

// Debiased autoregressive model: lagged outcomes purged of prior treatment
// effects; event-time effects are partial sums of the treatment-history
// coefficients; delta-method SEs on the cluster-robust NLS sandwich.
EstimatorResult ar_debiased(const PanelDataset& data, const TreatmentSchedule& schedule,
                            int k_lags = 1, int l_lags = 5);

// Partially pooled augmented synthetic control with ridge bias correction
// and leave-one-treated-unit-out jackknife SEs.
EstimatorResult ascm_staggered(const PanelDataset& data, const TreatmentSchedule& schedule,
                               double nu = 0.5, double ridge_lambda = 0.1);

// Group-time average treatment effects (doubly robust, never-treated
// controls, base period g-1) aggregated to event time with cohort-size
// weights; influence-function SEs clustered by state.
EstimatorResult did_staggered_cs(const PanelDataset& data, const TreatmentSchedule& schedule);

// Interaction-weighted event study: cohort x event-time saturated regression
// aggregated with cohort shares; delta-method SEs.
EstimatorResult did_interaction_weighted(const PanelDataset& data, const TreatmentSchedule& schedule,
                                         const EventWindow& window);

// Two-stage estimator: stage 1 fits unit and year effects on untreated rows,
// stage 2 regresses the adjusted outcome on event-time dummies plus the
// covariate over treated rows. State-clustered bootstrap SEs.
EstimatorResult did_two_stage(const PanelDataset& data, const TreatmentSchedule& schedule,
                              const EventWindow& window, int bootstrap_reps = 200,
                              std::uint64_t bootstrap_seed = 1);

// Imputation estimator: stage 1 fits unit/year effects plus covariate on
// untreated rows, stage 2 averages observed-minus-imputed gaps by event time.
// State-clustered bootstrap SEs.
EstimatorResult did_imputation(const PanelDataset& data, const TreatmentSchedule& schedule,
                               const EventWindow& window, int bootstrap_reps = 200,
                               std::uint64_t bootstrap_seed = 1);

// Canonical estimator ids, in reporting order.
const std::vector<std::string>& estimator_ids();
bool is_estimator_id(const std::string& id);

// Dispatch by id. Exceptions from the underlying estimator propagate; the
// harness is responsible for capturing them as failed replicate entries.
EstimatorResult run_estimator(const std::string& id, const PanelDataset& data,
                              const TreatmentSchedule& schedule, const EstimatorOptions& options);

}  // namespace policysim
