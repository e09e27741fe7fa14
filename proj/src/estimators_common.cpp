#include "policysim/estimators.hpp"

#include <algorithm>
#include <cmath>

namespace policysim {

EventEstimate make_event_estimate(double estimate, double se) {
    EventEstimate e;
    e.estimate = estimate;
    e.se = se;
    e.ci_low = estimate - kZ975 * se;
    e.ci_high = estimate + kZ975 * se;
    return e;
}

double CohortTable::share(std::size_t cohort, int event_t) const {
    if (!observed(cohort, event_t)) return 0.0;
    double total = 0.0;
    for (std::size_t e = 0; e < cohorts.size(); ++e) {
        if (observed(e, event_t)) total += static_cast<double>(cohorts[e].state_indices.size());
    }
    return static_cast<double>(cohorts[cohort].state_indices.size()) / total;
}

CohortTable build_cohort_table(const PanelDataset& data, const TreatmentSchedule& schedule) {
    CohortTable table;
    table.year_min = data.year_min();
    table.year_max = data.year_max();
    std::map<int, std::vector<int>> by_year;
    for (const auto& [state, year] : schedule.adoptions()) {
        const int idx = data.state_index(state);
        if (idx < 0) throw PanelError("schedule state '" + state + "' not in panel");
        by_year[year].push_back(idx);
    }
    for (auto& [year, members] : by_year) {
        std::sort(members.begin(), members.end());
        table.cohorts.push_back({year, std::move(members)});
    }
    return table;
}

const std::vector<std::string>& estimator_ids() {
    static const std::vector<std::string> ids = {"did_es", "ar_db",  "ascm",   "did_sa",
                                                 "did_ht", "did_2s", "did_imp"};
    return ids;
}

bool is_estimator_id(const std::string& id) {
    const auto& ids = estimator_ids();
    return std::find(ids.begin(), ids.end(), id) != ids.end();
}

EstimatorResult run_estimator(const std::string& id, const PanelDataset& data,
                              const TreatmentSchedule& schedule, const EstimatorOptions& options) {
    const EventWindow window =
        options.window ? *options.window : EventWindow::spanning(data, schedule);
    if (id == "did_es") return did_event_study(data, schedule, window);
    if (id == "ar_db") return ar_debiased(data, schedule, options.ar_outcome_lags,
                                          options.ar_treatment_lags);
    if (id == "ascm") return ascm_staggered(data, schedule, options.ascm_nu,
                                            options.ascm_ridge_lambda);
    if (id == "did_sa") return did_staggered_cs(data, schedule);
    if (id == "did_ht") return did_interaction_weighted(data, schedule, window);
    if (id == "did_2s")
        return did_two_stage(data, schedule, window, options.bootstrap_reps, options.bootstrap_seed);
    if (id == "did_imp")
        return did_imputation(data, schedule, window, options.bootstrap_reps, options.bootstrap_seed);
    throw ConfigError("unknown estimator id '" + id + "'");
}

}  // namespace policysim
