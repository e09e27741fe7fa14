#pragma once

// Panel data model: a state-year panel of outcome rates and one covariate,
// plus the treatment-schedule and event-time bookkeeping shared by all
// estimators. Event time is defined so the first calendar year with the
// policy in effect is event time 1; the year before adoption is event time 0;
// earlier years are negative. Event times <= 0 are untreated periods.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "policysim/errors.hpp"

namespace policysim {

struct PanelObservation {
    std::string state;
    int year = 0;
    double outcome = 0.0;    // deaths per 100,000 residents
    double covariate = 0.0;  // unemployment rate per 100 residents
    bool treated = false;
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Balanced state-year panel. Construction from observations tolerates gaps
// (so validate_panel can describe them) but rejects duplicates outright.
// Estimators require a balanced panel; the harness validates once up front.
class PanelDataset {
  public:
    PanelDataset() = default;
    static PanelDataset from_observations(std::vector<PanelObservation> obs);

    const std::vector<std::string>& states() const { return states_; }
    int year_min() const { return year_min_; }
    int year_max() const { return year_max_; }
    int n_years() const { return year_max_ - year_min_ + 1; }
    int n_states() const { return static_cast<int>(states_.size()); }

    bool has_cell(int state_idx, int year) const;
    const PanelObservation& at(int state_idx, int year) const;
    PanelObservation& at(int state_idx, int year);

    // Observations in (state, year) order; absent cells skipped.
    const std::vector<PanelObservation>& observations() const { return obs_; }
    PanelObservation& observation(std::size_t idx) { return obs_[idx]; }

    int state_index(const std::string& state) const;  // -1 when unknown
    bool balanced() const;

  private:
    std::vector<std::string> states_;
    std::vector<PanelObservation> obs_;   // sorted by (state index, year)
    std::vector<int> cell_index_;         // states x years, -1 = absent
    int year_min_ = 0;
    int year_max_ = -1;

    int cell(int state_idx, int year) const {
        return cell_index_[static_cast<std::size_t>(state_idx) * n_years() + (year - year_min_)];
    }
    friend PanelDataset load_panel_csv(const std::string&, std::vector<std::string>*);
};

// Per-state adoption year; absent entry = never treated. Carries the panel's
// state list so lookups can distinguish "never treated" from "unknown state".
class TreatmentSchedule {
  public:
    TreatmentSchedule() = default;
    TreatmentSchedule(const PanelDataset& data, std::map<std::string, int> adoption_years);

    std::optional<int> adoption_year(const std::string& state) const;
    bool known(const std::string& state) const { return known_states_.count(state) > 0; }
    const std::map<std::string, int>& adoptions() const { return adoption_years_; }
    int n_treated() const { return static_cast<int>(adoption_years_.size()); }

  private:
    std::map<std::string, int> adoption_years_;
    std::set<std::string> known_states_;
};

struct EventWindow {
    int min_lead = -2;  // earliest (most negative) event time kept distinct
    int max_lag = 5;    // latest event time kept distinct

    void validate() const;
    // Window wide enough that no binning occurs for the given design.
    static EventWindow spanning(const PanelDataset& data, const TreatmentSchedule& schedule);
};

// CSV schema: header with state,year,crude_rate,unemployment_rate (any
// column order, extra columns ignored with a warning appended to *warnings).
PanelDataset load_panel_csv(const std::string& path, std::vector<std::string>* warnings = nullptr);
void write_panel_csv(const PanelDataset& data, const std::string& path);

ValidationReport validate_panel(const PanelDataset& data);

// year - adoption_year + 1 for treated states, nullopt for never-treated.
// Throws PanelError for states the schedule does not know.
std::optional<int> event_time(const std::string& state, int year, const TreatmentSchedule& schedule);

}  // namespace policysim
