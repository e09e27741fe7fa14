#pragma once

// Data-generating process for the simulation studies: random staggered
// treatment assignment, the time-varying effect scenarios, outcome
// augmentation, and a synthetic-state expander for sample-size runs.

#include <array>
#include <map>
#include <string>
#include <vector>

#include "policysim/panel.hpp"
#include "policysim/rng.hpp"

namespace policysim {

enum class Scenario { RampUp, RampDown, Temporary, Inconsistent, Null };

std::string scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);
const std::vector<Scenario>& default_scenarios();  // the four non-null ones

// Percent reduction in the outcome for post-adoption years 1..5. Event times
// past 5 keep the year-5 effect. The four study scenarios average exactly 5
// and stay within [0, 10]; Null is all zeros.
struct EffectProfile {
    std::array<double, 5> percents{};

    double percent_at(int event_time) const {
        if (event_time < 1) return 0.0;
        return percents[event_time > 5 ? 4 : event_time - 1];
    }
};

EffectProfile effect_profile(Scenario scenario);

// Additive true effects produced by apply_effects: one entry per observation
// (0 for untreated cells) plus the per-event-time averages over treated
// observations, which are the targets the metrics compare estimates against.
struct TruthTable {
    std::vector<double> cell_effects;       // parallel to dataset observations
    std::map<int, double> average_effect;   // event time -> mean additive effect

    double truth_at(int event_time) const {
        const auto it = average_effect.find(event_time);
        return it == average_effect.end() ? 0.0 : it->second;
    }
};

struct YearInterval {
    int first = 0;
    int last = 0;
};

// Draws n_treated distinct states uniformly without replacement and assigns
// each an adoption year uniform on adoption_range.
TreatmentSchedule draw_treatment(const PanelDataset& data, int n_treated,
                                 YearInterval adoption_range, Rng& rng);

// Multiplies treated outcomes at event time k by (1 - p_k/100), sets treated
// flags per the schedule, and records the additive truths.
std::pair<PanelDataset, TruthTable> apply_effects(const PanelDataset& data,
                                                  const TreatmentSchedule& schedule,
                                                  const EffectProfile& profile);

// Adds n_new synthetic states: donor trajectories resampled with
// multiplicative lognormal noise (sigma 0.05) then 3-point moving-average
// smoothing. Outcomes and covariates stay nonnegative.
PanelDataset synthesize_states(const PanelDataset& data, int n_new, Rng& rng);

}  // namespace policysim
