#include "policysim/dgp.hpp"

#include <algorithm>
#include <cmath>

namespace policysim {

std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::RampUp: return "ramp_up";
        case Scenario::RampDown: return "ramp_down";
        case Scenario::Temporary: return "temporary";
        case Scenario::Inconsistent: return "inconsistent";
        case Scenario::Null: return "null";
    }
    throw ConfigError("bad scenario enum");
}

Scenario scenario_from_name(const std::string& name) {
    if (name == "ramp_up") return Scenario::RampUp;
    if (name == "ramp_down") return Scenario::RampDown;
    if (name == "temporary") return Scenario::Temporary;
    if (name == "inconsistent") return Scenario::Inconsistent;
    if (name == "null") return Scenario::Null;
    throw ConfigError("unknown scenario '" + name +
                      "' (valid: ramp_up, ramp_down, temporary, inconsistent, null)");
}

const std::vector<Scenario>& default_scenarios() {
    static const std::vector<Scenario> all = {Scenario::RampUp, Scenario::RampDown,
                                              Scenario::Temporary, Scenario::Inconsistent};
    return all;
}

EffectProfile effect_profile(Scenario scenario) {
    // Full ramp effect F = 25/3 percent so linear fractions (.2,.4,.6,.8,1)*F
    // average exactly 5 percent.
    constexpr double F = 25.0 / 3.0;
    EffectProfile p;
    switch (scenario) {
        case Scenario::RampUp:
            p.percents = {0.2 * F, 0.4 * F, 0.6 * F, 0.8 * F, F};
            break;
        case Scenario::RampDown:
            p.percents = {F, 0.8 * F, 0.6 * F, 0.4 * F, 0.2 * F};
            break;
        case Scenario::Temporary:
            p.percents = {5.0, 10.0, 7.5, 2.5, 0.0};
            break;
        case Scenario::Inconsistent:
            p.percents = {5.0, 9.0, 3.0, 4.0, 4.0};
            break;
        case Scenario::Null:
            p.percents = {0.0, 0.0, 0.0, 0.0, 0.0};
            break;
    }
    return p;
}

TreatmentSchedule draw_treatment(const PanelDataset& data, int n_treated,
                                 YearInterval adoption_range, Rng& rng) {
    const int n_states = data.n_states();
    if (n_treated < 1 || n_treated >= n_states) {
        throw ConfigError("n_treated must be in [1, " + std::to_string(n_states - 1) +
                          "], got " + std::to_string(n_treated));
    }
    if (adoption_range.first > adoption_range.last || adoption_range.first < data.year_min() ||
        adoption_range.last > data.year_max()) {
        throw ConfigError("adoption range outside panel years");
    }
    const auto chosen = rng.sample_without_replacement(n_states, n_treated);
    std::map<std::string, int> adoptions;
    for (int idx : chosen) {
        adoptions[data.states()[idx]] = rng.uniform_int(adoption_range.first, adoption_range.last);
    }
    return TreatmentSchedule(data, std::move(adoptions));
}

std::pair<PanelDataset, TruthTable> apply_effects(const PanelDataset& data,
                                                  const TreatmentSchedule& schedule,
                                                  const EffectProfile& profile) {
    PanelDataset out = data;
    TruthTable truth;
    truth.cell_effects.assign(data.observations().size(), 0.0);

    std::map<int, double> sums;
    std::map<int, int> counts;

    for (std::size_t idx = 0; idx < out.observations().size(); ++idx) {
        auto& o = out.observation(idx);
        const auto adoption = schedule.adoption_year(o.state);
        if (!adoption) {
            o.treated = false;
            continue;
        }
        const int k = o.year - *adoption + 1;
        o.treated = k >= 1;
        if (k >= 1) {
            const double before = o.outcome;
            o.outcome = before * (1.0 - profile.percent_at(k) / 100.0);
            const double delta = o.outcome - before;
            truth.cell_effects[idx] = delta;
            sums[k] += delta;
            counts[k] += 1;
        }
    }
    for (const auto& [k, n] : counts) truth.average_effect[k] = sums[k] / n;
    return {std::move(out), std::move(truth)};
}

namespace {

// Centered 3-point moving average; endpoints use the available 2-point window.
void smooth3(std::vector<double>& v) {
    if (v.size() < 3) return;
    std::vector<double> out(v.size());
    out.front() = (v[0] + v[1]) / 2.0;
    out.back() = (v[v.size() - 2] + v[v.size() - 1]) / 2.0;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) out[i] = (v[i - 1] + v[i] + v[i + 1]) / 3.0;
    v = std::move(out);
}

}  // namespace

PanelDataset synthesize_states(const PanelDataset& data, int n_new, Rng& rng) {
    if (n_new < 1) throw ConfigError("n_new must be >= 1");
    constexpr double kNoiseSigma = 0.05;

    std::vector<PanelObservation> obs = data.observations();
    const int ny = data.n_years();

    int serial = 0;
    for (int k = 0; k < n_new; ++k) {
        std::string id;
        do {
            ++serial;
            char buf[16];
            std::snprintf(buf, sizeof(buf), "SYN%03d", serial);
            id = buf;
        } while (data.state_index(id) >= 0);

        const int donor = rng.uniform_int(0, data.n_states() - 1);
        std::vector<double> outcome(ny), covariate(ny);
        for (int t = 0; t < ny; ++t) {
            const auto& o = data.at(donor, data.year_min() + t);
            outcome[t] = o.outcome * rng.lognormal(0.0, kNoiseSigma);
            covariate[t] = o.covariate * rng.lognormal(0.0, kNoiseSigma);
        }
        smooth3(outcome);
        smooth3(covariate);
        for (int t = 0; t < ny; ++t) {
            PanelObservation o;
            o.state = id;
            o.year = data.year_min() + t;
            o.outcome = std::max(0.0, outcome[t]);
            o.covariate = std::max(0.0, covariate[t]);
            obs.push_back(std::move(o));
        }
    }
    return PanelDataset::from_observations(std::move(obs));
}

}  // namespace policysim
