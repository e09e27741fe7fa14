#include "policysim/panel.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "policysim/text.hpp"

namespace policysim {

PanelDataset PanelDataset::from_observations(std::vector<PanelObservation> obs) {
    if (obs.empty()) throw PanelError("no observations");

    PanelDataset out;
    std::set<std::string> state_set;
    int ymin = obs.front().year, ymax = obs.front().year;
    for (const auto& o : obs) {
        state_set.insert(o.state);
        ymin = std::min(ymin, o.year);
        ymax = std::max(ymax, o.year);
    }
    out.states_.assign(state_set.begin(), state_set.end());
    out.year_min_ = ymin;
    out.year_max_ = ymax;

    std::unordered_map<std::string, int> index;
    for (int s = 0; s < out.n_states(); ++s) index[out.states_[s]] = s;

    std::sort(obs.begin(), obs.end(), [&](const PanelObservation& a, const PanelObservation& b) {
        const int sa = index[a.state], sb = index[b.state];
        return sa != sb ? sa < sb : a.year < b.year;
    });

    out.cell_index_.assign(static_cast<std::size_t>(out.n_states()) * out.n_years(), -1);
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const auto& o = obs[i];
        const int s = index[o.state];
        const std::size_t c = static_cast<std::size_t>(s) * out.n_years() + (o.year - ymin);
        if (out.cell_index_[c] != -1) {
            throw PanelError("duplicate (state, year): (" + o.state + ", " + std::to_string(o.year) + ")");
        }
        out.cell_index_[c] = static_cast<int>(i);
    }
    out.obs_ = std::move(obs);
    return out;
}

bool PanelDataset::has_cell(int state_idx, int year) const {
    if (state_idx < 0 || state_idx >= n_states() || year < year_min_ || year > year_max_) return false;
    return cell(state_idx, year) >= 0;
}

const PanelObservation& PanelDataset::at(int state_idx, int year) const {
    const int i = cell(state_idx, year);
    if (i < 0) {
        throw PanelError("missing cell (" + states_[state_idx] + ", " + std::to_string(year) + ")");
    }
    return obs_[i];
}

PanelObservation& PanelDataset::at(int state_idx, int year) {
    const int i = cell(state_idx, year);
    if (i < 0) {
        throw PanelError("missing cell (" + states_[state_idx] + ", " + std::to_string(year) + ")");
    }
    return obs_[i];
}

int PanelDataset::state_index(const std::string& state) const {
    const auto it = std::lower_bound(states_.begin(), states_.end(), state);
    if (it == states_.end() || *it != state) return -1;
    return static_cast<int>(it - states_.begin());
}

bool PanelDataset::balanced() const {
    return static_cast<int>(obs_.size()) == n_states() * n_years();
}

TreatmentSchedule::TreatmentSchedule(const PanelDataset& data, std::map<std::string, int> adoption_years)
    : adoption_years_(std::move(adoption_years)) {
    known_states_.insert(data.states().begin(), data.states().end());
    for (const auto& [state, year] : adoption_years_) {
        if (!known(state)) throw PanelError("schedule names unknown state '" + state + "'");
        if (year < data.year_min() || year > data.year_max()) {
            throw PanelError("adoption year " + std::to_string(year) + " for " + state +
                             " outside panel years");
        }
    }
    if (adoption_years_.size() >= known_states_.size()) {
        throw DesignError("no never-treated state: control pool is empty");
    }
}

std::optional<int> TreatmentSchedule::adoption_year(const std::string& state) const {
    const auto it = adoption_years_.find(state);
    if (it == adoption_years_.end()) return std::nullopt;
    return it->second;
}

void EventWindow::validate() const {
    if (!(min_lead < -1)) throw ConfigError("event window: min_lead must be < -1");
    if (!(max_lag >= 5)) throw ConfigError("event window: max_lag must be >= 5");
}

EventWindow EventWindow::spanning(const PanelDataset& data, const TreatmentSchedule& schedule) {
    EventWindow w;
    int earliest = data.year_max(), latest = data.year_min();
    for (const auto& [state, year] : schedule.adoptions()) {
        earliest = std::min(earliest, year);
        latest = std::max(latest, year);
    }
    w.min_lead = std::min(-2, data.year_min() - latest + 1);
    w.max_lag = std::max(5, data.year_max() - earliest + 1);
    return w;
}

PanelDataset load_panel_csv(const std::string& path, std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw PanelError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw PanelError("no observations in '" + path + "'");

    const auto header = split_csv_line(line);
    const std::vector<std::string> required = {"state", "year", "crude_rate", "unemployment_rate"};
    std::map<std::string, int> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = static_cast<int>(i);
    for (const auto& name : required) {
        if (!col.count(name)) throw PanelError("missing column '" + name + "' in '" + path + "'");
    }
    if (warnings) {
        for (const auto& name : header) {
            if (std::find(required.begin(), required.end(), name) == required.end()) {
                warnings->push_back("ignoring extra column '" + name + "'");
            }
        }
    }

    std::vector<PanelObservation> obs;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() < header.size()) {
            throw PanelError("row " + std::to_string(row) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        }
        const std::string ctx = "row " + std::to_string(row) + " of '" + path + "'";
        PanelObservation o;
        o.state = fields[col["state"]];
        if (o.state.empty()) throw PanelError(ctx + ": empty state id");
        o.year = parse_int(fields[col["year"]], ctx);
        o.outcome = parse_double(fields[col["crude_rate"]], ctx);
        o.covariate = parse_double(fields[col["unemployment_rate"]], ctx);
        if (std::isnan(o.outcome) || std::isnan(o.covariate)) {
            throw PanelError(ctx + ": missing value");
        }
        obs.push_back(std::move(o));
    }
    if (obs.empty()) throw PanelError("no observations in '" + path + "'");

    // from_observations reports duplicates; re-map its message to name the file.
    try {
        return PanelDataset::from_observations(std::move(obs));
    } catch (const PanelError& e) {
        throw PanelError(std::string(e.what()) + " in '" + path + "'");
    }
}

void write_panel_csv(const PanelDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw PanelError("cannot write '" + path + "'");
    out << "state,year,crude_rate,unemployment_rate\n";
    for (const auto& o : data.observations()) {
        out << o.state << ',' << o.year << ',' << num_to_string(o.outcome) << ','
            << num_to_string(o.covariate) << '\n';
    }
    if (!out) throw PanelError("write failed for '" + path + "'");
}

ValidationReport validate_panel(const PanelDataset& data) {
    ValidationReport report;
    for (int s = 0; s < data.n_states(); ++s) {
        for (int y = data.year_min(); y <= data.year_max(); ++y) {
            if (!data.has_cell(s, y)) {
                report.violations.push_back("unbalanced: " + data.states()[s] + " missing " +
                                            std::to_string(y));
            }
        }
    }
    for (int y = data.year_min(); y <= data.year_max(); ++y) {
        bool any = false;
        for (int s = 0; s < data.n_states() && !any; ++s) any = data.has_cell(s, y);
        if (!any) report.violations.push_back("year gap: no observations in " + std::to_string(y));
    }
    for (const auto& o : data.observations()) {
        if (o.outcome < 0.0) {
            report.violations.push_back("negative outcome at (" + o.state + ", " +
                                        std::to_string(o.year) + ")");
        }
        if (o.covariate < 0.0) {
            report.violations.push_back("negative covariate at (" + o.state + ", " +
                                        std::to_string(o.year) + ")");
        }
    }
    // Absorbing-treatment check: once on, stays on.
    for (int s = 0; s < data.n_states(); ++s) {
        bool seen = false;
        for (int y = data.year_min(); y <= data.year_max(); ++y) {
            if (!data.has_cell(s, y)) continue;
            const bool t = data.at(s, y).treated;
            if (seen && !t) {
                report.violations.push_back("treatment not absorbing for " + data.states()[s] +
                                            " at " + std::to_string(y));
            }
            seen = seen || t;
        }
    }
    return report;
}

std::optional<int> event_time(const std::string& state, int year, const TreatmentSchedule& schedule) {
    if (!schedule.known(state)) throw PanelError("unknown state '" + state + "'");
    const auto adoption = schedule.adoption_year(state);
    if (!adoption) return std::nullopt;
    return year - *adoption + 1;
}

}  // namespace policysim
