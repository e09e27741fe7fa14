#include <algorithm>
#include <cmath>
#include <map>

#include "policysim/estimators.hpp"
#include "policysim/numerics.hpp"

// Group-time average treatment effects with doubly robust estimation.
//
// For each cohort g and post year t, the long difference dY = Y_t - Y_{g-1}
// is compared between the cohort and the never-treated pool: an outcome
// regression of dY on the base-period covariate fitted among never-treated
// states, combined with odds weights from a logit of cohort membership on
// the same covariate. Event-time effects aggregate ATT(g, g+j-1) across
// cohorts with cohort-size weights; variance comes from the per-state
// influence contributions (states are the clusters, one row per state).

namespace policysim {

namespace {

struct CellResult {
    double att = 0.0;
    // state index -> influence contribution psi_s / n_cell
    std::map<int, double> influence;
    bool ok = false;
};

}  // namespace

EstimatorResult did_staggered_cs(const PanelDataset& data, const TreatmentSchedule& schedule) {
    if (schedule.n_treated() == 0) throw DesignError("no treated states");

    std::vector<int> never;
    for (int s = 0; s < data.n_states(); ++s) {
        if (!schedule.adoption_year(data.states()[s])) never.push_back(s);
    }
    if (never.empty()) throw DesignError("did_sa: never-treated pool is empty");

    const CohortTable cohorts = build_cohort_table(data, schedule);

    EstimatorResult res;
    res.estimator_id = "did_sa";

    // ATT(g,t) per (cohort index, event time).
    std::map<std::pair<std::size_t, int>, CellResult> cells;
    int max_event = 0;

    for (std::size_t c = 0; c < cohorts.cohorts.size(); ++c) {
        const auto& cohort = cohorts.cohorts[c];
        const int g = cohort.adoption_year;
        const int base = g - 1;
        if (base < data.year_min()) {
            res.note("cohort " + std::to_string(g) + " dropped: base period outside panel");
            continue;
        }
        const int n1 = static_cast<int>(cohort.state_indices.size());
        const int n0 = static_cast<int>(never.size());
        const int n = n1 + n0;

        for (int t = g; t <= data.year_max(); ++t) {
            const int event_t = t - g + 1;
            max_event = std::max(max_event, event_t);

            // Stack cohort rows first, then never-treated.
            VectorXd dy(n), xbase(n), treated(n);
            std::vector<int> state_of(n);
            for (int i = 0; i < n1; ++i) {
                const int s = cohort.state_indices[i];
                dy[i] = data.at(s, t).outcome - data.at(s, base).outcome;
                xbase[i] = data.at(s, base).covariate;
                treated[i] = 1.0;
                state_of[i] = s;
            }
            for (int i = 0; i < n0; ++i) {
                const int s = never[i];
                dy[n1 + i] = data.at(s, t).outcome - data.at(s, base).outcome;
                xbase[n1 + i] = data.at(s, base).covariate;
                treated[n1 + i] = 0.0;
                state_of[n1 + i] = s;
            }

            // Outcome regression among never-treated: dY ~ 1 + X_base.
            MatrixXd Xc(n0, 2);
            Xc.col(0).setOnes();
            Xc.col(1) = xbase.tail(n0);
            const FitResult orfit = ols(Xc, dy.tail(n0));
            auto m_hat = [&](double x) {
                return orfit.coefficients[0] + orfit.coefficients[1] * x;
            };

            // Propensity of cohort membership: logit(treated ~ 1 + X_base).
            VectorXd odds(n);
            bool constant_ps = false;
            try {
                MatrixXd Xp(n, 2);
                Xp.col(0).setOnes();
                Xp.col(1) = xbase;
                const VectorXd beta = logistic_fit(Xp, treated);
                for (int i = 0; i < n; ++i) {
                    const double p =
                        std::clamp(1.0 / (1.0 + std::exp(-(beta[0] + beta[1] * xbase[i]))),
                                   1e-6, 1.0 - 1e-6);
                    odds[i] = p / (1.0 - p);
                }
            } catch (const NumericError& e) {
                constant_ps = true;
                odds.setConstant(static_cast<double>(n1) / n0);
                res.note("cohort " + std::to_string(g) + " year " + std::to_string(t) +
                         ": propensity fell back to constant (" + e.what() + ")");
            }
            (void)constant_ps;

            VectorXd e(n);
            for (int i = 0; i < n; ++i) e[i] = dy[i] - m_hat(xbase[i]);

            double a1 = 0.0;
            for (int i = 0; i < n1; ++i) a1 += e[i];
            a1 /= n1;

            double w0_sum = 0.0, a0 = 0.0;
            for (int i = n1; i < n; ++i) {
                w0_sum += odds[i];
                a0 += odds[i] * e[i];
            }
            if (w0_sum <= 0.0) {
                res.note("cohort " + std::to_string(g) + " year " + std::to_string(t) +
                         ": zero control weight, cell dropped");
                continue;
            }
            a0 /= w0_sum;

            CellResult cell;
            cell.att = a1 - a0;
            const double pi1 = static_cast<double>(n1) / n;
            const double mean_w0 = w0_sum / n;
            for (int i = 0; i < n; ++i) {
                const double psi = treated[i] > 0.5
                                       ? (e[i] - a1) / pi1
                                       : -odds[i] * (e[i] - a0) / mean_w0;
                cell.influence[state_of[i]] += psi / n;
            }
            cell.ok = true;
            cells[{c, event_t}] = std::move(cell);
        }
    }

    // Dynamic aggregation with cohort-size shares; variance from the
    // share-weighted state influences.
    for (int j = 1; j <= max_event; ++j) {
        double total_size = 0.0;
        std::vector<std::size_t> members;
        for (std::size_t c = 0; c < cohorts.cohorts.size(); ++c) {
            if (cells.count({c, j})) {
                members.push_back(c);
                total_size += static_cast<double>(cohorts.cohorts[c].state_indices.size());
            }
        }
        if (members.empty()) continue;

        double tau = 0.0;
        std::map<int, double> phi;
        for (std::size_t c : members) {
            const double share =
                static_cast<double>(cohorts.cohorts[c].state_indices.size()) / total_size;
            const auto& cell = cells.at({c, j});
            tau += share * cell.att;
            for (const auto& [s, v] : cell.influence) phi[s] += share * v;
        }
        double var = 0.0;
        for (const auto& [s, v] : phi) var += v * v;
        res.effects[j] = make_event_estimate(tau, std::sqrt(std::max(0.0, var)));
    }
    if (res.effects.empty()) throw DesignError("did_sa: no estimable (cohort, period) cells");
    return res;
}

}  // namespace policysim
