#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "policysim/estimators.hpp"
#include "policysim/numerics.hpp"

// Partially pooled augmented synthetic control for staggered adoption.
//
// Step 1: per treated unit, simplex donor weights minimize a blend of the
// unit's own pre-period imbalance and the average pre-period imbalance across
// treated units (aligned by years-before-adoption), with pooling weight nu.
// The coupled problem is solved by block coordinate descent: holding the
// other units' gaps fixed, each unit's subproblem is a simplex-constrained
// least squares that reuses the shared kernel.
//
// Step 2: per treated unit and post year, a ridge regression of donor
// outcomes in that year on standardized donor features (pre-period outcomes
// plus the covariate) corrects the residual imbalance of the synthetic
// control. Features are standardized so the penalty is scale-free.
//
// Gaps are averaged across treated units by event time; SEs come from a
// leave-one-treated-unit-out jackknife of those averages.

namespace policysim {

namespace {

struct TreatedUnit {
    int state = 0;          // state index
    int adoption = 0;       // adoption year
    int n_pre = 0;          // pre-period years
    VectorXd weights;       // donor weights
};

}  // namespace

EstimatorResult ascm_staggered(const PanelDataset& data, const TreatmentSchedule& schedule,
                               double nu, double ridge_lambda) {
    if (nu < 0.0 || nu > 1.0) throw ConfigError("ascm: nu must be in [0, 1]");
    if (ridge_lambda < 0.0) throw ConfigError("ascm: ridge_lambda must be >= 0");
    if (schedule.n_treated() == 0) throw DesignError("no treated states");

    std::vector<int> donors;
    for (int s = 0; s < data.n_states(); ++s) {
        if (!schedule.adoption_year(data.states()[s])) donors.push_back(s);
    }
    if (donors.empty()) throw DesignError("ascm: donor pool is empty");
    const int nd = static_cast<int>(donors.size());

    EstimatorResult res;
    res.estimator_id = "ascm";

    std::vector<TreatedUnit> units;
    for (const auto& [state, adoption] : schedule.adoptions()) {
        TreatedUnit u;
        u.state = data.state_index(state);
        u.adoption = adoption;
        u.n_pre = adoption - data.year_min();
        if (u.n_pre < 3) {
            res.note("unit " + state + " excluded: only " + std::to_string(u.n_pre) +
                     " pre-periods");
            continue;
        }
        u.weights = VectorXd::Constant(nd, 1.0 / nd);
        units.push_back(u);
    }
    if (units.empty()) throw DesignError("ascm: all treated units excluded (too few pre-periods)");
    const int nu_count = static_cast<int>(units.size());

    auto donor_outcome = [&](int d, int year) { return data.at(donors[d], year).outcome; };
    auto unit_outcome = [&](const TreatedUnit& u, int year) { return data.at(u.state, year).outcome; };

    // Lag bookkeeping for the pooled term: lag s = s years before adoption.
    int s_max = 0;
    for (const auto& u : units) s_max = std::max(s_max, u.n_pre);
    std::vector<double> lag_count(s_max + 1, 0.0);
    for (const auto& u : units) {
        for (int s = 1; s <= u.n_pre; ++s) lag_count[s] += 1.0;
    }

    // Gap of unit u at lag s under its current weights.
    auto lag_gap = [&](const TreatedUnit& u, int s) {
        const int year = u.adoption - s;
        double g = unit_outcome(u, year);
        for (int d = 0; d < nd; ++d) g -= u.weights[d] * donor_outcome(d, year);
        return g;
    };

    const int max_passes = 40;
    for (int pass = 0; pass < max_passes; ++pass) {
        double max_change = 0.0;
        for (auto& u : units) {
            const int pooled_rows = nu > 0.0 ? u.n_pre : 0;
            MatrixXd A(u.n_pre + pooled_rows, nd);
            VectorXd b(u.n_pre + pooled_rows);
            const double own_scale = std::sqrt((1.0 - nu) / (nu_count * u.n_pre));
            for (int s = 1; s <= u.n_pre; ++s) {
                const int year = u.adoption - s;
                for (int d = 0; d < nd; ++d) A(s - 1, d) = own_scale * donor_outcome(d, year);
                b[s - 1] = own_scale * unit_outcome(u, year);
            }
            if (nu > 0.0) {
                for (int s = 1; s <= u.n_pre; ++s) {
                    const double pool_scale = std::sqrt(nu / s_max) / lag_count[s];
                    double rest = 0.0;
                    for (const auto& v : units) {
                        if (&v != &u && s <= v.n_pre) rest += lag_gap(v, s);
                    }
                    const int year = u.adoption - s;
                    for (int d = 0; d < nd; ++d) {
                        A(u.n_pre + s - 1, d) = pool_scale * donor_outcome(d, year);
                    }
                    b[u.n_pre + s - 1] = pool_scale * (unit_outcome(u, year) + rest);
                }
            }
            VectorXd w_new;
            try {
                w_new = simplex_weights(A, b, 1e-9, 100000).weights;
            } catch (const SimplexNonConvergence& e) {
                w_new = e.best.weights;
                res.note("unit " + data.states()[u.state] + ": donor weights at best iterate (" +
                         std::to_string(e.best.kkt_residual) + " KKT residual)");
            }
            max_change = std::max(max_change, (w_new - u.weights).lpNorm<Eigen::Infinity>());
            u.weights = w_new;
        }
        if (max_change < 1e-9 || nu == 0.0) break;
    }

    // Step 2: ridge-corrected counterfactuals and per-unit gaps by event time.
    std::map<int, std::vector<double>> gaps_by_event;
    for (const auto& u : units) {
        // Feature columns: donor pre-period outcomes over this unit's pre
        // years, then the covariate at the predicted year (filled per year).
        const int nf = u.n_pre + 1;
        MatrixXd Z(nd, nf);
        for (int d = 0; d < nd; ++d) {
            for (int s = 0; s < u.n_pre; ++s) {
                Z(d, s) = donor_outcome(d, data.year_min() + s);
            }
        }
        VectorXd z_unit(nf);
        for (int s = 0; s < u.n_pre; ++s) z_unit[s] = unit_outcome(u, data.year_min() + s);

        for (int year = u.adoption; year <= data.year_max(); ++year) {
            for (int d = 0; d < nd; ++d) Z(d, nf - 1) = data.at(donors[d], year).covariate;
            z_unit[nf - 1] = data.at(u.state, year).covariate;

            // Standardize features over donors; constant columns are inert.
            VectorXd target(nd);
            for (int d = 0; d < nd; ++d) target[d] = donor_outcome(d, year);
            const double target_mean = target.mean();

            MatrixXd Zs = MatrixXd::Zero(nd, nf);
            VectorXd zs_unit = VectorXd::Zero(nf);
            VectorXd zs_synth = VectorXd::Zero(nf);
            for (int c = 0; c < nf; ++c) {
                const double mean = Z.col(c).mean();
                const double sd = std::sqrt((Z.col(c).array() - mean).square().sum() / nd);
                if (sd < 1e-12 * (1.0 + std::abs(mean))) continue;
                Zs.col(c) = (Z.col(c).array() - mean) / sd;
                zs_unit[c] = (z_unit[c] - mean) / sd;
                for (int d = 0; d < nd; ++d) zs_synth[c] += u.weights[d] * Zs(d, c);
            }
            const VectorXd eta =
                ridge(Zs, (target.array() - target_mean).matrix(), ridge_lambda * nd);

            double synth = 0.0;
            for (int d = 0; d < nd; ++d) synth += u.weights[d] * target[d];
            const double correction = (zs_unit - zs_synth).dot(eta);
            const double counterfactual = synth + correction;
            const int event_t = year - u.adoption + 1;
            gaps_by_event[event_t].push_back(unit_outcome(u, year) - counterfactual);
        }
    }

    for (const auto& [event_t, gaps] : gaps_by_event) {
        const int n = static_cast<int>(gaps.size());
        double mean = 0.0;
        for (double g : gaps) mean += g;
        mean /= n;
        double se = std::numeric_limits<double>::quiet_NaN();
        if (n >= 2) {
            // Delete-one jackknife over treated units.
            double sum = 0.0;
            for (double g : gaps) sum += g;
            double jk_mean = 0.0;
            std::vector<double> loo(n);
            for (int i = 0; i < n; ++i) {
                loo[i] = (sum - gaps[i]) / (n - 1);
                jk_mean += loo[i];
            }
            jk_mean /= n;
            double ss = 0.0;
            for (int i = 0; i < n; ++i) ss += (loo[i] - jk_mean) * (loo[i] - jk_mean);
            se = std::sqrt(ss * (n - 1) / n);
        } else {
            res.note("event " + std::to_string(event_t) + ": single treated unit, jackknife SE undefined");
        }
        res.effects[event_t] = make_event_estimate(mean, se);
    }
    return res;
}

}  // namespace policysim
