#include <algorithm>
#include <climits>
#include <cmath>

#include "policysim/estimators.hpp"
#include "policysim/numerics.hpp"

// Debiased autoregressive estimator. The outcome is modeled as a function of
// state intercepts, the covariate, k lagged outcomes purged of prior
// treatment effects, and the treatment history up to l lags:
//
//   Y_it = a_i + b*X_it + sum_b d_b * (Y_{i,t-b} - sum_z th_z A_{i,t-b-z})
//        + sum_z th_z A_{i,t-z} + e_it
//
// Because treatment is absorbing, the effect at event time j is the partial
// sum of th_0..th_{j-1}. The model is bilinear in (d, th), so it is fit by
// Levenberg-Marquardt with a warm start: d from a plain AR fit, th from
// event-study first differences.

namespace policysim {

namespace {

struct ArData {
    std::vector<int> unit;   // state index per usable row
    std::vector<int> year;
    VectorXd y;
    VectorXd x;
    int n_rows = 0;
    int n_states = 0;
};

// Treatment indicator with natural extension: 0 before the panel starts and
// for never-treated states.
inline double treat_at(const std::vector<int>& adoption, int state, int year) {
    return (adoption[state] != INT_MAX && year >= adoption[state]) ? 1.0 : 0.0;
}

}  // namespace

EstimatorResult ar_debiased(const PanelDataset& data, const TreatmentSchedule& schedule,
                            int k_lags, int l_lags) {
    if (k_lags < 1) throw ConfigError("ar_debiased: k_lags must be >= 1");
    if (l_lags < 1) throw ConfigError("ar_debiased: l_lags must be >= 1");
    if (schedule.n_treated() == 0) throw DesignError("no treated states");
    if (data.n_years() - k_lags < 1) {
        throw DesignError("ar_debiased: panel too short for " + std::to_string(k_lags) +
                          " outcome lags");
    }

    const int S = data.n_states();
    std::vector<int> adoption(S, INT_MAX);
    for (const auto& [state, year] : schedule.adoptions()) adoption[data.state_index(state)] = year;

    ArData d;
    d.n_states = S;
    for (int s = 0; s < S; ++s) {
        for (int y = data.year_min() + k_lags; y <= data.year_max(); ++y) {
            d.unit.push_back(s);
            d.year.push_back(y);
        }
    }
    d.n_rows = static_cast<int>(d.unit.size());
    d.y.resize(d.n_rows);
    d.x.resize(d.n_rows);
    for (int i = 0; i < d.n_rows; ++i) {
        const auto& o = data.at(d.unit[i], d.year[i]);
        d.y[i] = o.outcome;
        d.x[i] = o.covariate;
    }
    const int n_params = S + 1 + k_lags + (l_lags + 1);
    if (d.n_rows <= n_params) {
        throw DesignError("ar_debiased: " + std::to_string(d.n_rows) + " usable rows cannot fit " +
                          std::to_string(n_params) + " parameters");
    }

    // Parameter layout: [alpha_0..alpha_{S-1}, beta, delta_1..delta_k, theta_0..theta_l].
    const int i_beta = S;
    const int i_delta = S + 1;
    const int i_theta = i_delta + k_lags;

    auto lagged_outcome = [&](int state, int year) { return data.at(state, year).outcome; };

    auto residual_fn = [&](const VectorXd& p) -> VectorXd {
        VectorXd r(d.n_rows);
        for (int i = 0; i < d.n_rows; ++i) {
            const int s = d.unit[i];
            const int t = d.year[i];
            double pred = p[S + 0] * d.x[i] + p[s];
            for (int b = 1; b <= k_lags; ++b) {
                double debiased = lagged_outcome(s, t - b);
                for (int z = 0; z <= l_lags; ++z) {
                    debiased -= p[i_theta + z] * treat_at(adoption, s, t - b - z);
                }
                pred += p[i_delta + b - 1] * debiased;
            }
            for (int z = 0; z <= l_lags; ++z) pred += p[i_theta + z] * treat_at(adoption, s, t - z);
            r[i] = d.y[i] - pred;
        }
        return r;
    };

    auto jacobian_fn = [&](const VectorXd& p) -> MatrixXd {
        MatrixXd J = MatrixXd::Zero(d.n_rows, n_params);
        for (int i = 0; i < d.n_rows; ++i) {
            const int s = d.unit[i];
            const int t = d.year[i];
            J(i, s) = -1.0;
            J(i, i_beta) = -d.x[i];
            for (int b = 1; b <= k_lags; ++b) {
                double debiased = lagged_outcome(s, t - b);
                for (int z = 0; z <= l_lags; ++z) {
                    debiased -= p[i_theta + z] * treat_at(adoption, s, t - b - z);
                }
                J(i, i_delta + b - 1) = -debiased;
            }
            for (int z = 0; z <= l_lags; ++z) {
                double dz = -treat_at(adoption, s, t - z);
                for (int b = 1; b <= k_lags; ++b) {
                    dz += p[i_delta + b - 1] * treat_at(adoption, s, t - b - z);
                }
                J(i, i_theta + z) = dz;
            }
        }
        return J;
    };

    // Warm start: state means for the intercepts, within-state AR(k) OLS for
    // delta, event-study first differences for theta.
    VectorXd init = VectorXd::Zero(n_params);
    {
        std::vector<double> mean(S, 0.0);
        std::vector<int> count(S, 0);
        for (int i = 0; i < d.n_rows; ++i) {
            mean[d.unit[i]] += d.y[i];
            count[d.unit[i]] += 1;
        }
        for (int s = 0; s < S; ++s) init[s] = count[s] > 0 ? mean[s] / count[s] : 0.0;

        MatrixXd lag_design(d.n_rows, k_lags);
        for (int i = 0; i < d.n_rows; ++i) {
            for (int b = 1; b <= k_lags; ++b) {
                lag_design(i, b - 1) = lagged_outcome(d.unit[i], d.year[i] - b);
            }
        }
        MatrixXd with_y(d.n_rows, k_lags + 1);
        with_y.leftCols(k_lags) = lag_design;
        with_y.col(k_lags) = d.y;
        // Remove state means so the AR fit ignores level differences.
        std::vector<int> zeros(d.n_rows, 0);
        const MatrixXd demeaned = absorb_two_way(with_y, d.unit, zeros);
        try {
            const FitResult ar = ols(demeaned.leftCols(k_lags), demeaned.col(k_lags));
            for (int b = 0; b < k_lags; ++b) init[i_delta + b] = ar.coefficients[b];
        } catch (const NumericError&) {
            // Degenerate lag design: keep zero start.
        }
        // Recenter intercepts for the AR structure: a_i ~ mean_i * (1 - sum delta).
        double delta_sum = 0.0;
        for (int b = 0; b < k_lags; ++b) delta_sum += init[i_delta + b];
        for (int s = 0; s < S; ++s) init[s] *= (1.0 - delta_sum);

        try {
            const EventWindow w = EventWindow::spanning(data, schedule);
            const EstimatorResult es = did_event_study(data, schedule, w);
            double prev = 0.0;
            for (int z = 0; z <= l_lags; ++z) {
                const auto it = es.effects.find(z + 1);
                if (it != es.effects.end()) {
                    init[i_theta + z] = it->second.estimate - prev;
                    prev = it->second.estimate;
                } else {
                    init[i_theta + z] = 0.0;
                }
            }
        } catch (const std::runtime_error&) {
            // Event-study warm start unavailable; zeros are fine.
        }
    }

    ClusterSpec clusters{d.unit};
    NlsResult nls;
    bool converged = true;
    std::string failure;
    try {
        nls = nls_fit(residual_fn, jacobian_fn, init, clusters);
    } catch (const NlsNonConvergence& e) {
        nls = e.best;
        converged = false;
        failure = e.what();
    }

    EstimatorResult res;
    res.estimator_id = "ar_db";
    res.converged = converged;
    if (!converged) res.note(failure);

    // Effects are partial sums of theta; the delta method on the NLS sandwich
    // gives the SEs. Event times past l_lags keep accumulating theta terms the
    // model cannot distinguish, so reporting stops at l_lags.
    for (int j = 1; j <= l_lags; ++j) {
        double tau = 0.0;
        VectorXd grad = VectorXd::Zero(n_params);
        for (int z = 0; z < j; ++z) {
            tau += nls.parameters[i_theta + z];
            grad[i_theta + z] = 1.0;
        }
        const double var = grad.transpose() * nls.vcov * grad;
        res.effects[j] = make_event_estimate(tau, std::sqrt(std::max(0.0, var)));
    }
    return res;
}

}  // namespace policysim
