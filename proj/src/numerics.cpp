#include "policysim/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

namespace policysim {

int ClusterSpec::n_clusters() const {
    return static_cast<int>(std::set<int>(cluster_id.begin(), cluster_id.end()).size());
}

MatrixXd absorb_two_way(const MatrixXd& values, const std::vector<int>& unit_ids,
                        const std::vector<int>& time_ids) {
    const auto n = values.rows();
    if (static_cast<Eigen::Index>(unit_ids.size()) != n ||
        static_cast<Eigen::Index>(time_ids.size()) != n) {
        throw NumericError("absorb_two_way: id length mismatch");
    }
    // Compact the ids to 0..k-1.
    std::map<int, int> umap, tmap;
    for (int u : unit_ids) umap.emplace(u, 0);
    for (int t : time_ids) tmap.emplace(t, 0);
    int k = 0;
    for (auto& [key, v] : umap) v = k++;
    k = 0;
    for (auto& [key, v] : tmap) v = k++;
    std::vector<int> u(n), t(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        u[i] = umap[unit_ids[i]];
        t[i] = tmap[time_ids[i]];
    }
    const int nu = static_cast<int>(umap.size());
    const int nt = static_cast<int>(tmap.size());

    std::vector<double> ucount(nu, 0.0), tcount(nt, 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        ucount[u[i]] += 1.0;
        tcount[t[i]] += 1.0;
    }

    MatrixXd out = values;
    std::vector<double> usum(nu), tsum(nt);
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
        auto col = out.col(c);
        for (int sweep = 0; sweep < 10000; ++sweep) {
            double max_change = 0.0;
            std::fill(usum.begin(), usum.end(), 0.0);
            for (Eigen::Index i = 0; i < n; ++i) usum[u[i]] += col[i];
            for (int g = 0; g < nu; ++g) {
                usum[g] /= ucount[g];
                max_change = std::max(max_change, std::abs(usum[g]));
            }
            for (Eigen::Index i = 0; i < n; ++i) col[i] -= usum[u[i]];

            std::fill(tsum.begin(), tsum.end(), 0.0);
            for (Eigen::Index i = 0; i < n; ++i) tsum[t[i]] += col[i];
            for (int g = 0; g < nt; ++g) {
                tsum[g] /= tcount[g];
                max_change = std::max(max_change, std::abs(tsum[g]));
            }
            for (Eigen::Index i = 0; i < n; ++i) col[i] -= tsum[t[i]];

            if (max_change < 1e-10) break;
            if (sweep == 9999) throw NumericError("absorb_two_way: no convergence in 10000 sweeps");
        }
    }
    return out;
}

FitResult ols(const MatrixXd& X, const VectorXd& y, const std::optional<VectorXd>& weights) {
    const auto n = X.rows();
    const auto p = X.cols();
    if (n == 0) throw NumericError("ols: zero rows");
    if (y.size() != n) throw NumericError("ols: y length mismatch");

    MatrixXd Xw = X;
    VectorXd yw = y;
    if (weights) {
        if (weights->size() != n) throw NumericError("ols: weight length mismatch");
        const VectorXd s = weights->array().sqrt();
        Xw = s.asDiagonal() * Xw;
        yw = s.asDiagonal() * yw;
    }

    // Deterministic leftmost-kept rank screen via modified Gram-Schmidt: a
    // column is dropped when its residual against previously kept columns is
    // negligible relative to its original norm.
    FitResult fit;
    MatrixXd basis(n, p);  // orthonormal columns of the kept set
    int r = 0;
    for (Eigen::Index j = 0; j < p; ++j) {
        VectorXd v = Xw.col(j);
        const double norm0 = v.norm();
        for (int b = 0; b < r; ++b) v -= basis.col(b).dot(v) * basis.col(b);
        // Re-orthogonalize once for stability.
        for (int b = 0; b < r; ++b) v -= basis.col(b).dot(v) * basis.col(b);
        const double norm1 = v.norm();
        if (norm1 <= 1e-9 * std::max(norm0, 1e-300) || norm0 == 0.0) {
            fit.dropped.push_back(static_cast<int>(j));
            continue;
        }
        basis.col(r) = v / norm1;
        fit.kept.push_back(static_cast<int>(j));
        ++r;
    }
    if (r == 0) throw NumericError("ols: all columns collinear or zero");

    MatrixXd Xk(n, r);
    for (int j = 0; j < r; ++j) Xk.col(j) = Xw.col(fit.kept[j]);

    const VectorXd beta_k = Xk.householderQr().solve(yw);
    const VectorXd resid_w = yw - Xk * beta_k;

    fit.coefficients = VectorXd::Zero(p);
    for (int j = 0; j < r; ++j) fit.coefficients[fit.kept[j]] = beta_k[j];

    // Residuals on the original (unweighted) scale.
    fit.residuals = y - X * fit.coefficients;
    fit.dof = static_cast<int>(n) - r;

    // Classical vcov sigma^2 (X'X)^-1 as the default; callers needing cluster
    // robustness replace it via cluster_robust_vcov.
    const MatrixXd xtx_inv = (Xk.transpose() * Xk).ldlt().solve(MatrixXd::Identity(r, r));
    const double sigma2 = fit.dof > 0 ? resid_w.squaredNorm() / fit.dof : 0.0;
    fit.vcov = MatrixXd::Zero(p, p);
    for (int a = 0; a < r; ++a)
        for (int b = 0; b < r; ++b) fit.vcov(fit.kept[a], fit.kept[b]) = sigma2 * xtx_inv(a, b);
    fit.vcov = ((fit.vcov + fit.vcov.transpose()) / 2.0).eval();
    return fit;
}

MatrixXd cluster_robust_vcov(const FitResult& fit, const MatrixXd& X, const ClusterSpec& clusters,
                             ClusterCorrection correction, int extra_dof) {
    const auto n = X.rows();
    const auto p = X.cols();
    if (static_cast<Eigen::Index>(clusters.cluster_id.size()) != n) {
        throw NumericError("cluster_robust_vcov: cluster length mismatch");
    }
    const int r = static_cast<int>(fit.kept.size());
    MatrixXd Xk(n, r);
    for (int j = 0; j < r; ++j) Xk.col(j) = X.col(fit.kept[j]);

    std::map<int, VectorXd> score_sums;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto it = score_sums.find(clusters.cluster_id[i]);
        if (it == score_sums.end()) {
            it = score_sums.emplace(clusters.cluster_id[i], VectorXd::Zero(r)).first;
        }
        it->second += Xk.row(i).transpose() * fit.residuals[i];
    }
    const int G = static_cast<int>(score_sums.size());
    if (G <= 1) throw NumericError("cluster_robust_vcov: needs at least 2 clusters");

    MatrixXd meat = MatrixXd::Zero(r, r);
    for (const auto& [id, s] : score_sums) meat += s * s.transpose();

    double c = 1.0;
    if (correction == ClusterCorrection::CR1) {
        const double N = static_cast<double>(n);
        const double K = static_cast<double>(r + extra_dof);
        c = (static_cast<double>(G) / (G - 1)) * ((N - 1.0) / (N - K));
    }

    const MatrixXd bread = (Xk.transpose() * Xk).ldlt().solve(MatrixXd::Identity(r, r));
    const MatrixXd vk = bread * (c * meat) * bread;

    MatrixXd out = MatrixXd::Zero(p, p);
    for (int a = 0; a < r; ++a)
        for (int b = 0; b < r; ++b) out(fit.kept[a], fit.kept[b]) = vk(a, b);
    return ((out + out.transpose()) / 2.0).eval();
}

VectorXd ridge(const MatrixXd& X, const VectorXd& y, double lambda, std::optional<int> intercept_col) {
    if (lambda < 0.0) throw NumericError("ridge: lambda must be nonnegative");
    const auto p = X.cols();
    MatrixXd A = X.transpose() * X;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (intercept_col && *intercept_col == static_cast<int>(j)) continue;
        A(j, j) += lambda;
    }
    return A.ldlt().solve(X.transpose() * y);
}

namespace {

// Euclidean projection onto the probability simplex (sort-based).
VectorXd project_simplex(const VectorXd& v) {
    const auto p = v.size();
    std::vector<double> u(v.data(), v.data() + p);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cum = 0.0, theta = 0.0;
    int support = 0;
    for (int i = 0; i < p; ++i) {
        cum += u[i];
        const double candidate = (cum - 1.0) / (i + 1);
        if (u[i] - candidate > 0.0) {
            theta = candidate;
            support = i + 1;
        }
    }
    (void)support;
    VectorXd w = (v.array() - theta).cwiseMax(0.0);
    // Exact renormalization keeps |sum(w) - 1| at machine precision.
    const double s = w.sum();
    if (s > 0.0) w /= s;
    return w;
}

}  // namespace

SimplexResult simplex_weights(const MatrixXd& donors, const VectorXd& target, double tol,
                              int max_iter) {
    const auto m = donors.rows();
    const auto p = donors.cols();
    if (p < 1) throw NumericError("simplex_weights: needs at least one donor");
    if (m < 1) throw NumericError("simplex_weights: needs at least one period");
    if (target.size() != m) throw NumericError("simplex_weights: target length mismatch");

    SimplexResult res;
    if (p == 1) {
        res.weights = VectorXd::Ones(1);
        res.objective = (target - donors.col(0)).squaredNorm();
        res.kkt_residual = 0.0;
        res.converged = true;
        return res;
    }

    const MatrixXd G = donors.transpose() * donors;
    const VectorXd h = donors.transpose() * target;

    // Lipschitz constant of the gradient = 2 * largest eigenvalue of G.
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(G);
    const double L = std::max(2.0 * es.eigenvalues().maxCoeff(), 1e-300);
    const double step = 1.0 / L;

    auto grad = [&](const VectorXd& w) -> VectorXd { return 2.0 * (G * w - h); };
    auto objective = [&](const VectorXd& w) { return (target - donors * w).squaredNorm(); };
    // KKT residual: fixed-point gap of one projected-gradient step, scaled
    // back by L so it is comparable to a gradient norm.
    auto kkt = [&](const VectorXd& w) {
        const VectorXd mapped = project_simplex(w - step * grad(w));
        return L * (w - mapped).lpNorm<Eigen::Infinity>();
    };

    VectorXd w = VectorXd::Constant(p, 1.0 / p);
    VectorXd z = w;
    double momentum = 1.0;

    // FISTA with restart on objective increase.
    double best_obj = objective(w);
    VectorXd best_w = w;
    int it = 0;
    for (; it < max_iter; ++it) {
        const VectorXd w_next = project_simplex(z - step * grad(z));
        const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum)) / 2.0;
        const VectorXd z_next = w_next + ((momentum - 1.0) / t_next) * (w_next - w);

        const double obj_next = objective(w_next);
        if (obj_next > best_obj) {
            // Restart momentum when the accelerated path overshoots.
            z = best_w;
            momentum = 1.0;
            w = best_w;
        } else {
            if (obj_next < best_obj) {
                best_obj = obj_next;
                best_w = w_next;
            }
            w = w_next;
            z = z_next;
            momentum = t_next;
        }
        if ((it & 15) == 0 && kkt(best_w) < tol * (1.0 + h.lpNorm<Eigen::Infinity>())) break;
    }

    res.weights = project_simplex(best_w);
    res.objective = objective(res.weights);
    res.kkt_residual = kkt(res.weights);
    res.iterations = it;
    res.converged = res.kkt_residual < tol * (1.0 + h.lpNorm<Eigen::Infinity>());
    if (!res.converged && it >= max_iter) {
        throw SimplexNonConvergence("simplex_weights: no convergence in " +
                                        std::to_string(max_iter) + " iterations (KKT residual " +
                                        std::to_string(res.kkt_residual) + ")",
                                    res);
    }
    return res;
}

NlsResult nls_fit(const ResidualFn& residual_fn, const JacobianFn& jacobian_fn, const VectorXd& init,
                  const ClusterSpec& clusters, const NlsOptions& options) {
    VectorXd theta = init;
    VectorXd r = residual_fn(theta);
    MatrixXd J = jacobian_fn(theta);
    const auto n = r.size();
    const auto p = theta.size();
    if (J.rows() != n || J.cols() != p) throw NumericError("nls_fit: jacobian shape mismatch");

    if (options.check_jacobian) {
        // Central finite differences at the start point.
        const double scale = std::max(1.0, r.norm());
        double worst = 0.0;
        Eigen::Index wi = 0, wj = 0;
        for (Eigen::Index j = 0; j < p; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
            VectorXd tp = theta, tm = theta;
            tp[j] += h;
            tm[j] -= h;
            const VectorXd d = (residual_fn(tp) - residual_fn(tm)) / (2.0 * h);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double diff = std::abs(d[i] - J(i, j)) / scale;
                if (diff > worst) {
                    worst = diff;
                    wi = i;
                    wj = j;
                }
            }
        }
        if (worst > 1e-4) {
            throw NumericError("nls_fit: jacobian disagrees with finite differences at entry (" +
                               std::to_string(wi) + "," + std::to_string(wj) + "), rel err " +
                               std::to_string(worst));
        }
    }

    double obj = r.squaredNorm();
    double mu = 1e-3;
    bool converged = false;
    int it = 0;
    for (; it < options.max_iterations; ++it) {
        const VectorXd g = J.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() < options.gradient_tol * (1.0 + std::sqrt(obj))) {
            converged = true;
            break;
        }
        const MatrixXd H = J.transpose() * J;
        VectorXd diag = H.diagonal().cwiseMax(1e-12);

        bool accepted = false;
        for (int tries = 0; tries < 40 && !accepted; ++tries) {
            MatrixXd Hd = H;
            Hd.diagonal() += mu * diag;
            const VectorXd delta = Hd.ldlt().solve(-g);
            const VectorXd theta_try = theta + delta;
            const VectorXd r_try = residual_fn(theta_try);
            const double obj_try = r_try.squaredNorm();
            if (obj_try < obj) {
                const double rel_change = (obj - obj_try) / std::max(obj, 1e-300);
                theta = theta_try;
                r = r_try;
                obj = obj_try;
                J = jacobian_fn(theta);
                mu = std::max(mu / 3.0, 1e-12);
                accepted = true;
                if (rel_change < options.objective_tol) {
                    converged = true;
                }
            } else {
                mu *= 4.0;
            }
        }
        if (converged) break;
        if (!accepted) {
            // No downhill step found at any damping: local minimum to numeric
            // precision.
            converged = true;
            break;
        }
    }

    NlsResult out;
    out.parameters = theta;
    out.residuals = r;
    out.objective = obj;
    out.converged = converged;
    out.iterations = it;

    // Cluster-robust sandwich at the solution, built from the Jacobian.
    FitResult pseudo;
    pseudo.kept.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) pseudo.kept[j] = static_cast<int>(j);
    pseudo.residuals = r;
    pseudo.dof = static_cast<int>(n - p);
    out.vcov = cluster_robust_vcov(pseudo, J, clusters, ClusterCorrection::CR1);

    if (!converged) {
        throw NlsNonConvergence("nls_fit: no convergence in " +
                                    std::to_string(options.max_iterations) +
                                    " iterations (objective " + std::to_string(obj) + ")",
                                out);
    }
    return out;
}

VectorXd logistic_fit(const MatrixXd& X, const VectorXd& y) {
    const auto n = X.rows();
    const auto p = X.cols();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (y[i] != 0.0 && y[i] != 1.0) throw NumericError("logistic_fit: y must be 0/1");
    }
    VectorXd beta = VectorXd::Zero(p);
    for (int it = 0; it < 200; ++it) {
        const VectorXd eta = X * beta;
        const VectorXd mu = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
        const VectorXd score = X.transpose() * (y - mu);
        if (score.lpNorm<Eigen::Infinity>() < 1e-10) return beta;
        const VectorXd w = (mu.array() * (1.0 - mu.array())).cwiseMax(1e-12);
        const MatrixXd H = X.transpose() * w.asDiagonal() * X;
        const VectorXd delta = H.ldlt().solve(score);
        beta += delta;
        if (beta.lpNorm<Eigen::Infinity>() > 1e4) {
            throw NumericError(
                "logistic_fit: separation detected (coefficients diverging); "
                "consider dropping the covariate");
        }
    }
    throw NumericError("logistic_fit: IRLS did not converge in 200 iterations");
}

}  // namespace policysim
