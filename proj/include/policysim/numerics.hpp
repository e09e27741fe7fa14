#pragma once

// Shared regression and optimization kernels: OLS with deterministic
// collinearity handling, two-way fixed-effect absorption, cluster-robust
// covariance, ridge, simplex-constrained least squares, Levenberg-Marquardt
// nonlinear least squares, and logistic regression. All kernels are pure and
// reentrant.

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "policysim/errors.hpp"

namespace policysim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct FitResult {
    VectorXd coefficients;          // full input indexing; dropped columns are 0
    MatrixXd vcov;                  // full indexing; dropped rows/cols are 0
    VectorXd residuals;
    int dof = 0;                    // observations minus estimated parameters
    std::vector<int> kept;          // retained column indices, ascending
    std::vector<int> dropped;       // columns removed as collinear (leftmost kept)
};

struct ClusterSpec {
    std::vector<int> cluster_id;    // one id per observation

    int n_clusters() const;
};

enum class ClusterCorrection { CR0, CR1 };

// Removes unit and time means by alternating projections until the largest
// change in a sweep falls below 1e-10 (at most 10,000 sweeps). Idempotent;
// annihilates any unit- or time-constant column.
MatrixXd absorb_two_way(const MatrixXd& values, const std::vector<int>& unit_ids,
                        const std::vector<int>& time_ids);

// Weighted least squares. Collinear columns are dropped deterministically,
// keeping the leftmost of any dependent set.
FitResult ols(const MatrixXd& X, const VectorXd& y,
              const std::optional<VectorXd>& weights = std::nullopt);

// Sandwich covariance with per-cluster score sums. CR1 scales the meat by
// (G/(G-1)) * ((N-1)/(N-K)); extra_dof widens K for absorbed fixed effects.
MatrixXd cluster_robust_vcov(const FitResult& fit, const MatrixXd& X, const ClusterSpec& clusters,
                             ClusterCorrection correction = ClusterCorrection::CR1,
                             int extra_dof = 0);

// (X'X + lambda P)^-1 X'y with P = identity, except zero at the unpenalized
// intercept column when given.
VectorXd ridge(const MatrixXd& X, const VectorXd& y, double lambda,
               std::optional<int> intercept_col = std::nullopt);

struct SimplexResult {
    VectorXd weights;
    double objective = 0.0;
    double kkt_residual = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Thrown when the simplex solver runs out of iterations; carries the best
// iterate, which still satisfies the simplex constraints to 1e-12.
struct SimplexNonConvergence : NumericError {
    SimplexResult best;
    SimplexNonConvergence(const std::string& what, SimplexResult b)
        : NumericError(what), best(std::move(b)) {}
};

// min ||target - donors*w||^2 over the probability simplex, by accelerated
// projected gradient. The KKT residual is the sup-norm of the projected
// gradient fixed-point map. Throws SimplexNonConvergence past max_iter.
SimplexResult simplex_weights(const MatrixXd& donors, const VectorXd& target, double tol = 1e-9,
                              int max_iter = 200000);

using ResidualFn = std::function<VectorXd(const VectorXd&)>;
using JacobianFn = std::function<MatrixXd(const VectorXd&)>;

struct NlsOptions {
    int max_iterations = 500;
    double objective_tol = 1e-10;   // relative change in ||r||^2
    double gradient_tol = 1e-8;     // scaled by (1 + ||r||)
    bool check_jacobian = true;     // finite-difference gate at the start point
};

struct NlsResult {
    VectorXd parameters;
    MatrixXd vcov;                  // cluster-robust sandwich at the solution
    VectorXd residuals;
    double objective = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Thrown when Levenberg-Marquardt exhausts max_iterations; carries the best
// iterate plus a short trace of the objective path.
struct NlsNonConvergence : NumericError {
    NlsResult best;
    NlsNonConvergence(const std::string& what, NlsResult b)
        : NumericError(what), best(std::move(b)) {}
};

// Levenberg-Marquardt minimization of ||r(theta)||^2. The Jacobian convention
// is J = d r / d theta. Accepted steps never increase the objective. Throws
// NlsNonConvergence past max_iterations and NumericError when the supplied
// Jacobian disagrees with finite differences at the start point.
NlsResult nls_fit(const ResidualFn& residual_fn, const JacobianFn& jacobian_fn,
                  const VectorXd& init, const ClusterSpec& clusters,
                  const NlsOptions& options = {});

// IRLS logit; stops when the sup-norm of the score X'(y - p) is below 1e-10.
// Throws NumericError on separation (diverging coefficients).
VectorXd logistic_fit(const MatrixXd& X, const VectorXd& y);

}  // namespace policysim
