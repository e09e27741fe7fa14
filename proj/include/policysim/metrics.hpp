#pragma once

// Performance metrics over simulation replicates: absolute bias, empirical
// SE (population denominator), coverage, and RMSE, plus the aggregation into
// per-(estimator, event time) tables.

#include <optional>
#include <string>
#include <vector>

#include "policysim/dgp.hpp"
#include "policysim/estimators.hpp"

namespace policysim {

// mean |estimate - truth|
double abs_bias(const std::vector<double>& estimates, double truth);

// sqrt(sum (estimate - mean)^2 / N); requires N >= 2
double empirical_se(const std::vector<double>& estimates);

// Fraction of closed intervals containing the truth.
double coverage(const std::vector<std::pair<double, double>>& intervals, double truth);

// sqrt(sum (estimate - truth)^2 / N). Shares the population denominator with
// empirical_se, so rmse^2 = empirical_se^2 + mean_error^2 exactly.
double rmse(const std::vector<double>& estimates, double truth);

struct MetricsRow {
    std::string scenario;
    std::string estimator_id;
    int event_time = 0;
    std::optional<double> abs_bias;
    std::optional<double> std_abs_bias;
    std::optional<double> emp_se;
    std::optional<double> coverage;
    std::optional<double> rmse;
    int n_effective = 0;
};

struct MetricsTable {
    std::vector<MetricsRow> rows;
};

// One replicate's worth of inputs to aggregation.
struct ReplicateRecord {
    EstimatorResult result;
    TruthTable truth;
};

// Aggregates event times 1..5 per estimator. Non-converged replicates are
// excluded cell-wise and reflected in n_effective; std_abs_bias divides by
// outcome_sd (the pooled pre-treatment outcome standard deviation).
MetricsTable aggregate(const std::vector<ReplicateRecord>& replicates, const std::string& scenario,
                       double outcome_sd);

// Population standard deviation of all outcomes in the (un-augmented) panel;
// the divisor behind std_abs_bias.
double pooled_outcome_sd(const PanelDataset& data);

// CSV schema: scenario,estimator,event_time,abs_bias,std_abs_bias,emp_se,
// coverage,rmse,n_effective. Missing metrics serialize as "nan".
void write_metrics_csv(const MetricsTable& table, const std::string& path);
MetricsTable read_metrics_csv(const std::string& path);

}  // namespace policysim
