#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "serialprobe/harness.hpp"
#include "serialprobe/manifest.hpp"
#include "serialprobe/service.hpp"

namespace serialprobe::analysis {

class StatsError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};
class ZeroVariance : public StatsError {
public:
    using StatsError::StatsError;
};
class DegenerateParticipant : public StatsError {
public:
    using StatsError::StatsError;
};
class MissingJoin : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- distributions -------------------------------------------------------

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// Student t CDF.
double t_cdf(double t, double df);
/// Two-sided p-value for a t statistic.
double t_two_sided_p(double t, double df);
/// Standard normal quantile.
double normal_quantile(double p);

// ---- estimators ----------------------------------------------------------

double mean(std::span<const double> x);
/// Sample (n - 1) standard deviation.
double sample_sd(std::span<const double> x);

struct CorrelationResult {
    double r = 0;
    double p = 1;
    std::size_t n = 0;
    std::string level;
};

/// Sample Pearson r, two-sided p from t with n - 2 df. Throws ZeroVariance, StatsError (n < 3).
CorrelationResult pearson(std::span<const double> x, std::span<const double> y, std::string level = {});

struct TTestResult {
    double t = 0;
    double p = 1;
    double df = 0;
};

/// Paired: one-sample t on differences. Unpaired: Welch.
TTestResult ttest(std::span<const double> a, std::span<const double> b, bool paired);

struct Interval {
    double low = 0;
    double high = 0;
};

Interval wilson_ci(std::size_t successes, std::size_t n, double level = 0.95);

/// z-scores of one participant's RTs. Throws DegenerateParticipant (sd = 0 or n < 2).
std::vector<double> zscore(std::span<const double> rts);

// ---- pipeline ------------------------------------------------------------

struct AnalysisOptions {
    double rt_min_ms = 200;
    double rt_max_ms = 30000;
    bool invalid_as_wrong = false;
    std::optional<int> max_disparity = 90;  ///< extra rotation correlations restricted to disparity <= this
    double ci_level = 0.95;
};

struct ZScored {
    std::string participant;
    std::string trial_id;
    double rt_ms = 0;
    bool valid = false;
    std::optional<double> z;
};

struct ZScoreResult {
    std::vector<ZScored> records;           ///< input order
    std::vector<std::string> dropped;       ///< participants with sd = 0 or < 2 valid RTs
};

/// Within-participant z-scores over RTs inside [rt_min, rt_max]; responses
/// outside the bounds get no z and do not enter the statistics.
ZScoreResult zscore_rt(const std::vector<service::HumanResponse>& responses, const AnalysisOptions& options);

struct CellSummary {
    std::string axis;
    std::string cell;
    std::size_t n_trials = 0;
    std::size_t human_n = 0;
    std::size_t human_correct = 0;
    std::optional<double> human_accuracy;
    Interval human_ci;
    std::size_t human_n_rt = 0;
    std::optional<double> human_mean_zrt;
    std::string model_id;  ///< empty when there are no evaluations
    std::size_t model_n = 0;
    std::size_t model_correct = 0;
    std::size_t model_invalid = 0;
    std::optional<double> model_accuracy;
    Interval model_ci;
};

struct CorrelationRow {
    std::string task;
    std::string analysis;
    std::string level;
    std::string model_id;
    std::string filter;
    std::string x;
    std::string y;
    std::size_t n = 0;
    std::optional<double> r;
    std::optional<double> p;
    std::string note;
};

struct TTestRow {
    std::string task;
    std::string analysis;
    std::string model_id;
    bool paired = true;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    std::optional<double> mean_a;
    std::optional<double> mean_b;
    std::optional<TTestResult> result;
    std::string note;
};

struct TrialRow {
    std::string trial_id;
    std::string cell;
    std::size_t human_n = 0;
    std::optional<double> human_accuracy;
    std::optional<double> human_mean_zrt;
    std::string model_id;
    std::optional<bool> model_correct;
};

struct BinRow {
    std::string model_id;
    int bin = 0;
    std::size_t n = 0;
    double mean_zrt = 0;
    double model_accuracy = 0;
};

struct TaskSummary {
    Task task = Task::Oddball;
    std::vector<CellSummary> cells;
    std::vector<TrialRow> trials;
    std::vector<BinRow> bins;  ///< oddball only: trials binned by mean zRT deciles
};

using EvalsByModel = std::map<std::string, std::map<Task, std::vector<harness::EvalRecord>>>;

struct Summaries {
    std::vector<TaskSummary> tasks;
    std::vector<CorrelationRow> correlations;
    std::vector<TTestRow> ttests;
    std::vector<std::string> dropped_participants;
    std::size_t n_responses = 0;
    std::size_t n_valid_responses = 0;
};

/// Joins responses and evaluations to manifests by trial id (MissingJoin on
/// unknown ids) and aggregates per condition cell.
Summaries build_summaries(const std::vector<Manifest>& manifests, const std::vector<service::HumanResponse>& responses,
                          const EvalsByModel& evals, const AnalysisOptions& options);

/// summary/<task>_cells.csv, <task>_trials.csv, oddball_trial_bins.csv,
/// correlations.csv, ttests.csv. run.json is written by the caller.
void write_summaries(const Summaries& summaries, const std::filesystem::path& out_dir);

/// Reads response records from a service event log or an export stream.
std::vector<service::HumanResponse> load_responses(const std::filesystem::path& path);

/// evals/<model>/<task>.jsonl for every model directory under root/evals.
EvalsByModel load_evals(const std::filesystem::path& root, harness::Mode mode = harness::Mode::Baseline);

}  // namespace serialprobe::analysis
