// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "mixreg/em.hpp"
#include "mixreg/factorization.hpp"
#include "mixreg/model.hpp"
#include "mixreg/regression.hpp"

namespace mixreg {

enum class Method { spectral, em, spectral_em };

std::string_view method_name(Method m);
Method method_from_name(std::string_view name);

struct ExperimentConfig {
    std::string name;  // config id; derived from the grid fields when empty
    int b = 1;
    int k = 2;
    Eigen::Index n = 100000;
    std::vector<std::string> feature_exprs{"1", "t", "t^4", "t^7"};
    NoiseSpec noise = NoiseSpec::gaussian(0.1);
    std::vector<Method> methods{Method::spectral, Method::em, Method::spectral_em};
    int instances = 10;
    int attempts = 5;
    bool paper_lambdas = true;
    double lambda2 = 0.0;  // used when paper_lambdas is false
    double lambda3 = 0.0;

    enum class DatasetMode { shared, independent_triples };
    DatasetMode dataset_mode = DatasetMode::shared;

    bool misspecified = false;
    std::uint64_t seed = 1;

    // The pre-flight identifiability gate. enforce refuses to run when any
    // order fails; warn records the failure in the report and proceeds
    // (the regularized solver stays well-posed on rank-deficient designs).
    enum class IdentifiabilityPolicy { enforce, warn };
    IdentifiabilityPolicy identifiability = IdentifiabilityPolicy::enforce;
    Eigen::Index identifiability_mc = 10000;

    SolverConfig solver;
    // em.sigma2 <= 0 means "use the configured noise variance"
    static EMConfig follow_noise_em() {
        EMConfig e;
        e.sigma2 = 0.0;
        return e;
    }
    EMConfig em = follow_noise_em();
    PowerMethodConfig power;

    bool paper_scale = false;  // n = 500000, 20 instances, 10 attempts

    int d() const { return static_cast<int>(feature_exprs.size()); }
    FeatureMap feature_map() const;
    std::string config_id() const;

    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig from_json_file(const std::string& path);
};

struct RunRecord {
    int instance = 0;
    int attempt = 0;
    Method method = Method::spectral;
    double aligned_error = 0.0;  // +inf when the run failed outright
    double wall_ms = 0.0;
    bool converged = false;
    bool failed = false;
};

struct MethodAggregate {
    Method method = Method::spectral;
    int runs = 0;
    int failed = 0;
    double mean = 0.0;
    double stddev = 0.0;
    double median = 0.0;
};

struct ExperimentReport {
    std::string config_id;
    std::vector<RunRecord> records;  // instance-major, then attempt, then method
    std::vector<MethodAggregate> aggregates;
    std::vector<IdentifiabilityResult> preflight;
    std::vector<std::string> warnings;
};

// Frobenius distance over (B, pi) jointly, minimized over the k! column
// permutations. Refuses k > 8; use aligned_error_greedy there.
double aligned_error(const MixParams& truth, const MixParams& est);
// greedy column matching; approximate for large k
double aligned_error_greedy(const MixParams& truth, const MixParams& est);

// Runs every (instance, attempt, method) cell. Deterministic for a fixed
// config including seed; instances fan out over a worker pool capped by
// MIXREG_THREADS. Throws IdentifiabilityError at pre-flight under the
// enforce policy.
ExperimentReport run_config(const ExperimentConfig& cfg);

MethodAggregate aggregate(const ExperimentReport& report, Method m);

struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    int count = 0;
};

// fixed-width bins over [0, max error]; failed runs land in the last bin
std::vector<HistogramBin> histogram_data(const ExperimentReport& report, Method m,
                                         int bins);

struct CurvePoint {
    Eigen::Index n = 0;
    Method method = Method::spectral;
    double mean = 0.0;
    double median = 0.0;
    double stddev = 0.0;
    int failed = 0;
};

// Re-runs the config at each sample size with the same seed (instances are
// paired across n).
std::vector<CurvePoint> learning_curve(const ExperimentConfig& base,
                                       const std::vector<Eigen::Index>& ns);

// serialization (report.cpp). with_timing=false zeroes the wall_ms column,
// giving a byte-reproducible artifact for determinism checks.
std::string report_csv(const ExperimentReport& report, bool with_timing = true);
std::string report_json(const ExperimentReport& report);
void emit_report(const ExperimentReport& report, const std::string& format,
                 const std::string& path);
std::string curve_csv(const std::vector<CurvePoint>& points);

}  // namespace mixreg
