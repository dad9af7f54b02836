// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "mixreg/model.hpp"

namespace mixreg {

struct EMConfig {
    int max_iter = 1000;
    double loglik_tol = 1e-9;  // relative change between iterations
    bool estimate_sigma2 = false;
    double sigma2 = 0.1;  // fixed observation variance (initial value when estimated)
    double min_responsibility = 1e-12;
};

struct EMResult {
    MixParams params;
    double sigma2 = 0.0;
    std::vector<double> loglik_trace;  // one entry per iteration
    bool converged = false;
    int iterations = 0;

    std::string trace_json() const;
};

// Posterior component probabilities, row-normalized after flooring.
// Row sums are exactly renormalized to 1.
Eigen::MatrixXd responsibilities(const Dataset& data, const MixParams& params,
                                 double sigma2, double floor = 1e-12);

// log sum_h pi_h N(y_i; beta_h . x_i, sigma2), log-sum-exp stabilized.
// The inner sums over components are order-canonicalized so the value is
// invariant under relabeling.
double loglik(const Dataset& data, const MixParams& params, double sigma2);

// Gaussian-noise EM: E-step responsibilities, M-step weighted least squares
// per component. Throws ComponentCollapseError when a weighted design loses
// rank and NumericError when the log-likelihood leaves the reals.
EMResult em_fit(const Dataset& data, int k, const MixParams& init,
                const EMConfig& cfg);

// B entries standard normal; pi = normalize(1/k + 0.01 |N(0,1)|).
MixParams init_random(int k, int d, std::uint64_t seed);

}  // namespace mixreg
