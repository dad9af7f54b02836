// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "mixreg/model.hpp"
#include "mixreg/tensor.hpp"

namespace mixreg {

struct SolverConfig {
    double rho = 1.0;        // ADMM penalty; initial value when rho_auto is set
    bool rho_auto = true;    // seed rho from the design spectrum (geometric mean)
    bool rho_adapt = true;   // residual balancing during the run
    double over_relax = 1.7;
    int max_iter = 5000;
    double tol_primal = 1e-7;
    double tol_dual = 1e-7;
    bool record_objective = false;
};

struct TracePoint {
    int iter;
    double objective;
    double primal_res;
    double dual_res;
};

struct SolveInfo {
    bool converged = false;
    int iterations = 0;
    double primal_res = 0.0;
    double dual_res = 0.0;
    double final_rho = 0.0;
    std::vector<TracePoint> trace;  // populated when record_objective

    // {iter, objective, primal_res, dual_res} rows for plotting
    std::string trace_json() const;
};

// Least-squares data for one moment order, with the known noise bias already
// subtracted from the responses and the sufficient statistics cached in
// collapsed (cvec) coordinates: gram = (1/n) sum c c^T, rhs = (1/n) sum r c.
// When estimate_bias is set an extra unpenalized scalar coordinate is
// appended (only meaningful if no covariate feature is constant).
struct MomentRegressionProblem {
    int order = 2;
    Eigen::MatrixXd X;        // n x d covariates; design tensors are x_i^order
    Eigen::VectorXd targets;  // adjusted responses r_i
    double lambda = 0.0;
    bool estimate_bias = false;

    Eigen::MatrixXd gram;
    Eigen::VectorXd rhs;
    double target_sq_mean = 0.0;

    Eigen::Index n() const { return X.rows(); }
    int d() const { return static_cast<int>(X.cols()); }
};

struct NuclearSolution {
    SymTensor estimate;
    double bias = 0.0;  // fitted scalar bias when estimate_bias was set
    SolveInfo info;
};

// Ordinary least squares for the first moment; throws IdentifiabilityError
// when the order-1 design covariance is numerically singular.
Eigen::VectorXd estimate_moment1(const Dataset& data);

// Problem over explicit targets; caches gram/rhs in one pass.
MomentRegressionProblem make_problem(Eigen::MatrixXd X, Eigen::VectorXd targets,
                                     int order, double lambda,
                                     bool estimate_bias = false);

// Adjusted targets per order: 2 -> y^2 - E[eps^2];
// 3 -> y^3 - 3 E[eps^2] <m1_hat, x> - E[eps^3] (m1_hat required).
MomentRegressionProblem build_problem(const Dataset& data, int order,
                                      const NoiseSpec& noise,
                                      const Eigen::VectorXd& m1_hat, double lambda,
                                      bool estimate_bias = false);

// Nuclear-norm-regularized least squares via ADMM: the tensor variable lives
// in cvec coordinates, one auxiliary matrix is constrained to equal the
// mode-1 unfolding and receives the singular-value soft-threshold step.
// Non-convergence is reported in info, not thrown.
NuclearSolution solve_nuclear(const MomentRegressionProblem& problem,
                              const SolverConfig& cfg = {});

// benchmark defaults: lambda2 = 1/(1e5 sqrt(n)), lambda3 = 1/(1e3 sqrt(n))
std::pair<double, double> default_lambdas(Eigen::Index n);

// (1/n) |sum_i (r_i - <M, x_i^p>) x_i^p|_op; small values mean lambda
// dominates the adjoint of the residual noise.
double adjoint_diagnostic(const MomentRegressionProblem& problem, const SymTensor& m);

struct CompoundMoments {
    Eigen::VectorXd m1;
    SymTensor m2{2, 1};
    SymTensor m3{3, 1};
    SolveInfo info2;
    SolveInfo info3;
};

// Full first-stage estimate. Pass the same dataset three times for shared
// mode or three independent draws for the independent-triples protocol.
CompoundMoments estimate_compound(const Dataset& d1, const Dataset& d2,
                                  const Dataset& d3, const NoiseSpec& noise,
                                  double lambda2, double lambda3,
                                  const SolverConfig& cfg = {});

}  // namespace mixreg
