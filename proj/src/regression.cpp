// SPDX-License-Identifier: Apache-2.0

#include "mixreg/regression.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mixreg/errors.hpp"
#include "mixreg/kernels.hpp"

namespace mixreg {

std::string SolveInfo::trace_json() const {
    std::ostringstream out;
    out << "[";
    char buf[128];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const TracePoint& t = trace[i];
        std::snprintf(buf, sizeof(buf),
                      "{\"iter\":%d,\"objective\":%.17g,\"primal_res\":%.17g,"
                      "\"dual_res\":%.17g}",
                      t.iter, t.objective, t.primal_res, t.dual_res);
        out << (i ? "," : "") << buf;
    }
    out << "]";
    return out.str();
}

Eigen::VectorXd estimate_moment1(const Dataset& data) {
    const double n = static_cast<double>(data.n());
    Eigen::MatrixXd cov = data.X.transpose() * data.X / n;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const double sigma_min = es.eigenvalues().minCoeff();
    if (sigma_min <= 1e-10) {
        std::ostringstream msg;
        msg << "estimate_moment1: order-1 design covariance Sigma_1 is singular"
               " (min eigenvalue "
            << sigma_min << " <= 1e-10); identifiability check fails at order 1";
        throw IdentifiabilityError(msg.str());
    }
    Eigen::VectorXd b = data.X.transpose() * data.y / n;
    return es.eigenvectors() *
           (es.eigenvectors().transpose() * b).cwiseQuotient(es.eigenvalues());
}

MomentRegressionProblem make_problem(Eigen::MatrixXd X, Eigen::VectorXd targets,
                                     int order, double lambda, bool estimate_bias) {
    if (order != 2 && order != 3)
        throw DimensionError("make_problem: order must be 2 or 3");
    if (lambda < 0.0) throw std::invalid_argument("make_problem: lambda < 0");
    if (X.rows() != targets.size())
        throw DimensionError("make_problem: one target per design row required");
    MomentRegressionProblem p;
    p.order = order;
    p.X = std::move(X);
    p.targets = std::move(targets);
    p.lambda = lambda;
    p.estimate_bias = estimate_bias;

    const Eigen::Index n = p.X.rows();
    const auto& basis = CvecBasis::get(order, p.d());
    const int nb = basis.count();
    const int m = nb + (estimate_bias ? 1 : 0);
    p.gram = Eigen::MatrixXd::Zero(m, m);
    p.rhs = Eigen::VectorXd::Zero(m);
    std::vector<double> c(static_cast<std::size_t>(m));
    if (estimate_bias) c[static_cast<std::size_t>(nb)] = 1.0;
    Eigen::RowVectorXd row(p.d());
    double rsq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        row = p.X.row(i);
        basis.cvec_power(row.data(), c.data());
        kernels::syr_upper(1.0, c.data(), static_cast<std::size_t>(m), p.gram.data(),
                           static_cast<std::size_t>(m));
        kernels::axpy(p.targets[i], c.data(), p.rhs.data(),
                      static_cast<std::size_t>(m));
        rsq += p.targets[i] * p.targets[i];
    }
    p.gram /= static_cast<double>(n);
    p.rhs /= static_cast<double>(n);
    p.target_sq_mean = rsq / static_cast<double>(n);
    p.gram.triangularView<Eigen::StrictlyLower>() =
        p.gram.triangularView<Eigen::StrictlyUpper>().transpose();
    return p;
}

MomentRegressionProblem build_problem(const Dataset& data, int order,
                                      const NoiseSpec& noise,
                                      const Eigen::VectorXd& m1_hat, double lambda,
                                      bool estimate_bias) {
    if (order != 2 && order != 3)
        throw DimensionError("build_problem: order must be 2 or 3");
    const Eigen::Index n = data.n();
    Eigen::VectorXd targets(n);
    if (order == 2) {
        for (Eigen::Index i = 0; i < n; ++i)
            targets[i] = data.y[i] * data.y[i] - noise.m2();
    } else {
        if (m1_hat.size() != data.d())
            throw DimensionError("build_problem: order 3 requires the fitted first"
                                 " moment for the bias term");
        const Eigen::VectorXd proj = data.X * m1_hat;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double y = data.y[i];
            targets[i] = y * y * y - 3.0 * noise.m2() * proj[i] - noise.m3();
        }
    }
    return make_problem(data.X, std::move(targets), order, lambda, estimate_bias);
}

namespace {

// soft-threshold the singular values of a (small, wide) matrix
Eigen::MatrixXd svt(const Eigen::MatrixXd& m, double tau, double* nuclear = nullptr) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd s = (svd.singularValues().array() - tau).max(0.0);
    if (nuclear) *nuclear = s.sum();
    return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

// Directions whose design curvature is zero or far below the
// regularization weight are owned by the penalty: a splitting iteration in
// the data scaling crawls along them (the prox moves them by about
// lambda/rho per step), while the true optimum resolves them through the
// nuclear term plus their residual quadratic. This solves that restriction
// exactly in the penalty scaling, where the same ADMM converges in a few
// hundred steps. For lambda = 0 only the exact kernel is touched and it
// receives the nuclear-minimal completion (the lambda -> 0+ limit).
void resolve_flat_directions(const MomentRegressionProblem& problem,
                             const CvecBasis& basis, Eigen::VectorXd& coords) {
    const int nb = basis.count();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        problem.gram.topLeftCorner(nb, nb));
    const double hi = std::max(es.eigenvalues().maxCoeff(), 1e-300);
    const double cut = std::max(1e-12 * hi, 10.0 * problem.lambda);
    std::vector<int> flat_idx;
    for (int j = 0; j < nb; ++j)
        if (es.eigenvalues()[j] <= cut) flat_idx.push_back(j);
    if (flat_idx.empty()) return;
    const Eigen::Index q = static_cast<Eigen::Index>(flat_idx.size());
    Eigen::MatrixXd flat_basis(nb, q);
    Eigen::VectorXd curv(q);
    for (Eigen::Index j = 0; j < q; ++j) {
        flat_basis.col(j) = es.eigenvectors().col(flat_idx[static_cast<std::size_t>(j)]);
        curv[j] = std::max(es.eigenvalues()[flat_idx[static_cast<std::size_t>(j)]], 0.0);
    }

    const int p = problem.order;
    const int d = problem.d();
    Eigen::VectorXd head = coords.head(nb);
    Eigen::VectorXd anchor = head - flat_basis * (flat_basis.transpose() * head);
    // restricted quadratic: 1/2 z' diag(curv) z - lin' z  (+ const)
    Eigen::VectorXd lin =
        flat_basis.transpose() *
        (problem.rhs.head(nb) - problem.gram.topLeftCorner(nb, nb) * anchor);

    const double lam = problem.lambda;
    const double rho = 1.0;
    Eigen::VectorXd z = Eigen::VectorXd::Zero(q);
    Eigen::VectorXd zdiv(q);
    for (Eigen::Index j = 0; j < q; ++j)
        zdiv[j] = (lam > 0.0 ? curv[j] / lam : 0.0) + rho;
    Eigen::MatrixXd Z = unfold(basis.tensor(anchor), 1);
    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(Z.rows(), Z.cols());
    for (int it = 0; it < 5000; ++it) {
        Eigen::VectorXd pull =
            flat_basis.transpose() *
            (basis.cvec(symmetrize(refold(Z - U, 1, p, d))) - anchor);
        if (lam > 0.0)
            z = (lin / lam + rho * pull).cwiseQuotient(zdiv);
        else
            z = pull;  // pure nuclear-minimal completion of the exact kernel
        Eigen::MatrixXd MU = unfold(basis.tensor(anchor + flat_basis * z), 1);
        Eigen::MatrixXd Z_old = Z;
        Z = svt(MU + U, 1.0 / rho);
        U += MU - Z;
        const double pr = (MU - Z).norm();
        const double du = rho * (Z - Z_old).norm();
        if (pr < 1e-9 * std::max(1.0, MU.norm()) &&
            du < 1e-9 * std::max(1.0, Z.norm()))
            break;
    }
    coords.head(nb) = anchor + flat_basis * z;
}

// Balanced-rho ADMM leaves the mid-curvature band (design eigenvalues a few
// decades below the top) in a slow tail; sweeping rho downward with warm
// starts lets each stage contract its own band. The exact flat band is then
// resolved by resolve_flat_directions. This runs after the main loop on
// both exits.
void polish_and_finish(const MomentRegressionProblem& problem,
                       const CvecBasis& basis, const SolverConfig& cfg,
                       double rho, Eigen::MatrixXd& Z, Eigen::MatrixXd& U,
                       Eigen::VectorXd& coords, NuclearSolution& out) {
    const int p = problem.order;
    const int d = problem.d();
    const int nb = basis.count();
    const int m = static_cast<int>(problem.rhs.size());
    Eigen::VectorXd rho_mask = Eigen::VectorXd::Ones(m);
    if (problem.estimate_bias) rho_mask[nb] = 0.0;

    const double rho_floor = std::max(10.0 * problem.lambda, 1e-9);
    while (rho > rho_floor) {
        const double next = std::max(rho / 5.0, rho_floor);
        U *= rho / next;
        rho = next;
        Eigen::MatrixXd shifted = problem.gram;
        shifted.diagonal() += rho * rho_mask;
        Eigen::LDLT<Eigen::MatrixXd> fac(shifted);
        for (int it = 0; it < 300; ++it) {
            SymTensor v = symmetrize(refold(Z - U, 1, p, d));
            Eigen::VectorXd rhs = problem.rhs;
            rhs.head(nb) += rho * basis.cvec(v);
            coords = fac.solve(rhs);
            Eigen::MatrixXd MU = unfold(basis.tensor(coords.head(nb)), 1);
            Eigen::MatrixXd Z_old = Z;
            Z = svt(MU + U, problem.lambda / rho);
            U += MU - Z;
            const double pr = (MU - Z).norm();
            const double du = rho * (Z - Z_old).norm();
            // each stage must actually contract its band before the
            // relative test is allowed to end it
            if (it >= 60 &&
                pr < cfg.tol_primal * std::max({1.0, MU.norm(), Z.norm()}) &&
                du < cfg.tol_dual * std::max(1.0, rho * U.norm()))
                break;
        }
    }
    resolve_flat_directions(problem, basis, coords);
    out.estimate = basis.tensor(coords.head(nb));
    if (problem.estimate_bias) out.bias = coords[nb];
    out.info.final_rho = rho;
}

}  // namespace

NuclearSolution solve_nuclear(const MomentRegressionProblem& problem,
                              const SolverConfig& cfg) {
    if (problem.lambda < 0.0)
        throw std::invalid_argument("solve_nuclear: lambda < 0");
    const int p = problem.order;
    const int d = problem.d();
    const auto& basis = CvecBasis::get(p, d);
    const int nb = basis.count();
    const int m = nb + (problem.estimate_bias ? 1 : 0);
    if (problem.gram.rows() != m || problem.rhs.size() != m)
        throw DimensionError("solve_nuclear: problem statistics have wrong shape");

    // rho on the tensor coordinates only; the bias coordinate is not part of
    // the unfolding constraint
    Eigen::VectorXd rho_mask = Eigen::VectorXd::Ones(m);
    if (problem.estimate_bias) rho_mask[nb] = 0.0;

    double rho = cfg.rho;
    if (cfg.rho_auto) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(problem.gram);
        const double hi = std::max(es.eigenvalues().maxCoeff(), 1e-12);
        const double lo = std::max(es.eigenvalues().minCoeff(), 1e-12 * hi);
        rho = std::clamp(std::sqrt(lo * hi), 1e-10, 1e10);
    }

    Eigen::MatrixXd shifted = problem.gram;
    shifted.diagonal() += rho * rho_mask;
    Eigen::LDLT<Eigen::MatrixXd> fac(shifted);

    const Eigen::Index cols = SymTensor::flat_size(p, d) / d;
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(d, cols);
    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(d, cols);
    Eigen::VectorXd coords = Eigen::VectorXd::Zero(m);

    NuclearSolution out{SymTensor(p, d), 0.0, SolveInfo{}};
    SolveInfo& info = out.info;
    info.final_rho = rho;

    const double alpha = cfg.over_relax;
    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        // tensor-space target for the quadratic penalty; project the
        // unfolded iterate onto the symmetric subspace first
        SymTensor v = symmetrize(refold(Z - U, 1, p, d));
        Eigen::VectorXd rhs = problem.rhs;
        rhs.head(nb) += rho * basis.cvec(v);
        coords = fac.solve(rhs);

        SymTensor mt = basis.tensor(coords.head(nb));
        Eigen::MatrixXd MU = unfold(mt, 1);
        Eigen::MatrixXd MU_rel = alpha * MU + (1.0 - alpha) * Z;
        Eigen::MatrixXd Z_old = Z;
        double z_nuclear = 0.0;
        Z = svt(MU_rel + U, problem.lambda / rho, &z_nuclear);
        U += MU_rel - Z;

        info.primal_res = (MU - Z).norm();
        info.dual_res = rho * (Z - Z_old).norm();
        info.iterations = iter + 1;
        // tolerances scale with the iterate so O(1)-sized problems are not
        // held to an absolute 1e-7 that the flat directions approach only
        // asymptotically
        const double eps_pr =
            cfg.tol_primal * std::max({1.0, MU.norm(), Z.norm()});
        const double eps_du = cfg.tol_dual * std::max(1.0, rho * U.norm());

        if (cfg.record_objective) {
            const double quad = 0.5 * coords.dot(problem.gram * coords) -
                                problem.rhs.dot(coords) +
                                0.5 * problem.target_sq_mean;
            info.trace.push_back({iter + 1,
                                  quad + problem.lambda * nuclear_norm(mt),
                                  info.primal_res, info.dual_res});
        }

        if (info.primal_res < eps_pr && info.dual_res < eps_du) {
            info.converged = true;
            polish_and_finish(problem, basis, cfg, rho, Z, U, coords, out);
            return out;
        }

        if (cfg.rho_adapt && (iter + 1) % 10 == 0) {
            double next = rho;
            if (info.primal_res > 10.0 * info.dual_res) next = rho * 2.0;
            else if (info.dual_res > 10.0 * info.primal_res) next = rho * 0.5;
            if (next != rho) {
                U *= rho / next;
                rho = next;
                shifted = problem.gram;
                shifted.diagonal() += rho * rho_mask;
                fac.compute(shifted);
            }
        }
        out.estimate = std::move(mt);
    }
    polish_and_finish(problem, basis, cfg, rho, Z, U, coords, out);
    return out;  // not converged per the main loop; caller sees info
}

std::pair<double, double> default_lambdas(Eigen::Index n) {
    if (n < 1) throw std::invalid_argument("default_lambdas: n must be >= 1");
    const double root = std::sqrt(static_cast<double>(n));
    return {1.0 / (1e5 * root), 1.0 / (1e3 * root)};
}

double adjoint_diagnostic(const MomentRegressionProblem& problem,
                          const SymTensor& m) {
    if (m.order() != problem.order || m.dim() != problem.d())
        throw DimensionError("adjoint_diagnostic: estimate shape mismatch");
    const auto& basis = CvecBasis::get(problem.order, problem.d());
    const Eigen::VectorXd mc = basis.cvec(m);
    SymTensor sum(problem.order, problem.d());
    std::vector<double> c(static_cast<std::size_t>(basis.count()));
    Eigen::RowVectorXd row(problem.d());
    const int d = problem.d();
    for (Eigen::Index i = 0; i < problem.n(); ++i) {
        row = problem.X.row(i);
        basis.cvec_power(row.data(), c.data());
        const double resid =
            problem.targets[i] -
            kernels::dot(mc.data(), c.data(), static_cast<std::size_t>(basis.count()));
        // dense x^p accumulated straight into the running tensor
        if (problem.order == 2) {
            for (int a = 0; a < d; ++a)
                kernels::axpy(resid * row[a], row.data(),
                              sum.data() + static_cast<std::size_t>(a) * d,
                              static_cast<std::size_t>(d));
        } else {
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b)
                    kernels::axpy(resid * row[a] * row[b], row.data(),
                                  sum.data() + (static_cast<std::size_t>(a) * d + b) * d,
                                  static_cast<std::size_t>(d));
        }
    }
    sum *= 1.0 / static_cast<double>(problem.n());
    return op_norm(sum);
}

CompoundMoments estimate_compound(const Dataset& d1, const Dataset& d2,
                                  const Dataset& d3, const NoiseSpec& noise,
                                  double lambda2, double lambda3,
                                  const SolverConfig& cfg) {
    CompoundMoments out;
    out.m1 = estimate_moment1(d1);
    {
        MomentRegressionProblem p2 = build_problem(d2, 2, noise, out.m1, lambda2);
        NuclearSolution s2 = solve_nuclear(p2, cfg);
        out.m2 = std::move(s2.estimate);
        out.info2 = std::move(s2.info);
    }
    {
        MomentRegressionProblem p3 = build_problem(d3, 3, noise, out.m1, lambda3);
        NuclearSolution s3 = solve_nuclear(p3, cfg);
        out.m3 = std::move(s3.estimate);
        out.info3 = std::move(s3.info);
    }
    return out;
}

}  // namespace mixreg
