// SPDX-License-Identifier: Apache-2.0

#include "mixreg/em.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mixreg/errors.hpp"
#include "mixreg/kernels.hpp"
#include "mixreg/rng.hpp"

namespace mixreg {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Sums a small array largest-first; the result does not depend on the
// caller's component ordering, which keeps EM exactly permutation
// equivariant.
double canonical_sum(double* vals, int k) {
    std::sort(vals, vals + k, std::greater<double>());
    double acc = 0.0;
    for (int i = 0; i < k; ++i) acc += vals[i];
    return acc;
}

struct EStep {
    Eigen::MatrixXd gamma;  // n x k
    double loglik = 0.0;
};

EStep e_step(const Dataset& data, const MixParams& params, double sigma2,
             double floor) {
    const Eigen::Index n = data.n();
    const int k = params.k();
    EStep out;
    out.gamma.resize(n, k);
    Eigen::MatrixXd mean = data.X * params.B;  // n x k predicted responses
    Eigen::VectorXd logpi(k);
    for (int h = 0; h < k; ++h) logpi[h] = std::log(params.pi[h]);
    const double inv2s = 0.5 / sigma2;
    const double log_norm = -0.5 * (kLog2Pi + std::log(sigma2));

    std::vector<double> lw(static_cast<std::size_t>(k));
    std::vector<double> expw(static_cast<std::size_t>(k));
    std::vector<double> tmp(static_cast<std::size_t>(k));
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double m = -1e300;
        for (int h = 0; h < k; ++h) {
            const double r = data.y[i] - mean(i, h);
            lw[static_cast<std::size_t>(h)] = logpi[h] - r * r * inv2s;
            m = std::max(m, lw[static_cast<std::size_t>(h)]);
        }
        for (int h = 0; h < k; ++h)
            expw[static_cast<std::size_t>(h)] =
                std::exp(lw[static_cast<std::size_t>(h)] - m);
        tmp = expw;
        const double z = canonical_sum(tmp.data(), k);
        total += m + std::log(z) + log_norm;
        for (int h = 0; h < k; ++h) {
            tmp[static_cast<std::size_t>(h)] =
                std::max(expw[static_cast<std::size_t>(h)] / z, floor);
            out.gamma(i, h) = tmp[static_cast<std::size_t>(h)];
        }
        const double wsum = canonical_sum(tmp.data(), k);
        out.gamma.row(i) /= wsum;
    }
    out.loglik = total;
    return out;
}

}  // namespace

std::string EMResult::trace_json() const {
    std::ostringstream out;
    out << "[";
    char buf[64];
    for (std::size_t i = 0; i < loglik_trace.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", loglik_trace[i]);
        out << (i ? "," : "") << "{\"iter\":" << (i + 1) << ",\"loglik\":" << buf
            << "}";
    }
    out << "]";
    return out.str();
}

Eigen::MatrixXd responsibilities(const Dataset& data, const MixParams& params,
                                 double sigma2, double floor) {
    if (sigma2 <= 0.0) throw NumericError("responsibilities: sigma2 must be > 0");
    params.validate();
    return e_step(data, params, sigma2, floor).gamma;
}

double loglik(const Dataset& data, const MixParams& params, double sigma2) {
    if (sigma2 <= 0.0) throw NumericError("loglik: sigma2 must be > 0");
    params.validate();
    return e_step(data, params, sigma2, 0.0).loglik;
}

EMResult em_fit(const Dataset& data, int k, const MixParams& init,
                const EMConfig& cfg) {
    if (k < 1) throw DimensionError("em_fit: k must be >= 1");
    if (init.k() != k || init.d() != data.d())
        throw DimensionError("em_fit: init shape does not match data/k");
    if (cfg.sigma2 <= 0.0)
        throw NumericError("em_fit: sigma2 must be positive (use a small floor"
                           " for noiseless data)");
    init.validate();

    const Eigen::Index n = data.n();
    const int d = data.d();
    // contiguous rows for the kernel accumulations
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Xr =
        data.X;

    EMResult res;
    res.params = init;
    res.sigma2 = cfg.sigma2;

    Eigen::MatrixXd gram(d, d);
    Eigen::VectorXd rhs(d);
    double prev_ll = -1e300;

    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        EStep es = e_step(data, res.params, res.sigma2, cfg.min_responsibility);
        if (!std::isfinite(es.loglik))
            throw NumericError("em_fit: log-likelihood is not finite at iteration " +
                               std::to_string(iter + 1));
        res.loglik_trace.push_back(es.loglik);
        res.iterations = iter + 1;

        // M-step
        for (int h = 0; h < k; ++h) {
            gram.setZero();
            rhs.setZero();
            double wsum = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double w = es.gamma(i, h);
                const double* row = Xr.data() + static_cast<std::size_t>(i) * d;
                kernels::syr_upper(w, row, static_cast<std::size_t>(d), gram.data(),
                                   static_cast<std::size_t>(d));
                kernels::axpy(w * data.y[i], row, rhs.data(),
                              static_cast<std::size_t>(d));
                wsum += w;
            }
            gram.triangularView<Eigen::StrictlyLower>() =
                gram.triangularView<Eigen::StrictlyUpper>().transpose();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eg(gram);
            const double lo = eg.eigenvalues().minCoeff();
            const double hi = eg.eigenvalues().maxCoeff();
            if (lo <= 1e-12 * std::max(1.0, hi))
                throw ComponentCollapseError(
                    "em_fit: weighted design for component " + std::to_string(h + 1) +
                    " is singular (responsibility mass collapsed)");
            res.params.B.col(h) = eg.eigenvectors() *
                                  (eg.eigenvectors().transpose() * rhs)
                                      .cwiseQuotient(eg.eigenvalues());
            res.params.pi[h] = wsum / static_cast<double>(n);
        }
        // guard roundoff so validate() stays happy; order-canonical sum keeps
        // the normalization permutation equivariant
        std::vector<double> pis(res.params.pi.data(), res.params.pi.data() + k);
        res.params.pi /= canonical_sum(pis.data(), k);

        if (cfg.estimate_sigma2) {
            Eigen::MatrixXd mean = data.X * res.params.B;
            double acc = 0.0;
            std::vector<double> per(static_cast<std::size_t>(k));
            for (Eigen::Index i = 0; i < n; ++i) {
                for (int h = 0; h < k; ++h) {
                    const double r = data.y[i] - mean(i, h);
                    per[static_cast<std::size_t>(h)] = es.gamma(i, h) * r * r;
                }
                acc += canonical_sum(per.data(), k);
            }
            res.sigma2 = std::max(acc / static_cast<double>(n), 1e-12);
        }

        const double delta = std::abs(es.loglik - prev_ll);
        if (iter > 0 && delta <= cfg.loglik_tol * (1.0 + std::abs(prev_ll))) {
            res.converged = true;
            break;
        }
        prev_ll = es.loglik;
    }
    return res;
}

MixParams init_random(int k, int d, std::uint64_t seed) {
    if (k < 1 || d < 1) throw DimensionError("init_random: k, d must be >= 1");
    Rng rng(seed);
    MixParams p;
    p.B.resize(d, k);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < d; ++i) p.B(i, j) = rng.normal();
    p.pi.resize(k);
    for (int h = 0; h < k; ++h)
        p.pi[h] = 1.0 / static_cast<double>(k) + 0.01 * std::abs(rng.normal());
    p.pi /= p.pi.sum();
    return p;
}

}  // namespace mixreg
