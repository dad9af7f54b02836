// SPDX-License-Identifier: Apache-2.0

#include "mixreg/factorization.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mixreg/errors.hpp"
#include "mixreg/rng.hpp"

namespace mixreg {

Whitener whiten(const SymTensor& m2, int k) {
    if (m2.order() != 2) throw DimensionError("whiten: need an order-2 tensor");
    const int d = m2.dim();
    if (k < 1 || k > d) throw DimensionError("whiten: k out of range");
    Eigen::Map<const Eigen::MatrixXd> mat(m2.data(), d, d);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(
        0.5 * (mat + mat.transpose()))};
    // eigenvalues ascending; take the top k, which must be positive
    std::vector<int> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return es.eigenvalues()[a] > es.eigenvalues()[b];
    });

    Whitener wh;
    wh.eigenvalues.resize(k);
    wh.W.resize(d, k);
    wh.unwhiten.resize(d, k);
    for (int j = 0; j < k; ++j) {
        const double ev = es.eigenvalues()[order[static_cast<std::size_t>(j)]];
        if (ev <= 1e-10) {
            std::ostringstream msg;
            msg << "whiten: second moment has fewer than k=" << k
                << " positive eigenvalues; spectrum:";
            for (int i = 0; i < d; ++i)
                msg << " " << es.eigenvalues()[order[static_cast<std::size_t>(i)]];
            throw RankError(msg.str());
        }
        wh.eigenvalues[j] = ev;
        const auto vec = es.eigenvectors().col(order[static_cast<std::size_t>(j)]);
        wh.W.col(j) = vec / std::sqrt(ev);
        wh.unwhiten.col(j) = vec * std::sqrt(ev);
    }
    for (int j = k; j < d; ++j) {
        const double ev = es.eigenvalues()[order[static_cast<std::size_t>(j)]];
        if (ev < -1e-10) {
            std::ostringstream msg;
            msg << "whiten: discarded negative eigenvalue " << ev
                << " beyond the top " << k;
            wh.warnings.push_back(msg.str());
        }
    }
    return wh;
}

EigenPairs robust_tensor_power(const SymTensor& t, int k,
                               const PowerMethodConfig& cfg) {
    if (t.order() != 3)
        throw DimensionError("robust_tensor_power: need an order-3 tensor");
    const int dim = t.dim();
    if (k < 1 || k > dim)
        throw DimensionError("robust_tensor_power: k out of range");

    EigenPairs pairs;
    pairs.values.resize(k);
    pairs.vectors.resize(dim, k);
    pairs.best_objective.resize(k);

    SymTensor work = t;
    for (int h = 0; h < k; ++h) {
        double best = -1.0;
        Eigen::VectorXd best_u = Eigen::VectorXd::Unit(dim, 0);
        for (int restart = 0; restart < cfg.restarts; ++restart) {
            Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(h),
                                static_cast<std::uint64_t>(restart), 0xb0f));
            Eigen::VectorXd u(dim);
            for (int i = 0; i < dim; ++i) u[i] = rng.normal();
            u.normalize();
            for (int it = 0; it < cfg.iterations; ++it) {
                Eigen::VectorXd v = apply_two(work, u);
                const double norm = v.norm();
                if (norm == 0.0) break;
                u = v / norm;
            }
            const double obj = std::abs(apply_three(work, u));
            // strict improvement keeps selection index-tie-broken and thus
            // independent of evaluation order
            if (obj > best) {
                best = obj;
                best_u = (apply_three(work, u) >= 0.0) ? u : Eigen::VectorXd(-u);
            }
        }
        // polish the winning candidate
        Eigen::VectorXd u = best_u;
        for (int it = 0; it < cfg.iterations; ++it) {
            Eigen::VectorXd v = apply_two(work, u);
            const double norm = v.norm();
            if (norm == 0.0) break;
            u = v / norm;
        }
        double value = apply_three(work, u);
        if (value < 0.0) {
            u = -u;  // odd order: flipping the vector flips the sign
            value = -value;
        }
        if (value <= 0.0)
            pairs.warnings.push_back(
                "robust_tensor_power: non-positive eigenvalue in round " +
                std::to_string(h + 1) +
                "; second/third moment estimates are inconsistent");
        pairs.values[h] = value;
        pairs.vectors.col(h) = u;
        pairs.best_objective[h] = best;
        // deflate with the polished pair
        SymTensor rank1 = tensor_power(u, 3);
        rank1 *= value;
        work -= rank1;
    }
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b)
            pairs.max_cross = std::max(
                pairs.max_cross, std::abs(pairs.vectors.col(a).dot(pairs.vectors.col(b))));
    return pairs;
}

MixParams recover_params(const Whitener& wh, const EigenPairs& pairs,
                         double* raw_sum, Eigen::VectorXd* raw) {
    const int k = wh.k();
    if (pairs.values.size() != k)
        throw DimensionError("recover_params: eigenpair count does not match k");
    for (int h = 0; h < k; ++h)
        if (!(pairs.values[h] > 0.0))
            throw RecoveryError("recover_params: eigenvalue " + std::to_string(h + 1) +
                                " is not positive; cannot form mixture weights");

    Eigen::VectorXd pi_raw(k);
    Eigen::MatrixXd B(wh.unwhiten.rows(), k);
    for (int h = 0; h < k; ++h) {
        pi_raw[h] = 1.0 / (pairs.values[h] * pairs.values[h]);
        B.col(h) = wh.unwhiten * (pairs.values[h] * pairs.vectors.col(h));
    }
    const double total = pi_raw.sum();
    if (raw_sum) *raw_sum = total;
    if (raw) *raw = pi_raw;

    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return pi_raw[a] > pi_raw[b]; });

    MixParams params;
    params.pi.resize(k);
    params.B.resize(B.rows(), k);
    for (int j = 0; j < k; ++j) {
        params.pi[j] = pi_raw[order[static_cast<std::size_t>(j)]] / total;
        params.B.col(j) = B.col(order[static_cast<std::size_t>(j)]);
    }
    return params;
}

FactorizeResult factorize(const SymTensor& m2, const SymTensor& m3, int k,
                          const PowerMethodConfig& cfg) {
    if (m3.order() != 3 || m3.dim() != m2.dim())
        throw DimensionError("factorize: moment shapes disagree");
    FactorizeResult res;
    res.whitener = whiten(m2, k);
    SymTensor whitened = multilinear_map(m3, res.whitener.W);
    res.pairs = robust_tensor_power(whitened, k, cfg);
    res.params = recover_params(res.whitener, res.pairs, &res.pi_raw_sum, &res.pi_raw);

    SymTensor recon(3, m3.dim());
    for (int h = 0; h < k; ++h) {
        SymTensor r1 = tensor_power(res.params.B.col(h), 3);
        r1 *= res.params.pi[h];
        recon += r1;
    }
    res.reconstruction_error = op_norm(recon - m3);
    res.warnings = res.whitener.warnings;
    res.warnings.insert(res.warnings.end(), res.pairs.warnings.begin(),
                        res.pairs.warnings.end());
    return res;
}

}  // namespace mixreg
