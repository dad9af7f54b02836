// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "mixreg/model.hpp"
#include "mixreg/tensor.hpp"

namespace mixreg {

// Rank-k whitening of a symmetric second moment: W^T M2 W = I_k.
struct Whitener {
    Eigen::MatrixXd W;           // d x k
    Eigen::MatrixXd unwhiten;    // d x k, the pseudo-inverse of W^T
    Eigen::VectorXd eigenvalues; // the top-k eigenvalues used
    std::vector<std::string> warnings;

    int k() const { return static_cast<int>(W.cols()); }
};

struct EigenPairs {
    Eigen::VectorXd values;      // length k
    Eigen::MatrixXd vectors;     // k x k, one column per eigenpair
    Eigen::VectorXd best_objective;  // winning restart objective per round
    double max_cross = 0.0;      // largest |v_h . v_h'| across pairs (diagnostic)
    std::vector<std::string> warnings;
};

struct PowerMethodConfig {
    int restarts = 60;   // random initializations per deflation round
    int iterations = 120;
    std::uint64_t seed = 0;
};

struct FactorizeResult {
    MixParams params;
    Whitener whitener;
    EigenPairs pairs;
    double pi_raw_sum = 0.0;          // sum of a_h^-2 before renormalization
    Eigen::VectorXd pi_raw;           // unnormalized weights
    double reconstruction_error = 0.0;  // |sum pi_h b_h^3 - M3|_op
    std::vector<std::string> warnings;
};

// Eigendecompose M2, keep the top-k positive eigenvalues, W = U S^-1/2.
// Throws RankError (reporting the spectrum) when fewer than k eigenvalues
// clear 1e-10; negative eigenvalues below the top k are noted as warnings.
Whitener whiten(const SymTensor& m2, int k);

// Deflation-based power iteration on a (near-)orthogonally decomposable
// symmetric tensor over R^k. Candidates with negative objective are sign-
// flipped; a non-positive winning eigenvalue is recorded as a warning and
// the round proceeds.
EigenPairs robust_tensor_power(const SymTensor& t, int k, const PowerMethodConfig& cfg);

// pi_h = a_h^-2 renormalized; beta_h = unwhiten * (a_h v_h); columns sorted
// by descending pi. Throws RecoveryError when any a_h <= 0.
MixParams recover_params(const Whitener& wh, const EigenPairs& pairs,
                         double* raw_sum = nullptr, Eigen::VectorXd* raw = nullptr);

// whiten -> power method on M3(W, W, W) -> unwhiten.
FactorizeResult factorize(const SymTensor& m2, const SymTensor& m3, int k,
                          const PowerMethodConfig& cfg = {});

}  // namespace mixreg
