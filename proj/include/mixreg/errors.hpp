// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mixreg {

// Tensor order / shape violations.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A covariance or design matrix is too close to singular for the requested
// estimate (names the failing check in the message).
struct IdentifiabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Second-moment estimate lacks k positive eigenvalues.
struct RankError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parameter recovery from eigenpairs is impossible (non-positive eigenvalue).
struct RecoveryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An EM component lost all effective responsibility mass.
struct ComponentCollapseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mixreg
