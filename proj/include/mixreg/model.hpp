// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mixreg/tensor.hpp"

namespace mixreg {

// Mixture proportions and per-component regression coefficients (one column
// per component). The estimation target.
struct MixParams {
    Eigen::VectorXd pi;  // length k, positive, sums to 1
    Eigen::MatrixXd B;   // d x k

    int k() const { return static_cast<int>(pi.size()); }
    int d() const { return static_cast<int>(B.rows()); }

    // Throws when proportions are invalid; when require_full_rank is set
    // (ground-truth use) also checks the k-th singular value of B.
    void validate(bool require_full_rank = false) const;
};

// Zero-mean observation noise with known second and third moments.
class NoiseSpec {
public:
    enum class Kind { gaussian, uniform, custom };

    static NoiseSpec gaussian(double sigma2);
    // uniform on [-a, a]
    static NoiseSpec uniform(double half_width);
    // discrete zero-mean distribution given by atoms and probabilities;
    // moments are computed from them
    static NoiseSpec custom(std::vector<double> atoms, std::vector<double> probs);

    Kind kind() const { return kind_; }
    double m2() const { return m2_; }
    double m3() const { return m3_; }
    double sample(class Rng& rng) const;

private:
    NoiseSpec() = default;
    Kind kind_ = Kind::gaussian;
    double m2_ = 0.0;
    double m3_ = 0.0;
    double param_ = 0.0;  // sigma for gaussian, half-width for uniform
    std::vector<double> atoms_;
    std::vector<double> probs_;
};

// One covariate feature: coeff * prod_j t_j^e_j over base coordinates.
struct Monomial {
    double coeff = 1.0;
    std::vector<int> exponents;  // length = base dim

    double eval(const Eigen::VectorXd& t) const;
};

// Map from latent t in [-1,1]^b to covariates x in R^d, each coordinate a
// monomial in t. An optional excluded region (a union of intervals applied
// to every base coordinate) models misspecified sampling.
struct FeatureMap {
    int base_dim = 1;
    std::vector<Monomial> features;
    std::vector<std::pair<double, double>> excluded;  // intervals within [-1,1]

    int out_dim() const { return static_cast<int>(features.size()); }
    Eigen::VectorXd apply(const Eigen::VectorXd& t) const;
    bool excludes(double coord) const;

    // Parses expressions such as "1", "t", "t^4", "2*t1^3*t2". Base
    // coordinates are written t (one-dimensional maps) or t1..tb.
    static FeatureMap parse(const std::vector<std::string>& exprs, int base_dim);

    // The interval pair removed from every coordinate in misspecified runs.
    static std::vector<std::pair<double, double>> misspecification_region();
};

// Sampled covariate/response pairs plus the latent generation trace
// (component index and noise draw per record) kept for oracle tests.
struct Dataset {
    Eigen::MatrixXd X;  // n x d, row per record
    Eigen::VectorXd y;  // n
    std::vector<int> component;    // empty when trace disabled
    std::vector<double> noise;     // empty when trace disabled
    std::uint64_t seed = 0;

    Eigen::Index n() const { return X.rows(); }
    int d() const { return static_cast<int>(X.cols()); }
    bool has_trace() const { return !component.empty(); }

    // header x_1,...,x_d,y[,h,eps]; 17 significant digits
    void save_csv(const std::string& path) const;
    static Dataset load_csv(const std::string& path);
};

Dataset sample_dataset(const MixParams& params, const FeatureMap& fmap,
                       const NoiseSpec& noise, Eigen::Index n, std::uint64_t seed,
                       bool record_trace = true);

// M_p = sum_h pi_h beta_h^p
SymTensor compound_moment(const MixParams& params, int order);

struct IdentifiabilityResult {
    int order = 0;
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

inline constexpr double kIdentifiabilityThreshold = 1e-8;

// Minimum eigenvalue of (1/n) sum cvec(x^p) cvec(x^p)^T over the dataset.
IdentifiabilityResult identifiability_check(const Dataset& data, int order,
                                            double threshold = kIdentifiabilityThreshold);
// Monte-Carlo variant drawing n_mc latent points through the feature map.
IdentifiabilityResult identifiability_check(const FeatureMap& fmap, Eigen::Index n_mc,
                                            int order, std::uint64_t seed,
                                            double threshold = kIdentifiabilityThreshold);

// Ground-truth draw for experiments: B entries standard normal, pi from a
// symmetric Dirichlet(100) (near-uniform with small perturbations).
MixParams sample_ground_truth(int k, int d, std::uint64_t seed);

}  // namespace mixreg
