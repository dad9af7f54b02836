// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <vector>

#include "mixreg/errors.hpp"

namespace mixreg {

// Dense symmetric tensor of order 1, 2 or 3 over R^d, stored row-major
// (last index fastest). Order 1 is a plain vector, order 2 a symmetric
// matrix. Construction helpers keep entries exactly symmetric; buffers
// coming out of the solver may be transiently non-symmetric until passed
// through symmetrize().
class SymTensor {
public:
    SymTensor(int order, int dim)
        : order_(checked_order(order)), dim_(checked_dim(dim)),
          data_(static_cast<std::size_t>(flat_size(order, dim)), 0.0) {}

    int order() const { return order_; }
    int dim() const { return dim_; }
    Eigen::Index size() const { return static_cast<Eigen::Index>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double operator()(int i) const { return data_[idx1(i)]; }
    double& operator()(int i) { return data_[idx1(i)]; }
    double operator()(int i, int j) const { return data_[idx2(i, j)]; }
    double& operator()(int i, int j) { return data_[idx2(i, j)]; }
    double operator()(int i, int j, int k) const { return data_[idx3(i, j, k)]; }
    double& operator()(int i, int j, int k) { return data_[idx3(i, j, k)]; }

    SymTensor& operator+=(const SymTensor& o);
    SymTensor& operator-=(const SymTensor& o);
    SymTensor& operator*=(double s);
    friend SymTensor operator+(SymTensor a, const SymTensor& b) { return a += b; }
    friend SymTensor operator-(SymTensor a, const SymTensor& b) { return a -= b; }
    friend SymTensor operator*(double s, SymTensor t) { return t *= s; }

    double frobenius_norm() const;
    bool is_symmetric(double tol = 0.0) const;

    static Eigen::Index flat_size(int order, int dim);

private:
    static int checked_order(int order);
    static int checked_dim(int dim);
    std::size_t idx1(int i) const { return static_cast<std::size_t>(i); }
    std::size_t idx2(int i, int j) const {
        return static_cast<std::size_t>(i) * dim_ + j;
    }
    std::size_t idx3(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * dim_ + j) * dim_ + k;
    }

    int order_;
    int dim_;
    std::vector<double> data_;
};

// Count-profile basis for the collapsed vectorization of symmetric order-p
// tensors over R^d. Component j corresponds to the exponent profile
// profiles[j] (c_1..c_d, sum p) with value sqrt(|K(c)|) * X at any index
// tuple with that profile. Profiles are enumerated in lexicographically
// descending order, so component 0 is always x_1^p. The basis is the
// coordinate system for the regression solver as well, so the ordering is
// part of the public contract.
class CvecBasis {
public:
    static const CvecBasis& get(int order, int dim);

    int order() const { return order_; }
    int dim() const { return dim_; }
    int count() const { return static_cast<int>(scales_.size()); }

    const std::vector<std::vector<int>>& profiles() const { return profiles_; }
    double scale(int j) const { return scales_[j]; }

    Eigen::VectorXd cvec(const SymTensor& t) const;
    SymTensor tensor(const Eigen::VectorXd& v) const;

    // cvec(x^p) without forming the tensor; out must hold count() doubles.
    void cvec_power(const double* x, double* out) const;

    // N(d, p) = C(d + p - 1, p)
    static Eigen::Index basis_size(int order, int dim);

private:
    CvecBasis(int order, int dim);

    int order_;
    int dim_;
    std::vector<std::vector<int>> profiles_;
    std::vector<double> scales_;
    // representative index tuple per component, flattened (order_ ints each)
    std::vector<int> rep_idx_;
};

SymTensor tensor_power(const Eigen::VectorXd& x, int order);

double inner(const SymTensor& a, const SymTensor& b);

Eigen::VectorXd cvec(const SymTensor& t);
Eigen::VectorXd vvec(const SymTensor& t);
SymTensor tensor_from_cvec(const Eigen::VectorXd& v, int order, int dim);

// Mode-i unfolding (mode is 1-based, mode in [order]): a dim x dim^(order-1)
// matrix whose row j holds every entry whose mode-th index equals j.
Eigen::MatrixXd unfold(const SymTensor& t, int mode);
SymTensor refold(const Eigen::MatrixXd& m, int mode, int order, int dim);

// Average nuclear / operator norm over all mode unfoldings. For a symmetric
// tensor all unfoldings coincide, so only the first is computed.
double nuclear_norm(const SymTensor& t);
double op_norm(const SymTensor& t);

// result[a,b,c] = sum_{ijk} X[i,j,k] W(i,a) W(j,b) W(k,c); X must be order 3.
SymTensor multilinear_map(const SymTensor& t, const Eigen::MatrixXd& w);

// T(I, u, u) and T(u, u, u) for order-3 tensors.
Eigen::VectorXd apply_two(const SymTensor& t, const Eigen::VectorXd& u);
double apply_three(const SymTensor& t, const Eigen::VectorXd& u);

// Average over index permutations; the Frobenius-nearest symmetric tensor.
SymTensor symmetrize(const SymTensor& t);

}  // namespace mixreg
