// SPDX-License-Identifier: Apache-2.0

#include "mixreg/tensor.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "mixreg/kernels.hpp"

namespace mixreg {

namespace {

void check_same_shape(const SymTensor& a, const SymTensor& b, const char* what) {
    if (a.order() != b.order() || a.dim() != b.dim()) {
        throw DimensionError(std::string(what) + ": shape mismatch (" +
                             std::to_string(a.order()) + "," + std::to_string(a.dim()) +
                             ") vs (" + std::to_string(b.order()) + "," +
                             std::to_string(b.dim()) + ")");
    }
}

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

}  // namespace

int SymTensor::checked_order(int order) {
    if (order < 1 || order > 3)
        throw DimensionError("tensor order must be 1, 2 or 3, got " +
                             std::to_string(order));
    return order;
}

int SymTensor::checked_dim(int dim) {
    if (dim < 1)
        throw DimensionError("tensor dim must be >= 1, got " + std::to_string(dim));
    return dim;
}

Eigen::Index SymTensor::flat_size(int order, int dim) {
    Eigen::Index n = 1;
    for (int i = 0; i < order; ++i) n *= dim;
    return n;
}

SymTensor& SymTensor::operator+=(const SymTensor& o) {
    check_same_shape(*this, o, "tensor add");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

SymTensor& SymTensor::operator-=(const SymTensor& o) {
    check_same_shape(*this, o, "tensor subtract");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

SymTensor& SymTensor::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

double SymTensor::frobenius_norm() const {
    return std::sqrt(kernels::dot(data(), data(), data_.size()));
}

bool SymTensor::is_symmetric(double tol) const {
    const int d = dim_;
    if (order_ == 1) return true;
    if (order_ == 2) {
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j)
                if (std::abs((*this)(i, j) - (*this)(j, i)) > tol) return false;
        return true;
    }
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) {
                const double v = (*this)(i, j, k);
                if (std::abs((*this)(i, k, j) - v) > tol) return false;
                if (std::abs((*this)(j, i, k) - v) > tol) return false;
            }
    return true;
}

Eigen::Index CvecBasis::basis_size(int order, int dim) {
    // C(dim + order - 1, order)
    Eigen::Index num = 1, den = 1;
    for (int i = 0; i < order; ++i) {
        num *= dim + order - 1 - i;
        den *= i + 1;
    }
    return num / den;
}

CvecBasis::CvecBasis(int order, int dim) : order_(order), dim_(dim) {
    SymTensor::flat_size(order, dim);  // validates order/dim
    const double p_fact = factorial(order);
    // weak compositions of `order` into `dim` parts, lexicographically
    // descending: start from (order, 0, ..., 0) and step down
    std::vector<int> c(static_cast<std::size_t>(dim), 0);
    c[0] = order;
    for (;;) {
        profiles_.push_back(c);
        double mult = p_fact;
        for (int ci : c) mult /= factorial(ci);
        scales_.push_back(std::sqrt(mult));
        for (int i = 0; i < dim; ++i)
            for (int rep = 0; rep < c[static_cast<std::size_t>(i)]; ++rep)
                rep_idx_.push_back(i);
        // next profile in descending lex order: rightmost non-final slot
        // with mass donates one unit; mass to its right collapses onto the
        // slot just after it
        int pos = dim - 2;
        while (pos >= 0 && c[static_cast<std::size_t>(pos)] == 0) --pos;
        if (pos < 0) break;
        int tail = 0;
        for (int q = pos + 1; q < dim; ++q) {
            tail += c[static_cast<std::size_t>(q)];
            c[static_cast<std::size_t>(q)] = 0;
        }
        c[static_cast<std::size_t>(pos)] -= 1;
        c[static_cast<std::size_t>(pos + 1)] = tail + 1;
    }
    if (static_cast<Eigen::Index>(profiles_.size()) != basis_size(order, dim))
        throw NumericError("cvec profile enumeration is inconsistent");
}

const CvecBasis& CvecBasis::get(int order, int dim) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, std::unique_ptr<CvecBasis>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{order, dim}];
    if (!slot) slot.reset(new CvecBasis(order, dim));
    return *slot;
}

Eigen::VectorXd CvecBasis::cvec(const SymTensor& t) const {
    if (t.order() != order_ || t.dim() != dim_)
        throw DimensionError("cvec: tensor does not match basis shape");
    Eigen::VectorXd out(count());
    const int* rep = rep_idx_.data();
    for (int j = 0; j < count(); ++j, rep += order_) {
        double v = 0.0;
        switch (order_) {
            case 1: v = t(rep[0]); break;
            case 2: v = t(rep[0], rep[1]); break;
            default: v = t(rep[0], rep[1], rep[2]); break;
        }
        out[j] = scales_[static_cast<std::size_t>(j)] * v;
    }
    return out;
}

SymTensor CvecBasis::tensor(const Eigen::VectorXd& v) const {
    if (v.size() != count())
        throw DimensionError("cvec inverse: wrong coordinate count");
    SymTensor t(order_, dim_);
    const int* rep = rep_idx_.data();
    for (int j = 0; j < count(); ++j, rep += order_) {
        const double val = v[j] / scales_[static_cast<std::size_t>(j)];
        switch (order_) {
            case 1:
                t(rep[0]) = val;
                break;
            case 2:
                t(rep[0], rep[1]) = val;
                t(rep[1], rep[0]) = val;
                break;
            default: {
                std::array<int, 3> a{rep[0], rep[1], rep[2]};
                std::sort(a.begin(), a.end());
                do {
                    t(a[0], a[1], a[2]) = val;
                } while (std::next_permutation(a.begin(), a.end()));
                break;
            }
        }
    }
    return t;
}

void CvecBasis::cvec_power(const double* x, double* out) const {
    const int* rep = rep_idx_.data();
    switch (order_) {
        case 1:
            for (int j = 0; j < count(); ++j, ++rep)
                out[j] = scales_[static_cast<std::size_t>(j)] * x[rep[0]];
            break;
        case 2:
            for (int j = 0; j < count(); ++j, rep += 2)
                out[j] = scales_[static_cast<std::size_t>(j)] * x[rep[0]] * x[rep[1]];
            break;
        default:
            for (int j = 0; j < count(); ++j, rep += 3)
                out[j] = scales_[static_cast<std::size_t>(j)] * x[rep[0]] * x[rep[1]] *
                         x[rep[2]];
            break;
    }
}

SymTensor tensor_power(const Eigen::VectorXd& x, int order) {
    const int d = static_cast<int>(x.size());
    SymTensor t(order, d);
    switch (order) {
        case 1:
            for (int i = 0; i < d; ++i) t(i) = x[i];
            break;
        case 2:
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) t(i, j) = x[i] * x[j];
            break;
        default:
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    const double xij = x[i] * x[j];
                    for (int k = 0; k < d; ++k) t(i, j, k) = xij * x[k];
                }
            break;
    }
    return t;
}

double inner(const SymTensor& a, const SymTensor& b) {
    check_same_shape(a, b, "tensor inner product");
    return kernels::dot(a.data(), b.data(), static_cast<std::size_t>(a.size()));
}

Eigen::VectorXd cvec(const SymTensor& t) {
    return CvecBasis::get(t.order(), t.dim()).cvec(t);
}

Eigen::VectorXd vvec(const SymTensor& t) {
    return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

SymTensor tensor_from_cvec(const Eigen::VectorXd& v, int order, int dim) {
    return CvecBasis::get(order, dim).tensor(v);
}

Eigen::MatrixXd unfold(const SymTensor& t, int mode) {
    const int p = t.order(), d = t.dim();
    if (mode < 1 || mode > p)
        throw DimensionError("unfold: mode " + std::to_string(mode) +
                             " out of range for order " + std::to_string(p));
    const Eigen::Index cols = SymTensor::flat_size(p, d) / d;
    Eigen::MatrixXd m(d, cols);
    if (p == 1) {
        for (int i = 0; i < d; ++i) m(i, 0) = t(i);
        return m;
    }
    if (p == 2) {
        // both unfoldings are the matrix itself (up to transpose of storage)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                m(i, j) = (mode == 1) ? t(i, j) : t(j, i);
        return m;
    }
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) {
                const double v = t(i, j, k);
                if (mode == 1) m(i, j * d + k) = v;
                else if (mode == 2) m(j, i * d + k) = v;
                else m(k, i * d + j) = v;
            }
    return m;
}

SymTensor refold(const Eigen::MatrixXd& m, int mode, int order, int dim) {
    if (mode < 1 || mode > order)
        throw DimensionError("refold: mode out of range");
    if (m.rows() != dim || m.cols() != SymTensor::flat_size(order, dim) / dim)
        throw DimensionError("refold: matrix shape does not match tensor shape");
    SymTensor t(order, dim);
    if (order == 1) {
        for (int i = 0; i < dim; ++i) t(i) = m(i, 0);
        return t;
    }
    if (order == 2) {
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j)
                if (mode == 1) t(i, j) = m(i, j);
                else t(j, i) = m(i, j);
        return t;
    }
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            for (int k = 0; k < dim; ++k) {
                if (mode == 1) t(i, j, k) = m(i, j * dim + k);
                else if (mode == 2) t(i, j, k) = m(j, i * dim + k);
                else t(i, j, k) = m(k, i * dim + j);
            }
    return t;
}

namespace {

Eigen::VectorXd singular_values(const Eigen::MatrixXd& m) {
    return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
}

double unfolding_norm(const SymTensor& t, bool nuclear) {
    const auto sv1 = singular_values(unfold(t, 1));
    const double n1 = nuclear ? sv1.sum() : sv1[0];
    if (t.order() == 1 || t.is_symmetric(0.0)) return n1;
    double total = n1;
    for (int mode = 2; mode <= t.order(); ++mode) {
        const auto sv = singular_values(unfold(t, mode));
        total += nuclear ? sv.sum() : sv[0];
    }
    return total / t.order();
}

}  // namespace

double nuclear_norm(const SymTensor& t) { return unfolding_norm(t, true); }
double op_norm(const SymTensor& t) { return unfolding_norm(t, false); }

SymTensor multilinear_map(const SymTensor& t, const Eigen::MatrixXd& w) {
    if (t.order() != 3)
        throw DimensionError("multilinear_map: tensor must be order 3");
    const int d = t.dim();
    if (w.rows() != d)
        throw DimensionError("multilinear_map: map must have " + std::to_string(d) +
                             " rows, got " + std::to_string(w.rows()));
    const int k = static_cast<int>(w.cols());
    // contract one mode at a time
    std::vector<double> t1(static_cast<std::size_t>(k) * d * d, 0.0);  // [a,j,l]
    for (int i = 0; i < d; ++i)
        for (int a = 0; a < k; ++a) {
            const double wia = w(i, a);
            if (wia == 0.0) continue;
            kernels::axpy(wia, t.data() + static_cast<std::size_t>(i) * d * d,
                          t1.data() + static_cast<std::size_t>(a) * d * d,
                          static_cast<std::size_t>(d) * d);
        }
    std::vector<double> t2(static_cast<std::size_t>(k) * k * d, 0.0);  // [a,b,l]
    for (int a = 0; a < k; ++a)
        for (int j = 0; j < d; ++j)
            for (int b = 0; b < k; ++b) {
                const double wjb = w(j, b);
                if (wjb == 0.0) continue;
                kernels::axpy(wjb,
                              t1.data() + (static_cast<std::size_t>(a) * d + j) * d,
                              t2.data() + (static_cast<std::size_t>(a) * k + b) * d,
                              static_cast<std::size_t>(d));
            }
    SymTensor out(3, k);
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) {
            const double* row = t2.data() + (static_cast<std::size_t>(a) * k + b) * d;
            for (int c = 0; c < k; ++c)
                out(a, b, c) = kernels::dot(row, w.col(c).data(),
                                            static_cast<std::size_t>(d));
        }
    return out;
}

Eigen::VectorXd apply_two(const SymTensor& t, const Eigen::VectorXd& u) {
    if (t.order() != 3) throw DimensionError("apply_two: tensor must be order 3");
    const int d = t.dim();
    if (u.size() != d) throw DimensionError("apply_two: vector size mismatch");
    Eigen::VectorXd out(d);
    for (int a = 0; a < d; ++a) {
        const double* slab = t.data() + static_cast<std::size_t>(a) * d * d;
        double acc = 0.0;
        for (int j = 0; j < d; ++j)
            acc += u[j] * kernels::dot(slab + static_cast<std::size_t>(j) * d,
                                       u.data(), static_cast<std::size_t>(d));
        out[a] = acc;
    }
    return out;
}

double apply_three(const SymTensor& t, const Eigen::VectorXd& u) {
    return apply_two(t, u).dot(u);
}

SymTensor symmetrize(const SymTensor& t) {
    const int d = t.dim();
    SymTensor out(t.order(), d);
    switch (t.order()) {
        case 1:
            out = t;
            break;
        case 2:
            for (int i = 0; i < d; ++i)
                for (int j = i; j < d; ++j) {
                    const double avg = 0.5 * (t(i, j) + t(j, i));
                    out(i, j) = avg;
                    out(j, i) = avg;
                }
            break;
        default:
            // One average per index class, written to every permutation, so
            // the result is exactly symmetric and re-symmetrizing is a no-op.
            for (int i = 0; i < d; ++i)
                for (int j = i; j < d; ++j)
                    for (int k = j; k < d; ++k) {
                        std::array<int, 3> a{i, j, k};
                        double first = t(i, j, k), sum = 0.0;
                        int count = 0;
                        bool all_equal = true;
                        std::array<int, 3> perm = a;
                        do {
                            const double v = t(perm[0], perm[1], perm[2]);
                            all_equal = all_equal && (v == first);
                            sum += v;
                            ++count;
                        } while (std::next_permutation(perm.begin(), perm.end()));
                        const double avg = all_equal ? first : sum / count;
                        perm = a;
                        do {
                            out(perm[0], perm[1], perm[2]) = avg;
                        } while (std::next_permutation(perm.begin(), perm.end()));
                    }
            break;
    }
    return out;
}

}  // namespace mixreg
