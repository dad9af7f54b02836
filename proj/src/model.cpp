// SPDX-License-Identifier: Apache-2.0

#include "mixreg/model.hpp"

#include <Eigen/Dense>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>

#include "mixreg/errors.hpp"
#include "mixreg/kernels.hpp"
#include "mixreg/rng.hpp"

namespace mixreg {

void MixParams::validate(bool require_full_rank) const {
    if (pi.size() < 1 || B.cols() != pi.size())
        throw DimensionError("MixParams: B must have one column per mixture weight");
    double total = 0.0;
    for (Eigen::Index h = 0; h < pi.size(); ++h) {
        if (!(pi[h] > 0.0))
            throw NumericError("MixParams: mixture proportions must be positive");
        total += pi[h];
    }
    if (std::abs(total - 1.0) > 1e-10)
        throw NumericError("MixParams: mixture proportions must sum to 1");
    if (require_full_rank) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(B);
        if (svd.singularValues()[pi.size() - 1] <= 1e-10)
            throw RankError("MixParams: coefficient matrix is rank deficient");
    }
}

NoiseSpec NoiseSpec::gaussian(double sigma2) {
    if (sigma2 < 0.0) throw NumericError("gaussian noise: variance must be >= 0");
    NoiseSpec s;
    s.kind_ = Kind::gaussian;
    s.m2_ = sigma2;
    s.m3_ = 0.0;
    s.param_ = std::sqrt(sigma2);
    return s;
}

NoiseSpec NoiseSpec::uniform(double half_width) {
    if (half_width < 0.0) throw NumericError("uniform noise: half width must be >= 0");
    NoiseSpec s;
    s.kind_ = Kind::uniform;
    s.m2_ = half_width * half_width / 3.0;
    s.m3_ = 0.0;
    s.param_ = half_width;
    return s;
}

NoiseSpec NoiseSpec::custom(std::vector<double> atoms, std::vector<double> probs) {
    if (atoms.empty() || atoms.size() != probs.size())
        throw DimensionError("custom noise: atoms and probabilities must match");
    double total = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (probs[i] < 0.0) throw NumericError("custom noise: negative probability");
        total += probs[i];
        mean += probs[i] * atoms[i];
    }
    if (std::abs(total - 1.0) > 1e-10)
        throw NumericError("custom noise: probabilities must sum to 1");
    if (std::abs(mean) > 1e-10)
        throw NumericError("custom noise: distribution must have zero mean");
    NoiseSpec s;
    s.kind_ = Kind::custom;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        s.m2_ += probs[i] * atoms[i] * atoms[i];
        s.m3_ += probs[i] * atoms[i] * atoms[i] * atoms[i];
    }
    s.atoms_ = std::move(atoms);
    s.probs_ = std::move(probs);
    return s;
}

double NoiseSpec::sample(Rng& rng) const {
    switch (kind_) {
        case Kind::gaussian:
            return param_ == 0.0 ? 0.0 : param_ * rng.normal();
        case Kind::uniform:
            return rng.uniform(-param_, param_);
        case Kind::custom:
            return atoms_[static_cast<std::size_t>(rng.discrete(probs_))];
    }
    return 0.0;
}

double Monomial::eval(const Eigen::VectorXd& t) const {
    double v = coeff;
    for (std::size_t j = 0; j < exponents.size(); ++j) {
        const double base = t[static_cast<Eigen::Index>(j)];
        for (int e = 0; e < exponents[j]; ++e) v *= base;
    }
    return v;
}

Eigen::VectorXd FeatureMap::apply(const Eigen::VectorXd& t) const {
    if (t.size() != base_dim)
        throw DimensionError("FeatureMap: latent point has wrong dimension");
    Eigen::VectorXd x(out_dim());
    for (int j = 0; j < out_dim(); ++j)
        x[j] = features[static_cast<std::size_t>(j)].eval(t);
    return x;
}

bool FeatureMap::excludes(double coord) const {
    for (const auto& [lo, hi] : excluded)
        if (coord >= lo && coord <= hi) return true;
    return false;
}

std::vector<std::pair<double, double>> FeatureMap::misspecification_region() {
    return {{-0.5, -0.25}, {0.25, 0.5}};
}

namespace {

// grammar: expr := factor ('*' factor)*; factor := number | var ('^' int)?
// var := 't' (one-based index required when base_dim > 1, e.g. "t2")
Monomial parse_monomial(const std::string& expr, int base_dim) {
    Monomial m;
    m.exponents.assign(static_cast<std::size_t>(base_dim), 0);
    std::size_t i = 0;
    auto skip_ws = [&] {
        while (i < expr.size() && std::isspace(static_cast<unsigned char>(expr[i]))) ++i;
    };
    auto fail = [&](const std::string& why) -> void {
        throw NumericError("feature expression '" + expr + "': " + why);
    };
    bool expect_factor = true;
    while (true) {
        skip_ws();
        if (i >= expr.size()) {
            if (expect_factor) fail("missing factor");
            break;
        }
        if (!expect_factor) {
            if (expr[i] != '*') fail("expected '*'");
            ++i;
            expect_factor = true;
            continue;
        }
        if (expr[i] == 't') {
            ++i;
            int var = 1;
            if (i < expr.size() && std::isdigit(static_cast<unsigned char>(expr[i]))) {
                var = 0;
                while (i < expr.size() && std::isdigit(static_cast<unsigned char>(expr[i])))
                    var = var * 10 + (expr[i++] - '0');
            } else if (base_dim > 1) {
                fail("base dimension > 1 requires indexed variables t1..tb");
            }
            if (var < 1 || var > base_dim) fail("variable index out of range");
            int power = 1;
            skip_ws();
            if (i < expr.size() && expr[i] == '^') {
                ++i;
                skip_ws();
                if (i >= expr.size() || !std::isdigit(static_cast<unsigned char>(expr[i])))
                    fail("expected integer exponent after '^'");
                power = 0;
                while (i < expr.size() && std::isdigit(static_cast<unsigned char>(expr[i])))
                    power = power * 10 + (expr[i++] - '0');
            }
            m.exponents[static_cast<std::size_t>(var - 1)] += power;
        } else {
            char* end = nullptr;
            const double value = std::strtod(expr.c_str() + i, &end);
            if (end == expr.c_str() + i) fail("unrecognized token");
            m.coeff *= value;
            i = static_cast<std::size_t>(end - expr.c_str());
        }
        expect_factor = false;
    }
    return m;
}

double draw_latent_coord(Rng& rng, const FeatureMap& fmap) {
    double c;
    do {
        c = rng.uniform(-1.0, 1.0);
    } while (fmap.excludes(c));
    return c;
}

}  // namespace

FeatureMap FeatureMap::parse(const std::vector<std::string>& exprs, int base_dim) {
    if (base_dim < 1) throw DimensionError("FeatureMap: base dimension must be >= 1");
    if (exprs.empty()) throw DimensionError("FeatureMap: feature list is empty");
    FeatureMap map;
    map.base_dim = base_dim;
    map.features.reserve(exprs.size());
    for (const auto& e : exprs) map.features.push_back(parse_monomial(e, base_dim));
    return map;
}

Dataset sample_dataset(const MixParams& params, const FeatureMap& fmap,
                       const NoiseSpec& noise, Eigen::Index n, std::uint64_t seed,
                       bool record_trace) {
    params.validate();
    if (n < 1) throw DimensionError("sample_dataset: need n >= 1");
    if (fmap.out_dim() != params.d())
        throw DimensionError("sample_dataset: feature map dimension does not match B");
    if (!fmap.excluded.empty()) {
        bool covered = true;
        for (int g = 0; g <= 1000 && covered; ++g)
            covered = fmap.excludes(-1.0 + 2.0 * g / 1000.0);
        if (covered)
            throw NumericError("sample_dataset: excluded region covers [-1,1]");
    }

    Rng rng(seed);
    Dataset data;
    data.seed = seed;
    data.X.resize(n, params.d());
    data.y.resize(n);
    if (record_trace) {
        data.component.resize(static_cast<std::size_t>(n));
        data.noise.resize(static_cast<std::size_t>(n));
    }
    Eigen::VectorXd t(fmap.base_dim);
    std::span<const double> weights(params.pi.data(),
                                    static_cast<std::size_t>(params.pi.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < fmap.base_dim; ++j) t[j] = draw_latent_coord(rng, fmap);
        const int h = rng.discrete(weights);
        const double eps = noise.sample(rng);
        data.X.row(i) = fmap.apply(t);
        data.y[i] = params.B.col(h).dot(data.X.row(i)) + eps;
        if (record_trace) {
            data.component[static_cast<std::size_t>(i)] = h;
            data.noise[static_cast<std::size_t>(i)] = eps;
        }
    }
    return data;
}

SymTensor compound_moment(const MixParams& params, int order) {
    params.validate();
    SymTensor m(order, params.d());
    for (int h = 0; h < params.k(); ++h) {
        SymTensor p = tensor_power(params.B.col(h), order);
        p *= params.pi[h];
        m += p;
    }
    return m;
}

namespace {

IdentifiabilityResult check_rows(const Eigen::MatrixXd& X, int order,
                                 double threshold) {
    const int d = static_cast<int>(X.cols());
    const auto& basis = CvecBasis::get(order, d);
    const int m = basis.count();
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
    std::vector<double> c(static_cast<std::size_t>(m));
    Eigen::RowVectorXd row(d);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        row = X.row(i);
        basis.cvec_power(row.data(), c.data());
        kernels::syr_upper(1.0, c.data(), static_cast<std::size_t>(m), gram.data(),
                           static_cast<std::size_t>(m));
    }
    gram /= static_cast<double>(X.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        Eigen::MatrixXd(gram.selfadjointView<Eigen::Upper>()));
    IdentifiabilityResult res;
    res.order = order;
    res.sigma_min = es.eigenvalues().minCoeff();
    res.sigma_max = es.eigenvalues().maxCoeff();
    res.threshold = threshold;
    res.pass = res.sigma_min > threshold;
    return res;
}

}  // namespace

IdentifiabilityResult identifiability_check(const Dataset& data, int order,
                                            double threshold) {
    SymTensor::flat_size(order, 1);  // validates order
    return check_rows(data.X, order, threshold);
}

IdentifiabilityResult identifiability_check(const FeatureMap& fmap, Eigen::Index n_mc,
                                            int order, std::uint64_t seed,
                                            double threshold) {
    SymTensor::flat_size(order, 1);
    if (n_mc < 1) throw DimensionError("identifiability_check: need n_mc >= 1");
    Rng rng(seed);
    Eigen::MatrixXd X(n_mc, fmap.out_dim());
    Eigen::VectorXd t(fmap.base_dim);
    for (Eigen::Index i = 0; i < n_mc; ++i) {
        for (int j = 0; j < fmap.base_dim; ++j) t[j] = draw_latent_coord(rng, fmap);
        X.row(i) = fmap.apply(t);
    }
    return check_rows(X, order, threshold);
}

MixParams sample_ground_truth(int k, int d, std::uint64_t seed) {
    if (k < 1 || d < 1) throw DimensionError("sample_ground_truth: k, d must be >= 1");
    Rng rng(seed);
    MixParams p;
    p.B.resize(d, k);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < d; ++i) p.B(i, j) = rng.normal();
    p.pi.resize(k);
    double total = 0.0;
    for (int h = 0; h < k; ++h) {
        p.pi[h] = rng.gamma(100.0);
        total += p.pi[h];
    }
    p.pi /= total;
    p.validate(/*require_full_rank=*/true);
    return p;
}

namespace {

std::string format_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void Dataset::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (int j = 0; j < d(); ++j) out << "x_" << (j + 1) << ",";
    out << "y";
    if (has_trace()) out << ",h,eps";
    out << "\n";
    for (Eigen::Index i = 0; i < n(); ++i) {
        for (int j = 0; j < d(); ++j) out << format_g17(X(i, j)) << ",";
        out << format_g17(y[i]);
        if (has_trace())
            out << "," << component[static_cast<std::size_t>(i)] << ","
                << format_g17(noise[static_cast<std::size_t>(i)]);
        out << "\n";
    }
}

Dataset Dataset::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) header.push_back(field);
    }
    int d = 0;
    while (d < static_cast<int>(header.size()) &&
           header[static_cast<std::size_t>(d)].rfind("x_", 0) == 0)
        ++d;
    if (d == 0 || d >= static_cast<int>(header.size()) ||
        header[static_cast<std::size_t>(d)] != "y")
        throw std::runtime_error(path + ": unexpected CSV header");
    const bool trace = header.size() == static_cast<std::size_t>(d) + 3;

    std::vector<std::vector<double>> rows;
    std::vector<int> hs;
    std::vector<double> eps;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<double> vals;
        while (std::getline(ss, field, ',')) vals.push_back(std::stod(field));
        if (vals.size() != header.size())
            throw std::runtime_error(path + ": ragged CSV row");
        if (trace) {
            hs.push_back(static_cast<int>(vals[static_cast<std::size_t>(d) + 1]));
            eps.push_back(vals[static_cast<std::size_t>(d) + 2]);
            vals.resize(static_cast<std::size_t>(d) + 1);
        }
        rows.push_back(std::move(vals));
    }
    Dataset data;
    data.X.resize(static_cast<Eigen::Index>(rows.size()), d);
    data.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int j = 0; j < d; ++j)
            data.X(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
        data.y[static_cast<Eigen::Index>(i)] = rows[i][static_cast<std::size_t>(d)];
    }
    data.component = std::move(hs);
    data.noise = std::move(eps);
    return data;
}

}  // namespace mixreg
