// SPDX-License-Identifier: Apache-2.0

#include "mixreg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mixreg/errors.hpp"
#include "mixreg/rng.hpp"

namespace mixreg {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// seed-derivation tags; per-task streams must never collide
enum : std::uint64_t {
    kTagTruth = 0xA1,
    kTagData = 0xD1,
    kTagPower = 0xF1,
    kTagEmInit = 0xE1,
    kTagPreflight = 0xC1,
};

}  // namespace

std::string_view method_name(Method m) {
    switch (m) {
        case Method::spectral: return "spectral";
        case Method::em: return "em";
        case Method::spectral_em: return "spectral_em";
    }
    return "?";
}

Method method_from_name(std::string_view name) {
    if (name == "spectral") return Method::spectral;
    if (name == "em") return Method::em;
    if (name == "spectral_em") return Method::spectral_em;
    throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

FeatureMap ExperimentConfig::feature_map() const {
    FeatureMap map = FeatureMap::parse(feature_exprs, b);
    if (misspecified) map.excluded = FeatureMap::misspecification_region();
    return map;
}

std::string ExperimentConfig::config_id() const {
    if (!name.empty()) return name;
    std::ostringstream id;
    id << "b" << b << "_d" << d() << "_k" << k << "_n" << n;
    if (misspecified) id << "_mis";
    return id.str();
}

double aligned_error(const MixParams& truth, const MixParams& est) {
    if (truth.k() != est.k() || truth.d() != est.d())
        throw DimensionError("aligned_error: parameter shapes disagree");
    const int k = truth.k();
    if (k > 8)
        throw std::invalid_argument(
            "aligned_error: k > 8 would enumerate > 40320 permutations; use"
            " aligned_error_greedy (approximate) instead");
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double sq = 0.0;
        for (int j = 0; j < k; ++j) {
            const int pj = perm[static_cast<std::size_t>(j)];
            sq += (truth.B.col(j) - est.B.col(pj)).squaredNorm();
            const double dp = truth.pi[j] - est.pi[pj];
            sq += dp * dp;
        }
        best = std::min(best, sq);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best);
}

double aligned_error_greedy(const MixParams& truth, const MixParams& est) {
    if (truth.k() != est.k() || truth.d() != est.d())
        throw DimensionError("aligned_error_greedy: parameter shapes disagree");
    const int k = truth.k();
    std::vector<bool> used(static_cast<std::size_t>(k), false);
    double sq = 0.0;
    for (int j = 0; j < k; ++j) {
        int pick = -1;
        double pick_cost = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (used[static_cast<std::size_t>(c)]) continue;
            const double dp = truth.pi[j] - est.pi[c];
            const double cost = (truth.B.col(j) - est.B.col(c)).squaredNorm() + dp * dp;
            if (cost < pick_cost) {
                pick_cost = cost;
                pick = c;
            }
        }
        used[static_cast<std::size_t>(pick)] = true;
        sq += pick_cost;
    }
    return std::sqrt(sq);
}

namespace {

struct InstanceInputs {
    MixParams truth;
    Dataset data1;  // also the EM dataset
    Dataset data2;
    Dataset data3;
    bool shared = true;
};

struct SpectralStage {
    CompoundMoments moments;
    double regression_ms = 0.0;
    bool ok = false;
    bool converged = false;
    std::string error;
};

int method_index(const std::vector<Method>& methods, Method m) {
    for (std::size_t i = 0; i < methods.size(); ++i)
        if (methods[i] == m) return static_cast<int>(i);
    return -1;
}

int worker_count(int instances) {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("MIXREG_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) hw = std::min(hw, cap);
    }
    return std::min(hw, instances);
}

}  // namespace

ExperimentReport run_config(const ExperimentConfig& cfg_in) {
    ExperimentConfig cfg = cfg_in;
    if (cfg.paper_scale) {
        cfg.n = 500000;
        cfg.instances = 20;
        cfg.attempts = 10;
    }
    if (cfg.instances < 1 || cfg.attempts < 1)
        throw std::invalid_argument("run_config: instances and attempts must be >= 1");
    if (cfg.methods.empty())
        throw std::invalid_argument("run_config: no methods configured");

    const FeatureMap fmap = cfg.feature_map();
    ExperimentReport report;
    report.config_id = cfg.config_id();

    // pre-flight identifiability gate on the configured sampling distribution
    for (int order = 1; order <= 3; ++order) {
        IdentifiabilityResult res = identifiability_check(
            fmap, cfg.identifiability_mc, order,
            derive_seed(cfg.seed, kTagPreflight, static_cast<std::uint64_t>(order)));
        report.preflight.push_back(res);
        if (!res.pass) {
            std::ostringstream msg;
            msg << "identifiability check failed at order " << order
                << " (sigma_min = " << res.sigma_min << ", threshold "
                << res.threshold << ")";
            if (cfg.identifiability == ExperimentConfig::IdentifiabilityPolicy::enforce)
                throw IdentifiabilityError("pre-flight: " + msg.str());
            report.warnings.push_back("pre-flight: " + msg.str() + "; continuing");
        }
    }

    const bool needs_spectral =
        method_index(cfg.methods, Method::spectral) >= 0 ||
        method_index(cfg.methods, Method::spectral_em) >= 0;

    double lambda2 = cfg.lambda2, lambda3 = cfg.lambda3;
    if (cfg.paper_lambdas) std::tie(lambda2, lambda3) = default_lambdas(cfg.n);

    EMConfig em_cfg = cfg.em;
    if (em_cfg.sigma2 <= 0.0)
        em_cfg.sigma2 = cfg.noise.m2() > 0.0 ? cfg.noise.m2() : 1e-6;

    const int nm = static_cast<int>(cfg.methods.size());
    report.records.assign(
        static_cast<std::size_t>(cfg.instances) * cfg.attempts * nm, RunRecord{});
    std::vector<std::string> instance_warnings(
        static_cast<std::size_t>(cfg.instances));

    auto slot = [&](int inst, int att, int mi) -> RunRecord& {
        return report.records[(static_cast<std::size_t>(inst) * cfg.attempts + att) *
                                  nm +
                              mi];
    };

    auto run_instance = [&](int inst) {
        InstanceInputs in;
        in.truth = sample_ground_truth(
            cfg.k, cfg.d(), derive_seed(cfg.seed, kTagTruth, static_cast<std::uint64_t>(inst)));
        const std::uint64_t dseed =
            derive_seed(cfg.seed, kTagData, static_cast<std::uint64_t>(inst), 1);
        in.data1 = sample_dataset(in.truth, fmap, cfg.noise, cfg.n, dseed, false);
        in.shared = cfg.dataset_mode == ExperimentConfig::DatasetMode::shared;
        if (!in.shared) {
            in.data2 = sample_dataset(
                in.truth, fmap, cfg.noise, cfg.n,
                derive_seed(cfg.seed, kTagData, static_cast<std::uint64_t>(inst), 2),
                false);
            in.data3 = sample_dataset(
                in.truth, fmap, cfg.noise, cfg.n,
                derive_seed(cfg.seed, kTagData, static_cast<std::uint64_t>(inst), 3),
                false);
        }
        const Dataset& d2 = in.shared ? in.data1 : in.data2;
        const Dataset& d3 = in.shared ? in.data1 : in.data3;

        SpectralStage stage;
        if (needs_spectral) {
            const auto t0 = Clock::now();
            try {
                stage.moments = estimate_compound(in.data1, d2, d3, cfg.noise,
                                                  lambda2, lambda3, cfg.solver);
                stage.ok = true;
                stage.converged =
                    stage.moments.info2.converged && stage.moments.info3.converged;
            } catch (const std::exception& e) {
                stage.error = e.what();
            }
            stage.regression_ms = ms_since(t0);
        }

        for (int att = 0; att < cfg.attempts; ++att) {
            MixParams spectral_params;
            bool spectral_ok = false;
            bool spectral_conv = false;
            double spectral_ms = stage.regression_ms / cfg.attempts;
            if (needs_spectral) {
                const auto t0 = Clock::now();
                if (stage.ok) {
                    try {
                        PowerMethodConfig pw = cfg.power;
                        pw.seed = derive_seed(cfg.seed, kTagPower,
                                              static_cast<std::uint64_t>(inst),
                                              static_cast<std::uint64_t>(att));
                        FactorizeResult fr =
                            factorize(stage.moments.m2, stage.moments.m3, cfg.k, pw);
                        spectral_params = fr.params;
                        spectral_ok = true;
                        spectral_conv = stage.converged && fr.warnings.empty();
                    } catch (const std::exception& e) {
                        instance_warnings[static_cast<std::size_t>(inst)] =
                            "instance " + std::to_string(inst) + " attempt " +
                            std::to_string(att) + ": spectral failed: " + e.what();
                    }
                } else {
                    instance_warnings[static_cast<std::size_t>(inst)] =
                        "instance " + std::to_string(inst) +
                        ": regression failed: " + stage.error;
                }
                spectral_ms += ms_since(t0);
            }

            for (int mi = 0; mi < nm; ++mi) {
                const Method m = cfg.methods[static_cast<std::size_t>(mi)];
                RunRecord& rec = slot(inst, att, mi);
                rec.instance = inst;
                rec.attempt = att;
                rec.method = m;
                try {
                    if (m == Method::spectral) {
                        rec.wall_ms = spectral_ms;
                        if (!spectral_ok) throw NumericError("spectral stage failed");
                        rec.aligned_error = aligned_error(in.truth, spectral_params);
                        rec.converged = spectral_conv;
                    } else if (m == Method::em) {
                        const auto t0 = Clock::now();
                        MixParams init = init_random(
                            cfg.k, cfg.d(),
                            derive_seed(cfg.seed, kTagEmInit,
                                        static_cast<std::uint64_t>(inst),
                                        static_cast<std::uint64_t>(att)));
                        EMResult em = em_fit(in.data1, cfg.k, init, em_cfg);
                        rec.wall_ms = ms_since(t0);
                        rec.aligned_error = aligned_error(in.truth, em.params);
                        rec.converged = em.converged;
                    } else {
                        const auto t0 = Clock::now();
                        if (!spectral_ok) throw NumericError("spectral stage failed");
                        EMResult em = em_fit(in.data1, cfg.k, spectral_params, em_cfg);
                        rec.wall_ms = spectral_ms + ms_since(t0);
                        rec.aligned_error = aligned_error(in.truth, em.params);
                        rec.converged = em.converged;
                    }
                } catch (const std::exception& e) {
                    rec.failed = true;
                    rec.converged = false;
                    rec.aligned_error = std::numeric_limits<double>::infinity();
                    instance_warnings[static_cast<std::size_t>(inst)] =
                        "instance " + std::to_string(inst) + " attempt " +
                        std::to_string(att) + " " + std::string(method_name(m)) +
                        ": " + e.what();
                }
            }
        }
    };

    const int workers = worker_count(cfg.instances);
    if (workers <= 1) {
        for (int inst = 0; inst < cfg.instances; ++inst) run_instance(inst);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    const int inst = next.fetch_add(1);
                    if (inst >= cfg.instances) return;
                    run_instance(inst);
                }
            });
        for (auto& t : pool) t.join();
    }

    for (const auto& w : instance_warnings)
        if (!w.empty()) report.warnings.push_back(w);
    for (const Method m : cfg.methods) report.aggregates.push_back(aggregate(report, m));
    return report;
}

MethodAggregate aggregate(const ExperimentReport& report, Method m) {
    MethodAggregate agg;
    agg.method = m;
    std::vector<double> errs;
    for (const RunRecord& rec : report.records) {
        if (rec.method != m) continue;
        ++agg.runs;
        if (rec.failed) ++agg.failed;
        errs.push_back(rec.aligned_error);
    }
    if (errs.empty()) return agg;
    double mean = 0.0;
    for (double e : errs) mean += e;
    mean /= static_cast<double>(errs.size());
    double var = 0.0;
    for (double e : errs) var += (e - mean) * (e - mean);
    agg.mean = mean;
    agg.stddev = errs.size() > 1
                     ? std::sqrt(var / static_cast<double>(errs.size() - 1))
                     : 0.0;
    std::sort(errs.begin(), errs.end());
    const std::size_t mid = errs.size() / 2;
    agg.median = errs.size() % 2 ? errs[mid] : 0.5 * (errs[mid - 1] + errs[mid]);
    return agg;
}

std::vector<HistogramBin> histogram_data(const ExperimentReport& report, Method m,
                                         int bins) {
    if (bins < 1) throw std::invalid_argument("histogram_data: bins must be >= 1");
    std::vector<double> errs;
    for (const RunRecord& rec : report.records)
        if (rec.method == m) errs.push_back(rec.aligned_error);
    double max_err = 0.0;
    for (double e : errs)
        if (std::isfinite(e)) max_err = std::max(max_err, e);
    const double width = max_err > 0.0 ? max_err / bins : 1.0;
    std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
    for (int i = 0; i < bins; ++i) {
        out[static_cast<std::size_t>(i)].lo = i * width;
        out[static_cast<std::size_t>(i)].hi = (i + 1) * width;
    }
    for (double e : errs) {
        int idx = std::isfinite(e) ? static_cast<int>(e / width) : bins - 1;
        idx = std::clamp(idx, 0, bins - 1);
        ++out[static_cast<std::size_t>(idx)].count;
    }
    return out;
}

std::vector<CurvePoint> learning_curve(const ExperimentConfig& base,
                                       const std::vector<Eigen::Index>& ns) {
    if (ns.empty()) throw std::invalid_argument("learning_curve: no sample sizes");
    std::vector<CurvePoint> out;
    for (Eigen::Index n : ns) {
        ExperimentConfig cfg = base;
        cfg.n = n;  // paper-default lambdas follow n inside run_config
        ExperimentReport rep = run_config(cfg);
        for (const MethodAggregate& agg : rep.aggregates) {
            CurvePoint pt;
            pt.n = n;
            pt.method = agg.method;
            pt.mean = agg.mean;
            pt.median = agg.median;
            pt.stddev = agg.stddev;
            pt.failed = agg.failed;
            out.push_back(pt);
        }
    }
    return out;
}

namespace {

NoiseSpec noise_from_json(const nlohmann::json& j) {
    const std::string kind = j.value("kind", "gaussian");
    if (kind == "gaussian") return NoiseSpec::gaussian(j.value("sigma2", 0.1));
    if (kind == "uniform") return NoiseSpec::uniform(j.value("half_width", 0.5));
    if (kind == "custom")
        return NoiseSpec::custom(j.at("atoms").get<std::vector<double>>(),
                                 j.at("probs").get<std::vector<double>>());
    throw std::invalid_argument("config: unknown noise kind '" + kind + "'");
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    ExperimentConfig cfg;
    cfg.name = j.value("name", std::string{});
    cfg.b = j.value("b", 1);
    cfg.k = j.value("k", 2);
    cfg.n = j.value("n", static_cast<Eigen::Index>(100000));
    if (j.contains("feature_map"))
        cfg.feature_exprs = j.at("feature_map").get<std::vector<std::string>>();
    if (j.contains("d") && j.at("d").get<int>() != cfg.d())
        throw std::invalid_argument("config: d does not match feature_map length");
    if (j.contains("noise")) cfg.noise = noise_from_json(j.at("noise"));
    if (j.contains("methods")) {
        cfg.methods.clear();
        for (const auto& m : j.at("methods"))
            cfg.methods.push_back(method_from_name(m.get<std::string>()));
    }
    cfg.instances = j.value("instances", 10);
    cfg.attempts = j.value("attempts", 5);
    if (j.contains("lambdas")) {
        const auto& l = j.at("lambdas");
        if (l.is_string()) {
            if (l.get<std::string>() != "paper_default")
                throw std::invalid_argument("config: lambdas must be"
                                            " \"paper_default\" or [l2, l3]");
            cfg.paper_lambdas = true;
        } else {
            cfg.paper_lambdas = false;
            cfg.lambda2 = l.at(0).get<double>();
            cfg.lambda3 = l.at(1).get<double>();
        }
    }
    if (j.contains("dataset_mode")) {
        const std::string mode = j.at("dataset_mode").get<std::string>();
        if (mode == "shared") cfg.dataset_mode = DatasetMode::shared;
        else if (mode == "independent_triples")
            cfg.dataset_mode = DatasetMode::independent_triples;
        else throw std::invalid_argument("config: unknown dataset_mode '" + mode + "'");
    }
    cfg.misspecified = j.value("misspecified", false);
    cfg.seed = j.value("seed", static_cast<std::uint64_t>(1));
    if (j.contains("identifiability")) {
        const std::string pol = j.at("identifiability").get<std::string>();
        if (pol == "enforce") cfg.identifiability = IdentifiabilityPolicy::enforce;
        else if (pol == "warn") cfg.identifiability = IdentifiabilityPolicy::warn;
        else throw std::invalid_argument("config: identifiability must be enforce|warn");
    }
    cfg.identifiability_mc =
        j.value("identifiability_mc", static_cast<Eigen::Index>(10000));
    if (j.contains("em")) {
        const auto& e = j.at("em");
        cfg.em.max_iter = e.value("max_iter", cfg.em.max_iter);
        cfg.em.loglik_tol = e.value("loglik_tol", cfg.em.loglik_tol);
        cfg.em.estimate_sigma2 = e.value("estimate_sigma2", cfg.em.estimate_sigma2);
        cfg.em.sigma2 = e.value("sigma2", 0.0);  // 0 -> follow the noise spec
    } else {
        cfg.em.sigma2 = 0.0;
    }
    if (j.contains("power")) {
        const auto& p = j.at("power");
        cfg.power.restarts = p.value("restarts", cfg.power.restarts);
        cfg.power.iterations = p.value("iterations", cfg.power.iterations);
    }
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        cfg.solver.rho = s.value("rho", cfg.solver.rho);
        cfg.solver.rho_auto = s.value("rho_auto", cfg.solver.rho_auto);
        cfg.solver.rho_adapt = s.value("rho_adapt", cfg.solver.rho_adapt);
        cfg.solver.max_iter = s.value("max_iter", cfg.solver.max_iter);
        cfg.solver.tol_primal = s.value("tol_primal", cfg.solver.tol_primal);
        cfg.solver.tol_dual = s.value("tol_dual", cfg.solver.tol_dual);
    }
    cfg.paper_scale = j.value("paper_scale", false);
    return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

}  // namespace mixreg
