#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "cpart/cp_prior.hpp"
#include "cpart/polya_gamma.hpp"
#include "cpart/rng.hpp"
#include "cpart/sampler.hpp"

namespace cpart {

// Case observations for one defect: covariate rows and binary responses.
struct DefectData {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
};

// Grouped binary datasets, one per defect, with an optional shared control
// block (all-zero responses) logically appended to every defect's data.
struct GroupedBinaryData {
    std::vector<DefectData> defects;
    std::optional<Eigen::MatrixXd> shared_controls;
    std::vector<std::string> defect_names;  // optional, parallel to defects

    int n_defects() const { return static_cast<int>(defects.size()); }
    int p() const { return defects.empty() ? 0 : static_cast<int>(defects.front().X.cols()); }

    long own_rows(int i) const { return defects[static_cast<std::size_t>(i)].X.rows(); }
    long control_rows() const { return shared_controls ? shared_controls->rows() : 0; }
    long rows(int i) const { return own_rows(i) + control_rows(); }

    // covariate row j of defect i's logical dataset (own rows first)
    Eigen::VectorXd x_row(int i, long j) const {
        const auto& d = defects[static_cast<std::size_t>(i)];
        if (j < d.X.rows()) return d.X.row(j);
        return shared_controls->row(j - d.X.rows());
    }
    double y_at(int i, long j) const {
        const auto& d = defects[static_cast<std::size_t>(i)];
        return j < d.y.size() ? d.y(j) : 0.0;
    }

    void validate() const {
        if (defects.empty()) throw std::invalid_argument("GroupedBinaryData: no defects");
        const int pp = p();
        for (const auto& d : defects) {
            if (d.X.cols() != pp) throw std::invalid_argument("GroupedBinaryData: ragged covariates");
            if (d.X.rows() != d.y.size())
                throw std::invalid_argument("GroupedBinaryData: X/y row mismatch");
            if (d.X.rows() < 1) throw std::invalid_argument("GroupedBinaryData: empty defect");
            for (long j = 0; j < d.y.size(); ++j)
                if (d.y(j) != 0.0 && d.y(j) != 1.0)
                    throw std::invalid_argument("GroupedBinaryData: responses must be 0/1");
        }
        if (shared_controls && shared_controls->cols() != pp)
            throw std::invalid_argument("GroupedBinaryData: control covariate mismatch");
    }
};

// Intercept prior N(a0, 1/tau0), coefficient prior N_p(b, Q).
struct GlmHyper {
    double a0 = 0.0;
    double tau0 = 0.5;
    Eigen::VectorXd b;
    Eigen::MatrixXd Q;

    void validate(int p) const {
        if (tau0 <= 0.0) throw std::invalid_argument("GlmHyper: tau0 must be > 0");
        if (b.size() != p) throw std::invalid_argument("GlmHyper: b has wrong length");
        if (Q.rows() != p || Q.cols() != p) throw std::invalid_argument("GlmHyper: Q has wrong shape");
        if (!Q.isApprox(Q.transpose(), 1e-12))
            throw std::invalid_argument("GlmHyper: Q must be symmetric");
        Eigen::LLT<Eigen::MatrixXd> llt(Q);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("GlmHyper: Q must be positive definite");
    }

    static GlmHyper diagonal(int p, double a0, double intercept_var, double q_diag,
                             double b_val = 0.0) {
        GlmHyper h;
        h.a0 = a0;
        h.tau0 = 1.0 / intercept_var;
        h.b = Eigen::VectorXd::Constant(p, b_val);
        h.Q = Eigen::MatrixXd::Identity(p, p) * q_diag;
        return h;
    }
};

// Mutable sampler state: intercepts, one coefficient vector per nonempty
// cluster (aligned with the allocation engine's compact indices), and one
// Polya-Gamma latent per (defect, observation) pair including the defect's
// view of the shared controls.
struct GlmParams {
    Eigen::VectorXd intercepts;
    std::vector<Eigen::VectorXd> cluster_betas;
    std::vector<Eigen::VectorXd> omegas;  // omegas[i] has data.rows(i) entries
};

struct FactorizationError : std::runtime_error {
    int cluster;
    explicit FactorizationError(int k)
        : std::runtime_error("beta update: non-positive-definite precision in cluster " +
                             std::to_string(k)),
          cluster(k) {}
};

namespace glm_detail {

inline double log1pexp(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

}  // namespace glm_detail

// log p(y_i | X_i, alpha_i, beta): the Bernoulli-logit likelihood of defect
// i's full dataset, no augmentation.
inline double defect_loglik(const GroupedBinaryData& data, int i, double alpha,
                            const Eigen::VectorXd& beta) {
    double ll = 0.0;
    const long rows = data.rows(i);
    for (long j = 0; j < rows; ++j) {
        const double eta = alpha + data.x_row(i, j).dot(beta);
        ll += data.y_at(i, j) * eta - glm_detail::log1pexp(eta);
    }
    return ll;
}

// --------------------------------------------------------------------------
// Conditional posterior parameters (exposed for direct verification)

struct GaussianPosterior {
    double mean = 0.0;
    double precision = 0.0;
};

inline GaussianPosterior intercept_posterior(const GroupedBinaryData& data, int i,
                                             const Eigen::VectorXd& beta,
                                             const Eigen::VectorXd& omega_i,
                                             const GlmHyper& hyper) {
    double tau = hyper.tau0;
    double acc = hyper.a0 * hyper.tau0;
    const long rows = data.rows(i);
    for (long j = 0; j < rows; ++j) {
        const double om = omega_i(j);
        tau += om;
        acc += data.y_at(i, j) - 0.5 - om * data.x_row(i, j).dot(beta);
    }
    return {acc / tau, tau};
}

struct MvnPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd precision;
};

// Posterior Normal(b_k, Q_k) for one cluster's coefficients given the
// defects assigned to it: Q_k^-1 = X' Omega X + Q^-1, aggregated across the
// member defects' full datasets; kappa_ij = y_ij - 1/2 - omega_ij alpha_i.
inline MvnPosterior beta_posterior(const GroupedBinaryData& data,
                                   std::span<const int> cluster_defects,
                                   const GlmParams& params, const GlmHyper& hyper) {
    const int p = data.p();
    const Eigen::MatrixXd q_inv = hyper.Q.llt().solve(Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd prec = q_inv;
    Eigen::VectorXd rhs = q_inv * hyper.b;
    for (int i : cluster_defects) {
        const double alpha = params.intercepts(i);
        const auto& om = params.omegas[static_cast<std::size_t>(i)];
        const long rows = data.rows(i);
        for (long j = 0; j < rows; ++j) {
            const Eigen::VectorXd x = data.x_row(i, j);
            prec.selfadjointView<Eigen::Lower>().rankUpdate(x, om(j));
            rhs += x * (data.y_at(i, j) - 0.5 - om(j) * alpha);
        }
    }
    prec = prec.selfadjointView<Eigen::Lower>();
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success) throw FactorizationError(-1);
    return {llt.solve(rhs), prec};
}

inline Eigen::VectorXd sample_mvn_from_precision(const Eigen::VectorXd& mean,
                                                 const Eigen::MatrixXd& precision, Rng& rng,
                                                 int cluster_for_error = -1) {
    if (mean.size() == 0) return mean;  // intercept-only model
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) throw FactorizationError(cluster_for_error);
    Eigen::VectorXd z(mean.size());
    for (long j = 0; j < z.size(); ++j) z(j) = rng.normal();
    // solve L' u = z  =>  u ~ N(0, precision^-1)
    return mean + llt.matrixU().solve(z);
}

// --------------------------------------------------------------------------
// Gibbs steps

inline void gibbs_update_omegas(const GroupedBinaryData& data, const std::vector<int>& labels,
                                GlmParams& params, Rng& rng) {
    const int n = data.n_defects();
    for (int i = 0; i < n; ++i) {
        const double alpha = params.intercepts(i);
        const auto& beta = params.cluster_betas[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        auto& om = params.omegas[static_cast<std::size_t>(i)];
        const long rows = data.rows(i);
        for (long j = 0; j < rows; ++j)
            om(j) = sample_pg1(alpha + data.x_row(i, j).dot(beta), rng);
    }
}

inline void gibbs_update_intercepts(const GroupedBinaryData& data, const std::vector<int>& labels,
                                    GlmParams& params, const GlmHyper& hyper, Rng& rng) {
    const int n = data.n_defects();
    for (int i = 0; i < n; ++i) {
        const auto& beta = params.cluster_betas[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        const auto post = intercept_posterior(data, i, beta, params.omegas[static_cast<std::size_t>(i)], hyper);
        params.intercepts(i) = rng.normal(post.mean, 1.0 / std::sqrt(post.precision));
    }
}

inline void gibbs_update_betas(const GroupedBinaryData& data, const AllocationEngine& engine,
                               GlmParams& params, const GlmHyper& hyper, Rng& rng) {
    for (int k = 0; k < engine.num_clusters(); ++k) {
        const auto members = engine.cluster_items(k);
        MvnPosterior post;
        try {
            post = beta_posterior(data, members, params, hyper);
        } catch (const FactorizationError&) {
            throw FactorizationError(k);
        }
        params.cluster_betas[static_cast<std::size_t>(k)] =
            sample_mvn_from_precision(post.mean, post.precision, rng, k);
    }
}

// Reseats every defect among existing clusters and a new one. The allocation
// weight multiplies the penalized prior conditional by the un-augmented
// Bernoulli likelihood of the defect's full dataset. A defect orphaning its
// cluster keeps the orphaned coefficients as the new-cluster candidate
// (auxiliary-variable scheme with one component); otherwise the candidate is
// a fresh draw from the coefficient prior.
inline void gibbs_update_allocations(const GroupedBinaryData& data, AllocationEngine& engine,
                                     GlmParams& params, const GlmHyper& hyper, Rng& rng) {
    const int n = data.n_defects();
    for (int i = 0; i < n; ++i) {
        std::optional<Eigen::VectorXd> orphan;
        const int removed = engine.remove_item(i);
        if (removed >= 0) {
            orphan = std::move(params.cluster_betas[static_cast<std::size_t>(removed)]);
            params.cluster_betas.erase(params.cluster_betas.begin() + removed);
        }
        const auto cand = engine.weights(i);
        const std::size_t k_exist = cand.logw.size() - (cand.has_new ? 1 : 0);
        Eigen::VectorXd fresh;
        std::vector<double> logw(cand.logw);
        const double alpha = params.intercepts(i);
        for (std::size_t k = 0; k < k_exist; ++k) {
            if (logw[k] == kNegInf) continue;
            logw[k] += defect_loglik(data, i, alpha, params.cluster_betas[k]);
        }
        if (cand.has_new && logw.back() != kNegInf) {
            if (orphan) {
                fresh = *orphan;
            } else {
                fresh = sample_mvn_from_precision(
                    hyper.b, hyper.Q.llt().solve(Eigen::MatrixXd::Identity(data.p(), data.p())),
                    rng);
            }
            logw.back() += defect_loglik(data, i, alpha, fresh);
        }
        const int pick = detail::sample_from_logweights(logw, rng);
        if (pick == static_cast<int>(k_exist)) {
            engine.assign(i, kNewCluster);
            params.cluster_betas.push_back(std::move(fresh));
        } else {
            engine.assign(i, pick);
        }
    }
    // canonical labels at the end of the allocation sweep
    const auto relabel = engine.canonicalize_labels();
    std::vector<Eigen::VectorXd> permuted(params.cluster_betas.size());
    for (std::size_t old = 0; old < relabel.size(); ++old)
        permuted[static_cast<std::size_t>(relabel[old])] = std::move(params.cluster_betas[old]);
    params.cluster_betas = std::move(permuted);
}

// --------------------------------------------------------------------------
// Full fit

struct GlmFitConfig {
    long iterations = 5000;
    long burn_in = 1000;
    long thin = 1;
    std::uint64_t seed = 0;
    ChainInit init = ChainInit::Center;
    std::optional<SetPartition> explicit_init;

    void validate() const {
        if (iterations <= burn_in)
            throw std::invalid_argument("GlmFitConfig: iterations must exceed burn_in");
        if (burn_in < 0 || thin < 1) throw std::invalid_argument("GlmFitConfig: bad trace settings");
    }
};

struct GlmSampleRecord {
    SetPartition partition;
    Eigen::MatrixXd defect_betas;  // N x p, row i = beta of defect i's cluster
    Eigen::VectorXd intercepts;    // N
};

struct GlmFitResult {
    std::vector<GlmSampleRecord> samples;
    std::vector<long> sample_iterations;
    PosteriorSummary summary;                 // from the partition trace
    Eigen::MatrixXd beta_posterior_mean;      // N x p, per defect
    Eigen::VectorXd intercept_posterior_mean; // N
};

inline GlmFitResult fit(const GroupedBinaryData& data, const GlmHyper& hyper,
                        const CpPrior& prior, const GlmFitConfig& cfg) {
    data.validate();
    hyper.validate(data.p());
    cfg.validate();
    const int n = data.n_defects();
    if (prior.center.n() != n)
        throw std::invalid_argument("fit: center partition size differs from defect count");

    Rng master(cfg.seed);
    Rng init_rng = master.substream(1);
    Rng rng = master.substream(2);

    ChainConfig dummy;
    dummy.init = cfg.init;
    dummy.explicit_init = cfg.explicit_init;
    const SetPartition init = initial_partition(dummy, prior, init_rng);
    AllocationEngine engine(prior, init);

    GlmParams params;
    params.intercepts = Eigen::VectorXd::Zero(n);
    params.omegas.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        params.omegas.emplace_back(Eigen::VectorXd::Constant(data.rows(i), 0.25));
    for (int k = 0; k < engine.num_clusters(); ++k)
        params.cluster_betas.push_back(sample_mvn_from_precision(
            hyper.b, hyper.Q.llt().solve(Eigen::MatrixXd::Identity(data.p(), data.p())), rng));

    GlmFitResult out;
    const long kept = (cfg.iterations - cfg.burn_in + cfg.thin - 1) / cfg.thin;
    out.samples.reserve(static_cast<std::size_t>(kept));

    for (long it = 1; it <= cfg.iterations; ++it) {
        gibbs_update_omegas(data, engine.assignments(), params, rng);
        gibbs_update_intercepts(data, engine.assignments(), params, hyper, rng);
        gibbs_update_betas(data, engine, params, hyper, rng);
        gibbs_update_allocations(data, engine, params, hyper, rng);
        if (it > cfg.burn_in && (it - cfg.burn_in - 1) % cfg.thin == 0) {
            GlmSampleRecord rec;
            rec.partition = engine.partition();
            rec.intercepts = params.intercepts;
            rec.defect_betas.resize(n, data.p());
            const auto& labels = engine.assignments();
            for (int i = 0; i < n; ++i)
                rec.defect_betas.row(i) =
                    params.cluster_betas[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
            out.samples.push_back(std::move(rec));
            out.sample_iterations.push_back(it);
        }
    }

    std::vector<SetPartition> trace;
    trace.reserve(out.samples.size());
    for (const auto& r : out.samples) trace.push_back(r.partition);
    out.summary = posterior_summaries(trace);

    out.beta_posterior_mean = Eigen::MatrixXd::Zero(n, data.p());
    out.intercept_posterior_mean = Eigen::VectorXd::Zero(n);
    for (const auto& r : out.samples) {
        out.beta_posterior_mean += r.defect_betas;
        out.intercept_posterior_mean += r.intercepts;
    }
    out.beta_posterior_mean /= static_cast<double>(out.samples.size());
    out.intercept_posterior_mean /= static_cast<double>(out.samples.size());
    return out;
}

// --------------------------------------------------------------------------
// Synthetic study: 12 defects in 4 consecutive groups of 3, 10 Bernoulli
// covariates, group-shared coefficients, no intercepts.

struct SimulatedStudy {
    GroupedBinaryData data;
    SetPartition true_partition;
    Eigen::MatrixXd true_betas;  // N x p
};

inline SimulatedStudy simulate_study(std::uint64_t seed, double size_scale = 1.0) {
    if (size_scale <= 0.0) throw std::invalid_argument("simulate_study: bad scale");
    constexpr int n_defects = 12;
    constexpr int p = 10;
    const long base_sizes[n_defects] = {100, 600, 200, 300, 100, 100, 500, 100, 200, 200, 200, 200};

    Eigen::MatrixXd betas = Eigen::MatrixXd::Zero(n_defects, p);
    auto set_group = [&](int g, std::initializer_list<std::pair<int, double>> coef) {
        for (int d = 3 * g; d < 3 * (g + 1); ++d)
            for (const auto& [idx, v] : coef) betas(d, idx - 1) = v;  // one-based indices
    };
    set_group(0, {{1, 0.7}, {2, -1.2}, {3, 0.5}, {4, 0.5}});
    set_group(1, {{4, 0.7}, {5, -0.7}, {6, 0.7}});
    set_group(2, {{9, 0.7}, {10, -1.2}});
    set_group(3, {{1, 0.7}, {2, -0.7}, {9, 0.7}, {10, -0.7}});

    SimulatedStudy out;
    out.true_betas = betas;
    std::vector<int> labels(n_defects);
    for (int i = 0; i < n_defects; ++i) labels[static_cast<std::size_t>(i)] = i / 3;
    out.true_partition = SetPartition::from_canonical(labels);

    Rng rng(seed);
    for (int i = 0; i < n_defects; ++i) {
        const long ni = std::max<long>(1, std::lround(base_sizes[i] * size_scale));
        DefectData d;
        d.X.resize(ni, p);
        d.y.resize(ni);
        const Eigen::VectorXd beta = betas.row(i);
        for (long j = 0; j < ni; ++j) {
            for (int c = 0; c < p; ++c) d.X(j, c) = rng.uniform() < 0.5 ? 1.0 : 0.0;
            const double eta = d.X.row(j).dot(beta);
            const double prob = 1.0 / (1.0 + std::exp(-eta));
            d.y(j) = rng.uniform() < prob ? 1.0 : 0.0;
        }
        out.data.defects.push_back(std::move(d));
        out.data.defect_names.push_back("defect" + std::to_string(i + 1));
    }
    return out;
}

}  // namespace cpart
