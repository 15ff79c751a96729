#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "cpart/numeric.hpp"
#include "cpart/partition.hpp"

namespace cpart {

enum class EppfFamily { Uniform, DirichletProcess, PitmanYor, SymmetricDirichlet };

inline const char* family_name(EppfFamily f) {
    switch (f) {
        case EppfFamily::Uniform: return "uniform";
        case EppfFamily::DirichletProcess: return "DP";
        case EppfFamily::PitmanYor: return "PY";
        case EppfFamily::SymmetricDirichlet: return "SD";
    }
    return "?";
}

// Baseline prior family over partitions together with its parameters.
struct EppfSpec {
    EppfFamily family = EppfFamily::Uniform;
    double alpha = 1.0;  // DP concentration; PY requires alpha > -sigma
    double sigma = 0.0;  // PY discount in [0, 1)
    int kappa = 0;       // finite components
    double gamma = 1.0;  // symmetric Dirichlet total mass

    static EppfSpec uniform() { return EppfSpec{}; }

    static EppfSpec dirichlet_process(double alpha) {
        if (alpha <= 0.0) throw std::invalid_argument("DP: alpha must be > 0");
        EppfSpec s;
        s.family = EppfFamily::DirichletProcess;
        s.alpha = alpha;
        return s;
    }

    static EppfSpec pitman_yor(double alpha, double sigma) {
        if (sigma < 0.0 || sigma >= 1.0) throw std::invalid_argument("PY: sigma must be in [0,1)");
        if (alpha <= -sigma) throw std::invalid_argument("PY: alpha must exceed -sigma");
        EppfSpec s;
        s.family = EppfFamily::PitmanYor;
        s.alpha = alpha;
        s.sigma = sigma;
        return s;
    }

    static EppfSpec symmetric_dirichlet(int kappa, double gamma) {
        if (kappa < 1) throw std::invalid_argument("SD: kappa must be >= 1");
        if (gamma <= 0.0) throw std::invalid_argument("SD: gamma must be > 0");
        EppfSpec s;
        s.family = EppfFamily::SymmetricDirichlet;
        s.kappa = kappa;
        s.gamma = gamma;
        return s;
    }
};

// Configuration-only EPPF factor on the log scale, with the partition-
// independent normalizer dropped. Uniform gives 0. Configurations that are
// impossible under the family (more blocks than components) get -inf.
inline double g_lambda(const EppfSpec& spec, const Configuration& lambda) {
    const int k = lambda.num_blocks();
    switch (spec.family) {
        case EppfFamily::Uniform:
            return 0.0;
        case EppfFamily::DirichletProcess: {
            double lg = k * std::log(spec.alpha);
            for (int s : lambda.sizes) lg += std::lgamma(static_cast<double>(s));
            return lg;
        }
        case EppfFamily::PitmanYor: {
            double lg = 0.0;
            for (int j = 1; j < k; ++j) lg += std::log(spec.alpha + j * spec.sigma);
            for (int s : lambda.sizes)
                lg += std::lgamma(s - spec.sigma) - std::lgamma(1.0 - spec.sigma);
            return lg;
        }
        case EppfFamily::SymmetricDirichlet: {
            if (k > spec.kappa) return kNegInf;
            const double gk = spec.gamma / spec.kappa;
            double lg = std::lgamma(spec.kappa + 1.0) - std::lgamma(spec.kappa - k + 1.0);
            for (int s : lambda.sizes) lg += std::lgamma(gk + s) - std::lgamma(gk);
            return lg;
        }
    }
    throw std::logic_error("g_lambda: unknown family");
}

// Log of the partition-independent normalizer so that
// log_eppf = g_lambda - log_eppf_normalizer.
inline double log_eppf_normalizer(const EppfSpec& spec, int n) {
    switch (spec.family) {
        case EppfFamily::Uniform:
            return log_mpz(bell_number(n));
        case EppfFamily::DirichletProcess:
            return log_rising(spec.alpha, n);
        case EppfFamily::PitmanYor:
            return log_rising(spec.alpha + 1.0, n - 1);
        case EppfFamily::SymmetricDirichlet:
            return std::lgamma(spec.gamma + n) - std::lgamma(spec.gamma);
    }
    throw std::logic_error("log_eppf_normalizer: unknown family");
}

// Log prior probability of a partition under the baseline EPPF.
inline double log_eppf(const EppfSpec& spec, const SetPartition& c) {
    const double g = g_lambda(spec, configuration(c));
    if (g == kNegInf) return kNegInf;
    return g - log_eppf_normalizer(spec, c.n());
}

// Sentinel cluster index meaning "open a new cluster".
inline constexpr int kNewCluster = -1;

// Unnormalized log weight (the shared denominator is dropped) of seating one
// item into cluster k given the sizes of the remaining clusters. For the
// finite symmetric-Dirichlet family k may address an empty component
// (sizes.size() <= k < kappa); a new cluster is only meaningful for the
// unbounded families.
inline double conditional_predictive(const EppfSpec& spec, std::span<const int> sizes, int k) {
    const int kexist = static_cast<int>(sizes.size());
    const bool is_new = (k == kNewCluster);
    if (!is_new && k < 0) throw std::invalid_argument("conditional_predictive: bad cluster index");
    switch (spec.family) {
        case EppfFamily::Uniform:
            // every completion of the partition is equally likely
            if (!is_new && k >= kexist)
                throw std::invalid_argument("conditional_predictive: cluster out of range");
            return 0.0;
        case EppfFamily::DirichletProcess:
            if (is_new) return std::log(spec.alpha);
            if (k >= kexist)
                throw std::invalid_argument("conditional_predictive: cluster out of range");
            return std::log(static_cast<double>(sizes[static_cast<std::size_t>(k)]));
        case EppfFamily::PitmanYor:
            if (is_new) return std::log(spec.alpha + spec.sigma * kexist);
            if (k >= kexist)
                throw std::invalid_argument("conditional_predictive: cluster out of range");
            return std::log(sizes[static_cast<std::size_t>(k)] - spec.sigma);
        case EppfFamily::SymmetricDirichlet: {
            if (is_new)
                throw std::invalid_argument(
                    "conditional_predictive: new cluster undefined for finite family");
            if (k >= spec.kappa)
                throw std::invalid_argument("conditional_predictive: cluster out of range");
            const double lam = k < kexist ? sizes[static_cast<std::size_t>(k)] : 0.0;
            return std::log(lam + spec.gamma / spec.kappa);
        }
    }
    throw std::logic_error("conditional_predictive: unknown family");
}

}  // namespace cpart
