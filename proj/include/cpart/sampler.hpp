#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpart/calibration.hpp"
#include "cpart/cp_prior.hpp"
#include "cpart/eppf.hpp"
#include "cpart/numeric.hpp"
#include "cpart/partition.hpp"
#include "cpart/rng.hpp"

namespace cpart {

// Data model plugged into the reseating sampler. The marginal path serves
// conjugate models (Neal's Algorithm 2 adaptation); the theta path serves
// the auxiliary-variable variant (Algorithm 8 adaptation).
class LikelihoodModel {
  public:
    virtual ~LikelihoodModel() = default;

    virtual bool supports_marginal() const { return false; }
    virtual bool supports_aux() const { return false; }

    // log p(y_item | y_cluster_items); empty cluster = prior predictive.
    virtual double marginal_loglik(int /*item*/, std::span<const int> /*cluster_items*/) const {
        throw std::logic_error("marginal_loglik not implemented");
    }

    virtual double loglik(int /*item*/, const std::vector<double>& /*theta*/) const {
        throw std::logic_error("loglik not implemented");
    }
    virtual std::vector<double> sample_new_theta(Rng& /*rng*/) const {
        throw std::logic_error("sample_new_theta not implemented");
    }
    virtual std::vector<double> posterior_update_theta(std::span<const int> /*items*/,
                                                       Rng& /*rng*/) const {
        throw std::logic_error("posterior_update_theta not implemented");
    }
};

// Likelihood that carries no information; the chain samples the prior.
class FlatLikelihood final : public LikelihoodModel {
  public:
    bool supports_marginal() const override { return true; }
    bool supports_aux() const override { return true; }
    double marginal_loglik(int, std::span<const int>) const override { return 0.0; }
    double loglik(int, const std::vector<double>&) const override { return 0.0; }
    std::vector<double> sample_new_theta(Rng&) const override { return {}; }
    std::vector<double> posterior_update_theta(std::span<const int>, Rng&) const override {
        return {};
    }
};

// Allocation bookkeeping for reseating under a CP prior: cluster sizes and
// the cross-tabulation against the center partition, updated incrementally
// so each candidate's VI penalty is a constant-size correction instead of a
// full recomputation.
class AllocationEngine {
  public:
    AllocationEngine(const CpPrior& prior, const SetPartition& init)
        : center_labels_(prior.center.labels()),
          k0_(prior.center.num_blocks()),
          psi_(prior.psi),
          base_(prior.base),
          n_(prior.center.n()) {
        if (init.n() != n_) throw std::invalid_argument("AllocationEngine: size mismatch");
        labels_ = init.labels();
        k_ = init.num_blocks();
        if (base_.family == EppfFamily::SymmetricDirichlet && k_ > base_.kappa)
            throw std::invalid_argument("AllocationEngine: init has more blocks than components");
        rebuild_tables();
    }

    int n() const { return n_; }
    int num_clusters() const { return k_; }
    double psi() const { return psi_; }
    const EppfSpec& base() const { return base_; }
    const std::vector<int>& assignments() const { return labels_; }
    const std::vector<int>& cluster_sizes() const { return sizes_; }

    std::vector<int> cluster_items(int k) const {
        std::vector<int> out;
        for (int i = 0; i < n_; ++i)
            if (labels_[static_cast<std::size_t>(i)] == k) out.push_back(i);
        return out;
    }

    SetPartition partition() const { return SetPartition(labels_); }

    // Detaches item i. Returns the index of the cluster that vanished (labels
    // above it shift down by one) or -1. The item is parked until assign().
    int remove_item(int i) {
        const int k = labels_[static_cast<std::size_t>(i)];
        if (k < 0) throw std::logic_error("remove_item: item already detached");
        --sizes_[static_cast<std::size_t>(k)];
        --crosstab_[cell(k, center_labels_[static_cast<std::size_t>(i)])];
        labels_[static_cast<std::size_t>(i)] = -1;
        if (sizes_[static_cast<std::size_t>(k)] > 0) return -1;
        // drop the empty cluster, shift higher labels down
        sizes_.erase(sizes_.begin() + k);
        crosstab_.erase(crosstab_.begin() + static_cast<std::ptrdiff_t>(cell(k, 0)),
                        crosstab_.begin() + static_cast<std::ptrdiff_t>(cell(k, 0)) + k0_);
        --k_;
        for (auto& l : labels_)
            if (l > k) --l;
        return k;
    }

    struct Candidates {
        std::vector<double> logw;  // one per existing cluster, then the new-cluster slot
        bool has_new = false;
        double new_logw() const { return logw.back(); }
    };

    // Penalized allocation weights for a detached item: base conditional
    // numerator plus -psi * (VI shift). With a point-mass prior the weight
    // is concentrated on the agreement-forcing candidate.
    Candidates weights(int i) const {
        if (labels_[static_cast<std::size_t>(i)] != -1)
            throw std::logic_error("weights: item must be detached");
        Candidates out;
        const bool allow_new = new_cluster_allowed();
        if (std::isinf(psi_)) {
            const int forced = forced_candidate(i);
            out.logw.assign(static_cast<std::size_t>(k_) + 1, kNegInf);
            out.has_new = allow_new;
            if (forced == kNewCluster) {
                if (!allow_new)
                    throw std::logic_error("weights: point mass needs a new cluster slot");
                out.logw.back() = 0.0;
            } else {
                out.logw[static_cast<std::size_t>(forced)] = 0.0;
            }
            if (!allow_new) out.logw.pop_back();
            return out;
        }

        const int m_i = center_labels_[static_cast<std::size_t>(i)];
        // running sums over the detached state
        double s_c = 0.0;
        for (int s : sizes_) s_c += plogp(s);
        double s_m = 0.0;
        for (int v : crosstab_) s_m += plogp(v);

        out.logw.reserve(static_cast<std::size_t>(k_) + 1);
        for (int k = 0; k < k_; ++k) {
            const int lam = sizes_[static_cast<std::size_t>(k)];
            const int ct = crosstab_[cell(k, m_i)];
            const double neg_h = s_c - plogp(lam) + plogp(lam + 1);
            const double meet_sum = s_m - plogp(ct) + plogp(ct + 1);
            const double dtilde = neg_h - 2.0 * meet_sum;
            out.logw.push_back(conditional_predictive(base_, sizes_, k) - psi_ * dtilde);
        }
        if (allow_new) {
            const double dtilde = (s_c + plogp(1)) - 2.0 * (s_m + plogp(1));
            double lw;
            if (base_.family == EppfFamily::SymmetricDirichlet) {
                // aggregate over the kappa - K interchangeable empty slots
                lw = std::log(static_cast<double>(base_.kappa - k_)) +
                     conditional_predictive(base_, sizes_, k_);
            } else {
                lw = conditional_predictive(base_, sizes_, kNewCluster);
            }
            out.logw.push_back(lw - psi_ * dtilde);
            out.has_new = true;
        }
        return out;
    }

    // Agreement-forcing candidate under the point-mass prior: the largest
    // cluster consisting entirely of items sharing i's center block, else a
    // new cluster. Sweeping this rule reassembles the center partition.
    int forced_candidate(int i) const {
        const int m_i = center_labels_[static_cast<std::size_t>(i)];
        int best = kNewCluster;
        int best_size = 0;
        for (int k = 0; k < k_; ++k) {
            const int lam = sizes_[static_cast<std::size_t>(k)];
            if (lam > 0 && crosstab_[cell(k, m_i)] == lam && lam > best_size) {
                best = k;
                best_size = lam;
            }
        }
        return best;
    }

    // Seats a detached item; k == num_clusters() or kNewCluster opens one.
    // Returns the cluster index used.
    int assign(int i, int k) {
        if (labels_[static_cast<std::size_t>(i)] != -1)
            throw std::logic_error("assign: item must be detached");
        if (k == kNewCluster) k = k_;
        if (k == k_) {
            if (!new_cluster_allowed()) throw std::logic_error("assign: new cluster forbidden");
            sizes_.push_back(0);
            crosstab_.insert(crosstab_.end(), static_cast<std::size_t>(k0_), 0);
            ++k_;
        } else if (k < 0 || k > k_) {
            throw std::invalid_argument("assign: cluster out of range");
        }
        labels_[static_cast<std::size_t>(i)] = k;
        ++sizes_[static_cast<std::size_t>(k)];
        ++crosstab_[cell(k, center_labels_[static_cast<std::size_t>(i)])];
        return k;
    }

    // Relabels clusters into canonical first-occurrence order and returns
    // the old-label -> new-label map so parallel per-cluster state can be
    // permuted alongside.
    std::vector<int> canonicalize_labels() {
        std::vector<int> to_new(static_cast<std::size_t>(k_), -1);
        int next = 0;
        for (int l : labels_) {
            if (l < 0) throw std::logic_error("canonicalize_labels: detached item");
            if (to_new[static_cast<std::size_t>(l)] < 0) to_new[static_cast<std::size_t>(l)] = next++;
        }
        for (auto& l : labels_) l = to_new[static_cast<std::size_t>(l)];
        std::vector<int> sizes(static_cast<std::size_t>(k_));
        std::vector<int> ct(crosstab_.size());
        for (int old = 0; old < k_; ++old) {
            const int nu = to_new[static_cast<std::size_t>(old)];
            sizes[static_cast<std::size_t>(nu)] = sizes_[static_cast<std::size_t>(old)];
            for (int m = 0; m < k0_; ++m) ct[cell(nu, m)] = crosstab_[cell(old, m)];
        }
        sizes_ = std::move(sizes);
        crosstab_ = std::move(ct);
        return to_new;
    }

    // Recomputes tables from the labels and compares; drift guard used by
    // debug sweeps and fuzz tests.
    bool tables_consistent() const {
        std::vector<int> sizes(static_cast<std::size_t>(k_), 0);
        std::vector<int> ct(static_cast<std::size_t>(k_) * static_cast<std::size_t>(k0_), 0);
        for (int i = 0; i < n_; ++i) {
            const int l = labels_[static_cast<std::size_t>(i)];
            if (l < 0) return false;
            ++sizes[static_cast<std::size_t>(l)];
            ++ct[cell(l, center_labels_[static_cast<std::size_t>(i)])];
        }
        return sizes == sizes_ && ct == crosstab_;
    }

  private:
    bool new_cluster_allowed() const {
        if (base_.family == EppfFamily::SymmetricDirichlet) return k_ < base_.kappa;
        return true;
    }

    std::size_t cell(int k, int m) const {
        return static_cast<std::size_t>(k) * static_cast<std::size_t>(k0_) +
               static_cast<std::size_t>(m);
    }

    double plogp(int count) const {
        if (count == 0) return 0.0;
        const double p = static_cast<double>(count) / n_;
        return p * std::log2(p);
    }

    void rebuild_tables() {
        sizes_.assign(static_cast<std::size_t>(k_), 0);
        crosstab_.assign(static_cast<std::size_t>(k_) * static_cast<std::size_t>(k0_), 0);
        for (int i = 0; i < n_; ++i) {
            ++sizes_[static_cast<std::size_t>(labels_[static_cast<std::size_t>(i)])];
            ++crosstab_[cell(labels_[static_cast<std::size_t>(i)],
                             center_labels_[static_cast<std::size_t>(i)])];
        }
    }

    std::vector<int> center_labels_;
    int k0_;
    double psi_;
    EppfSpec base_;
    int n_;
    std::vector<int> labels_;  // -1 marks the detached item
    int k_ = 0;
    std::vector<int> sizes_;
    std::vector<int> crosstab_;  // k x k0, row-major
};

// Standalone view of the per-item conditional: (cluster index or
// kNewCluster, penalized log weight) pairs for reseating item i out of the
// given partition.
inline std::vector<std::pair<int, double>> penalized_allocation_logweights(
    const CpPrior& prior, const SetPartition& current, int item) {
    AllocationEngine eng(prior, current);
    eng.remove_item(item);
    const auto cand = eng.weights(item);
    std::vector<std::pair<int, double>> out;
    const std::size_t k = cand.logw.size() - (cand.has_new ? 1 : 0);
    for (std::size_t j = 0; j < k; ++j) out.emplace_back(static_cast<int>(j), cand.logw[j]);
    if (cand.has_new) out.emplace_back(kNewCluster, cand.logw.back());
    return out;
}

enum class ReseatMode { Marginal, Aux };

// MCMC state for one chain: allocations plus per-cluster parameters (kept
// aligned with the engine's compact cluster indices) and the chain's stream.
struct ChainState {
    AllocationEngine engine;
    std::vector<std::vector<double>> thetas;  // empty in marginal mode
    Rng rng;
    long iteration = 0;

    ChainState(const CpPrior& prior, const SetPartition& init, Rng rng_)
        : engine(prior, init), rng(rng_) {}
};

namespace detail {

inline int sample_from_logweights(std::span<const double> logw, Rng& rng) {
    double mx = kNegInf;
    for (double w : logw) mx = std::max(mx, w);
    if (mx == kNegInf) throw std::runtime_error("sample_from_logweights: all weights zero");
    double total = 0.0;
    std::vector<double> cum(logw.size());
    for (std::size_t j = 0; j < logw.size(); ++j) {
        total += std::exp(logw[j] - mx);
        cum[j] = total;
    }
    const double u = rng.uniform() * total;
    for (std::size_t j = 0; j < logw.size(); ++j)
        if (u < cum[j]) return static_cast<int>(j);
    return static_cast<int>(logw.size()) - 1;
}

}  // namespace detail

// One full reseating pass over all items. In Aux mode, when removing an item
// orphans its cluster parameter, that value is retained as the first
// auxiliary component (Neal's Algorithm 8); the remaining aux_m - 1 are fresh
// draws from the base measure.
inline void reseat_sweep(ChainState& state, const LikelihoodModel& model, ReseatMode mode,
                         int aux_m = 1, const std::vector<int>* order = nullptr) {
    auto& eng = state.engine;
    const int n = eng.n();
    if (mode == ReseatMode::Marginal && !model.supports_marginal())
        throw std::invalid_argument("reseat_sweep: model has no marginal path");
    if (mode == ReseatMode::Aux && !model.supports_aux())
        throw std::invalid_argument("reseat_sweep: model has no sampling path");
    if (mode == ReseatMode::Aux && aux_m < 1)
        throw std::invalid_argument("reseat_sweep: aux_m must be >= 1");

    for (int pos = 0; pos < n; ++pos) {
        const int i = order ? (*order)[static_cast<std::size_t>(pos)] : pos;
        std::optional<std::vector<double>> orphan;
        const int removed = eng.remove_item(i);
        if (removed >= 0 && mode == ReseatMode::Aux) {
            orphan = std::move(state.thetas[static_cast<std::size_t>(removed)]);
        }
        if (removed >= 0 && !state.thetas.empty())
            state.thetas.erase(state.thetas.begin() + removed);

        const auto cand = eng.weights(i);
        const std::size_t k_exist = cand.logw.size() - (cand.has_new ? 1 : 0);

        if (mode == ReseatMode::Marginal) {
            std::vector<double> logw(cand.logw);
            try {
                for (std::size_t k = 0; k < k_exist; ++k) {
                    if (logw[k] == kNegInf) continue;
                    const auto items = eng.cluster_items(static_cast<int>(k));
                    logw[k] += model.marginal_loglik(i, items);
                }
                if (cand.has_new && logw.back() != kNegInf)
                    logw.back() += model.marginal_loglik(i, {});
            } catch (const std::exception& e) {
                throw std::runtime_error("reseat_sweep: likelihood failed at item " +
                                         std::to_string(i) + ": " + e.what());
            }
            const int pick = detail::sample_from_logweights(logw, state.rng);
            eng.assign(i, pick == static_cast<int>(k_exist) ? kNewCluster : pick);
        } else {
            std::vector<std::vector<double>> aux;
            if (cand.has_new) {
                aux.reserve(static_cast<std::size_t>(aux_m));
                if (orphan) aux.push_back(std::move(*orphan));
                while (aux.size() < static_cast<std::size_t>(aux_m))
                    aux.push_back(model.sample_new_theta(state.rng));
            }
            std::vector<double> logw;
            logw.reserve(k_exist + aux.size());
            try {
                for (std::size_t k = 0; k < k_exist; ++k) {
                    double w = cand.logw[k];
                    if (w != kNegInf) w += model.loglik(i, state.thetas[k]);
                    logw.push_back(w);
                }
                for (const auto& th : aux) {
                    double w = cand.has_new
                                   ? cand.new_logw() - std::log(static_cast<double>(aux_m))
                                   : kNegInf;
                    if (w != kNegInf) w += model.loglik(i, th);
                    logw.push_back(w);
                }
            } catch (const std::exception& e) {
                throw std::runtime_error("reseat_sweep: likelihood failed at item " +
                                         std::to_string(i) + ": " + e.what());
            }
            const int pick = detail::sample_from_logweights(logw, state.rng);
            if (pick < static_cast<int>(k_exist)) {
                eng.assign(i, pick);
            } else {
                eng.assign(i, kNewCluster);
                state.thetas.push_back(std::move(aux[static_cast<std::size_t>(pick) - k_exist]));
            }
        }
        assert(eng.tables_consistent());
    }

    // canonical labels at sweep boundaries; within-sweep indices stay stable
    const auto relabel = eng.canonicalize_labels();
    if (!state.thetas.empty()) {
        std::vector<std::vector<double>> permuted(state.thetas.size());
        for (std::size_t old = 0; old < relabel.size(); ++old)
            permuted[static_cast<std::size_t>(relabel[old])] = std::move(state.thetas[old]);
        state.thetas = std::move(permuted);
    }
    if (mode == ReseatMode::Aux) {
        // refresh cluster parameters from their conditional posteriors
        assert(state.thetas.size() == static_cast<std::size_t>(eng.num_clusters()));
        for (int k = 0; k < eng.num_clusters(); ++k) {
            const auto items = eng.cluster_items(k);
            state.thetas[static_cast<std::size_t>(k)] =
                model.posterior_update_theta(items, state.rng);
        }
    }
    ++state.iteration;
}

enum class ChainInit { Center, Singletons, OneBlock, Random, Explicit };

struct ChainConfig {
    long iterations = 1000;
    long burn_in = 0;
    long thin = 1;
    std::uint64_t seed = 0;
    ChainInit init = ChainInit::Center;
    std::optional<SetPartition> explicit_init;
    ReseatMode mode = ReseatMode::Marginal;
    int aux_m = 1;
    bool record_thetas = false;

    void validate() const {
        if (iterations <= burn_in) throw std::invalid_argument("chain: iterations must exceed burn_in");
        if (burn_in < 0) throw std::invalid_argument("chain: burn_in must be >= 0");
        if (thin < 1) throw std::invalid_argument("chain: thin must be >= 1");
        if (init == ChainInit::Explicit && !explicit_init)
            throw std::invalid_argument("chain: explicit init partition missing");
    }
};

inline SetPartition initial_partition(const ChainConfig& cfg, const CpPrior& prior, Rng& rng) {
    const int n = prior.center.n();
    switch (cfg.init) {
        case ChainInit::Center: return prior.center;
        case ChainInit::Singletons: return SetPartition::singletons(n);
        case ChainInit::OneBlock: return SetPartition::one_block(n);
        case ChainInit::Random: return stam_sample(n, rng);
        case ChainInit::Explicit: return *cfg.explicit_init;
    }
    throw std::logic_error("initial_partition: unknown init");
}

struct ChainResult {
    std::vector<SetPartition> samples;  // post burn-in, thinned, canonical
    std::vector<long> sample_iterations;
    // per retained sample: theta of each canonical block (Aux mode with
    // record_thetas only)
    std::vector<std::vector<std::vector<double>>> theta_samples;
};

inline ChainResult run_chain(const CpPrior& prior, const LikelihoodModel& model,
                             const ChainConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    Rng init_rng = rng.substream(1);
    SetPartition init = initial_partition(cfg, prior, init_rng);
    if (cfg.mode == ReseatMode::Aux && prior.base.family == EppfFamily::SymmetricDirichlet &&
        init.num_blocks() > prior.base.kappa)
        throw std::invalid_argument("run_chain: init exceeds component bound");
    ChainState state(prior, init, rng.substream(2));
    if (cfg.mode == ReseatMode::Aux) {
        for (int k = 0; k < state.engine.num_clusters(); ++k) {
            const auto items = state.engine.cluster_items(k);
            state.thetas.push_back(model.posterior_update_theta(items, state.rng));
        }
    }
    ChainResult out;
    for (long it = 1; it <= cfg.iterations; ++it) {
        reseat_sweep(state, model, cfg.mode, cfg.aux_m);
        if (it > cfg.burn_in && (it - cfg.burn_in - 1) % cfg.thin == 0) {
            out.samples.push_back(state.engine.partition());
            out.sample_iterations.push_back(it);
            if (cfg.record_thetas && cfg.mode == ReseatMode::Aux) {
                // engine labels to canonical block order (first occurrence)
                const auto& raw = state.engine.assignments();
                std::vector<int> order;
                for (int l : raw)
                    if (std::find(order.begin(), order.end(), l) == order.end())
                        order.push_back(l);
                std::vector<std::vector<double>> row;
                row.reserve(order.size());
                for (int l : order) row.push_back(state.thetas[static_cast<std::size_t>(l)]);
                out.theta_samples.push_back(std::move(row));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Posterior summaries

struct PosteriorSummary {
    std::vector<std::vector<double>> psm;  // co-clustering frequencies, diagonal 1
    SetPartition map_partition;
    double map_frequency = 0.0;

    double vi_to(const SetPartition& center) const { return vi_distance(map_partition, center); }
};

inline PosteriorSummary posterior_summaries(const std::vector<SetPartition>& samples) {
    if (samples.empty()) throw std::invalid_argument("posterior_summaries: empty sample");
    const int n = samples.front().n();
    PosteriorSummary out;
    out.psm.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    std::map<SetPartition, std::pair<long, std::size_t>> freq;  // count, first index
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const auto& c = samples[s];
        if (c.n() != n) throw std::invalid_argument("posterior_summaries: ragged sample");
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j)
                if (c.label(i) == c.label(j)) {
                    out.psm[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += 1.0;
                    if (i != j)
                        out.psm[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] += 1.0;
                }
        auto [it, fresh] = freq.try_emplace(c, std::make_pair(0L, s));
        ++it->second.first;
        (void)fresh;
    }
    const double m = static_cast<double>(samples.size());
    for (auto& row : out.psm)
        for (auto& v : row) v /= m;

    long best_count = 0;
    for (const auto& [c, cf] : freq) best_count = std::max(best_count, cf.first);
    // earliest-appearing partition among the modes
    const SetPartition* anchor = nullptr;
    std::size_t anchor_first = samples.size();
    for (const auto& [c, cf] : freq)
        if (cf.first == best_count && cf.second < anchor_first) {
            anchor = &c;
            anchor_first = cf.second;
        }
    // modal partition closest to the anchor, then lexicographically smallest
    const SetPartition* pick = nullptr;
    double pick_vi = kInf;
    for (const auto& [c, cf] : freq) {
        if (cf.first != best_count) continue;
        const double d = vi_distance(c, *anchor);
        if (d < pick_vi - kDistanceTol ||
            (std::fabs(d - pick_vi) <= kDistanceTol && (!pick || c < *pick))) {
            pick = &c;
            pick_vi = d;
        }
    }
    out.map_partition = *pick;
    out.map_frequency = static_cast<double>(best_count) / m;
    return out;
}

}  // namespace cpart
