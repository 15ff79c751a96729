#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <unordered_set>
#include <vector>

#include <gmpxx.h>

#include "cpart/cp_prior.hpp"
#include "cpart/numeric.hpp"
#include "cpart/partition.hpp"
#include "cpart/rng.hpp"

namespace cpart {

// Breadth-first exploration of the Hasse diagram around a center partition.
struct LocalSearchResult {
    SetPartition center;
    std::vector<SetPartition> explored;  // union of neighborhoods up to depth T
    std::vector<double> distances;       // VI to center, aligned with explored
    double frontier_min_distance = kInf; // min VI among partitions first reached at depth T
    int depth = 0;                       // iterations actually used
    bool exhausted = false;              // the whole lattice was reached before depth T
};

struct ExplorationLimitError : std::runtime_error {
    int completed_depth;
    std::size_t explored_size;
    ExplorationLimitError(int depth, std::size_t size)
        : std::runtime_error("local_search: exploration budget exceeded after depth " +
                             std::to_string(depth)),
          completed_depth(depth),
          explored_size(size) {}
};

// Expands covering moves (splits and merges) T times with global
// deduplication. Every partition at VI distance <= frontier_min_distance is
// guaranteed explored: VI is the minimum weighted path, every edge weight is
// positive, and any escape route passes through the depth-T frontier.
inline LocalSearchResult local_search(const SetPartition& c0, int T,
                                      std::size_t max_explored = 5'000'000) {
    if (T < 1) throw std::invalid_argument("local_search: T must be >= 1");
    LocalSearchResult out;
    out.center = c0;
    std::unordered_set<SetPartition, SetPartitionHash> seen;
    seen.insert(c0);
    out.explored.push_back(c0);
    out.distances.push_back(0.0);
    std::vector<SetPartition> frontier{c0};
    for (int t = 1; t <= T; ++t) {
        std::vector<SetPartition> next;
        for (const auto& p : frontier) {
            const auto nb = hasse_neighbors(p);
            for (const auto* bucket : {&nb.up, &nb.down}) {
                for (const auto& q : *bucket) {
                    if (seen.insert(q).second) {
                        if (seen.size() > max_explored)
                            throw ExplorationLimitError(t - 1, seen.size());
                        next.push_back(q);
                    }
                }
            }
        }
        out.depth = t;
        if (next.empty()) {
            out.exhausted = true;
            break;
        }
        frontier = std::move(next);
        if (t == T) {
            for (const auto& q : frontier)
                out.frontier_min_distance =
                    std::min(out.frontier_min_distance, vi_distance(q, c0));
        }
        for (const auto& q : frontier) {
            out.explored.push_back(q);
            out.distances.push_back(vi_distance(q, c0));
        }
    }
    if (out.exhausted) out.frontier_min_distance = kInf;
    return out;
}

// Uniform sampling over set partitions: draw the number of urns K from the
// Dobinski-formula law p(K=k) = e^-1 k^n / (B_n k!), drop each item into a
// uniform urn, and canonicalize (unused urns vanish). The support of K is
// unbounded; the table is truncated once the accumulated mass reaches
// 1 - 1e-12, far beyond anything a sampler can distinguish.
class StamSampler {
  public:
    explicit StamSampler(int n) : n_(n) {
        if (n < 1) throw std::invalid_argument("StamSampler: n must be >= 1");
        const double log_bell = log_mpz(bell_number(n));
        double cum = 0.0;
        for (int k = 1; cum < 1.0 - 1e-12; ++k) {
            const double lp =
                -1.0 + n * std::log(static_cast<double>(k)) - log_bell - std::lgamma(k + 1.0);
            cum += std::exp(lp);
            cdf_.push_back(std::min(cum, 1.0));
            if (k > 64 * n) break;  // paranoia guard; unreachable mass
        }
        cdf_.back() = 1.0;
    }

    int n() const { return n_; }

    SetPartition draw(Rng& rng) const {
        const double u = rng.uniform();
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        const int k = static_cast<int>(it - cdf_.begin()) + 1;
        std::vector<int> raw(static_cast<std::size_t>(n_));
        for (int i = 0; i < n_; ++i) raw[static_cast<std::size_t>(i)] = rng.uniform_int(k);
        return SetPartition(raw);
    }

  private:
    int n_;
    std::vector<double> cdf_;
};

inline SetPartition stam_sample(int n, Rng& rng) { return StamSampler(n).draw(rng); }

// Spectrum estimation: exact head from the local search, Monte Carlo tail
// from Stam draws with the exact region rejected. Tail counts are
// B* freq / R* as exact rationals, so bin masses still sum to B_N.
// Sampling is split into fixed chunks with substreams derived from the
// caller's stream, so results do not depend on the number of threads.
inline DistanceSpectrum estimate_spectrum(const SetPartition& c0, int T, long R,
                                          const Rng& rng, int threads = 1,
                                          std::size_t max_explored = 5'000'000) {
    if (R < 1) throw std::invalid_argument("estimate_spectrum: R must be >= 1");
    const int n = c0.n();
    const auto ls = local_search(c0, T, max_explored);
    const double head_limit = ls.frontier_min_distance;

    DistanceSpectrum s;
    s.center = c0;
    s.total = bell_number(n);

    mpz_class head_count = 0;
    for (std::size_t i = 0; i < ls.explored.size(); ++i) {
        if (ls.distances[i] <= head_limit + kDistanceTol) {
            s.add(ls.distances[i], configuration(ls.explored[i]), mpq_class(1));
            ++head_count;
        }
    }
    s.exact_bins = s.num_bins();

    const mpz_class b_star = s.total - head_count;
    if (b_star == 0) return s;  // the head is the whole lattice

    // Monte Carlo tail
    struct TailCell {
        double delta;
        Configuration lambda;
        long count;
    };
    const int num_chunks = 64;
    std::vector<std::vector<TailCell>> chunk_cells(static_cast<std::size_t>(num_chunks));
    const StamSampler stam(n);
    auto run_chunk = [&](int chunk) {
        const long lo = R * chunk / num_chunks;
        const long hi = R * (chunk + 1) / num_chunks;
        Rng local = rng.substream(static_cast<std::uint64_t>(chunk));
        auto& cells = chunk_cells[static_cast<std::size_t>(chunk)];
        for (long r = lo; r < hi; ++r) {
            const SetPartition c = stam.draw(local);
            const double d = vi_distance(c, c0);
            if (d <= head_limit + kDistanceTol) continue;  // exact region
            const Configuration lambda = configuration(c);
            bool merged = false;
            for (auto& cell : cells) {
                if (std::fabs(cell.delta - d) <= kDistanceTol && cell.lambda == lambda) {
                    ++cell.count;
                    merged = true;
                    break;
                }
            }
            if (!merged) cells.push_back({d, lambda, 1});
        }
    };
    if (threads <= 1) {
        for (int c = 0; c < num_chunks; ++c) run_chunk(c);
    } else {
        std::vector<std::thread> pool;
        std::atomic_int next{0};
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (int c = next.fetch_add(1); c < num_chunks; c = next.fetch_add(1))
                    run_chunk(c);
            });
        for (auto& th : pool) th.join();
    }

    long accepted = 0;
    for (const auto& cells : chunk_cells)
        for (const auto& cell : cells) accepted += cell.count;
    if (accepted == 0) {
        s.degenerate_tail = true;
        return s;
    }
    const mpq_class scale = mpq_class(b_star) / accepted;
    for (const auto& cells : chunk_cells)
        for (const auto& cell : cells) s.add(cell.delta, cell.lambda, scale * cell.count);
    return s;
}

}  // namespace cpart
