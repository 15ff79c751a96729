#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <gmpxx.h>

#include "cpart/numeric.hpp"

namespace cpart {

// Two VI values are treated as the same distance bin when within this
// absolute tolerance; far below the minimum edge weight 2/N at any
// enumerable N.
inline constexpr double kDistanceTol = 1e-9;

// Largest N for which full enumeration of the partition lattice is allowed
// by default (B_13 ~ 2.8e7).
inline constexpr int kDefaultEnumerationCap = 13;

// Multiset of block sizes, non-increasing. The image of a set partition
// under the configuration map; an integer partition of n.
struct Configuration {
    std::vector<int> sizes;

    Configuration() = default;
    explicit Configuration(std::vector<int> s) : sizes(std::move(s)) {
        std::sort(sizes.begin(), sizes.end(), std::greater<int>());
        for (int v : sizes)
            if (v < 1) throw std::invalid_argument("Configuration: sizes must be >= 1");
    }

    int n() const { return std::accumulate(sizes.begin(), sizes.end(), 0); }
    int num_blocks() const { return static_cast<int>(sizes.size()); }

    bool operator==(const Configuration& o) const { return sizes == o.sizes; }
    bool operator<(const Configuration& o) const { return sizes < o.sizes; }

    std::string to_string() const {
        std::string out;
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            if (i) out += '|';
            out += std::to_string(sizes[i]);
        }
        return out;
    }
};

// A set partition of {0, ..., n-1} in canonical restricted-growth form:
// label of item 0 is 0 and each subsequent label is at most one more than
// the maximum of the preceding labels. Equality of canonical labels is
// equality of partitions.
class SetPartition {
  public:
    SetPartition() = default;

    // Canonicalizes arbitrary integer labels by first occurrence.
    explicit SetPartition(std::span<const int> raw_labels) {
        if (raw_labels.empty())
            throw std::invalid_argument("SetPartition: empty label vector");
        labels_.resize(raw_labels.size());
        std::vector<std::pair<int, int>> seen;  // raw label -> canonical
        seen.reserve(raw_labels.size());
        int next = 0;
        for (std::size_t i = 0; i < raw_labels.size(); ++i) {
            const int raw = raw_labels[i];
            int mapped = -1;
            for (const auto& [r, c] : seen)
                if (r == raw) { mapped = c; break; }
            if (mapped < 0) {
                mapped = next++;
                seen.emplace_back(raw, mapped);
            }
            labels_[i] = mapped;
        }
        k_ = next;
    }

    explicit SetPartition(const std::vector<int>& raw_labels)
        : SetPartition(std::span<const int>(raw_labels)) {}
    explicit SetPartition(std::initializer_list<int> raw_labels)
        : SetPartition(std::span<const int>(raw_labels.begin(), raw_labels.size())) {}

    // Adopts labels that are already canonical (checked).
    static SetPartition from_canonical(std::vector<int> labels) {
        SetPartition p;
        if (labels.empty())
            throw std::invalid_argument("SetPartition: empty label vector");
        int mx = -1;
        for (int v : labels) {
            if (v < 0 || v > mx + 1)
                throw std::invalid_argument("SetPartition: labels not in restricted-growth form");
            mx = std::max(mx, v);
        }
        p.labels_ = std::move(labels);
        p.k_ = mx + 1;
        return p;
    }

    static SetPartition singletons(int n) {
        std::vector<int> l(static_cast<std::size_t>(n));
        std::iota(l.begin(), l.end(), 0);
        return from_canonical(std::move(l));
    }

    static SetPartition one_block(int n) {
        return from_canonical(std::vector<int>(static_cast<std::size_t>(n), 0));
    }

    int n() const { return static_cast<int>(labels_.size()); }
    int num_blocks() const { return k_; }
    int label(int item) const { return labels_[static_cast<std::size_t>(item)]; }
    const std::vector<int>& labels() const { return labels_; }

    std::vector<int> block_sizes() const {
        std::vector<int> s(static_cast<std::size_t>(k_), 0);
        for (int l : labels_) ++s[static_cast<std::size_t>(l)];
        return s;
    }

    std::vector<std::vector<int>> blocks() const {
        std::vector<std::vector<int>> b(static_cast<std::size_t>(k_));
        for (int i = 0; i < n(); ++i)
            b[static_cast<std::size_t>(labels_[static_cast<std::size_t>(i)])].push_back(i);
        return b;
    }

    bool operator==(const SetPartition& o) const { return labels_ == o.labels_; }
    bool operator<(const SetPartition& o) const { return labels_ < o.labels_; }

    // Comma-separated canonical labels, e.g. "0,0,1,2".
    std::string to_string() const {
        std::string out;
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            if (i) out += ',';
            out += std::to_string(labels_[i]);
        }
        return out;
    }

    // One-based block notation, e.g. "{1,2}{3,4}".
    std::string to_block_string() const {
        std::string out;
        for (const auto& b : blocks()) {
            out += '{';
            for (std::size_t i = 0; i < b.size(); ++i) {
                if (i) out += ',';
                out += std::to_string(b[i] + 1);
            }
            out += '}';
        }
        return out;
    }

  private:
    std::vector<int> labels_;
    int k_ = 0;
};

struct SetPartitionHash {
    std::size_t operator()(const SetPartition& p) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (int v : p.labels()) {
            h ^= static_cast<std::uint64_t>(v) + 0x9E3779B97F4A7C15ULL;
            h *= 0x100000001b3ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

inline SetPartition canonicalize(std::span<const int> raw_labels) {
    return SetPartition(raw_labels);
}
inline SetPartition canonicalize(const std::vector<int>& raw_labels) {
    return SetPartition(raw_labels);
}

inline Configuration configuration(const SetPartition& c) {
    return Configuration(c.block_sizes());
}

// Parses either comma-separated labels ("0,0,1,2") or one-based block
// notation ("{1,2}{3,4}").
inline SetPartition parse_partition(const std::string& text) {
    std::string s = text;
    s.erase(std::remove_if(s.begin(), s.end(),
                           [](unsigned char ch) { return std::isspace(ch); }),
            s.end());
    if (s.empty()) throw std::invalid_argument("parse_partition: empty input");
    if (s.front() == '{') {
        std::vector<std::pair<int, int>> assign;  // (item, block)
        int block = 0;
        std::size_t pos = 0;
        while (pos < s.size()) {
            if (s[pos] != '{') throw std::invalid_argument("parse_partition: expected '{'");
            const std::size_t close = s.find('}', pos);
            if (close == std::string::npos)
                throw std::invalid_argument("parse_partition: unbalanced '{'");
            std::stringstream inner(s.substr(pos + 1, close - pos - 1));
            std::string tok;
            bool any = false;
            while (std::getline(inner, tok, ',')) {
                if (tok.empty()) throw std::invalid_argument("parse_partition: empty item");
                assign.emplace_back(std::stoi(tok) - 1, block);
                any = true;
            }
            if (!any) throw std::invalid_argument("parse_partition: empty block");
            ++block;
            pos = close + 1;
        }
        const int n = static_cast<int>(assign.size());
        std::vector<int> raw(static_cast<std::size_t>(n), -1);
        for (const auto& [item, blk] : assign) {
            if (item < 0 || item >= n)
                throw std::invalid_argument("parse_partition: items must be 1..n");
            if (raw[static_cast<std::size_t>(item)] != -1)
                throw std::invalid_argument("parse_partition: duplicate item");
            raw[static_cast<std::size_t>(item)] = blk;
        }
        return SetPartition(raw);
    }
    std::vector<int> raw;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) raw.push_back(std::stoi(tok));
    return SetPartition(raw);
}

// ---------------------------------------------------------------------------
// Counting

inline mpz_class bell_number(int n) {
    if (n < 0) throw std::invalid_argument("bell_number: n must be >= 0");
    // Bell triangle
    std::vector<mpz_class> row{1};
    mpz_class bell = 1;  // B_0
    for (int i = 1; i <= n; ++i) {
        std::vector<mpz_class> next;
        next.reserve(row.size() + 1);
        next.push_back(row.back());
        for (const auto& v : row) next.push_back(next.back() + v);
        row = std::move(next);
        bell = row.front();
    }
    return bell;
}

inline mpz_class stirling2(int n, int k) {
    if (n < 0 || k < 0) throw std::invalid_argument("stirling2: negative argument");
    if (k > n) throw std::invalid_argument("stirling2: k > n");
    if (n == 0) return 1;
    if (k == 0) return 0;
    // S(n,k) = k S(n-1,k) + S(n-1,k-1), row by row
    std::vector<mpz_class> row(static_cast<std::size_t>(k) + 1, 0);
    row[0] = 1;  // S(0,0)
    for (int i = 1; i <= n; ++i) {
        for (int j = std::min(i, k); j >= 1; --j)
            row[static_cast<std::size_t>(j)] =
                j * row[static_cast<std::size_t>(j)] + row[static_cast<std::size_t>(j) - 1];
        row[0] = 0;
    }
    return row[static_cast<std::size_t>(k)];
}

// Number of set partitions with the given configuration:
// N! / (prod_j lambda_j! * prod_i f_i!) with f_i the multiplicity of part i.
inline mpz_class count_partitions_with_configuration(const Configuration& lambda) {
    const int n = lambda.n();
    mpz_class num;
    mpz_fac_ui(num.get_mpz_t(), static_cast<unsigned long>(n));
    mpz_class den = 1;
    mpz_class f;
    for (int s : lambda.sizes) {
        mpz_fac_ui(f.get_mpz_t(), static_cast<unsigned long>(s));
        den *= f;
    }
    int run = 1;
    for (std::size_t i = 1; i <= lambda.sizes.size(); ++i) {
        if (i < lambda.sizes.size() && lambda.sizes[i] == lambda.sizes[i - 1]) {
            ++run;
        } else {
            mpz_fac_ui(f.get_mpz_t(), static_cast<unsigned long>(run));
            den *= f;
            run = 1;
        }
    }
    return num / den;
}

// ---------------------------------------------------------------------------
// Enumeration (lexicographic restricted-growth strings)

class PartitionEnumerator {
  public:
    explicit PartitionEnumerator(int n, int cap = kDefaultEnumerationCap) : n_(n) {
        if (n < 1) throw std::invalid_argument("PartitionEnumerator: n must be >= 1");
        if (n > cap)
            throw std::invalid_argument("PartitionEnumerator: n exceeds enumeration cap");
        labels_.assign(static_cast<std::size_t>(n), 0);
        prefix_max_.assign(static_cast<std::size_t>(n), 0);
        done_ = false;
    }

    // Emits the current partition and advances; returns false once exhausted.
    bool next(std::vector<int>& out) {
        if (done_) return false;
        out = labels_;
        // advance to successor
        for (int i = n_ - 1; i >= 1; --i) {
            const std::size_t ui = static_cast<std::size_t>(i);
            if (labels_[ui] <= prefix_max_[ui - 1]) {
                ++labels_[ui];
                prefix_max_[ui] = std::max(prefix_max_[ui - 1], labels_[ui]);
                for (int j = i + 1; j < n_; ++j) {
                    const std::size_t uj = static_cast<std::size_t>(j);
                    labels_[uj] = 0;
                    prefix_max_[uj] = prefix_max_[uj - 1];
                }
                return true;
            }
        }
        done_ = true;
        return true;
    }

  private:
    int n_;
    std::vector<int> labels_;
    std::vector<int> prefix_max_;
    bool done_;
};

template <typename Fn>
void enumerate_partitions(int n, Fn&& fn, int cap = kDefaultEnumerationCap) {
    PartitionEnumerator en(n, cap);
    std::vector<int> labels;
    while (en.next(labels)) fn(SetPartition::from_canonical(labels));
}

inline std::vector<SetPartition> all_partitions(int n, int cap = kDefaultEnumerationCap) {
    std::vector<SetPartition> out;
    enumerate_partitions(n, [&](const SetPartition& p) { out.push_back(p); }, cap);
    return out;
}

// ---------------------------------------------------------------------------
// Lattice operations and the Variation of Information metric

// Greatest lower bound: blocks are the nonempty pairwise intersections.
inline SetPartition meet(const SetPartition& a, const SetPartition& b) {
    if (a.n() != b.n()) throw std::invalid_argument("meet: size mismatch");
    const int n = a.n();
    std::vector<int> raw(static_cast<std::size_t>(n));
    const int kb = b.num_blocks();
    for (int i = 0; i < n; ++i) raw[static_cast<std::size_t>(i)] = a.label(i) * kb + b.label(i);
    return SetPartition(raw);
}

// Shannon entropy in bits of the block-size distribution.
inline double entropy(const SetPartition& c) {
    const int n = c.n();
    double h = 0.0;
    for (int s : c.block_sizes()) {
        const double p = static_cast<double>(s) / n;
        h -= p * std::log2(p);
    }
    return h;
}

// VI(a, b) = 2 H(a ^ b) - H(a) - H(b), in bits; computed from the joint
// cross-tabulation so no intermediate partition is materialized.
inline double vi_distance(const SetPartition& a, const SetPartition& b) {
    if (a.n() != b.n()) throw std::invalid_argument("vi_distance: size mismatch");
    const int n = a.n();
    const int ka = a.num_blocks();
    const int kb = b.num_blocks();
    std::vector<int> joint(static_cast<std::size_t>(ka) * static_cast<std::size_t>(kb), 0);
    for (int i = 0; i < n; ++i)
        ++joint[static_cast<std::size_t>(a.label(i)) * static_cast<std::size_t>(kb) +
                static_cast<std::size_t>(b.label(i))];
    const double dn = static_cast<double>(n);
    double h_joint = 0.0;
    for (int v : joint) {
        if (v == 0) continue;
        const double p = v / dn;
        h_joint -= p * std::log2(p);
    }
    const double vi = 2.0 * h_joint - entropy(a) - entropy(b);
    return vi < 0.0 ? 0.0 : vi;  // clamp float negatives at identical arguments
}

// Partitions one covering step away in the Hasse diagram.
struct HasseNeighborhood {
    SetPartition center;
    std::vector<SetPartition> up;    // merges of two blocks (coarser, covering)
    std::vector<SetPartition> down;  // two-part splits of one block (finer, covered)
};

inline HasseNeighborhood hasse_neighbors(const SetPartition& c) {
    HasseNeighborhood out;
    out.center = c;
    const int k = c.num_blocks();
    const auto blocks = c.blocks();
    // merges
    for (int a = 0; a < k; ++a) {
        for (int b = a + 1; b < k; ++b) {
            std::vector<int> raw = c.labels();
            for (int& l : raw)
                if (l == b) l = a;
            out.up.emplace_back(raw);
        }
    }
    // splits: enumerate nonempty proper subsets of each block that exclude
    // its first element (2^(size-1) - 1 of them)
    for (int b = 0; b < k; ++b) {
        const auto& blk = blocks[static_cast<std::size_t>(b)];
        const std::size_t m = blk.size();
        if (m < 2) continue;
        const std::uint64_t lim = 1ULL << (m - 1);
        for (std::uint64_t mask = 1; mask < lim; ++mask) {
            std::vector<int> raw = c.labels();
            for (std::size_t j = 1; j < m; ++j)
                if (mask & (1ULL << (j - 1)))
                    raw[static_cast<std::size_t>(blk[j])] = k;  // new block label
            out.down.emplace_back(raw);
        }
    }
    return out;
}

}  // namespace cpart
