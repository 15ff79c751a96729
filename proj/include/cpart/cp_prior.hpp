#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <gmpxx.h>

#include "cpart/eppf.hpp"
#include "cpart/numeric.hpp"
#include "cpart/partition.hpp"

namespace cpart {

// Prior over partitions proportional to a baseline EPPF damped by
// exp(-psi * VI(c, center)). psi = +inf is a point mass at the center.
struct CpPrior {
    SetPartition center;
    double psi = 0.0;
    EppfSpec base;

    CpPrior(SetPartition c0, double psi_, EppfSpec base_)
        : center(std::move(c0)), psi(psi_), base(base_) {
        if (psi < 0.0) throw std::invalid_argument("CpPrior: psi must be >= 0");
    }

    bool point_mass() const { return std::isinf(psi); }
};

// Distances from a center partition with the number of partitions (and the
// per-configuration breakdown) at each distance. Counts are exact rationals:
// integers for enumerated bins, scaled sample frequencies for estimated ones.
// The leading `exact_bins` bins are exact; the rest are Monte Carlo.
struct DistanceSpectrum {
    SetPartition center;
    std::vector<double> deltas;                          // ascending, deltas[0] == 0
    std::vector<mpq_class> counts;                       // n_l
    std::vector<std::map<Configuration, mpq_class>> config_counts;  // n_lm
    std::size_t exact_bins = 0;
    mpz_class total;  // Bell number of center.n()
    bool degenerate_tail = false;  // estimation requested but no sample survived

    std::size_t num_bins() const { return deltas.size(); }
    bool fully_exact() const { return exact_bins == deltas.size(); }

    // Index of the bin within kDistanceTol of d, or npos.
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t find_bin(double d) const {
        auto it = std::lower_bound(deltas.begin(), deltas.end(), d - kDistanceTol);
        if (it == deltas.end() || std::fabs(*it - d) > kDistanceTol) return npos;
        return static_cast<std::size_t>(it - deltas.begin());
    }

    // Inserts `count` for (distance, configuration), creating the bin if
    // needed; keeps deltas sorted.
    void add(double d, const Configuration& lambda, const mpq_class& count) {
        auto it = std::lower_bound(deltas.begin(), deltas.end(), d - kDistanceTol);
        std::size_t idx;
        if (it == deltas.end() || std::fabs(*it - d) > kDistanceTol) {
            idx = static_cast<std::size_t>(it - deltas.begin());
            deltas.insert(it, d);
            counts.insert(counts.begin() + static_cast<std::ptrdiff_t>(idx), mpq_class(0));
            config_counts.emplace(config_counts.begin() + static_cast<std::ptrdiff_t>(idx));
        } else {
            idx = static_cast<std::size_t>(it - deltas.begin());
        }
        counts[idx] += count;
        config_counts[idx][lambda] += count;
    }
};

// Full-enumeration spectrum; every bin exact.
inline DistanceSpectrum exact_spectrum(const SetPartition& c0,
                                       int cap = kDefaultEnumerationCap) {
    DistanceSpectrum s;
    s.center = c0;
    const int n = c0.n();
    enumerate_partitions(
        n,
        [&](const SetPartition& c) {
            s.add(vi_distance(c, c0), configuration(c), mpq_class(1));
        },
        cap);
    s.exact_bins = s.deltas.size();
    s.total = bell_number(n);
    return s;
}

// Normalized CP density bound to an exact spectrum of its center; the
// normalizer is a sum over (distance, configuration) cells only.
class CpDensity {
  public:
    CpDensity(CpPrior prior, const DistanceSpectrum& spectrum)
        : prior_(std::move(prior)), spectrum_(&spectrum) {
        if (!(spectrum.center == prior_.center))
            throw std::invalid_argument("CpDensity: spectrum center differs from prior center");
        if (!spectrum.fully_exact())
            throw std::invalid_argument("CpDensity: exact spectrum required");
        if (!prior_.point_mass()) log_z_ = compute_log_z();
    }

    double log_prob(const SetPartition& c) const {
        if (c.n() != prior_.center.n())
            throw std::invalid_argument("CpDensity: size mismatch");
        if (prior_.point_mass()) return c == prior_.center ? 0.0 : kNegInf;
        const double g = g_lambda(prior_.base, configuration(c));
        if (g == kNegInf) return kNegInf;
        const double d = vi_distance(c, prior_.center);
        return g - prior_.psi * d - log_z_;
    }

    double log_normalizer() const { return log_z_; }
    const CpPrior& prior() const { return prior_; }

  private:
    double compute_log_z() const {
        std::vector<double> terms;
        for (std::size_t l = 0; l < spectrum_->num_bins(); ++l) {
            const double damp = -prior_.psi * spectrum_->deltas[l];
            for (const auto& [lambda, count] : spectrum_->config_counts[l]) {
                const double g = g_lambda(prior_.base, lambda);
                if (g == kNegInf) continue;
                terms.push_back(log_mpq(count) + g + damp);
            }
        }
        if (terms.empty())
            throw std::invalid_argument("CpDensity: base prior assigns no mass to the lattice");
        return log_sum_exp(terms);
    }

    CpPrior prior_;
    const DistanceSpectrum* spectrum_;
    double log_z_ = 0.0;
};

inline double cp_log_prob(const CpPrior& prior, const SetPartition& c,
                          const DistanceSpectrum& spectrum) {
    return CpDensity(prior, spectrum).log_prob(c);
}

// Prior probability of each distance value; works with estimated tails.
inline std::vector<std::pair<double, double>> distance_distribution(
    const CpPrior& prior, const DistanceSpectrum& spectrum) {
    if (!(spectrum.center == prior.center))
        throw std::invalid_argument("distance_distribution: center mismatch");
    const std::size_t nb = spectrum.num_bins();
    if (prior.point_mass()) {
        std::vector<std::pair<double, double>> out;
        out.reserve(nb);
        for (std::size_t l = 0; l < nb; ++l)
            out.emplace_back(spectrum.deltas[l], l == 0 ? 1.0 : 0.0);
        return out;
    }
    std::vector<double> log_mass(nb, kNegInf);
    std::vector<double> all_terms;
    for (std::size_t l = 0; l < nb; ++l) {
        const double damp = -prior.psi * spectrum.deltas[l];
        std::vector<double> terms;
        if (prior.base.family == EppfFamily::Uniform) {
            if (spectrum.counts[l] > 0) terms.push_back(log_mpq(spectrum.counts[l]) + damp);
        } else {
            for (const auto& [lambda, count] : spectrum.config_counts[l]) {
                const double g = g_lambda(prior.base, lambda);
                if (g == kNegInf || count == 0) continue;
                terms.push_back(log_mpq(count) + g + damp);
            }
        }
        if (!terms.empty()) {
            log_mass[l] = log_sum_exp(terms);
            all_terms.push_back(log_mass[l]);
        }
    }
    const double log_z = log_sum_exp(all_terms);
    std::vector<std::pair<double, double>> out;
    out.reserve(nb);
    for (std::size_t l = 0; l < nb; ++l)
        out.emplace_back(spectrum.deltas[l],
                         log_mass[l] == kNegInf ? 0.0 : std::exp(log_mass[l] - log_z));
    return out;
}

// CDF of the distance distribution evaluated at delta.
inline double distance_cdf(const CpPrior& prior, const DistanceSpectrum& spectrum,
                           double delta) {
    double f = 0.0;
    for (const auto& [d, p] : distance_distribution(prior, spectrum)) {
        if (d <= delta + kDistanceTol) f += p;
    }
    return f;
}

struct PsiSearchResult {
    double psi = 0.0;
    bool attainable = true;
    double achieved_mass = 0.0;  // F(delta*) at the returned psi (or the supremum seen)
};

// Smallest psi (to 1e-3) placing mass at least q within distance delta_star
// of the center. Bisection over [0, psi_max] assuming F(delta*) is monotone
// in psi; falls back to a dense sweep when non-monotonicity is detected.
inline PsiSearchResult choose_psi(const DistanceSpectrum& spectrum, const EppfSpec& base,
                                  double delta_star, double q, double psi_max = 1e4) {
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("choose_psi: q must be in (0,1)");
    if (delta_star < 0.0) throw std::invalid_argument("choose_psi: delta* must be >= 0");
    auto f_at = [&](double psi) {
        return distance_cdf(CpPrior(spectrum.center, psi, base), spectrum, delta_star);
    };

    const double f0 = f_at(0.0);
    if (f0 >= q) return {0.0, true, f0};

    // coarse monotonicity scan
    bool monotone = true;
    {
        double prev = f0;
        for (int i = 1; i <= 32; ++i) {
            const double f = f_at(psi_max * i / 32.0);
            if (f < prev - 1e-9) { monotone = false; break; }
            prev = f;
        }
    }
    if (!monotone) {
        double best_f = f0;
        for (double psi = 0.25; psi <= psi_max + 1e-12; psi += 0.25) {
            const double f = f_at(psi);
            best_f = std::max(best_f, f);
            if (f >= q) return {psi, true, f};
        }
        return {psi_max, false, best_f};
    }

    const double fmax = f_at(psi_max);
    if (fmax < q) return {psi_max, false, fmax};
    double lo = 0.0, hi = psi_max;
    while (hi - lo > 1e-3) {
        const double mid = 0.5 * (lo + hi);
        if (f_at(mid) >= q) hi = mid; else lo = mid;
    }
    return {hi, true, f_at(hi)};
}

// ---------------------------------------------------------------------------
// Serialization: one record per (delta, configuration, count), '#' comments.

inline void write_spectrum(std::ostream& os, const DistanceSpectrum& s,
                           const std::string& header_comment = "") {
    os << "# cpart spectrum v1\n";
    if (!header_comment.empty()) os << "# " << header_comment << "\n";
    os << "# center=" << s.center.to_string() << " n=" << s.center.n()
       << " total=" << s.total.get_str() << " exact_bins=" << s.exact_bins
       << " bins=" << s.num_bins() << " degenerate_tail=" << (s.degenerate_tail ? 1 : 0)
       << "\n";
    os << "delta,config,count\n";
    os.precision(17);
    for (std::size_t l = 0; l < s.num_bins(); ++l)
        for (const auto& [lambda, count] : s.config_counts[l])
            os << s.deltas[l] << "," << lambda.to_string() << "," << count.get_str() << "\n";
}

inline DistanceSpectrum read_spectrum(std::istream& is) {
    DistanceSpectrum s;
    std::string line;
    bool got_meta = false;
    std::size_t meta_exact_bins = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto cpos = line.find("center=");
            if (cpos != std::string::npos) {
                std::stringstream ss(line.substr(cpos));
                std::string kv;
                std::string center_str;
                mpz_class total;
                while (ss >> kv) {
                    const auto eq = kv.find('=');
                    if (eq == std::string::npos) continue;
                    const std::string key = kv.substr(0, eq);
                    const std::string val = kv.substr(eq + 1);
                    if (key == "center") center_str = val;
                    else if (key == "total") total = mpz_class(val);
                    else if (key == "exact_bins") meta_exact_bins = std::stoul(val);
                    else if (key == "degenerate_tail") s.degenerate_tail = val == "1";
                }
                if (center_str.empty())
                    throw std::runtime_error("read_spectrum: malformed header");
                s.center = parse_partition(center_str);
                s.total = total;
                got_meta = true;
            }
            continue;
        }
        if (line.rfind("delta,", 0) == 0) continue;  // column header
        std::stringstream ss(line);
        std::string dtok, ctok, ntok;
        if (!std::getline(ss, dtok, ',') || !std::getline(ss, ctok, ',') ||
            !std::getline(ss, ntok))
            throw std::runtime_error("read_spectrum: malformed record: " + line);
        std::vector<int> sizes;
        std::stringstream cs(ctok);
        std::string part;
        while (std::getline(cs, part, '|')) sizes.push_back(std::stoi(part));
        s.add(std::stod(dtok), Configuration(std::move(sizes)), mpq_class(ntok));
    }
    if (!got_meta) throw std::runtime_error("read_spectrum: missing header");
    s.exact_bins = meta_exact_bins;
    return s;
}

}  // namespace cpart
