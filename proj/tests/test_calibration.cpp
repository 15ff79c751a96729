#include <map>
#include <set>

#include "doctest.h"

#include "cpart/calibration.hpp"
#include "cpart/cp_prior.hpp"
#include "cpart/partition.hpp"
#include "test_util.hpp"

using namespace cpart;

TEST_CASE("local search covers Pi_4 from {1}{2,3,4} in three iterations") {
    const auto c0 = parse_partition("{1}{2,3,4}");
    const auto r = local_search(c0, 3);
    CHECK(r.explored.size() == 15);
    std::set<SetPartition> uniq(r.explored.begin(), r.explored.end());
    CHECK(uniq.size() == 15);
    CHECK(uniq.count(c0) == 1);
}

TEST_CASE("local search frontier at depth one") {
    const auto c0 = parse_partition("{1}{2,3,4}");
    const auto r = local_search(c0, 1);
    CHECK(r.explored.size() == 5);
    CHECK(r.frontier_min_distance == doctest::Approx(0.6887218755408672).epsilon(1e-9));
}

TEST_CASE("depth-one exploration size matches the covering counts") {
    enumerate_partitions(5, [&](const SetPartition& c0) {
        const auto r = local_search(c0, 1);
        const int k = c0.num_blocks();
        long expect = 1 + k * (k - 1) / 2;
        for (int s : c0.block_sizes()) expect += (1L << (s - 1)) - 1;
        CHECK(static_cast<long>(r.explored.size()) == expect);
    });
}

TEST_CASE("everything outside the explored set is farther than the frontier") {
    for (int n : {6, 8}) {
        const auto c0 = n == 6 ? parse_partition("{1,2}{3,4}{5,6}")
                               : parse_partition("{1,2,3}{4,5}{6,7,8}");
        const auto r = local_search(c0, 2);
        std::set<SetPartition> inside(r.explored.begin(), r.explored.end());
        enumerate_partitions(n, [&](const SetPartition& c) {
            if (!inside.count(c))
                CHECK(vi_distance(c, c0) > r.frontier_min_distance + kDistanceTol);
        });
    }
}

TEST_CASE("exploration budget errors carry the completed depth") {
    const auto c0 = parse_partition("{1,2,3}{4,5}{6,7,8}");
    try {
        local_search(c0, 4, 50);
        FAIL("expected ExplorationLimitError");
    } catch (const ExplorationLimitError& e) {
        CHECK(e.completed_depth >= 0);
        CHECK(e.completed_depth < 4);
        CHECK(e.explored_size > 50);
    }
}

TEST_CASE("stam sampler draws uniformly") {
    SUBCASE("n=1 is degenerate") {
        Rng rng(3);
        for (int i = 0; i < 10; ++i)
            CHECK(stam_sample(1, rng) == SetPartition::one_block(1));
    }

    SUBCASE("chi-square goodness of fit on Pi_5") {
        const auto parts = all_partitions(5);
        std::map<SetPartition, std::size_t> index;
        for (std::size_t i = 0; i < parts.size(); ++i) index[parts[i]] = i;
        const StamSampler stam(5);
        Rng rng(12345);
        const long draws = 52000;
        std::vector<long> freq(parts.size(), 0);
        for (long r = 0; r < draws; ++r) ++freq[index.at(stam.draw(rng))];
        CHECK(testutil::chi2_uniform_pvalue(freq, draws) > 0.001);
    }

    SUBCASE("expected number of blocks at n=12 matches the exact moment") {
        // exact E[K] = sum_k k S(12,k) / B_12
        double expect = 0.0;
        const double bell = mpz_class(bell_number(12)).get_d();
        for (int k = 1; k <= 12; ++k)
            expect += k * mpz_class(stirling2(12, k)).get_d() / bell;
        const StamSampler stam(12);
        Rng rng(99);
        const long draws = 200000;
        double mean = 0.0, m2 = 0.0;
        for (long r = 0; r < draws; ++r) {
            const double k = stam.draw(rng).num_blocks();
            const double d = k - mean;
            mean += d / static_cast<double>(r + 1);
            m2 += d * (k - mean);
        }
        const double se = std::sqrt(m2 / (draws - 1) / draws);
        CHECK(std::fabs(mean - expect) < 4.0 * se);
    }
}

TEST_CASE("estimated spectrum: pure exact head when the search exhausts the lattice") {
    const auto c0 = parse_partition("{1,2}{3,4,5}");
    const auto est = estimate_spectrum(c0, 10, 100, Rng(1));
    const auto exact = exact_spectrum(c0);
    REQUIRE(est.num_bins() == exact.num_bins());
    CHECK(est.fully_exact());
    for (std::size_t l = 0; l < est.num_bins(); ++l) {
        CHECK(est.deltas[l] == doctest::Approx(exact.deltas[l]).epsilon(1e-12));
        CHECK(est.counts[l] == exact.counts[l]);
    }
}

TEST_CASE("estimated head bins equal the exact spectrum below the frontier") {
    for (int n : {7, 10}) {
        const auto c0 = n == 7 ? parse_partition("{1,2}{3,4,5}{6,7}")
                               : parse_partition("{1,2,3}{4,5,6}{7,8}{9,10}");
        const int T = 2;
        const auto est = estimate_spectrum(c0, T, 2000, Rng(5));
        const auto exact = exact_spectrum(c0);
        const auto ls = local_search(c0, T);
        REQUIRE(est.exact_bins > 0);
        for (std::size_t l = 0; l < est.exact_bins; ++l) {
            CHECK(est.deltas[l] <= ls.frontier_min_distance + kDistanceTol);
            const auto el = exact.find_bin(est.deltas[l]);
            REQUIRE(el != DistanceSpectrum::npos);
            CHECK(est.counts[l] == exact.counts[el]);
            CHECK(est.config_counts[l] == exact.config_counts[el]);
        }
        // every exact bin within the head radius is present
        for (std::size_t l = 0; l < exact.num_bins(); ++l)
            if (exact.deltas[l] <= ls.frontier_min_distance + kDistanceTol)
                CHECK(est.find_bin(exact.deltas[l]) != DistanceSpectrum::npos);
    }
}

TEST_CASE("estimated tail masses sum to the Bell number exactly") {
    const auto c0 = parse_partition("{1,2,3}{4,5,6}{7,8}{9,10}");
    const auto est = estimate_spectrum(c0, 2, 3000, Rng(17));
    mpq_class total = 0;
    for (const auto& c : est.counts) total += c;
    CHECK(total == mpq_class(bell_number(10)));
}

TEST_CASE("estimated distance cdf tracks the exact one") {
    const auto c0 = parse_partition("{1,2,3}{4,5,6}{7,8}{9,10}");
    const auto est = estimate_spectrum(c0, 3, 20000, Rng(7));
    const auto exact = exact_spectrum(c0);
    for (double psi : {0.0, 5.0, 10.0}) {
        const CpPrior pu(c0, psi, EppfSpec::uniform());
        CHECK(testutil::cdf_sup_gap(pu, est, pu, exact) < 0.05);
    }
}

TEST_CASE("rejection rate matches the binomial prediction") {
    const auto c0 = parse_partition("{1,2,3}{4,5,6}{7,8}{9,10}");
    const int T = 2;
    const long R = 20000;
    const auto ls = local_search(c0, T);
    mpz_class head = 0;
    for (double d : ls.distances)
        if (d <= ls.frontier_min_distance + kDistanceTol) ++head;
    const double p_reject = mpq_class(mpq_class(head) / mpq_class(bell_number(10))).get_d();

    // count rejections the way the estimator does
    const StamSampler stam(10);
    long rejected = 0;
    for (int chunk = 0; chunk < 64; ++chunk) {
        Rng local = Rng(7).substream(static_cast<std::uint64_t>(chunk));
        const long lo = R * chunk / 64, hi = R * (chunk + 1) / 64;
        for (long r = lo; r < hi; ++r)
            if (vi_distance(stam.draw(local), c0) <= ls.frontier_min_distance + kDistanceTol)
                ++rejected;
    }
    const double se = std::sqrt(R * p_reject * (1.0 - p_reject));
    CHECK(std::fabs(static_cast<double>(rejected) - R * p_reject) <= 5.0 * se + 1.0);
}

TEST_CASE("psi selection at n=12 against the exact law") {
    const auto c0 = parse_partition("{1,2,3}{4,5,6}{7,8,9}{10,11,12}");
    const auto est = estimate_spectrum(c0, 4, 20000, Rng(1), 2);
    // uniform base, 90% mass within distance 0.9: psi ~ 10 (exact 10.13)
    const auto ru = choose_psi(est, EppfSpec::uniform(), 0.9, 0.9);
    CHECK(ru.attainable);
    CHECK(ru.psi > 9.0);
    CHECK(ru.psi < 11.0);
    // DP base, 90% mass within distance 0.5: the exact answer is 13.13,
    // inside the (10, 15] bracket the coarse published psi grid implies
    const auto rd = choose_psi(est, EppfSpec::dirichlet_process(1.0), 0.5, 0.9);
    CHECK(rd.attainable);
    CHECK(rd.psi > 10.0);
    CHECK(rd.psi <= 15.0);
    CHECK(std::fabs(rd.psi - 13.13) < 1.0);
}

TEST_CASE("a tail with no surviving samples is flagged, not fabricated") {
    // n=3 from the one-block center at T=1: the head covers 4 of the 5
    // partitions; three draws that all land in the head leave R* = 0
    const auto s = estimate_spectrum(SetPartition::one_block(3), 1, 3, Rng(0));
    CHECK(s.degenerate_tail);
    CHECK(s.exact_bins == s.num_bins());
    mpq_class total = 0;
    for (const auto& c : s.counts) total += c;
    CHECK(total == 4);  // head only; the missing singleton partition is honest
}

TEST_CASE("estimate_spectrum is deterministic and thread-count independent") {
    const auto c0 = parse_partition("{1,2,3}{4,5,6}{7,8}{9,10}");
    const auto a = estimate_spectrum(c0, 2, 4000, Rng(21), 1);
    const auto b = estimate_spectrum(c0, 2, 4000, Rng(21), 2);
    REQUIRE(a.num_bins() == b.num_bins());
    for (std::size_t l = 0; l < a.num_bins(); ++l) {
        CHECK(a.deltas[l] == b.deltas[l]);
        CHECK(a.counts[l] == b.counts[l]);
        CHECK(a.config_counts[l] == b.config_counts[l]);
    }
    const auto c = estimate_spectrum(c0, 2, 4000, Rng(22), 1);
    bool identical = c.num_bins() == a.num_bins();
    if (identical)
        for (std::size_t l = 0; l < a.num_bins(); ++l)
            if (!(a.counts[l] == c.counts[l])) { identical = false; break; }
    CHECK_FALSE(identical);  // different seed, different tail
}
