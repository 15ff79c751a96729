#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cpart/calibration.hpp"
#include "cpart/cp_prior.hpp"
#include "cpart/io.hpp"
#include "cpart/partition.hpp"
#include "cpart/pg_glm.hpp"
#include "cpart/sampler.hpp"
#include "cpart/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace cpart;

namespace {

std::ofstream open_out(const fs::path& dir, const std::string& name) {
    fs::create_directories(dir);
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot open output file: " + (dir / name).string());
    return f;
}

std::string stamp(const KeyValueConfig& cfg) {
    return std::string(kVersion) + " | config: " + cfg.echo();
}

json config_json(const KeyValueConfig& cfg) {
    json j = json::object();
    for (const auto& [k, v] : cfg.items()) j[k] = v;
    return j;
}

ChainInit parse_init(const std::string& text, std::optional<SetPartition>& explicit_init) {
    if (text == "center") return ChainInit::Center;
    if (text == "singletons") return ChainInit::Singletons;
    if (text == "one_block") return ChainInit::OneBlock;
    if (text == "random") return ChainInit::Random;
    if (text.rfind("explicit:", 0) == 0) {
        explicit_init = parse_partition(text.substr(9));
        return ChainInit::Explicit;
    }
    throw std::runtime_error("unknown init: " + text);
}

// ---------------------------------------------------------------------------

int cmd_prior_viz(const SetPartition& c0, int n_check, double alpha, double psi_max,
                  double psi_step, std::uint64_t seed, const fs::path& out_dir) {
    if (n_check > 0 && n_check != c0.n())
        throw std::runtime_error("--n disagrees with the center partition size");
    KeyValueConfig echo;
    echo.set("command", "prior-viz");
    echo.set("center", c0.to_string());
    echo.set("n", std::to_string(c0.n()));
    echo.set("alpha", std::to_string(alpha));
    echo.set("psi_max", std::to_string(psi_max));
    echo.set("psi_step", std::to_string(psi_step));
    echo.set("seed", std::to_string(seed));

    const auto spectrum = exact_spectrum(c0);
    // partitions sorted by distance from the center, then canonical order
    struct Row {
        SetPartition c;
        double delta;
    };
    std::vector<Row> rows;
    enumerate_partitions(c0.n(), [&](const SetPartition& c) {
        rows.push_back({c, vi_distance(c, c0)});
    });
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (std::fabs(a.delta - b.delta) > kDistanceTol) return a.delta < b.delta;
        return a.c < b.c;
    });

    auto parts = open_out(out_dir, "prior_viz_partitions.csv");
    parts << "# " << stamp(echo) << "\n";
    parts << "base,psi,index,partition,delta,prob,cumprob\n";
    parts.precision(12);
    auto cdf = open_out(out_dir, "prior_viz_cdf.csv");
    cdf << "# " << stamp(echo) << "\n";
    cdf << "base,psi,delta,cdf\n";
    cdf.precision(12);

    const std::vector<std::pair<std::string, EppfSpec>> bases{
        {"uniform", EppfSpec::uniform()},
        {"DP", EppfSpec::dirichlet_process(alpha)},
    };
    for (const auto& [name, base] : bases) {
        for (double psi = 0.0; psi <= psi_max + 1e-12; psi += psi_step) {
            const CpPrior prior(c0, psi, base);
            const CpDensity density(prior, spectrum);
            double cum = 0.0;
            for (std::size_t idx = 0; idx < rows.size(); ++idx) {
                const double p = std::exp(density.log_prob(rows[idx].c));
                cum += p;
                parts << name << "," << psi << "," << idx << ","
                      << '"' << rows[idx].c.to_string() << '"' << "," << rows[idx].delta << ","
                      << p << "," << cum << "\n";
            }
            for (const auto& [d, f_unused] : distance_distribution(prior, spectrum)) {
                (void)f_unused;
                cdf << name << "," << psi << "," << d << ","
                    << distance_cdf(prior, spectrum, d) << "\n";
            }
        }
    }
    std::cout << "prior-viz: wrote " << (out_dir / "prior_viz_partitions.csv") << " and "
              << (out_dir / "prior_viz_cdf.csv") << "\n";
    return 0;
}

int cmd_calibrate(const SetPartition& c0, int n_check, int depth, long samples,
                  std::uint64_t seed, const EppfSpec& base, const std::string& base_str,
                  double target_delta, double target_mass, int threads,
                  const fs::path& out_dir) {
    if (n_check > 0 && n_check != c0.n())
        throw std::runtime_error("--n disagrees with the center partition size");
    KeyValueConfig echo;
    echo.set("command", "calibrate");
    echo.set("center", c0.to_string());
    echo.set("n", std::to_string(c0.n()));
    echo.set("search_depth", std::to_string(depth));
    echo.set("samples", std::to_string(samples));
    echo.set("seed", std::to_string(seed));
    echo.set("base", base_str);
    echo.set("target_delta", std::to_string(target_delta));
    echo.set("target_mass", std::to_string(target_mass));

    const auto spectrum = estimate_spectrum(c0, depth, samples, Rng(seed), threads);

    auto sf = open_out(out_dir, "spectrum.csv");
    write_spectrum(sf, spectrum, stamp(echo));

    auto table = open_out(out_dir, "cdf_table.csv");
    table << "# " << stamp(echo) << "\n";
    table << "psi,delta,cdf\n";
    table.precision(12);
    for (double psi : {0.0, 5.0, 10.0, 15.0, 20.0}) {
        const CpPrior prior(c0, psi, base);
        for (const auto& [d, p] : distance_distribution(prior, spectrum)) {
            (void)p;
            table << psi << "," << d << "," << distance_cdf(prior, spectrum, d) << "\n";
        }
    }

    const auto chosen = choose_psi(spectrum, base, target_delta, target_mass);

    json j;
    j["tool_version"] = kVersion;
    j["seed"] = seed;
    j["config"] = config_json(echo);
    j["results"]["chosen_psi"] = chosen.psi;
    j["results"]["attainable"] = chosen.attainable;
    j["results"]["achieved_mass"] = chosen.achieved_mass;
    j["results"]["exact_bins"] = spectrum.exact_bins;
    j["results"]["total_bins"] = spectrum.num_bins();
    j["results"]["degenerate_tail"] = spectrum.degenerate_tail;
    auto jf = open_out(out_dir, "calibration.json");
    jf << j.dump(2) << "\n";

    std::cout << "calibrate: chosen psi = " << chosen.psi
              << " (F(delta*) = " << chosen.achieved_mass << ")\n";
    if (!chosen.attainable)
        std::cout << "calibrate: target not attainable within the psi bracket; reporting the "
                     "supremum reached\n";
    return chosen.attainable ? 0 : 2;
}

int cmd_simulate(double scale, std::uint64_t seed, const fs::path& out_dir) {
    KeyValueConfig echo;
    echo.set("command", "simulate");
    echo.set("scale", std::to_string(scale));
    echo.set("seed", std::to_string(seed));

    const auto study = simulate_study(seed, scale);
    auto df = open_out(out_dir, "sim_data.csv");
    write_grouped_csv(df, study.data, stamp(echo));

    json truth;
    truth["tool_version"] = kVersion;
    truth["seed"] = seed;
    truth["config"] = config_json(echo);
    truth["results"]["true_partition"] = study.true_partition.to_string();
    truth["results"]["wrong_center"] =
        parse_partition("{1,5,9}{2,6,10}{3,7,11}{4,8,12}").to_string();
    json betas = json::array();
    for (long i = 0; i < study.true_betas.rows(); ++i) {
        json row = json::array();
        for (long j = 0; j < study.true_betas.cols(); ++j) row.push_back(study.true_betas(i, j));
        betas.push_back(row);
    }
    truth["results"]["true_betas"] = betas;
    auto tf = open_out(out_dir, "sim_truth.json");
    tf << truth.dump(2) << "\n";

    std::cout << "simulate: wrote " << (out_dir / "sim_data.csv") << "\n";
    return 0;
}

json summary_results(const std::vector<SetPartition>& partitions,
                     const Eigen::MatrixXd& alpha_rows,  // samples x N
                     const std::vector<Eigen::MatrixXd>& beta_rows,  // per sample: N x p
                     const SetPartition& center, const std::vector<std::string>& names) {
    const auto summary = posterior_summaries(partitions);
    const int n = center.n();
    const long m = static_cast<long>(partitions.size());

    json res;
    res["num_samples"] = m;
    res["map_partition"] = summary.map_partition.to_string();
    res["map_frequency"] = summary.map_frequency;
    res["vi_map_to_center"] = summary.vi_to(center);
    double mean_k = 0.0;
    for (const auto& c : partitions) mean_k += c.num_blocks();
    res["mean_num_clusters"] = mean_k / static_cast<double>(m);

    json defects = json::array();
    const int p = beta_rows.empty() ? 0 : static_cast<int>(beta_rows.front().cols());
    for (int i = 0; i < n; ++i) {
        json d;
        d["name"] = names.empty() ? "defect" + std::to_string(i + 1)
                                  : names[static_cast<std::size_t>(i)];
        d["alpha_mean"] = alpha_rows.rows() ? alpha_rows.col(i).mean() : 0.0;
        json lor = json::array();
        json flags = json::array();
        for (int c = 0; c < p; ++c) {
            std::vector<double> vals;
            vals.reserve(static_cast<std::size_t>(m));
            for (const auto& b : beta_rows) vals.push_back(b(i, c));
            double mean = 0.0;
            for (double v : vals) mean += v;
            mean /= static_cast<double>(vals.size());
            std::sort(vals.begin(), vals.end());
            auto rank = [&](double q) {
                const long idx = std::clamp<long>(
                    static_cast<long>(std::ceil(q * static_cast<double>(vals.size()))) - 1, 0,
                    static_cast<long>(vals.size()) - 1);
                return vals[static_cast<std::size_t>(idx)];
            };
            const double lo = rank(0.025);
            const double hi = rank(0.975);
            lor.push_back(mean);
            flags.push_back(lo > 0.0 || hi < 0.0);
        }
        d["log_or_mean"] = lor;
        d["ci95_excludes_zero"] = flags;
        defects.push_back(d);
    }
    res["defects"] = defects;
    return res;
}

int cmd_fit(const KeyValueConfig& cfg, const fs::path& out_dir) {
    const std::string data_path = cfg.get("data");
    std::ifstream df(data_path);
    if (!df) throw std::runtime_error("cannot open data file: " + data_path);
    std::optional<std::ifstream> ctl;
    if (cfg.has("controls")) {
        ctl.emplace(cfg.get("controls"));
        if (!*ctl) throw std::runtime_error("cannot open controls file: " + cfg.get("controls"));
    }
    const auto data = read_grouped_csv(df, ctl ? &*ctl : nullptr);

    const auto center = parse_partition(cfg.get("center"));
    const double psi = cfg.get_double("psi");
    const auto base = eppf_from_config(cfg);
    const CpPrior prior(center, psi, base);

    const int p = data.p();
    const double intercept_var =
        cfg.has("tau0") ? 1.0 / cfg.get_double("tau0") : cfg.get_double("intercept_var", 2.0);
    const auto hyper = GlmHyper::diagonal(p, cfg.get_double("a0", 0.0), intercept_var,
                                          cfg.get_double("q_diag", 2.0), cfg.get_double("b", 0.0));

    GlmFitConfig fit_cfg;
    fit_cfg.iterations = cfg.get_long("iterations", 5000);
    fit_cfg.burn_in = cfg.get_long("burn_in", 1000);
    fit_cfg.thin = cfg.get_long("thin", 1);
    fit_cfg.seed = static_cast<std::uint64_t>(cfg.get_long("seed", 0));
    fit_cfg.init = parse_init(cfg.get("init", "center"), fit_cfg.explicit_init);

    const auto result = fit(data, hyper, prior, fit_cfg);

    KeyValueConfig echo = cfg;
    echo.set("command", "fit");
    echo.set("center", center.to_string());
    std::string names_token;
    for (const auto& nm : data.defect_names) {
        if (!names_token.empty()) names_token += ';';
        names_token += nm;
    }
    echo.set("defect_names", names_token);
    const std::string header = stamp(echo);

    // traces
    {
        std::vector<SetPartition> parts;
        for (const auto& r : result.samples) parts.push_back(r.partition);
        auto tf = open_out(out_dir, "partition_trace.csv");
        write_partition_trace(tf, parts, result.sample_iterations, header);
    }
    {
        auto af = open_out(out_dir, "alpha_trace.csv");
        af << "# " << header << "\n";
        af << "iteration";
        for (int i = 1; i <= data.n_defects(); ++i) af << ",alpha" << i;
        af << "\n";
        af.precision(17);
        for (std::size_t s = 0; s < result.samples.size(); ++s) {
            af << result.sample_iterations[s];
            for (int i = 0; i < data.n_defects(); ++i) af << "," << result.samples[s].intercepts(i);
            af << "\n";
        }
    }
    {
        auto bf = open_out(out_dir, "beta_trace.csv");
        bf << "# " << header << "\n";
        bf << "iteration,defect";
        for (int c = 1; c <= p; ++c) bf << ",b" << c;
        bf << "\n";
        bf.precision(17);
        for (std::size_t s = 0; s < result.samples.size(); ++s)
            for (int i = 0; i < data.n_defects(); ++i) {
                bf << result.sample_iterations[s] << "," << (i + 1);
                for (int c = 0; c < p; ++c) bf << "," << result.samples[s].defect_betas(i, c);
                bf << "\n";
            }
    }

    // psm + summary from the recorded samples
    std::vector<SetPartition> parts;
    Eigen::MatrixXd alpha_rows(static_cast<long>(result.samples.size()), data.n_defects());
    std::vector<Eigen::MatrixXd> beta_rows;
    for (std::size_t s = 0; s < result.samples.size(); ++s) {
        parts.push_back(result.samples[s].partition);
        alpha_rows.row(static_cast<long>(s)) = result.samples[s].intercepts;
        beta_rows.push_back(result.samples[s].defect_betas);
    }
    const auto summary = posterior_summaries(parts);
    {
        Eigen::MatrixXd psm(center.n(), center.n());
        for (int i = 0; i < center.n(); ++i)
            for (int j = 0; j < center.n(); ++j)
                psm(i, j) = summary.psm[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        auto pf = open_out(out_dir, "psm.csv");
        write_matrix_csv(pf, psm, header);
    }
    json j;
    j["tool_version"] = kVersion;
    j["seed"] = fit_cfg.seed;
    j["config"] = config_json(echo);
    j["results"] = summary_results(parts, alpha_rows, beta_rows, center, data.defect_names);
    auto jf = open_out(out_dir, "summary.json");
    jf << j.dump(2) << "\n";

    std::cout << "fit: MAP partition " << summary.map_partition.to_block_string()
              << " (frequency " << summary.map_frequency << ", VI to center "
              << summary.vi_to(center) << ")\n";
    return 0;
}

int cmd_summarize(const fs::path& trace_dir, const fs::path& out_dir) {
    std::ifstream pf(trace_dir / "partition_trace.csv");
    if (!pf) throw std::runtime_error("cannot open " + (trace_dir / "partition_trace.csv").string());
    // recover the embedded config (for the center partition)
    std::string line;
    std::vector<std::string> header_comments;
    while (pf.peek() == '#') {
        std::getline(pf, line);
        header_comments.push_back(line);
    }
    pf.clear();
    pf.seekg(0);
    const auto trace = read_partition_trace(pf);

    std::string center_str;
    std::vector<std::string> names;
    for (const auto& c : header_comments) {
        std::stringstream ss(c);
        std::string tok;
        while (ss >> tok) {
            if (tok.rfind("center=", 0) == 0) center_str = tok.substr(7);
            if (tok.rfind("defect_names=", 0) == 0) {
                std::stringstream ns(tok.substr(13));
                std::string nm;
                while (std::getline(ns, nm, ';')) names.push_back(nm);
            }
        }
    }
    if (center_str.empty())
        throw std::runtime_error("summarize: trace header lacks the center partition");
    const auto center = parse_partition(center_str);

    const int n = center.n();
    Eigen::MatrixXd alpha_rows;
    std::vector<Eigen::MatrixXd> beta_rows;
    // alpha trace: rows iteration,alpha1..alphaN
    {
        std::ifstream af(trace_dir / "alpha_trace.csv");
        if (!af) throw std::runtime_error("summarize: missing alpha_trace.csv");
        std::vector<std::vector<double>> rows;
        while (std::getline(af, line)) {
            line = trim(line);
            if (line.empty() || line[0] == '#' || line.rfind("iteration", 0) == 0) continue;
            const auto f = split_csv_line(line);
            std::vector<double> row;
            for (std::size_t c = 1; c < f.size(); ++c) row.push_back(std::stod(f[c]));
            rows.push_back(std::move(row));
        }
        alpha_rows.resize(static_cast<long>(rows.size()), n);
        for (long s = 0; s < alpha_rows.rows(); ++s)
            for (int i = 0; i < n; ++i)
                alpha_rows(s, i) = rows[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
    }
    // beta trace: rows iteration,defect,b1..bp
    {
        std::ifstream bf(trace_dir / "beta_trace.csv");
        if (!bf) throw std::runtime_error("summarize: missing beta_trace.csv");
        std::vector<std::vector<double>> rows;
        while (std::getline(bf, line)) {
            line = trim(line);
            if (line.empty() || line[0] == '#' || line.rfind("iteration", 0) == 0) continue;
            const auto f = split_csv_line(line);
            std::vector<double> row;
            for (const auto& tok : f) row.push_back(std::stod(tok));
            rows.push_back(std::move(row));
        }
        if (rows.size() % static_cast<std::size_t>(n) != 0)
            throw std::runtime_error("summarize: beta trace rows not a multiple of N");
        const int p = static_cast<int>(rows.front().size()) - 2;
        const std::size_t m = rows.size() / static_cast<std::size_t>(n);
        for (std::size_t s = 0; s < m; ++s) {
            Eigen::MatrixXd b(n, p);
            for (int i = 0; i < n; ++i) {
                const auto& row = rows[s * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)];
                for (int c = 0; c < p; ++c) b(i, c) = row[static_cast<std::size_t>(c) + 2];
            }
            beta_rows.push_back(std::move(b));
        }
    }
    if (alpha_rows.rows() != static_cast<long>(trace.samples.size()) ||
        beta_rows.size() != trace.samples.size())
        throw std::runtime_error("summarize: trace lengths disagree");

    KeyValueConfig echo;
    echo.set("command", "summarize");
    echo.set("trace_dir", trace_dir.string());

    const auto summary = posterior_summaries(trace.samples);
    {
        Eigen::MatrixXd psm(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                psm(i, j) = summary.psm[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        auto pf2 = open_out(out_dir, "psm.csv");
        write_matrix_csv(pf2, psm, stamp(echo));
    }
    json j;
    j["tool_version"] = kVersion;
    j["config"] = config_json(echo);
    j["results"] = summary_results(trace.samples, alpha_rows, beta_rows, center, names);
    auto jf = open_out(out_dir, "summary.json");
    jf << j.dump(2) << "\n";
    std::cout << "summarize: " << trace.samples.size() << " samples, MAP "
              << summary.map_partition.to_block_string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"centered-partition priors for Bayesian clustering"};
    app.set_version_flag("--version", std::string(kVersion));

    std::uint64_t seed = 0;
    std::string out_dir = ".";
    int threads = 1;
    std::string config_path;
    app.add_option("--seed", seed, "master seed (substreams derive from it)");
    app.add_option("--out-dir", out_dir, "output directory");
    app.add_option("--threads", threads, "worker threads for the Monte Carlo pieces");
    app.add_option("--config", config_path, "key = value run-config file");

    // prior-viz
    auto* viz = app.add_subcommand("prior-viz", "exact prior curves over a small lattice");
    std::string viz_center;
    int viz_n = 0;
    double viz_alpha = 1.0, viz_psi_max = 3.0, viz_psi_step = 0.05;
    viz->add_option("--center", viz_center, "center partition (labels or block notation)")
        ->required();
    viz->add_option("--n", viz_n, "expected number of items (validated)");
    viz->add_option("--alpha", viz_alpha, "DP concentration for the DP curves");
    viz->add_option("--psi-max", viz_psi_max, "top of the psi grid");
    viz->add_option("--psi-step", viz_psi_step, "psi grid step");

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "estimate the distance spectrum and choose psi");
    std::string cal_center, cal_base = "DP,alpha=1";
    int cal_n = 0, cal_depth = 3;
    long cal_samples = 20000;
    double cal_delta = 1.0, cal_mass = 0.9;
    cal->add_option("--center", cal_center, "center partition")->required();
    cal->add_option("--n", cal_n, "expected number of items (validated)");
    cal->add_option("--search-depth", cal_depth, "local search depth T");
    cal->add_option("--samples", cal_samples, "Monte Carlo sample count R");
    cal->add_option("--base", cal_base, "base EPPF, e.g. DP,alpha=1 or uniform");
    cal->add_option("--target-delta", cal_delta, "neighborhood radius delta*");
    cal->add_option("--target-mass", cal_mass, "required prior mass q");

    // simulate
    auto* sim = app.add_subcommand("simulate", "write the synthetic grouped-regression study");
    double sim_scale = 1.0;
    sim->add_option("--scale", sim_scale, "multiplier on the per-defect sample sizes");

    // fit
    auto* fitc = app.add_subcommand("fit", "grouped logistic regression under a CP prior");

    // summarize
    auto* summ = app.add_subcommand("summarize", "recompute summaries from saved traces");
    std::string trace_dir;
    summ->add_option("--trace-dir", trace_dir, "directory holding the trace files")->required();

    app.require_subcommand(1);
    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
        const fs::path out(out_dir);
        if (viz->parsed())
            return cmd_prior_viz(parse_partition(viz_center), viz_n, viz_alpha, viz_psi_max,
                                 viz_psi_step, seed, out);
        if (cal->parsed())
            return cmd_calibrate(parse_partition(cal_center), cal_n, cal_depth, cal_samples, seed,
                                 parse_eppf_string(cal_base), cal_base, cal_delta, cal_mass,
                                 threads, out);
        if (sim->parsed()) return cmd_simulate(sim_scale, seed, out);
        if (fitc->parsed()) {
            if (config_path.empty()) throw std::runtime_error("fit requires --config");
            auto cfg = KeyValueConfig::parse_file(config_path);
            if (!cfg.has("seed") || seed != 0) cfg.set("seed", std::to_string(seed));
            return cmd_fit(cfg, out);
        }
        if (summ->parsed()) return cmd_summarize(fs::path(trace_dir), out);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
