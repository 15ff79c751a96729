#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cpart/partition.hpp"
#include "cpart/pg_glm.hpp"

namespace cpart {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// --------------------------------------------------------------------------
// Grouped binary data CSV: header "defect_id,y,x1,...,xp"; rows grouped by
// first appearance of each defect id. Controls file: same covariate columns
// (its y column, when present, must be all zero).

inline GroupedBinaryData read_grouped_csv(std::istream& is,
                                          std::istream* controls = nullptr) {
    GroupedBinaryData data;
    std::string line;
    do {
        if (!std::getline(is, line)) throw std::runtime_error("read_grouped_csv: empty file");
        line = trim(line);
    } while (line.empty() || line[0] == '#');
    const auto header = split_csv_line(line);
    if (header.size() < 3 || trim(header[0]) != "defect_id" || trim(header[1]) != "y")
        throw std::runtime_error("read_grouped_csv: expected header defect_id,y,x1,...");
    const int p = static_cast<int>(header.size()) - 2;

    std::map<std::string, std::size_t> index;
    std::vector<std::vector<std::vector<double>>> rows;  // per defect: rows of y,x...
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto f = split_csv_line(line);
        if (static_cast<int>(f.size()) != p + 2)
            throw std::runtime_error("read_grouped_csv: bad field count: " + line);
        const std::string id = trim(f[0]);
        auto [it, fresh] = index.try_emplace(id, rows.size());
        if (fresh) {
            rows.emplace_back();
            data.defect_names.push_back(id);
        }
        std::vector<double> rec(static_cast<std::size_t>(p) + 1);
        rec[0] = std::stod(f[1]);
        for (int c = 0; c < p; ++c) rec[static_cast<std::size_t>(c) + 1] = std::stod(f[static_cast<std::size_t>(c) + 2]);
        rows[it->second].push_back(std::move(rec));
    }
    for (const auto& defect_rows : rows) {
        DefectData d;
        const long n = static_cast<long>(defect_rows.size());
        d.X.resize(n, p);
        d.y.resize(n);
        for (long j = 0; j < n; ++j) {
            d.y(j) = defect_rows[static_cast<std::size_t>(j)][0];
            for (int c = 0; c < p; ++c)
                d.X(j, c) = defect_rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(c) + 1];
        }
        data.defects.push_back(std::move(d));
    }

    if (controls) {
        std::string cline;
        do {
            if (!std::getline(*controls, cline))
                throw std::runtime_error("read_grouped_csv: empty controls file");
            cline = trim(cline);
        } while (cline.empty() || cline[0] == '#');
        const auto chead = split_csv_line(cline);
        const bool has_y = !chead.empty() && (trim(chead[0]) == "y" ||
                                              (chead.size() > 1 && trim(chead[1]) == "y" &&
                                               trim(chead[0]) == "defect_id"));
        int skip = 0;
        if (!chead.empty() && trim(chead[0]) == "defect_id") skip = has_y ? 2 : 1;
        else if (has_y) skip = 1;
        if (static_cast<int>(chead.size()) - skip != p)
            throw std::runtime_error("read_grouped_csv: control covariate count mismatch");
        std::vector<std::vector<double>> crow;
        while (std::getline(*controls, cline)) {
            cline = trim(cline);
            if (cline.empty() || cline[0] == '#') continue;
            const auto f = split_csv_line(cline);
            if (static_cast<int>(f.size()) != p + skip)
                throw std::runtime_error("read_grouped_csv: bad control row: " + cline);
            if (has_y && std::stod(f[static_cast<std::size_t>(skip) - 1]) != 0.0)
                throw std::runtime_error("read_grouped_csv: control responses must be 0");
            std::vector<double> rec(static_cast<std::size_t>(p));
            for (int c = 0; c < p; ++c) rec[static_cast<std::size_t>(c)] = std::stod(f[static_cast<std::size_t>(c + skip)]);
            crow.push_back(std::move(rec));
        }
        Eigen::MatrixXd ctl(static_cast<long>(crow.size()), p);
        for (long j = 0; j < ctl.rows(); ++j)
            for (int c = 0; c < p; ++c) ctl(j, c) = crow[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
        data.shared_controls = std::move(ctl);
    }
    data.validate();
    return data;
}

inline void write_grouped_csv(std::ostream& os, const GroupedBinaryData& data,
                              const std::string& comment = "") {
    if (!comment.empty()) os << "# " << comment << "\n";
    os << "defect_id,y";
    for (int c = 1; c <= data.p(); ++c) os << ",x" << c;
    os << "\n";
    for (int i = 0; i < data.n_defects(); ++i) {
        const std::string name = data.defect_names.empty()
                                     ? "defect" + std::to_string(i + 1)
                                     : data.defect_names[static_cast<std::size_t>(i)];
        const auto& d = data.defects[static_cast<std::size_t>(i)];
        for (long j = 0; j < d.X.rows(); ++j) {
            os << name << "," << static_cast<int>(d.y(j));
            for (int c = 0; c < data.p(); ++c) os << "," << d.X(j, c);
            os << "\n";
        }
    }
}

// --------------------------------------------------------------------------
// key = value run-config files ('#' comments)

class KeyValueConfig {
  public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::istream& is) {
        KeyValueConfig cfg;
        std::string line;
        while (std::getline(is, line)) {
            line = trim(line);
            if (line.empty() || line[0] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config: expected key = value, got: " + line);
            const std::string key = trim(line.substr(0, eq));
            const std::string val = trim(line.substr(eq + 1));
            if (key.empty()) throw std::runtime_error("config: empty key");
            cfg.values_[key] = val;
        }
        return cfg;
    }

    static KeyValueConfig parse_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("config: cannot open " + path);
        return parse(f);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw std::runtime_error("config: missing key " + key);
        return it->second;
    }
    std::string get(const std::string& key, const std::string& dflt) const {
        const auto it = values_.find(key);
        return it == values_.end() ? dflt : it->second;
    }
    double get_double(const std::string& key, std::optional<double> dflt = {}) const {
        if (!has(key)) {
            if (dflt) return *dflt;
            throw std::runtime_error("config: missing key " + key);
        }
        const std::string v = get(key);
        if (v == "inf" || v == "INF" || v == "infinity") return kInf;
        return std::stod(v);
    }
    long get_long(const std::string& key, std::optional<long> dflt = {}) const {
        if (!has(key)) {
            if (dflt) return *dflt;
            throw std::runtime_error("config: missing key " + key);
        }
        return std::stol(get(key));
    }

    void set(const std::string& key, const std::string& val) { values_[key] = val; }

    // Sorted echo; embedded into every output artifact.
    std::string echo() const {
        std::string out;
        for (const auto& [k, v] : values_) {
            if (!out.empty()) out += ' ';
            out += k + "=" + v;
        }
        return out;
    }

    const std::map<std::string, std::string>& items() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

// EppfSpec from config keys (family plus named parameters) or from a compact
// CLI string like "DP,alpha=1" / "PY,alpha=1,sigma=0.25" / "uniform".
inline EppfSpec parse_eppf(const std::string& family, double alpha, double sigma, long kappa,
                           double gamma) {
    std::string f;
    for (char ch : family) f += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (f == "uniform" || f == "u") return EppfSpec::uniform();
    if (f == "dp" || f == "dirichlet" || f == "dirichletprocess")
        return EppfSpec::dirichlet_process(alpha);
    if (f == "py" || f == "pitmanyor" || f == "pitman-yor")
        return EppfSpec::pitman_yor(alpha, sigma);
    if (f == "sd" || f == "symmetricdirichlet" || f == "symmetric-dirichlet")
        return EppfSpec::symmetric_dirichlet(static_cast<int>(kappa), gamma);
    throw std::runtime_error("unknown EPPF family: " + family);
}

inline EppfSpec eppf_from_config(const KeyValueConfig& cfg, const std::string& prefix = "base_") {
    return parse_eppf(cfg.get(prefix + "family", "DP"), cfg.get_double(prefix + "alpha", 1.0),
                      cfg.get_double(prefix + "sigma", 0.0), cfg.get_long(prefix + "kappa", 0),
                      cfg.get_double(prefix + "gamma", 1.0));
}

inline EppfSpec parse_eppf_string(const std::string& text) {
    std::stringstream ss(text);
    std::string tok;
    std::getline(ss, tok, ',');
    const std::string family = trim(tok);
    double alpha = 1.0, sigma = 0.0, gamma = 1.0;
    long kappa = 0;
    while (std::getline(ss, tok, ',')) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw std::runtime_error("base spec: expected name=value");
        const std::string key = trim(tok.substr(0, eq));
        const double val = std::stod(trim(tok.substr(eq + 1)));
        if (key == "alpha") alpha = val;
        else if (key == "sigma") sigma = val;
        else if (key == "kappa") kappa = static_cast<long>(val);
        else if (key == "gamma") gamma = val;
        else throw std::runtime_error("base spec: unknown parameter " + key);
    }
    return parse_eppf(family, alpha, sigma, kappa, gamma);
}

inline std::string eppf_to_string(const EppfSpec& s) {
    std::ostringstream os;
    os << family_name(s.family);
    switch (s.family) {
        case EppfFamily::Uniform: break;
        case EppfFamily::DirichletProcess: os << ",alpha=" << s.alpha; break;
        case EppfFamily::PitmanYor: os << ",alpha=" << s.alpha << ",sigma=" << s.sigma; break;
        case EppfFamily::SymmetricDirichlet:
            os << ",kappa=" << s.kappa << ",gamma=" << s.gamma;
            break;
    }
    return os.str();
}

// --------------------------------------------------------------------------
// Trace files

inline void write_partition_trace(std::ostream& os, const std::vector<SetPartition>& samples,
                                  const std::vector<long>& iterations,
                                  const std::string& comment) {
    os << "# cpart partition trace\n";
    if (!comment.empty()) os << "# " << comment << "\n";
    os << "iteration,partition\n";
    for (std::size_t s = 0; s < samples.size(); ++s)
        os << iterations[s] << "," << '"' << samples[s].to_string() << '"' << "\n";
}

struct PartitionTrace {
    std::vector<SetPartition> samples;
    std::vector<long> iterations;
};

inline PartitionTrace read_partition_trace(std::istream& is) {
    PartitionTrace out;
    std::string line;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#' || line.rfind("iteration,", 0) == 0) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("partition trace: bad record: " + line);
        out.iterations.push_back(std::stol(line.substr(0, comma)));
        std::string part = line.substr(comma + 1);
        part.erase(std::remove(part.begin(), part.end(), '"'), part.end());
        out.samples.push_back(parse_partition(part));
    }
    if (out.samples.empty()) throw std::runtime_error("partition trace: no samples");
    return out;
}

inline void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& m,
                             const std::string& comment = "") {
    if (!comment.empty()) os << "# " << comment << "\n";
    os << std::setprecision(17);
    for (long i = 0; i < m.rows(); ++i) {
        for (long j = 0; j < m.cols(); ++j) {
            if (j) os << ",";
            os << m(i, j);
        }
        os << "\n";
    }
}

inline Eigen::MatrixXd read_matrix_csv(std::istream& is) {
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        for (const auto& tok : split_csv_line(line)) row.push_back(std::stod(tok));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("read_matrix_csv: no data");
    Eigen::MatrixXd m(static_cast<long>(rows.size()), static_cast<long>(rows.front().size()));
    for (long i = 0; i < m.rows(); ++i) {
        if (static_cast<long>(rows[static_cast<std::size_t>(i)].size()) != m.cols())
            throw std::runtime_error("read_matrix_csv: ragged rows");
        for (long j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return m;
}

}  // namespace cpart
