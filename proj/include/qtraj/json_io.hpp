// json_io.hpp
// JSON and CSV serialization. Matrices are row-major arrays of rows, each
// entry an [re, im] pair. Layouts are described in docs/FORMAT.md.

#pragma once

#include "qtraj/fit.hpp"
#include "qtraj/lindblad.hpp"
#include "qtraj/linalg.hpp"
#include "qtraj/purification.hpp"
#include "qtraj/trajectory.hpp"
#include "qtraj/transport.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qtraj {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shortest round-tripping decimal form.
inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Matrices and models

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& j, int expected_dim = -1) {
    if (!j.is_array() || j.empty()) throw FormatError("matrix must be a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (expected_dim >= 0 && rows != expected_dim) throw FormatError("matrix has the wrong dimension");
    Matrix m(rows, rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != rows) throw FormatError("matrix must be square");
        for (Eigen::Index c = 0; c < rows; ++c) {
            const json& e = row[static_cast<std::size_t>(c)];
            if (e.is_number()) {
                m(r, c) = cplx(e.get<double>(), 0.0);
            } else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()) {
                m(r, c) = cplx(e[0].get<double>(), e[1].get<double>());
            } else {
                throw FormatError("matrix entries must be [re, im] pairs");
            }
        }
    }
    return m;
}

inline json model_to_json(const OperatorModel& model) {
    json j;
    j["dim"] = model.dim();
    j["H"] = matrix_to_json(model.hamiltonian().matrix());
    j["diffusive"] = json::array();
    for (const auto& l : model.diffusive()) j["diffusive"].push_back(matrix_to_json(l.matrix()));
    j["jump"] = json::array();
    for (const auto& c : model.jump()) j["jump"].push_back(matrix_to_json(c.matrix()));
    return j;
}

inline OperatorModel model_from_json(const json& j) {
    try {
        if (!j.is_object()) throw FormatError("model must be a JSON object");
        if (!j.contains("dim") || !j["dim"].is_number_integer()) throw FormatError("model needs an integer 'dim'");
        const int k = j["dim"].get<int>();
        if (k < 1) throw FormatError("model 'dim' must be positive");
        const Matrix h = j.contains("H") ? matrix_from_json(j["H"], k) : Matrix(Matrix::Zero(k, k));
        std::vector<Matrix> d, c;
        if (j.contains("diffusive")) {
            for (const auto& m : j["diffusive"]) d.push_back(matrix_from_json(m, k));
        }
        if (j.contains("jump")) {
            for (const auto& m : j["jump"]) c.push_back(matrix_from_json(m, k));
        }
        return OperatorModel::from_matrices(h, d, c);
    } catch (const json::exception& e) {
        throw FormatError(std::string("model JSON: ") + e.what());
    }
}

inline OperatorModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("model file " + path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const ErgodicityReport& r) {
    json j;
    j["holds"] = r.holds;
    j["zero_multiplicity"] = r.zero_multiplicity;
    j["spectral_gap"] = r.spectral_gap;
    j["stationary_state"] = r.stationary_state ? matrix_to_json(r.stationary_state->matrix()) : json(nullptr);
    return j;
}

inline json to_json(const PurReport& r) {
    json j;
    j["verdict"] = to_string(r.verdict);
    j["method"] = r.method;
    j["residual"] = r.residual;
    j["note"] = r.note;
    j["witness"] = r.witness ? matrix_to_json(*r.witness) : json(nullptr);
    return j;
}

inline json to_json(const StationaryDecomposition& d) {
    json j;
    j["kernel_dimension"] = d.kernel_dimension;
    j["transient_dimension"] = d.transient_dimension;
    j["block_count"] = d.states.size();
    j["multiplicity_flag"] = d.multiplicity_flag;
    j["states"] = json::array();
    for (const auto& s : d.states) j["states"].push_back(matrix_to_json(s.matrix()));
    return j;
}

inline json to_json(const RateFit& f) {
    return json{{"prefactor", f.prefactor}, {"rate", f.rate},   {"r2", f.r2},
                {"decaying", f.decaying},   {"first", f.first}, {"count", f.count}};
}

inline json to_json(const SimConfig& c) {
    return json{{"dt", c.dt},
                {"horizon", c.horizon},
                {"seed", c.seed},
                {"max_jump_prob", c.max_jump_prob},
                {"scheme", to_string(c.scheme)}};
}

// ---------------------------------------------------------------------------
// CSV

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// t,value,stderr
inline std::string curve_csv(const Curve& c) {
    std::ostringstream s;
    s << "t,value,stderr\n";
    for (std::size_t i = 0; i < c.t.size(); ++i) {
        s << fmt_double(c.t[i]) << ',' << fmt_double(c.value[i]) << ',' << fmt_double(i < c.se.size() ? c.se[i] : 0.0)
          << '\n';
    }
    return s.str();
}

// re_0,im_0,...,re_{k-1},im_{k-1},weight
inline std::string measure_csv(const EmpiricalMeasure& m) {
    std::ostringstream s;
    const int k = m.dim();
    for (int i = 0; i < k; ++i) s << "re_" << i << ",im_" << i << ',';
    s << "weight\n";
    for (std::size_t a = 0; a < m.size(); ++a) {
        const Vector& v = m.atoms()[a].vector();
        for (int i = 0; i < k; ++i) s << fmt_double(v(i).real()) << ',' << fmt_double(v(i).imag()) << ',';
        s << fmt_double(m.weights()[a]) << '\n';
    }
    return s.str();
}

// Trajectory dump: t, state components (re/im interleaved), jump counters.
class TrajectoryCsv {
public:
    TrajectoryCsv(int k, int n_jump) : k_(k) {
        s_ << 't';
        for (int i = 0; i < k; ++i) s_ << ",re_" << i << ",im_" << i;
        for (int j = 0; j < n_jump; ++j) s_ << ",N_" << j;
        s_ << '\n';
    }

    void row(double t, const Vector& x, const std::vector<long>& counts) {
        s_ << fmt_double(t);
        for (int i = 0; i < k_; ++i) s_ << ',' << fmt_double(x(i).real()) << ',' << fmt_double(x(i).imag());
        for (long c : counts) s_ << ',' << c;
        s_ << '\n';
    }

    std::string str() const { return s_.str(); }

private:
    int k_;
    std::ostringstream s_;
};

}  // namespace qtraj
