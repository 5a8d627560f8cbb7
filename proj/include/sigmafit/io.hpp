// File formats: line-delimited match records, result CSVs and run manifests.
//
// Every emitted file carries a schema version. Match files are JSON lines
// (one pair per line) with a header object; numbers round-trip exactly
// (shortest representation that parses back to the same double), so
// save(load(x)) is byte-identical for canonical files.

#pragma once

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"

namespace sigmafit::io {

inline constexpr const char* kMatchesSchema = "sigmafit.matches/1";
inline constexpr const char* kResultsSchema = "sigmafit.results/1";
inline constexpr const char* kCellsSchema = "sigmafit.cells/1";
inline constexpr const char* kHistfitSchema = "sigmafit.histfit/1";
inline constexpr const char* kManifestSchema = "sigmafit.manifest/1";

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v) {
    if (std::isnan(v))
        return "null";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

struct MatchPair {
    std::string id;
    MatchSet matches;
};

struct MatchFile {
    std::vector<MatchPair> pairs;
};

namespace detail {

inline nlohmann::json intrinsics_to_json(const CameraIntrinsics& k) {
    return nlohmann::json::array({nlohmann::json::array({k.fx, k.skew, k.cx}),
                                  nlohmann::json::array({0.0, k.fy, k.cy}),
                                  nlohmann::json::array({0.0, 0.0, 1.0})});
}

inline CameraIntrinsics intrinsics_from_json(const nlohmann::json& j, const std::string& pair_id) {
    if (!j.is_array() || j.size() != 3 || !j[0].is_array() || j[0].size() != 3 ||
        j[1].size() != 3 || j[2].size() != 3)
        throw ValidationError("pair '" + pair_id + "': intrinsics must be a 3x3 matrix");
    const auto at = [&](int r, int c) { return j[r][c].get<double>(); };
    if (at(1, 0) != 0.0 || at(2, 0) != 0.0 || at(2, 1) != 0.0 || at(2, 2) != 1.0)
        throw ValidationError("pair '" + pair_id + "': intrinsics must be upper triangular with "
                              "unit last row");
    CameraIntrinsics k{at(0, 0), at(1, 1), at(0, 2), at(1, 2), at(0, 1)};
    if (!k.invertible())
        throw ValidationError("pair '" + pair_id + "': focal lengths must be positive");
    return k;
}

inline std::vector<ImagePoint> points_from_json(const nlohmann::json& j,
                                                const std::string& pair_id, const char* field) {
    if (!j.is_array())
        throw ValidationError("pair '" + pair_id + "': " + field + " must be an array");
    std::vector<ImagePoint> pts;
    pts.reserve(j.size());
    for (const auto& p : j) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
            throw ValidationError("pair '" + pair_id + "': " + field +
                                  " entries must be [x, y] pairs");
        const double x = p[0].get<double>();
        const double y = p[1].get<double>();
        if (!std::isfinite(x) || !std::isfinite(y))
            throw ValidationError("pair '" + pair_id + "': non-finite coordinate in " + field);
        pts.push_back({x, y});
    }
    return pts;
}

inline MatchPair pair_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string())
        throw ValidationError("pair record must be an object with a string 'id'");
    MatchPair pair;
    pair.id = j["id"].get<std::string>();
    if (!j.contains("pts_a") || !j.contains("pts_b"))
        throw ValidationError("pair '" + pair.id + "': missing pts_a or pts_b");
    pair.matches.pts_a = points_from_json(j["pts_a"], pair.id, "pts_a");
    pair.matches.pts_b = points_from_json(j["pts_b"], pair.id, "pts_b");
    if (pair.matches.pts_a.size() != pair.matches.pts_b.size()) {
        std::ostringstream msg;
        msg << "pair '" << pair.id << "': point counts differ (" << pair.matches.pts_a.size()
            << " vs " << pair.matches.pts_b.size() << ")";
        throw ValidationError(msg.str());
    }
    const bool has_ka = j.contains("K_a") && !j["K_a"].is_null();
    const bool has_kb = j.contains("K_b") && !j["K_b"].is_null();
    if (has_ka != has_kb)
        throw ValidationError("pair '" + pair.id + "': intrinsics must be both present or both "
                              "absent");
    if (has_ka) {
        pair.matches.intrinsics_a = intrinsics_from_json(j["K_a"], pair.id);
        pair.matches.intrinsics_b = intrinsics_from_json(j["K_b"], pair.id);
    }
    return pair;
}

}  // namespace detail

// Reads a match file. In strict mode (the default) the first invalid record
// aborts the load; otherwise invalid records are skipped and reported
// per pair id through `rejected`.
inline MatchFile load_matches(std::istream& in, bool strict = true,
                              std::vector<std::string>* rejected = nullptr) {
    std::string line;
    if (!std::getline(in, line))
        throw ParseError("line 1: empty file (expected schema header)");
    try {
        const auto header = nlohmann::json::parse(line);
        if (!header.is_object() || header.value("schema", "") != kMatchesSchema)
            throw ParseError(std::string("line 1: expected schema header {\"schema\":\"") +
                             kMatchesSchema + "\"}");
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("line 1: ") + e.what());
    }

    MatchFile file;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            std::ostringstream msg;
            msg << "line " << line_no << ": " << e.what();
            throw ParseError(msg.str());
        }
        try {
            file.pairs.push_back(detail::pair_from_json(j));
        } catch (const ValidationError& e) {
            std::ostringstream msg;
            msg << "line " << line_no << ": " << e.what();
            if (strict)
                throw ValidationError(msg.str());
            if (rejected)
                rejected->push_back(msg.str());
        }
    }
    return file;
}

inline MatchFile load_matches(const std::string& path, bool strict = true,
                              std::vector<std::string>* rejected = nullptr) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open match file: " + path);
    return load_matches(in, strict, rejected);
}

inline void save_matches(std::ostream& out, const MatchFile& file) {
    out << nlohmann::json{{"schema", kMatchesSchema}}.dump() << "\n";
    for (const auto& pair : file.pairs) {
        nlohmann::json j;
        j["id"] = pair.id;
        auto pts = [](const std::vector<ImagePoint>& v) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& p : v)
                arr.push_back(nlohmann::json::array({p.x, p.y}));
            return arr;
        };
        j["pts_a"] = pts(pair.matches.pts_a);
        j["pts_b"] = pts(pair.matches.pts_b);
        if (pair.matches.has_intrinsics()) {
            j["K_a"] = detail::intrinsics_to_json(*pair.matches.intrinsics_a);
            j["K_b"] = detail::intrinsics_to_json(*pair.matches.intrinsics_b);
        } else {
            j["K_a"] = nullptr;
            j["K_b"] = nullptr;
        }
        out << j.dump() << "\n";
    }
}

inline void save_matches(const std::string& path, const MatchFile& file) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write match file: " + path);
    save_matches(out, file);
}

// One estimation result per (pair, method, tau0). Missing metrics are
// explicit nulls in the CSV, never omitted columns.
struct ResultRow {
    std::string pair_id;
    std::string method;
    double tau0 = std::numeric_limits<double>::quiet_NaN();
    double tau_star = std::numeric_limits<double>::quiet_NaN();
    double sigma_hat = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
    std::int64_t n_inliers = -1;  // negative = null
    double rot_err_deg = std::numeric_limits<double>::quiet_NaN();
    double trans_err_deg = std::numeric_limits<double>::quiet_NaN();
    double runtime_ms = std::numeric_limits<double>::quiet_NaN();
    std::string error;
};

namespace detail {

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace detail

inline constexpr const char* kResultsHeader =
    "pair_id,method,tau0,tau_star,sigma_hat,converged,n_inliers,rot_err_deg,trans_err_deg,"
    "runtime_ms,error";

inline void write_results_csv(std::ostream& out, std::span<const ResultRow> rows) {
    out << "# " << kResultsSchema << "\n" << kResultsHeader << "\n";
    for (const auto& r : rows) {
        out << detail::csv_escape(r.pair_id) << ',' << r.method << ',' << format_double(r.tau0)
            << ',' << format_double(r.tau_star) << ',' << format_double(r.sigma_hat) << ','
            << (r.converged ? "true" : "false") << ','
            << (r.n_inliers < 0 ? std::string("null") : std::to_string(r.n_inliers)) << ','
            << format_double(r.rot_err_deg) << ',' << format_double(r.trans_err_deg) << ','
            << format_double(r.runtime_ms) << ',' << detail::csv_escape(r.error) << "\n";
    }
}

inline constexpr const char* kCellsHeader =
    "method,tau0,n_scenes,n_failed,auc5,auc10,auc20,rot_err_median_deg,trans_err_median_deg,"
    "sigma_hat_mean,sigma_hat_median,tau_star_median";

// Aggregate benchmark cells (method x tau0).
struct CellRow {
    std::string method;
    double tau0 = 0.0;
    std::size_t n_scenes = 0;
    std::size_t n_failed = 0;
    double auc5 = 0.0, auc10 = 0.0, auc20 = 0.0;
    double rot_err_median = std::numeric_limits<double>::quiet_NaN();
    double trans_err_median = std::numeric_limits<double>::quiet_NaN();
    double sigma_hat_mean = std::numeric_limits<double>::quiet_NaN();
    double sigma_hat_median = std::numeric_limits<double>::quiet_NaN();
    double tau_star_median = std::numeric_limits<double>::quiet_NaN();
};

inline void write_cells_csv(std::ostream& out, std::span<const CellRow> cells) {
    out << "# " << kCellsSchema << "\n" << kCellsHeader << "\n";
    for (const auto& c : cells) {
        out << c.method << ',' << format_double(c.tau0) << ',' << c.n_scenes << ',' << c.n_failed
            << ',' << format_double(c.auc5) << ',' << format_double(c.auc10) << ','
            << format_double(c.auc20) << ',' << format_double(c.rot_err_median) << ','
            << format_double(c.trans_err_median) << ',' << format_double(c.sigma_hat_mean) << ','
            << format_double(c.sigma_hat_median) << ',' << format_double(c.tau_star_median)
            << "\n";
    }
}

inline constexpr const char* kHistfitHeader =
    "pair_id,bin_lo,bin_hi,observed,expected,sigma_hat,ks_p";

struct HistfitRow {
    std::string pair_id;
    double bin_lo = 0.0;
    double bin_hi = 0.0;
    std::size_t observed = 0;
    double expected = 0.0;
    double sigma_hat = std::numeric_limits<double>::quiet_NaN();
    double ks_p = std::numeric_limits<double>::quiet_NaN();
};

inline void write_histfit_csv(std::ostream& out, std::span<const HistfitRow> rows) {
    out << "# " << kHistfitSchema << "\n" << kHistfitHeader << "\n";
    for (const auto& r : rows) {
        out << detail::csv_escape(r.pair_id) << ',' << format_double(r.bin_lo) << ','
            << format_double(r.bin_hi) << ',' << r.observed << ',' << format_double(r.expected)
            << ',' << format_double(r.sigma_hat) << ',' << format_double(r.ks_p) << "\n";
    }
}

// Flat key-value run manifest; keys are emitted sorted, so the file is
// canonical for a given configuration.
using Manifest = std::map<std::string, std::string>;

inline void write_manifest(std::ostream& out, const Manifest& manifest) {
    out << "# " << kManifestSchema << "\n";
    for (const auto& [key, value] : manifest)
        out << key << " = " << value << "\n";
}

inline void write_manifest(const std::string& path, const Manifest& manifest) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write manifest: " + path);
    write_manifest(out, manifest);
}

}  // namespace sigmafit::io
