#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fkdv/error.hpp"
#include "fkdv/field.hpp"
#include "fkdv/grid.hpp"
#include "fkdv/params.hpp"

namespace fkdv::io {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class IoError : public Error {
public:
    using Error::Error;
};

namespace detail {

template <class T>
void put_le(std::ostream& os, T value) {
    static_assert(sizeof(T) == 8);
    std::array<unsigned char, 8> bytes{};
    std::memcpy(bytes.data(), &value, 8);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    os.write(reinterpret_cast<const char*>(bytes.data()), 8);
}

template <class T>
T get_le(std::istream& is) {
    static_assert(sizeof(T) == 8);
    std::array<unsigned char, 8> bytes{};
    if (!is.read(reinterpret_cast<char*>(bytes.data()), 8)) throw IoError("field file truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), 8);
    return value;
}

}  // namespace detail

/// Binary field file: little-endian int64 d, f64 alpha, int64 m, f64 c,
/// f64 L per axis, int64 N per axis, then the samples as f64 in row-major order.
inline void write_field(const fs::path& path, const Field& f, const ModelParams& p) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const Grid& g = f.grid();
    detail::put_le<std::int64_t>(os, g.dim());
    detail::put_le<double>(os, p.alpha);
    detail::put_le<std::int64_t>(os, p.m);
    detail::put_le<double>(os, p.c);
    for (int a = 0; a < g.dim(); ++a) detail::put_le<double>(os, g.length(a));
    for (int a = 0; a < g.dim(); ++a) detail::put_le<std::int64_t>(os, static_cast<std::int64_t>(g.size(a)));
    for (double v : f.samples()) detail::put_le<double>(os, v);
    if (!os) throw IoError("write failed: " + path.string());
}

struct StoredField {
    ModelParams params;
    Field field;
};

inline StoredField read_field(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    StoredField out;
    const auto d = detail::get_le<std::int64_t>(is);
    if (d != 1 && d != 2) throw IoError("field file: bad dimension");
    out.params.d = static_cast<int>(d);
    out.params.alpha = detail::get_le<double>(is);
    out.params.m = static_cast<int>(detail::get_le<std::int64_t>(is));
    out.params.c = detail::get_le<double>(is);
    std::array<double, 2> len{};
    std::array<std::size_t, 2> n{};
    for (int a = 0; a < d; ++a) len[static_cast<std::size_t>(a)] = detail::get_le<double>(is);
    for (int a = 0; a < d; ++a) {
        const auto v = detail::get_le<std::int64_t>(is);
        if (v <= 0) throw IoError("field file: bad size");
        n[static_cast<std::size_t>(a)] = static_cast<std::size_t>(v);
    }
    const GridPtr g = make_grid(static_cast<int>(d), std::span<const double>(len.data(), static_cast<std::size_t>(d)),
                                std::span<const std::size_t>(n.data(), static_cast<std::size_t>(d)));
    std::vector<double> samples(g->points());
    for (double& v : samples) v = detail::get_le<double>(is);
    if (is.peek() != std::char_traits<char>::eof()) throw IoError("field file: trailing bytes");
    out.field = Field(g, std::move(samples));
    return out;
}

/// 17 significant digits.
inline std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void write_csv(const fs::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& columns) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    std::size_t rows = 0;
    for (const auto& c : columns) rows = std::max(rows, c.size());
    for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
    os << '\n';
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < columns.size(); ++j) {
            if (j) os << ',';
            if (i < columns[j].size()) os << format_number(columns[j][i]);
        }
        os << '\n';
    }
    if (!os) throw IoError("write failed: " + path.string());
}

inline void write_json(const fs::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << std::setw(2) << j << '\n';
}

inline std::string sha256_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::array<char, 1 << 16> buf{};
    while (is) {
        is.read(buf.data(), buf.size());
        if (is.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(is.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md.data(), &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

/// Scenario kinds mirrored by the CLI subcommands.
inline const std::vector<std::string>& scenario_kinds() {
    static const std::vector<std::string> kinds{"groundstate", "spectrum",  "evolve",    "stability",
                                                "instability", "kernel",    "identities"};
    return kinds;
}

struct Scenario {
    std::string kind = "groundstate";
    ModelParams params;
    std::vector<double> L{80.0};
    std::vector<std::size_t> N{1024};
    double tol = 1e-11;
    double dt = 0.0;        ///< 0: default step
    double T = 1.0;
    double sample_dt = 0.1;
    double A = 0.0;         ///< 0: L/8
    double omega = 0.0;     ///< 0: calibrated default
    double delta = 1e-2;
    double amplitude = 1.0;
    double lambda = 1.0;    ///< kernel profile shift
    int n_first = 1, n_last = 8;
    std::uint64_t seed = 1;
    std::string init = "soliton";  ///< evolve: soliton | perturbed | lambda
    int n = 1;              ///< evolve with init=lambda
    std::string out;        ///< run root override
    bool save_snapshots = false;
};

inline json to_json(const Scenario& s) {
    json j;
    j["kind"] = s.kind;
    j["d"] = s.params.d;
    j["alpha"] = s.params.alpha;
    j["m"] = s.params.m;
    j["c"] = s.params.c;
    j["L"] = s.L;
    j["N"] = s.N;
    j["tol"] = s.tol;
    j["dt"] = s.dt;
    j["T"] = s.T;
    j["sample_dt"] = s.sample_dt;
    j["A"] = s.A;
    j["omega"] = s.omega;
    j["delta"] = s.delta;
    j["amplitude"] = s.amplitude;
    j["lambda"] = s.lambda;
    j["n_range"] = std::to_string(s.n_first) + ".." + std::to_string(s.n_last);
    j["n"] = s.n;
    j["seed"] = s.seed;
    j["init"] = s.init;
    j["save_snapshots"] = s.save_snapshots;
    return j;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::optional<double> to_double(const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) return std::nullopt;
        return x;
    } catch (...) {
        return std::nullopt;
    }
}

inline std::optional<long long> to_int(const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) return std::nullopt;
        return x;
    } catch (...) {
        return std::nullopt;
    }
}

inline std::vector<std::string> split(const std::string& v, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

}  // namespace detail

/// Applies key=value pairs to a scenario; every violation is collected before throwing.
inline Scenario apply_settings(Scenario s, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::vector<std::string> errors;
    auto num = [&](const std::string& k, const std::string& v, double& dst) {
        if (auto x = detail::to_double(v)) {
            dst = *x;
        } else {
            errors.push_back(k + ": not a number '" + v + "'");
        }
    };
    auto integer = [&](const std::string& k, const std::string& v, auto& dst) {
        if (auto x = detail::to_int(v)) {
            dst = static_cast<std::remove_reference_t<decltype(dst)>>(*x);
        } else {
            errors.push_back(k + ": not an integer '" + v + "'");
        }
    };
    for (const auto& [k, v] : kv) {
        if (k == "kind") {
            if (std::find(scenario_kinds().begin(), scenario_kinds().end(), v) == scenario_kinds().end()) {
                errors.push_back("kind: unknown scenario kind '" + v + "'");
            } else {
                s.kind = v;
            }
        } else if (k == "d") {
            integer(k, v, s.params.d);
        } else if (k == "alpha") {
            num(k, v, s.params.alpha);
        } else if (k == "m") {
            integer(k, v, s.params.m);
        } else if (k == "c") {
            num(k, v, s.params.c);
        } else if (k == "L") {
            s.L.clear();
            for (const auto& part : detail::split(v, ',')) {
                double x = 0.0;
                num(k, part, x);
                s.L.push_back(x);
            }
        } else if (k == "N") {
            s.N.clear();
            for (const auto& part : detail::split(v, ',')) {
                long long x = 0;
                integer(k, part, x);
                s.N.push_back(x > 0 ? static_cast<std::size_t>(x) : 0);
            }
        } else if (k == "tol") {
            num(k, v, s.tol);
        } else if (k == "dt") {
            num(k, v, s.dt);
        } else if (k == "T") {
            num(k, v, s.T);
        } else if (k == "sample_dt") {
            num(k, v, s.sample_dt);
        } else if (k == "A") {
            num(k, v, s.A);
        } else if (k == "omega") {
            num(k, v, s.omega);
        } else if (k == "delta") {
            num(k, v, s.delta);
        } else if (k == "amplitude") {
            num(k, v, s.amplitude);
        } else if (k == "lambda") {
            num(k, v, s.lambda);
        } else if (k == "n") {
            integer(k, v, s.n);
        } else if (k == "n_range") {
            const auto dots = v.find("..");
            const auto a = detail::to_int(dots == std::string::npos ? v : v.substr(0, dots));
            const auto b = detail::to_int(dots == std::string::npos ? v : v.substr(dots + 2));
            if (!a || !b || *a < 1 || *b < *a) {
                errors.push_back("n_range: expected 'first..last' with 1 <= first <= last, got '" + v + "'");
            } else {
                s.n_first = static_cast<int>(*a);
                s.n_last = static_cast<int>(*b);
            }
        } else if (k == "seed") {
            long long x = 0;
            integer(k, v, x);
            s.seed = static_cast<std::uint64_t>(x);
        } else if (k == "init") {
            if (v != "soliton" && v != "perturbed" && v != "lambda") {
                errors.push_back("init: expected soliton, perturbed or lambda, got '" + v + "'");
            } else {
                s.init = v;
            }
        } else if (k == "out") {
            s.out = v;
        } else if (k == "save_snapshots") {
            if (v == "true" || v == "1") {
                s.save_snapshots = true;
            } else if (v == "false" || v == "0") {
                s.save_snapshots = false;
            } else {
                errors.push_back("save_snapshots: expected true or false");
            }
        } else {
            errors.push_back("unknown key '" + k + "'");
        }
    }
    // Model and grid validation.
    try {
        validate(s.params);
    } catch (const ConfigError& e) {
        errors.emplace_back(e.what());
    }
    const auto d = static_cast<std::size_t>(std::max(s.params.d, 1));
    if (s.L.size() == 1 && d == 2) s.L.push_back(s.L[0]);
    if (s.N.size() == 1 && d == 2) s.N.push_back(s.N[0]);
    if (s.L.size() != d) errors.push_back("L: expected " + std::to_string(d) + " value(s)");
    if (s.N.size() != d) errors.push_back("N: expected " + std::to_string(d) + " value(s)");
    for (double l : s.L) {
        if (!(l > 0.0)) errors.push_back("L: lengths must be positive");
    }
    for (std::size_t n : s.N) {
        if (n < 32 || !is_power_of_two(n)) errors.push_back("N: sizes must be powers of two >= 32");
    }
    if (!(s.tol > 0.0)) errors.push_back("tol: must be positive");
    if (s.dt < 0.0) errors.push_back("dt: must be nonnegative (0 selects the default)");
    if (!(s.T > 0.0)) errors.push_back("T: must be positive");
    if (!(s.sample_dt > 0.0)) errors.push_back("sample_dt: must be positive");
    if (s.A < 0.0) errors.push_back("A: must be nonnegative (0 selects L/8)");
    if (s.omega < 0.0) errors.push_back("omega: must be nonnegative (0 selects the calibrated default)");
    if (s.delta < 0.0) errors.push_back("delta: must be nonnegative");
    if (!(s.lambda > 0.0)) errors.push_back("lambda: must be positive");
    if (s.n < 1) errors.push_back("n: must be positive");
    if (!errors.empty()) {
        std::string msg = "invalid scenario:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    s.L.resize(d);
    s.N.resize(d);
    return s;
}

/// Flat key=value text; '#' starts a comment.
inline std::vector<std::pair<std::string, std::string>> read_settings(std::istream& is) {
    std::vector<std::pair<std::string, std::string>> kv;
    std::string line;
    int lineno = 0;
    std::vector<std::string> errors;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back("line " + std::to_string(lineno) + ": expected key=value");
            continue;
        }
        kv.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    if (!errors.empty()) {
        std::string msg = "invalid scenario file:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return kv;
}

inline Scenario parse_scenario(std::istream& is) { return apply_settings(Scenario{}, read_settings(is)); }

inline Scenario parse_scenario_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open scenario " + path.string());
    return parse_scenario(is);
}

inline Scenario parse_scenario_text(const std::string& text) {
    std::istringstream is(text);
    return parse_scenario(is);
}

inline GridPtr scenario_grid(const Scenario& s) {
    return make_grid(s.params.d, std::span<const double>(s.L), std::span<const std::size_t>(s.N));
}

/// Run root: explicit override, then FKDV_RUN_ROOT, then ./runs.
inline fs::path run_root(const Scenario& s) {
    if (!s.out.empty()) return s.out;
    if (const char* env = std::getenv("FKDV_RUN_ROOT"); env && *env) return env;
    return "runs";
}

/// Creates <root>/<kind>_<UTC timestamp>[_k]; existing directories are never reused.
inline fs::path make_run_directory(const fs::path& root, const std::string& kind) {
    fs::create_directories(root);
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream stamp;
    stamp << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
    const std::string base = kind + "_" + stamp.str();
    for (int k = 0; k < 10000; ++k) {
        const fs::path dir = root / (k == 0 ? base : base + "_" + std::to_string(k));
        if (fs::create_directory(dir)) return dir;
    }
    throw IoError("could not create a fresh run directory under " + root.string());
}

/// Manifest listing every file in the run directory with its size and SHA-256.
inline json write_manifest(const fs::path& dir, const Scenario& s, const json& extra = json::object()) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    json m;
    m["config"] = to_json(s);
    m["files"] = json::array();
    for (const auto& f : files) {
        m["files"].push_back({{"path", fs::relative(f, dir).generic_string()},
                              {"bytes", fs::file_size(f)},
                              {"sha256", sha256_file(f)}});
    }
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    write_json(dir / "manifest.json", m);
    return m;
}

}  // namespace fkdv::io
