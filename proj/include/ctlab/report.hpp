#pragma once

#include <openssl/evp.h>

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

namespace ctlab {

using json = nlohmann::json;

inline constexpr int schema_version = 1;

/// Bad command line or config; the runner exits with status 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Overlays a user config on the defaults. Every user key must exist in the
/// defaults with a compatible type; numbers may be given as integers where
/// reals are expected, never the other way round.
inline json merge_config(const json& defaults, const json& user) {
    if (!user.is_object()) throw ConfigError("config must be a JSON object");
    if (!user.contains("schema_version")) throw ConfigError("config lacks schema_version");
    if (user["schema_version"] != schema_version)
        throw ConfigError("unsupported schema_version " + user["schema_version"].dump() + " (expected " + std::to_string(schema_version) + ")");
    json out = defaults;
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string& k = it.key();
        if (k == "schema_version") continue;
        if (!defaults.contains(k)) throw ConfigError("unknown config key '" + k + "'");
        const json& d = defaults[k];
        const json& v = it.value();
        auto numeric_ok = [](const json& want, const json& got) {
            if (want.is_number_float()) return got.is_number();
            if (want.is_number_unsigned()) return got.is_number_unsigned() || (got.is_number_integer() && got.get<long long>() >= 0);
            if (want.is_number_integer()) return got.is_number_integer();
            return false;
        };
        bool ok;
        if (d.is_number()) ok = numeric_ok(d, v);
        else if (d.is_array()) {
            ok = v.is_array();
            if (ok && !d.empty())
                for (const auto& e : v) ok = ok && (d[0].is_number() ? numeric_ok(d[0], e) : e.type() == d[0].type());
        } else ok = v.type() == d.type();
        if (!ok) throw ConfigError("config key '" + k + "' has the wrong type (expected like " + d.dump() + ")");
        out[k] = v;
    }
    return out;
}

inline std::string hex(const unsigned char* p, std::size_t n) {
    std::ostringstream os;
    for (std::size_t i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(p[i]);
    return os.str();
}

/// SHA-1 of "blob <size>\0<content>", the way git names a file's content.
inline std::string git_blob_hash(const std::string& content) {
    std::string blob = "blob " + std::to_string(content.size());
    blob.push_back('\0');
    blob += content;
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1) throw std::runtime_error("sha1 failed");
    return hex(md, len);
}

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<json>> rows;

    void add(std::vector<json> r) {
        if (r.size() != columns.size()) throw std::logic_error("table row width mismatch in " + name);
        rows.push_back(std::move(r));
    }
};

/// Result of one subcommand. Everything serialized depends only on the
/// config (without the worker count); wall times are kept aside.
struct RunReport {
    std::string command;
    json config;
    std::vector<Check> checks;
    std::vector<Table> tables;
    std::map<std::string, double> seconds;  ///< not serialized

    [[nodiscard]] bool passed() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
    [[nodiscard]] const Check* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
    void check(std::string name, bool pass, std::string detail) { checks.push_back({std::move(name), pass, std::move(detail)}); }

    [[nodiscard]] std::string input_hash() const { return git_blob_hash(config.dump()); }

    [[nodiscard]] json to_json() const {
        json j;
        j["schema_version"] = schema_version;
        j["command"] = command;
        j["config"] = config;
        j["input_hash"] = input_hash();
        j["passed"] = passed();
        j["checks"] = json::array();
        for (const auto& c : checks) j["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
        j["tables"] = json::object();
        for (const auto& t : tables) {
            json rows = json::array();
            for (const auto& r : t.rows) rows.push_back(r);
            j["tables"][t.name] = {{"columns", t.columns}, {"rows", rows}};
        }
        return j;
    }
};

inline std::string cell_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_float()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6g", v.get<double>());
        return buf;
    }
    return v.dump();
}

inline void print_human(std::ostream& os, const RunReport& r) {
    os << r.command << "  input " << r.input_hash().substr(0, 12) << "\n";
    for (const auto& t : r.tables) {
        os << "\n[" << t.name << "]\n";
        std::vector<std::size_t> w;
        for (const auto& c : t.columns) w.push_back(c.size());
        for (const auto& row : t.rows)
            for (std::size_t i = 0; i < row.size(); ++i) w[i] = std::max(w[i], cell_text(row[i]).size());
        for (std::size_t i = 0; i < t.columns.size(); ++i) os << std::setw(int(w[i]) + 2) << t.columns[i];
        os << "\n";
        for (const auto& row : t.rows) {
            for (std::size_t i = 0; i < row.size(); ++i) os << std::setw(int(w[i]) + 2) << cell_text(row[i]);
            os << "\n";
        }
    }
    os << "\n";
    for (const auto& c : r.checks) os << (c.pass ? "PASS  " : "FAIL  ") << c.name << "  " << c.detail << "\n";
}

inline std::string csv_cell(const json& v) {
    if (!v.is_string()) return v.dump();
    std::string s = v.get<std::string>(), out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

/// Writes <dir>/<command>.json, or one CSV per table plus <command>_checks.csv.
inline std::vector<std::filesystem::path> write_artifacts(const RunReport& r, const std::filesystem::path& dir, const std::string& format) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> out;
    std::string stem = r.command;
    for (auto& ch : stem)
        if (ch == '-') ch = '_';
    if (format == "json") {
        out.push_back(dir / (stem + ".json"));
        std::ofstream(out.back()) << r.to_json().dump(2) << "\n";
        return out;
    }
    if (format != "csv") throw ConfigError("format must be csv or json");
    for (const auto& t : r.tables) {
        out.push_back(dir / (stem + "_" + t.name + ".csv"));
        std::ofstream f(out.back());
        f << "# schema_version " << schema_version << ", input " << r.input_hash() << "\n";
        for (std::size_t i = 0; i < t.columns.size(); ++i) f << (i ? "," : "") << t.columns[i];
        f << "\n";
        for (const auto& row : t.rows) {
            for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << csv_cell(row[i]);
            f << "\n";
        }
    }
    out.push_back(dir / (stem + "_checks.csv"));
    std::ofstream f(out.back());
    f << "# schema_version " << schema_version << ", input " << r.input_hash() << "\nname,pass,detail\n";
    for (const auto& c : r.checks) f << csv_cell(c.name) << ',' << (c.pass ? 1 : 0) << ',' << csv_cell(c.detail) << "\n";
    return out;
}

/// Runs f(0) .. f(n-1) on up to `workers` threads; results come back in index
/// order, so any fold over them is independent of the worker count. The
/// lowest-index exception is rethrown and all results are dropped.
template <class F>
auto parallel_map(std::size_t n, int workers, F&& f) -> std::vector<decltype(f(std::size_t{}))> {
    using T = decltype(f(std::size_t{}));
    std::vector<std::optional<T>> slot(n);
    std::vector<std::exception_ptr> err(n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    auto work = [&] {
        for (;;) {
            std::size_t i = next++;
            if (i >= n || failed) return;
            try {
                slot[i].emplace(f(i));
            } catch (...) {
                err[i] = std::current_exception();
                failed = true;
            }
        }
    };
    const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(std::max(workers, 1), n));
    if (w == 1) work();
    else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < w; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (auto& e : err)
        if (e) std::rethrow_exception(e);
    std::vector<T> out;
    out.reserve(n);
    for (auto& s : slot) out.push_back(std::move(*s));
    return out;
}

}  // namespace ctlab
