// Batch driver for gate experiments: parses a key = value config with
// per-gate sections plus flag overrides, runs the reduced and/or full
// pipelines per alpha^2 value, and writes deterministic artifacts.  All
// floats are emitted with 17 significant digits; runtime_s in the Pauli
// table is the only field that varies between identical runs.

#include "catred/gates.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace catred;

static const char* kVersion = "0.1.0";

// ---- formatting -------------------------------------------------------------

static std::string fm(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

// short form for filenames and the canonical config string
static std::string fg(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%g", v);
    return b;
}

static std::string json_string(const std::string& s) {
    std::string o = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') o += '\\';
        o += c;
    }
    return o + "\"";
}

static std::string json_rmat(const RMat& m) {
    std::string o = "[";
    for (int r = 0; r < m.rows(); ++r) {
        o += r ? ",[" : "[";
        for (int c = 0; c < m.cols(); ++c) {
            if (c) o += ",";
            o += fm(m(r, c));
        }
        o += "]";
    }
    return o + "]";
}

static std::string json_chi(const LdChi& m) {
    std::string o = "[";
    for (int r = 0; r < m.rows(); ++r) {
        o += r ? ",[" : "[";
        for (int c = 0; c < m.cols(); ++c) {
            if (c) o += ",";
            o += "[" + fm((double)m(r, c).real()) + "," + fm((double)m(r, c).imag()) + "]";
        }
        o += "]";
    }
    return o + "]";
}

// ---- run configuration ------------------------------------------------------

struct RunConfig {
    std::string gate = "Z";
    std::vector<double> alpha_sq = {4.0};
    int order = 2;
    std::string model = "reduced";  // reduced | full | both
    std::string out = "catred_out";
    int n_trunc = 0;
    double dt_scale = 1.0;
    double fit_min_alpha_sq = 4.0;
    int jobs = 1;
    double kappa2 = 1.0;
    double kappa1_over_kappa2 = 0.01;
    double drive = 0.0;
    double t_gate = 0.0;
    std::string cache_dir;
    int leakage_samples = 64;
    // 0 keeps the library default
    double inv_tol = 0, steady_tol = 0, duality_tol = 0, series_tol = 0, rzero_tol = 0;
};

static std::vector<double> parse_list(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        size_t pos = 0;
        double x = std::stod(tok, &pos);
        v.push_back(x);
    }
    if (v.empty()) throw std::invalid_argument("empty list");
    return v;
}

static void set_key(RunConfig& c, const std::string& k, const std::string& v) {
    if (k == "gate") c.gate = v;
    else if (k == "alpha_sq") c.alpha_sq = parse_list(v);
    else if (k == "order") c.order = std::stoi(v);
    else if (k == "model") c.model = v;
    else if (k == "out") c.out = v;
    else if (k == "n_trunc") c.n_trunc = std::stoi(v);
    else if (k == "dt_scale") c.dt_scale = std::stod(v);
    else if (k == "fit_min_alpha_sq") c.fit_min_alpha_sq = std::stod(v);
    else if (k == "jobs") c.jobs = std::stoi(v);
    else if (k == "kappa2") c.kappa2 = std::stod(v);
    else if (k == "kappa1_over_kappa2") c.kappa1_over_kappa2 = std::stod(v);
    else if (k == "drive") c.drive = std::stod(v);
    else if (k == "t_gate") c.t_gate = std::stod(v);
    else if (k == "cache_dir") c.cache_dir = v;
    else if (k == "leakage_samples") c.leakage_samples = std::stoi(v);
    else if (k == "inv_tol") c.inv_tol = std::stod(v);
    else if (k == "steady_tol") c.steady_tol = std::stod(v);
    else if (k == "duality_tol") c.duality_tol = std::stod(v);
    else if (k == "series_tol") c.series_tol = std::stod(v);
    else if (k == "rzero_tol") c.rzero_tol = std::stod(v);
    else throw std::invalid_argument("unknown config key '" + k + "'");
}

static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// sections keyed by gate name; "" holds the keys before the first section
static std::map<std::string, std::vector<std::pair<std::string, std::string>>>
read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key = value");
        sections[section].emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return sections;
}

static std::string canonical_config(const RunConfig& c) {
    std::string a;
    for (size_t i = 0; i < c.alpha_sq.size(); ++i)
        a += (i ? "," : "") + fm(c.alpha_sq[i]);
    std::string s;
    s += "gate=" + c.gate + "\n";
    s += "alpha_sq=" + a + "\n";
    s += "order=" + std::to_string(c.order) + "\n";
    s += "model=" + c.model + "\n";
    s += "n_trunc=" + std::to_string(c.n_trunc) + "\n";
    s += "dt_scale=" + fm(c.dt_scale) + "\n";
    s += "fit_min_alpha_sq=" + fm(c.fit_min_alpha_sq) + "\n";
    s += "kappa2=" + fm(c.kappa2) + "\n";
    s += "kappa1_over_kappa2=" + fm(c.kappa1_over_kappa2) + "\n";
    s += "drive=" + fm(c.drive) + "\n";
    s += "t_gate=" + fm(c.t_gate) + "\n";
    s += "leakage_samples=" + std::to_string(c.leakage_samples) + "\n";
    s += "inv_tol=" + fm(c.inv_tol) + "\n";
    s += "steady_tol=" + fm(c.steady_tol) + "\n";
    s += "duality_tol=" + fm(c.duality_tol) + "\n";
    s += "series_tol=" + fm(c.series_tol) + "\n";
    s += "rzero_tol=" + fm(c.rzero_tol) + "\n";
    return s;
}

static std::string config_hash(const RunConfig& c) {
    std::string s = canonical_config(c);
    uint64_t h = fnv1a(s.data(), s.size());
    char b[17];
    std::snprintf(b, sizeof b, "%016llx", (unsigned long long)h);
    return b;
}

// ---- per-alpha execution ----------------------------------------------------

struct AlphaResult {
    double alpha_sq = 0;
    GateSystem sys;
    bool has_red = false, has_full = false, has_f = false, has_leak = false;
    RMat g_red, g_full, e, f;
    std::vector<RMat> f_orders;  // single-mode gates: contribution per order
    LdChi chi;
    PauliErrors errors;
    LeakageCurve leak;
    double leak_final = std::nan("");
    double prop_err = std::nan("");
    std::map<std::string, double> analytic;
    double runtime_s = 0;
    std::string error, stage;
};

static GateOptions make_options(const RunConfig& cfg) {
    GateOptions opt;
    opt.order = cfg.order;
    opt.cache_dir = cfg.cache_dir;
    if (cfg.inv_tol > 0) opt.inv.tol = cfg.inv_tol;
    if (cfg.steady_tol > 0) opt.inv.steady_tol = cfg.steady_tol;
    if (cfg.duality_tol > 0) opt.inv.duality_tol = cfg.duality_tol;
    if (cfg.series_tol > 0) opt.series.tol = cfg.series_tol;
    if (cfg.rzero_tol > 0) opt.rz.tol = cfg.rzero_tol;
    return opt;
}

static void run_alpha(const RunConfig& cfg, AlphaResult& r) {
    auto t0 = std::chrono::steady_clock::now();
    try {
        r.stage = "build";
        GateConfig gc;
        gc.name = cfg.gate;
        gc.alpha_sq = r.alpha_sq;
        gc.kappa2 = cfg.kappa2;
        gc.kappa1_over_kappa2 = cfg.kappa1_over_kappa2;
        gc.drive = cfg.drive;
        gc.t_gate = cfg.t_gate;
        gc.n_trunc = cfg.n_trunc;
        gc.dt_scale = cfg.dt_scale;
        r.sys = build_gate(gc);
        r.analytic = analytic_errors(r.sys);
        GateOptions opt = make_options(cfg);

        std::vector<StabilizedMode> modes;
        GateReduction gr;
        if (cfg.model != "full") {
            r.stage = "reduce";
            gr = reduce_gate(r.sys, opt);
            r.g_red = gr.g;
            r.has_red = true;
            if (!gr.hybrid) {
                r.f = gr.f;
                r.has_f = true;
                if (r.sys.qubits == 1) r.f_orders = gr.red.F;
            }
            modes = gr.modes;
        } else {
            r.stage = "stabilize";
            modes = stabilize_gate_modes(r.sys, opt.inv, opt.cache_dir);
        }

        if (cfg.model != "reduced") {
            r.stage = "full";
            r.g_full = full_gate_propagator(r.sys, modes);
            r.has_full = true;
        }
        if (r.has_red && r.has_full) r.prop_err = propagator_error(r.g_red, r.g_full);

        r.stage = "tomography";
        GateTomography tom = gate_tomography(r.sys, r.has_red ? r.g_red : r.g_full);
        r.e = tom.e;
        r.chi = tom.chi;
        r.errors = tom.errors;

        if (r.has_red && !gr.hybrid) {
            r.stage = "leakage";
            std::vector<Mat> rho0;
            for (auto& m : modes) rho0.push_back(Mat(m.cat.cat_plus * m.cat.cat_plus.adjoint()));
            r.leak = gate_leakage_curve(gr, rho0, cfg.leakage_samples);
            r.has_leak = true;
            r.leak_final = r.leak.value.back();
        }
        r.stage = "";
    } catch (const std::exception& ex) {
        r.error = ex.what();
    }
    r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- artifact writers -------------------------------------------------------

static void write_file(const fs::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << body;
}

static std::string csv_header(const std::string& hash) {
    return std::string("# catred ") + kVersion + "\n# config " + hash + "\n";
}

static std::string meta_fields(const RunConfig& cfg, const std::string& hash) {
    return "\"version\":" + json_string(kVersion) + ",\"config\":" + json_string(hash) +
           ",\"gate\":" + json_string(cfg.gate);
}

static void write_artifacts(const RunConfig& cfg, const std::vector<AlphaResult>& rs) {
    fs::create_directories(cfg.out);
    std::string hash = config_hash(cfg);

    // pauli_errors.csv: fixed schema, Z-type columns from the gate arity
    std::vector<std::string> zlabels;
    for (auto& [k, v] : rs[0].errors.z_errors) zlabels.push_back(k);
    {
        std::string s = csv_header(hash);
        s += "alpha_sq,p_X_total,p_Y_total,p_bitflip_total";
        for (auto& z : zlabels) s += ",p_" + z;
        s += ",leakage_final,runtime_s\n";
        for (auto& r : rs) {
            s += fm(r.alpha_sq) + "," + fm((double)r.errors.x_total) + "," +
                 fm((double)r.errors.y_total) + "," + fm((double)r.errors.bitflip_total);
            for (auto& z : zlabels) s += "," + fm((double)r.errors.z_errors.at(z));
            s += "," + fm(r.leak_final) + "," + fm(r.runtime_s) + "\n";
        }
        write_file(fs::path(cfg.out) / "pauli_errors.csv", s);
    }

    for (auto& r : rs) {
        std::string tag = fg(r.alpha_sq);
        {
            std::string s = "{" + meta_fields(cfg, hash) + ",\"alpha_sq\":" + fm(r.alpha_sq);
            s += ",\"labels\":[";
            for (size_t i = 0; i < r.errors.labels.size(); ++i)
                s += (i ? "," : "") + json_string(r.errors.labels[i]);
            s += "],\"diag\":[";
            for (int i = 0; i < r.errors.diag.size(); ++i)
                s += (i ? "," : "") + fm(r.errors.diag(i));
            s += "],\"chi\":" + json_chi(r.chi) + "}\n";
            write_file(fs::path(cfg.out) / ("chi_" + tag + ".json"), s);
        }
        {
            std::string s = csv_header(hash) + "label,p\n";
            for (size_t i = 0; i < r.errors.labels.size(); ++i)
                s += r.errors.labels[i] + "," + fm(r.errors.diag((int)i)) + "\n";
            write_file(fs::path(cfg.out) / ("chi_" + tag + ".csv"), s);
        }
        {
            std::string s = csv_header(hash) + "t,leakage\n";
            if (r.has_leak)
                for (size_t i = 0; i < r.leak.t.size(); ++i)
                    s += fm(r.leak.t[i]) + "," + fm(r.leak.value[i]) + "\n";
            write_file(fs::path(cfg.out) / ("leakage_" + tag + ".csv"), s);
        }
        {
            std::string s = "{" + meta_fields(cfg, hash) + ",\"alpha_sq\":" + fm(r.alpha_sq);
            if (r.has_red) s += ",\"g_red\":" + json_rmat(r.g_red);
            if (r.has_full) s += ",\"g_full\":" + json_rmat(r.g_full);
            s += ",\"e\":" + json_rmat(r.e);
            if (r.has_f) s += ",\"f\":" + json_rmat(r.f);
            if (!r.f_orders.empty()) {
                s += ",\"f_orders\":[";
                for (size_t i = 0; i < r.f_orders.size(); ++i)
                    s += (i ? "," : "") + json_rmat(r.f_orders[i]);
                s += "]";
            }
            s += "}\n";
            write_file(fs::path(cfg.out) / ("fmatrices_" + tag + ".json"), s);
        }
    }

    // summary.json; runtime lives only in the CSV so this file is byte stable
    std::string s = "{" + meta_fields(cfg, hash);
    s += ",\"order\":" + std::to_string(cfg.order) + ",\"model\":" + json_string(cfg.model);
    s += ",\"fit_min_alpha_sq\":" + fm(cfg.fit_min_alpha_sq) + ",\"results\":[";
    for (size_t i = 0; i < rs.size(); ++i) {
        auto& r = rs[i];
        s += i ? ",{" : "{";
        s += "\"alpha_sq\":" + fm(r.alpha_sq);
        s += ",\"n_trunc\":" + std::to_string(r.sys.cfg.n_trunc);
        s += ",\"drive\":" + fm(r.sys.cfg.drive);
        s += ",\"t_gate\":" + fm(r.sys.t_gate);
        s += ",\"dt\":" + fm(r.sys.dt);
        s += ",\"chi11\":" + fm((double)r.chi(0, 0).real());
        s += ",\"p_X_total\":" + fm((double)r.errors.x_total);
        s += ",\"p_Y_total\":" + fm((double)r.errors.y_total);
        s += ",\"p_bitflip_total\":" + fm((double)r.errors.bitflip_total);
        s += ",\"z_errors\":{";
        bool first = true;
        for (auto& [k, v] : r.errors.z_errors) {
            s += (first ? "" : ",") + json_string(k) + ":" + fm((double)v);
            first = false;
        }
        s += "},\"leakage_final\":" + fm(r.leak_final);
        if (r.has_red && r.has_full) s += ",\"propagator_error\":" + fm(r.prop_err);
        s += ",\"analytic\":{";
        first = true;
        for (auto& [k, v] : r.analytic) {
            s += (first ? "" : ",") + json_string(k) + ":" + fm(v);
            first = false;
        }
        s += "}}";
    }
    s += "],\"fit\":";
    std::vector<std::pair<double, double>> pts;
    for (auto& r : rs)
        if (r.alpha_sq >= cfg.fit_min_alpha_sq && r.errors.bitflip_total > 0)
            pts.emplace_back(r.alpha_sq, (double)r.errors.bitflip_total);
    if (pts.size() >= 3) {
        FitResult fit = fit_bitflip_suppression(pts);
        s += "{\"a\":" + fm(fit.a) + ",\"sigma_a\":" + fm(fit.sigma_a) +
             ",\"intercept\":" + fm(fit.intercept) +
             ",\"points\":" + std::to_string(pts.size()) + "}";
    } else {
        s += "null";
    }
    s += "}\n";
    write_file(fs::path(cfg.out) / "summary.json", s);
}

// ---- run subcommand ---------------------------------------------------------

static int cmd_run(const RunConfig& cfg) {
    if (cfg.model != "reduced" && cfg.model != "full" && cfg.model != "both") {
        std::fprintf(stderr, "catred: model must be reduced, full, or both\n");
        return 1;
    }
    if (cfg.alpha_sq.empty() || cfg.jobs < 1) {
        std::fprintf(stderr, "catred: need at least one alpha_sq and jobs >= 1\n");
        return 1;
    }

    // resource guard: the full model over three factors is only allowed at
    // small truncation; resolve the per-factor dimension before any real work
    if (cfg.model != "reduced") {
        for (double a2 : cfg.alpha_sq) {
            GateConfig gc;
            gc.name = cfg.gate;
            gc.alpha_sq = a2;
            gc.kappa2 = cfg.kappa2;
            gc.kappa1_over_kappa2 = cfg.kappa1_over_kappa2;
            gc.drive = cfg.drive;
            gc.t_gate = cfg.t_gate;
            gc.n_trunc = cfg.n_trunc;
            gc.dt_scale = cfg.dt_scale;
            GateSystem gs = build_gate(gc);
            if (gs.qubits >= 3 && gs.shape.dims[0] > 16) {
                std::fprintf(stderr,
                             "catred: gate=%s alpha_sq=%s: full model over %d factors "
                             "requires n_trunc <= 16 per factor (got %d)\n",
                             cfg.gate.c_str(), fg(a2).c_str(), gs.qubits, gs.shape.dims[0]);
                return 1;
            }
        }
    }

    std::vector<AlphaResult> rs(cfg.alpha_sq.size());
    for (size_t i = 0; i < rs.size(); ++i) rs[i].alpha_sq = cfg.alpha_sq[i];

    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < rs.size(); i = next.fetch_add(1))
            run_alpha(cfg, rs[i]);
    };
    int nthreads = std::min<int>(cfg.jobs, (int)rs.size());
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    bool failed = false;
    for (auto& r : rs)
        if (!r.error.empty()) {
            std::fprintf(stderr, "catred: gate=%s alpha_sq=%s stage=%s: %s\n", cfg.gate.c_str(),
                         fg(r.alpha_sq).c_str(), r.stage.c_str(), r.error.c_str());
            failed = true;
        }
    if (failed) return 1;

    write_artifacts(cfg, rs);
    std::printf("catred: wrote %zu result(s) to %s (config %s)\n", rs.size(), cfg.out.c_str(),
                config_hash(cfg).c_str());
    return 0;
}

// ---- compare subcommand -----------------------------------------------------

struct DiffReport {
    double max_diff = 0;
    int entries = 0;
    bool missing = false;

    void add(double a, double b) {
        ++entries;
        if (std::isnan(a) && std::isnan(b)) return;
        max_diff = std::max(max_diff, std::abs(a - b));
    }
};

static void diff_json_numbers(const json& a, const json& b, DiffReport& d) {
    if (a.is_number() && b.is_number()) {
        d.add(a.get<double>(), b.get<double>());
    } else if (a.is_array() && b.is_array() && a.size() == b.size()) {
        for (size_t i = 0; i < a.size(); ++i) diff_json_numbers(a[i], b[i], d);
    } else if (a != b) {
        d.missing = true;
    }
}

static bool load_json(const fs::path& p, json& j) {
    std::ifstream in(p);
    if (!in) return false;
    in >> j;
    return true;
}

// numeric CSV rows after the header lines; runtime_s (a wall-clock
// measurement) is identified by name and skipped
static bool diff_csv(const fs::path& pa, const fs::path& pb, DiffReport& d) {
    std::ifstream fa(pa), fb(pb);
    if (!fa || !fb) return false;
    std::string la, lb;
    std::vector<int> skip_cols;
    bool header_seen = false;
    while (true) {
        bool ga = (bool)std::getline(fa, la), gb = (bool)std::getline(fb, lb);
        if (!ga && !gb) break;
        if (ga != gb) {
            d.missing = true;
            break;
        }
        if (la.empty() || la[0] == '#') continue;
        std::stringstream sa(la), sb(lb);
        std::string ca, cb;
        int col = 0;
        while (std::getline(sa, ca, ',')) {
            if (!std::getline(sb, cb, ',')) {
                d.missing = true;
                break;
            }
            if (!header_seen) {
                if (ca == "runtime_s") skip_cols.push_back(col);
            } else if (std::find(skip_cols.begin(), skip_cols.end(), col) == skip_cols.end()) {
                char* ea = nullptr;
                char* eb = nullptr;
                double va = std::strtod(ca.c_str(), &ea);
                double vb = std::strtod(cb.c_str(), &eb);
                if (ea == ca.c_str() || eb == cb.c_str()) {
                    if (ca != cb) d.missing = true;  // non-numeric cells must match
                } else {
                    d.add(va, vb);
                }
            }
            ++col;
        }
        header_seen = true;
    }
    return true;
}

static int cmd_compare(const std::string& dir_a, const std::string& dir_b) {
    // the comparable artifacts of a run directory, by stable name
    std::vector<std::string> names;
    for (auto& e : fs::directory_iterator(dir_a)) {
        std::string n = e.path().filename().string();
        if (n == "pauli_errors.csv" || n.rfind("chi_", 0) == 0 || n.rfind("fmatrices_", 0) == 0 ||
            n.rfind("leakage_", 0) == 0)
            names.push_back(n);
    }
    std::sort(names.begin(), names.end());
    if (names.empty()) {
        std::fprintf(stderr, "catred: no artifacts found in %s\n", dir_a.c_str());
        return 2;
    }

    double overall = 0;
    bool error = false;
    for (auto& n : names) {
        fs::path pa = fs::path(dir_a) / n, pb = fs::path(dir_b) / n;
        if (!fs::exists(pb)) {
            std::fprintf(stderr, "catred: missing file %s\n", pb.string().c_str());
            error = true;
            continue;
        }
        DiffReport d;
        if (n.size() > 4 && n.substr(n.size() - 5) == ".json") {
            json a, b;
            if (!load_json(pa, a) || !load_json(pb, b)) {
                error = true;
                continue;
            }
            for (auto& key : {"chi", "diag", "g_red", "g_full", "e", "f", "f_orders"}) {
                bool ina = a.contains(key), inb = b.contains(key);
                if (ina != inb) d.missing = true;
                if (ina && inb) diff_json_numbers(a[key], b[key], d);
            }
        } else {
            if (!diff_csv(pa, pb, d)) {
                error = true;
                continue;
            }
        }
        if (d.missing) {
            std::fprintf(stderr, "catred: %s: structure differs between runs\n", n.c_str());
            error = true;
            continue;
        }
        std::printf("%s: max_abs_diff %s over %d entries\n", n.c_str(), fm(d.max_diff).c_str(),
                    d.entries);
        overall = std::max(overall, d.max_diff);
    }
    if (error) return 2;
    std::printf("overall: max_abs_diff %s\n", fm(overall).c_str());
    return 0;
}

// ---- entry point ------------------------------------------------------------

int main(int argc, char** argv) {
    CLI::App app{"catred: reduced-model cat-qubit gate batch driver"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run gate experiments from a config");
    std::string config_path;
    run->add_option("config", config_path, "key = value config file with per-gate sections");
    std::string f_gate, f_model, f_out;
    std::vector<double> f_alpha;
    int f_order = 0, f_ntrunc = 0, f_jobs = 0;
    double f_dt_scale = 0, f_fit_min = 0;
    run->add_option("--gate", f_gate, "gate name: Z, ZZ, ZZZ, CNOT, CCNOT");
    run->add_option("--alpha-sq", f_alpha, "alpha^2 values")->delimiter(',');
    run->add_option("--order", f_order, "expansion order");
    run->add_option("--model", f_model, "reduced, full, or both");
    run->add_option("--out", f_out, "output directory");
    run->add_option("--n-trunc", f_ntrunc, "per-mode Fock truncation");
    run->add_option("--dt-scale", f_dt_scale, "multiplier on the default time step");
    run->add_option("--fit-min-alpha-sq", f_fit_min, "smallest alpha^2 included in the fit");
    run->add_option("--jobs", f_jobs, "parallel workers across alpha values");

    auto* cmp = app.add_subcommand("compare", "entrywise diff of two artifact directories");
    std::string dir_a, dir_b;
    cmp->add_option("dir_a", dir_a)->required();
    cmp->add_option("dir_b", dir_b)->required();

    CLI11_PARSE(app, argc, argv);

    if (cmp->parsed()) return cmd_compare(dir_a, dir_b);

    try {
        RunConfig cfg;
        std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
        if (!config_path.empty()) sections = read_config_file(config_path);
        for (auto& [k, v] : sections[""]) set_key(cfg, k, v);
        if (run->count("--gate")) cfg.gate = f_gate;
        auto sec = sections.find(cfg.gate);
        if (sec != sections.end())
            for (auto& [k, v] : sec->second) set_key(cfg, k, v);
        if (run->count("--gate")) cfg.gate = f_gate;
        if (run->count("--alpha-sq")) cfg.alpha_sq = f_alpha;
        if (run->count("--order")) cfg.order = f_order;
        if (run->count("--model")) cfg.model = f_model;
        if (run->count("--out")) cfg.out = f_out;
        if (run->count("--n-trunc")) cfg.n_trunc = f_ntrunc;
        if (run->count("--dt-scale")) cfg.dt_scale = f_dt_scale;
        if (run->count("--fit-min-alpha-sq")) cfg.fit_min_alpha_sq = f_fit_min;
        if (run->count("--jobs")) cfg.jobs = f_jobs;
        return cmd_run(cfg);
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "catred: %s\n", ex.what());
        return 1;
    }
}
