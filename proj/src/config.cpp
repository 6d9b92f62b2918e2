#include "evapsim/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "evapsim/constants.hpp"
#include "json.hpp"

namespace evapsim {

using nlohmann::json;

namespace {

// ---- unit families ---------------------------------------------------------
// A dimensioned quantity is written as <base>_<suffix>, e.g. "T_nK" or
// "lambda_cm".  Exactly one suffix of the matching family must be present.

struct Unit {
    const char* suffix;
    double factor;
};

struct UnitFamily {
    const char* what;
    std::vector<Unit> units;
};

const UnitFamily FAM_TEMPERATURE{"temperature", {{"_nK", 1e-9}, {"_uK", 1e-6}, {"_mK", 1e-3}, {"_K", 1.0}}};
const UnitFamily FAM_LENGTH{"length", {{"_nm", 1e-9}, {"_um", 1e-6}, {"_cm", 1e-2}, {"_m", 1.0}}};
const UnitFamily FAM_AREA{"area", {{"_cm2", 1e-4}, {"_m2", 1.0}}};
const UnitFamily FAM_VOLUME{"volume", {{"_cm3", 1e-6}, {"_m3", 1.0}}};
const UnitFamily FAM_FREQUENCY{"frequency", {{"_Hz", 1.0}, {"_kHz", 1e3}, {"_MHz", 1e6}}};
const UnitFamily FAM_TIME{"time", {{"_us", 1e-6}, {"_ms", 1e-3}, {"_s", 1.0}}};
const UnitFamily FAM_MASS{"mass", {{"_amu", 1.66053906660e-27}, {"_kg", 1.0}}};

// Line number of the first occurrence of a quoted key in the raw config text,
// or 0 when it cannot be located (e.g. key synthesized by the parser).
int line_of_key(const std::string& raw, const std::string& key) {
    const std::string needle = "\"" + key + "\"";
    const auto pos = raw.find(needle);
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(raw.begin(), raw.begin() + static_cast<long>(pos), '\n'));
}

[[noreturn]] void fail(const std::string& raw, const std::string& key, const std::string& msg) {
    const int ln = line_of_key(raw, key);
    std::ostringstream os;
    os << "config error: " << msg;
    if (ln > 0) os << " (line " << ln << ")";
    throw ConfigError(os.str());
}

// Reads keys out of one JSON object, remembering which were consumed so that
// finish() can reject unknown keys (and misspelled unit suffixes) with the
// line they appear on.
class KeyReader {
  public:
    KeyReader(const json& j, const std::string& raw, std::string scope)
        : j_(j), raw_(raw), scope_(std::move(scope)) {
        if (!j_.is_object()) fail(raw_, scope_, "'" + scope_ + "' must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    std::string text(const std::string& key) {
        require(key);
        return text(key, "");
    }
    std::string text(const std::string& key, const std::string& def) {
        if (!j_.contains(key)) return def;
        used_.insert(key);
        const json& v = j_.at(key);
        if (!v.is_string()) fail(raw_, key, "'" + qual(key) + "' must be a string");
        return v.get<std::string>();
    }

    double number(const std::string& key) {
        require(key);
        return number(key, 0.0);
    }
    double number(const std::string& key, double def) {
        if (!j_.contains(key)) return def;
        used_.insert(key);
        const json& v = j_.at(key);
        if (!v.is_number()) fail(raw_, key, "'" + qual(key) + "' must be a number");
        return v.get<double>();
    }

    long long integer(const std::string& key) {
        require(key);
        return integer(key, 0);
    }
    long long integer(const std::string& key, long long def) {
        if (!j_.contains(key)) return def;
        used_.insert(key);
        const json& v = j_.at(key);
        if (!v.is_number_integer()) fail(raw_, key, "'" + qual(key) + "' must be an integer");
        return v.get<long long>();
    }

    bool flag(const std::string& key, bool def) {
        if (!j_.contains(key)) return def;
        used_.insert(key);
        const json& v = j_.at(key);
        if (!v.is_boolean()) fail(raw_, key, "'" + qual(key) + "' must be true or false");
        return v.get<bool>();
    }

    std::vector<double> number_list(const std::string& key) {
        std::vector<double> out;
        if (!j_.contains(key)) return out;
        used_.insert(key);
        const json& v = j_.at(key);
        if (!v.is_array()) fail(raw_, key, "'" + qual(key) + "' must be an array of numbers");
        for (const auto& e : v) {
            if (!e.is_number()) fail(raw_, key, "'" + qual(key) + "' must contain only numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::vector<long long> integer_list(const std::string& key) {
        std::vector<long long> out;
        if (!j_.contains(key)) return out;
        used_.insert(key);
        const json& v = j_.at(key);
        if (!v.is_array()) fail(raw_, key, "'" + qual(key) + "' must be an array of integers");
        for (const auto& e : v) {
            if (!e.is_number_integer()) fail(raw_, key, "'" + qual(key) + "' must contain only integers");
            out.push_back(e.get<long long>());
        }
        return out;
    }

    std::vector<std::string> text_list(const std::string& key) {
        std::vector<std::string> out;
        if (!j_.contains(key)) return out;
        used_.insert(key);
        const json& v = j_.at(key);
        if (!v.is_array()) fail(raw_, key, "'" + qual(key) + "' must be an array of strings");
        for (const auto& e : v) {
            if (!e.is_string()) fail(raw_, key, "'" + qual(key) + "' must contain only strings");
            out.push_back(e.get<std::string>());
        }
        return out;
    }

    const json* object(const std::string& key) {
        if (!j_.contains(key)) return nullptr;
        used_.insert(key);
        const json& v = j_.at(key);
        if (!v.is_object()) fail(raw_, key, "'" + qual(key) + "' must be an object");
        return &v;
    }

    const json* array(const std::string& key) {
        if (!j_.contains(key)) return nullptr;
        used_.insert(key);
        const json& v = j_.at(key);
        if (!v.is_array()) fail(raw_, key, "'" + qual(key) + "' must be an array");
        return &v;
    }

    // A unit-suffixed quantity; returns the value converted to SI.
    bool quantity(const std::string& base, const UnitFamily& fam, double* out) {
        bases_.emplace_back(base, &fam);
        std::vector<std::string> found;
        double value = 0.0;
        for (const auto& u : fam.units) {
            const std::string key = base + u.suffix;
            if (!j_.contains(key)) continue;
            used_.insert(key);
            const json& v = j_.at(key);
            if (!v.is_number()) fail(raw_, key, "'" + qual(key) + "' must be a number");
            value = v.get<double>() * u.factor;
            found.push_back(key);
        }
        if (found.empty()) return false;
        if (found.size() > 1) {
            fail(raw_, found[1],
                 "give '" + qual(base) + "' with exactly one " + std::string(fam.what) + " suffix, not both '" +
                     found[0] + "' and '" + found[1] + "'");
        }
        *out = value;
        return true;
    }

    double quantity_required(const std::string& base, const UnitFamily& fam) {
        double v = 0.0;
        if (!quantity(base, fam, &v)) {
            std::string opts;
            for (const auto& u : fam.units) {
                if (!opts.empty()) opts += ", ";
                opts += base + u.suffix;
            }
            fail(raw_, scope_, "missing required " + std::string(fam.what) + " key '" + qual(base) + "' (one of: " + opts + ")");
        }
        return v;
    }

    double quantity_or(const std::string& base, const UnitFamily& fam, double def_si) {
        double v = def_si;
        quantity(base, fam, &v);
        return v;
    }

    // Rejects leftover keys.  A key whose stem matches a dimensioned base
    // consumed above gets a unit-suffix diagnostic instead of a generic one.
    void finish() {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            const std::string& key = it.key();
            if (used_.count(key)) continue;
            for (const auto& [base, fam] : bases_) {
                if (key.size() > base.size() && key.compare(0, base.size(), base) == 0 && key[base.size()] == '_') {
                    std::string opts;
                    for (const auto& u : fam->units) {
                        if (!opts.empty()) opts += ", ";
                        opts += base + u.suffix;
                    }
                    fail(raw_, key,
                         "unsupported unit suffix '" + key.substr(base.size()) + "' on '" + qual(base) +
                             "' (expected one of: " + opts + ")");
                }
            }
            fail(raw_, key, "unknown key '" + qual(key) + "'");
        }
    }

  private:
    void require(const std::string& key) const {
        if (!j_.contains(key)) fail(raw_, scope_, "missing required key '" + qual(key) + "'");
    }
    std::string qual(const std::string& key) const { return scope_.empty() ? key : scope_ + "." + key; }

    const json& j_;
    const std::string& raw_;
    std::string scope_;
    std::set<std::string> used_;
    std::vector<std::pair<std::string, const UnitFamily*>> bases_;
};

// ---- per-kind section parsers ----------------------------------------------

TrapPotential parse_trap(KeyReader& top, const std::string& raw, int* dim_out) {
    const json* tj = top.object("trap");
    if (!tj) fail(raw, "trap", "missing required object 'trap'");
    KeyReader r(*tj, raw, "trap");
    const long long dim = r.integer("dim", 2);
    if (dim != 2 && dim != 3) fail(raw, "dim", "'trap.dim' must be 2 or 3");
    const double nx = r.quantity_required("nu_x", FAM_FREQUENCY);
    const double ny = r.quantity_required("nu_y", FAM_FREQUENCY);
    if (nx <= 0.0 || ny <= 0.0) fail(raw, "trap", "trap frequencies must be positive");
    TrapPotential trap;
    if (dim == 3) {
        const double nz = r.quantity_required("nu_z", FAM_FREQUENCY);
        if (nz <= 0.0) fail(raw, "trap", "trap frequencies must be positive");
        trap = TrapPotential::harmonic3d(2.0 * M_PI * nx, 2.0 * M_PI * ny, 2.0 * M_PI * nz);
    } else {
        trap = TrapPotential::harmonic2d(2.0 * M_PI * nx, 2.0 * M_PI * ny);
    }
    r.finish();
    if (dim_out) *dim_out = static_cast<int>(dim);
    return trap;
}

double parse_mass(KeyReader& r) { return r.quantity_or("mass", FAM_MASS, mass_KRb); }

// Cross section key: "lambda_*" (length) in 2D, "sigma_*" (area) in 3D.
double parse_cross_section(KeyReader& r, const std::string& raw, int dim, bool required, bool* present) {
    double v = 0.0;
    bool ok = false;
    if (dim == 2) {
        ok = r.quantity("lambda", FAM_LENGTH, &v);
    } else {
        ok = r.quantity("sigma", FAM_AREA, &v);
    }
    if (present) *present = ok;
    if (!ok && required) {
        fail(raw, "experiment",
             dim == 2 ? "missing required length key 'lambda' (one of: lambda_nm, lambda_um, lambda_cm, lambda_m)"
                      : "missing required area key 'sigma' (one of: sigma_cm2, sigma_m2)");
    }
    if (ok && v <= 0.0) fail(raw, dim == 2 ? "lambda" : "sigma", "cross section must be positive");
    return v;
}

void parse_thermalization(KeyReader& r, const std::string& raw, ExperimentSpec& spec, bool want_law) {
    int dim = 2;
    spec.thermal.trap = parse_trap(r, raw, &dim);
    spec.thermal.mass = parse_mass(r);
    const long long n0 = r.integer("N0");
    if (n0 < 2 || n0 > 100000000LL) fail(raw, "N0", "'N0' must be an integer in [2, 1e8]");
    spec.thermal.N = static_cast<std::size_t>(n0);
    spec.thermal.T = r.quantity_required("T", FAM_TEMPERATURE);
    if (spec.thermal.T <= 0.0) fail(raw, "T", "'T' must be positive");
    spec.thermal.xi = r.number("xi", 0.1);
    if (!(spec.thermal.xi > 0.0) || spec.thermal.xi >= 1.0) fail(raw, "xi", "'xi' must lie in (0, 1)");
    if (want_law) spec.thermal.law = angular_law_by_name(r.text("law", "isotropic"));
    spec.thermal.lambda = parse_cross_section(r, raw, dim, true, nullptr);
    spec.thermal_repeats = static_cast<int>(r.integer("repeats", 8));
    if (spec.thermal_repeats < 1 || spec.thermal_repeats > 4096) fail(raw, "repeats", "'repeats' must lie in [1, 4096]");
    spec.thermal.dt_frac = r.number("dt_frac", 2e-3);
    if (!(spec.thermal.dt_frac > 0.0) || spec.thermal.dt_frac > 0.1) fail(raw, "dt_frac", "'dt_frac' must lie in (0, 0.1]");
    spec.thermal.n_decay = r.number("n_decay", 3.0);
    if (!(spec.thermal.n_decay > 0.0)) fail(raw, "n_decay", "'n_decay' must be positive");
    spec.thermal.record_stride = static_cast<int>(r.integer("record_stride", 8));
    if (spec.thermal.record_stride < 1) fail(raw, "record_stride", "'record_stride' must be >= 1");
}

void parse_evaporation(KeyReader& r, const std::string& raw, ExperimentSpec& spec, bool want_eta, bool want_law) {
    int dim = 2;
    spec.evap.trap = parse_trap(r, raw, &dim);
    spec.evap.mass = parse_mass(r);
    const long long n0 = r.integer("N0");
    if (n0 < 2 || n0 > 100000000LL) fail(raw, "N0", "'N0' must be an integer in [2, 1e8]");
    spec.evap.N0 = static_cast<std::size_t>(n0);
    spec.evap.T0 = r.quantity_required("T", FAM_TEMPERATURE);
    if (spec.evap.T0 <= 0.0) fail(raw, "T", "'T' must be positive");
    if (want_eta) {
        spec.evap.eta = r.number("eta");
        if (!(spec.evap.eta > 1.0)) fail(raw, "eta", "'eta' must exceed 1");
    }
    if (want_law) spec.evap.law = angular_law_by_name(r.text("law", "isotropic"));
    bool have_lambda = false;
    const double lam = parse_cross_section(r, raw, dim, false, &have_lambda);
    const bool builtin = r.flag("use_builtin_table", !have_lambda);
    if (builtin && have_lambda)
        fail(raw, "use_builtin_table", "'use_builtin_table' cannot be combined with an explicit cross section");
    if (builtin && dim == 3)
        fail(raw, "use_builtin_table", "the built-in cross-section table is two-dimensional");
    spec.evap.use_builtin_table = builtin;
    spec.evap.lambda = have_lambda ? lam : 0.0;
    spec.evap.zeta = r.number("zeta", 1.0 / 200.0);
    if (spec.evap.zeta < 0.0) fail(raw, "zeta", "'zeta' must be >= 0");
    spec.evap.reactive_power_law = r.flag("reactive_power_law", false);
    const double eref = r.quantity_or("E_ref", FAM_TEMPERATURE, 0.0);
    if (eref < 0.0) fail(raw, "E_ref", "'E_ref' must be positive");
    spec.evap.E_ref = eref > 0.0 ? k_B * eref : 0.0;
    spec.evap.stop_frac = r.number("stop_frac", 0.1);
    if (!(spec.evap.stop_frac > 0.0) || spec.evap.stop_frac >= 1.0) fail(raw, "stop_frac", "'stop_frac' must lie in (0, 1)");
    spec.evap.t_max = r.quantity_or("t_max", FAM_TIME, 0.0);
    if (spec.evap.t_max < 0.0) fail(raw, "t_max", "'t_max' must be >= 0");
    spec.evap.dt_frac = r.number("dt_frac", 3e-3);
    if (!(spec.evap.dt_frac > 0.0) || spec.evap.dt_frac > 0.1) fail(raw, "dt_frac", "'dt_frac' must lie in (0, 0.1]");
    spec.evap.record_stride = static_cast<int>(r.integer("record_stride", 16));
    if (spec.evap.record_stride < 1) fail(raw, "record_stride", "'record_stride' must be >= 1");
    spec.evap.alpha_3d = r.number("alpha_3d", 0.0);
    if (spec.evap.alpha_3d < 0.0) fail(raw, "alpha_3d", "'alpha_3d' must be >= 0");
}

void parse_tb(KeyReader& r, const std::string& raw, ExperimentSpec& spec, bool want_eta) {
    const json* tj = r.object("trap");
    if (!tj) fail(raw, "trap", "missing required object 'trap'");
    KeyReader tr(*tj, raw, "trap");
    const long long dim = tr.integer("dim", 2);
    if (dim != 2 && dim != 3) fail(raw, "dim", "'trap.dim' must be 2 or 3");
    spec.tb.dim = static_cast<int>(dim);
    spec.tb.omega[0] = 2.0 * M_PI * tr.quantity_required("nu_x", FAM_FREQUENCY);
    spec.tb.omega[1] = 2.0 * M_PI * tr.quantity_required("nu_y", FAM_FREQUENCY);
    // nu_z may be given even when the base dim is 2: a sweep that also runs
    // three-dimensional children needs the axial frequency.
    double nz = 0.0;
    const bool have_nz = tr.quantity("nu_z", FAM_FREQUENCY, &nz);
    if (dim == 3 && !have_nz) fail(raw, "trap", "three-dimensional kinetics needs 'trap.nu_z'");
    spec.tb.omega[2] = 2.0 * M_PI * nz;
    if (spec.tb.omega[0] <= 0.0 || spec.tb.omega[1] <= 0.0 || (have_nz && nz <= 0.0))
        fail(raw, "trap", "trap frequencies must be positive");
    tr.finish();
    spec.tb.mass = parse_mass(r);
    spec.tb_N0 = r.number("N0");
    if (!(spec.tb_N0 >= 2.0)) fail(raw, "N0", "'N0' must be >= 2");
    spec.tb_T0 = r.quantity_required("T", FAM_TEMPERATURE);
    if (spec.tb_T0 <= 0.0) fail(raw, "T", "'T' must be positive");
    // 2D kinetics uses a length 'lambda', 3D an area 'sigma'; a dim-mixed
    // sweep may give both.
    double lam2 = 0.0, sig3 = 0.0;
    const bool have2 = r.quantity("lambda", FAM_LENGTH, &lam2);
    const bool have3 = r.quantity("sigma", FAM_AREA, &sig3);
    if (have2 && lam2 <= 0.0) fail(raw, "lambda", "cross section must be positive");
    if (have3 && sig3 <= 0.0) fail(raw, "sigma", "cross section must be positive");
    if (dim == 2 && !have2)
        fail(raw, "experiment", "missing required length key 'lambda' (one of: lambda_nm, lambda_um, lambda_cm, lambda_m)");
    if (dim == 3 && !have3) fail(raw, "experiment", "missing required area key 'sigma' (one of: sigma_cm2, sigma_m2)");
    spec.tb.lambda = dim == 2 ? lam2 : sig3;
    spec.tb_lambda2 = lam2;
    spec.tb_sigma3 = sig3;
    spec.tb.zeta = r.number("zeta", 1.0 / 200.0);
    if (spec.tb.zeta < 0.0) fail(raw, "zeta", "'zeta' must be >= 0");
    if (want_eta) {
        spec.tb.eta = r.number("eta");
        if (!(spec.tb.eta > 1.0)) fail(raw, "eta", "'eta' must exceed 1");
    }
    spec.tb_stop_frac = r.number("stop_frac", 0.1);
    if (!(spec.tb_stop_frac > 0.0) || spec.tb_stop_frac >= 1.0) fail(raw, "stop_frac", "'stop_frac' must lie in (0, 1)");
    spec.tb.dt = r.quantity_or("dt", FAM_TIME, 0.0);
    if (spec.tb.dt < 0.0) fail(raw, "dt", "'dt' must be >= 0");
    spec.tb.record_stride = static_cast<int>(r.integer("record_stride", 1));
    if (spec.tb.record_stride < 1) fail(raw, "record_stride", "'record_stride' must be >= 1");
}

void parse_antievap(KeyReader& r, const std::string& raw, ExperimentSpec& spec) {
    int dim = 2;
    spec.antievap.trap = parse_trap(r, raw, &dim);
    spec.antievap.mass = parse_mass(r);
    const long long n0 = r.integer("N0");
    if (n0 < 2 || n0 > 100000000LL) fail(raw, "N0", "'N0' must be an integer in [2, 1e8]");
    spec.antievap.N0 = static_cast<std::size_t>(n0);
    spec.antievap.T0 = r.quantity_required("T", FAM_TEMPERATURE);
    if (spec.antievap.T0 <= 0.0) fail(raw, "T", "'T' must be positive");
    double v = 0.0;
    const bool ok = dim == 2 ? r.quantity("lambda_re", FAM_LENGTH, &v) : r.quantity("sigma_re", FAM_AREA, &v);
    if (!ok)
        fail(raw, "experiment",
             dim == 2 ? "missing required length key 'lambda_re'" : "missing required area key 'sigma_re'");
    if (v <= 0.0) fail(raw, dim == 2 ? "lambda_re" : "sigma_re", "reactive cross section must be positive");
    spec.antievap.lambda_re_ref = v;
    const double eref = r.quantity_or("E_ref", FAM_TEMPERATURE, 0.0);
    if (eref < 0.0) fail(raw, "E_ref", "'E_ref' must be positive");
    spec.antievap.E_ref = eref > 0.0 ? k_B * eref : 0.0;
    spec.antievap.power_law = r.flag("power_law", true);
    spec.antievap.stop_frac = r.number("stop_frac", 0.5);
    if (!(spec.antievap.stop_frac > 0.0) || spec.antievap.stop_frac >= 1.0)
        fail(raw, "stop_frac", "'stop_frac' must lie in (0, 1)");
    spec.antievap.dt_frac = r.number("dt_frac", 3e-3);
    if (!(spec.antievap.dt_frac > 0.0) || spec.antievap.dt_frac > 0.1) fail(raw, "dt_frac", "'dt_frac' must lie in (0, 0.1]");
    spec.antievap.record_stride = static_cast<int>(r.integer("record_stride", 16));
    if (spec.antievap.record_stride < 1) fail(raw, "record_stride", "'record_stride' must be >= 1");
}

void parse_multiband(KeyReader& r, const std::string& raw, ExperimentSpec& spec) {
    const long long n0 = r.integer("N0");
    if (n0 < 2 || n0 > 10000000LL) fail(raw, "N0", "'N0' must be an integer in [2, 1e7]");
    spec.multiband.N0 = static_cast<std::size_t>(n0);
    spec.multiband.T0 = r.quantity_required("T", FAM_TEMPERATURE);
    if (spec.multiband.T0 <= 0.0) fail(raw, "T", "'T' must be positive");
    const double nr = r.quantity_required("nu_r", FAM_FREQUENCY);
    const double nz = r.quantity_required("nu_z", FAM_FREQUENCY);
    if (nr <= 0.0 || nz <= nr) fail(raw, "nu_z", "need 0 < nu_r < nu_z");
    spec.multiband.nu_r = nr;
    spec.multiband.nu_z = nz;
    spec.multiband.mass = parse_mass(r);
    double bp3 = 0.0;
    const bool have_bp3 = r.quantity("bp3", FAM_VOLUME, &bp3);
    double sig = 0.0;
    const bool have_sig = r.quantity("sigma_re", FAM_AREA, &sig);
    if (have_bp3 == have_sig)
        fail(raw, "experiment", "give exactly one of 'bp3_*' or 'sigma_re_*' for the loss strength");
    if (have_bp3) {
        if (bp3 < 0.0) fail(raw, "bp3", "'bp3' must be >= 0");
        spec.multiband.bp3 = bp3;
    } else {
        if (sig < 0.0) fail(raw, "sigma_re", "'sigma_re' must be >= 0");
        // Convert at the thermal collision energy k_B T.
        spec.multiband.bp3 = bp3_from_cross_section(sig, k_B * spec.multiband.T0, spec.multiband.mass);
    }
    const long long nmax = r.integer("n_max", 1);
    if (nmax < 1 || nmax > 64) fail(raw, "n_max", "'n_max' must lie in [1, 64]");
    spec.multiband.n_max = static_cast<int>(nmax);
    spec.multiband.t_end = r.quantity_required("t_end", FAM_TIME);
    if (!(spec.multiband.t_end > 0.0)) fail(raw, "t_end", "'t_end' must be positive");
    spec.multiband.n_out = static_cast<int>(r.integer("n_out", 64));
    if (spec.multiband.n_out < 1) fail(raw, "n_out", "'n_out' must be >= 1");
    spec.multiband.draws = static_cast<int>(r.integer("draws", 32));
    if (spec.multiband.draws < 1 || spec.multiband.draws > 4096) fail(raw, "draws", "'draws' must lie in [1, 4096]");
    spec.multiband_bands.clear();
    for (long long b : r.integer_list("bands")) {
        if (b < 1 || b > 64) fail(raw, "bands", "'bands' entries must lie in [1, 64]");
        spec.multiband_bands.push_back(static_cast<int>(b));
    }
    if (spec.multiband_bands.empty()) spec.multiband_bands.push_back(spec.multiband.n_max);
}

void parse_sweep(KeyReader& r, const std::string& raw, ExperimentSpec& spec) {
    const std::string method = r.text("method");
    if (method == "tb") {
        spec.sweep.method = SweepMethod::Tb;
        parse_tb(r, raw, spec, /*want_eta=*/false);
    } else if (method == "mc") {
        spec.sweep.method = SweepMethod::Mc;
        parse_evaporation(r, raw, spec, /*want_eta=*/false, /*want_law=*/false);
    } else if (method == "thermalization") {
        spec.sweep.method = SweepMethod::Thermalization;
        parse_thermalization(r, raw, spec, /*want_law=*/false);
    } else {
        fail(raw, "method", "'method' must be one of: tb, mc, thermalization");
    }

    spec.sweep.eta = r.number_list("eta_list");
    for (double e : spec.sweep.eta)
        if (!(e > 1.0)) fail(raw, "eta_list", "'eta_list' entries must exceed 1");
    spec.sweep.laws = r.text_list("laws");
    for (const auto& l : spec.sweep.laws) angular_law_by_name(l);  // validate names early
    if (!spec.sweep.laws.empty() && spec.sweep.method != SweepMethod::Mc)
        fail(raw, "laws", "'laws' applies only to mc sweeps");
    std::vector<int> dims;
    for (long long d : r.integer_list("dims")) {
        if (d != 2 && d != 3) fail(raw, "dims", "'dims' entries must be 2 or 3");
        dims.push_back(static_cast<int>(d));
    }
    if (!dims.empty() && spec.sweep.method != SweepMethod::Tb) fail(raw, "dims", "'dims' applies only to tb sweeps");
    spec.sweep.dims = dims;
    spec.sweep.alpha = r.number_list("alpha_list");
    for (double a : spec.sweep.alpha)
        if (a < 0.0) fail(raw, "alpha_list", "'alpha_list' entries must be >= 0");
    if (!spec.sweep.alpha.empty() && spec.sweep.method != SweepMethod::Thermalization)
        fail(raw, "alpha_list", "'alpha_list' applies only to thermalization sweeps");

    std::vector<SweepChild> children;
    if (const json* cj = r.array("children")) {
        for (const auto& e : *cj) {
            KeyReader cr(e, raw, "children");
            SweepChild c;
            c.law = cr.text("law", "isotropic");
            angular_law_by_name(c.law);
            c.eta = cr.number("eta", 0.0);
            const int base_dim = spec.sweep.method == SweepMethod::Tb    ? spec.tb.dim
                                 : spec.sweep.method == SweepMethod::Mc ? spec.evap.trap.dim
                                                                        : 2;
            c.dim = static_cast<int>(cr.integer("dim", base_dim));
            c.alpha = cr.number("alpha", 0.0);
            if (spec.sweep.method != SweepMethod::Thermalization && !(c.eta > 1.0))
                fail(raw, "children", "'children' entries must give eta > 1");
            if (c.dim != 2 && c.dim != 3) fail(raw, "children", "'children' dim must be 2 or 3");
            if (spec.sweep.method == SweepMethod::Mc && c.dim != spec.evap.trap.dim)
                fail(raw, "children", "mc sweep children run at the trap's dimensionality");
            cr.finish();
            children.push_back(c);
        }
        if (children.empty()) fail(raw, "children", "'children' must not be empty");
        if (!spec.sweep.eta.empty() || !spec.sweep.laws.empty() || !spec.sweep.alpha.empty())
            fail(raw, "children", "'children' cannot be combined with eta_list/laws/alpha_list");
    } else {
        // Grid expansion: laws (outer) x dims x eta, or alpha for thermalization.
        if (spec.sweep.method == SweepMethod::Thermalization) {
            if (spec.sweep.alpha.empty()) fail(raw, "experiment", "a thermalization sweep needs 'alpha_list'");
            for (double a : spec.sweep.alpha) {
                SweepChild c;
                c.law = "alpha";
                c.alpha = a;
                c.dim = 2;
                children.push_back(c);
            }
        } else {
            if (spec.sweep.eta.empty()) fail(raw, "experiment", "a sweep needs 'eta_list' (or explicit 'children')");
            std::vector<std::string> laws = spec.sweep.laws;
            if (laws.empty()) laws.push_back("isotropic");
            if (dims.empty()) dims.push_back(spec.sweep.method == SweepMethod::Tb ? spec.tb.dim : spec.evap.trap.dim);
            for (const auto& law : laws)
                for (int d : dims)
                    for (double e : spec.sweep.eta) {
                        SweepChild c;
                        c.law = law;
                        c.eta = e;
                        c.dim = d;
                        children.push_back(c);
                    }
        }
    }
    // Every tb child must have a matching trap axis and cross-section family.
    if (spec.sweep.method == SweepMethod::Tb) {
        for (const auto& c : children) {
            if (c.dim == 3 && spec.tb.omega[2] <= 0.0)
                fail(raw, "dims", "a three-dimensional sweep child needs 'trap.nu_z'");
            if (c.dim == 3 && spec.tb_sigma3 <= 0.0)
                fail(raw, "dims", "a three-dimensional sweep child needs an area 'sigma_*'");
            if (c.dim == 2 && spec.tb_lambda2 <= 0.0)
                fail(raw, "dims", "a two-dimensional sweep child needs a length 'lambda_*'");
        }
    }
    spec.sweep.children = children;
}

ExperimentKind kind_by_name(const std::string& raw, const std::string& name) {
    if (name == "thermalization") return ExperimentKind::Thermalization;
    if (name == "evaporation") return ExperimentKind::Evaporation;
    if (name == "tb") return ExperimentKind::Tb;
    if (name == "antievap") return ExperimentKind::Antievap;
    if (name == "multiband") return ExperimentKind::Multiband;
    if (name == "sweep") return ExperimentKind::Sweep;
    fail(raw, "experiment",
         "unknown experiment '" + name + "' (expected thermalization, evaporation, tb, antievap, multiband, or sweep)");
}

const char* kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Thermalization: return "thermalization";
        case ExperimentKind::Evaporation: return "evaporation";
        case ExperimentKind::Tb: return "tb";
        case ExperimentKind::Antievap: return "antievap";
        case ExperimentKind::Multiband: return "multiband";
        case ExperimentKind::Sweep: return "sweep";
    }
    return "?";
}

json law_echo(const AngularLaw& law) {
    return json{{"a", law.a}, {"a_prime", law.a_prime}, {"alpha", law.alpha}, {"alpha_prime", law.alpha_prime}};
}

json trap_echo(const TrapPotential& t) {
    json j{{"dim", t.dim}, {"omega_x_rad_s", t.omega[0]}, {"omega_y_rad_s", t.omega[1]}};
    if (t.dim == 3) j["omega_z_rad_s"] = t.omega[2];
    return j;
}

}  // namespace

AngularLaw angular_law_by_name(const std::string& name) {
    if (name == "isotropic") return AngularLaw::isotropic();
    if (name.rfind("alpha:", 0) == 0) {
        const std::string arg = name.substr(6);
        std::size_t used = 0;
        double a = 0.0;
        try {
            a = std::stod(arg, &used);
        } catch (const std::exception&) {
            throw ConfigError("config error: bad exponent in angular law '" + name + "'");
        }
        if (used != arg.size() || !std::isfinite(a) || a < 0.0)
            throw ConfigError("config error: bad exponent in angular law '" + name + "'");
        return AngularLaw::single_term(a);
    }
    if (name.rfind("table:", 0) == 0) {
        const std::string arg = name.substr(6);
        static const std::pair<const char*, int> rows[] = {{"1nK", 0}, {"10nK", 1}, {"100nK", 2}, {"1uK", 3}};
        for (const auto& [label, idx] : rows)
            if (arg == label) return CrossSectionTable::built_in().law_at(static_cast<std::size_t>(idx));
        throw ConfigError("config error: unknown table row '" + arg + "' (expected 1nK, 10nK, 100nK, or 1uK)");
    }
    throw ConfigError("config error: unknown angular law '" + name +
                      "' (expected isotropic, alpha:<x>, or table:<row>)");
}

ExperimentSpec parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& ex) {
        // byte offset -> line number for the diagnostic
        std::size_t off = ex.byte > 0 ? static_cast<std::size_t>(ex.byte) : 0;
        off = std::min(off, text.size());
        const int ln = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(off), '\n'));
        throw ConfigError("config error: malformed JSON near line " + std::to_string(ln) + ": " + ex.what());
    }
    if (!j.is_object()) throw ConfigError("config error: the top level must be a JSON object");

    ExperimentSpec spec;
    KeyReader r(j, text, "");
    spec.kind = kind_by_name(text, r.text("experiment"));
    spec.name = r.text("name", kind_name(spec.kind));
    spec.out_dir = r.text("out_dir", "runs");
    const long long seed = r.integer("seed", 1);
    if (seed < 0) fail(text, "seed", "'seed' must be >= 0");
    spec.seed = static_cast<std::uint64_t>(seed);
    const long long workers = r.integer("workers", 0);
    if (workers < 0 || workers > 1024) fail(text, "workers", "'workers' must lie in [0, 1024]");
    spec.workers = static_cast<int>(workers);

    switch (spec.kind) {
        case ExperimentKind::Thermalization: parse_thermalization(r, text, spec, true); break;
        case ExperimentKind::Evaporation: parse_evaporation(r, text, spec, true, true); break;
        case ExperimentKind::Tb: parse_tb(r, text, spec, true); break;
        case ExperimentKind::Antievap: parse_antievap(r, text, spec); break;
        case ExperimentKind::Multiband: parse_multiband(r, text, spec); break;
        case ExperimentKind::Sweep: parse_sweep(r, text, spec); break;
    }
    r.finish();
    return spec;
}

ExperimentSpec parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config error: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string resolved_echo(const ExperimentSpec& spec) {
    json j;
    j["experiment"] = kind_name(spec.kind);
    j["name"] = spec.name;
    j["out_dir"] = spec.out_dir;
    j["seed"] = spec.seed;
    j["workers"] = spec.workers;
    switch (spec.kind) {
        case ExperimentKind::Thermalization: {
            const auto& p = spec.thermal;
            j["trap"] = trap_echo(p.trap);
            j["mass_kg"] = p.mass;
            j["N0"] = p.N;
            j["T_K"] = p.T;
            j["xi"] = p.xi;
            j["law"] = law_echo(p.law);
            j[p.trap.dim == 2 ? "lambda_m" : "sigma_m2"] = p.lambda;
            j["repeats"] = spec.thermal_repeats;
            j["dt_frac"] = p.dt_frac;
            j["n_decay"] = p.n_decay;
            j["record_stride"] = p.record_stride;
            break;
        }
        case ExperimentKind::Evaporation: {
            const auto& p = spec.evap;
            j["trap"] = trap_echo(p.trap);
            j["mass_kg"] = p.mass;
            j["N0"] = p.N0;
            j["T_K"] = p.T0;
            j["eta"] = p.eta;
            j["law"] = law_echo(p.law);
            j["use_builtin_table"] = p.use_builtin_table;
            if (!p.use_builtin_table) j[p.trap.dim == 2 ? "lambda_m" : "sigma_m2"] = p.lambda;
            j["zeta"] = p.zeta;
            j["reactive_power_law"] = p.reactive_power_law;
            j["E_ref_J"] = p.E_ref;
            j["stop_frac"] = p.stop_frac;
            j["t_max_s"] = p.t_max;
            j["dt_frac"] = p.dt_frac;
            j["record_stride"] = p.record_stride;
            j["alpha_3d"] = p.alpha_3d;
            break;
        }
        case ExperimentKind::Tb: {
            const auto& p = spec.tb;
            j["trap"] = json{{"dim", p.dim},
                             {"omega_x_rad_s", p.omega[0]},
                             {"omega_y_rad_s", p.omega[1]},
                             {"omega_z_rad_s", p.omega[2]}};
            j["mass_kg"] = p.mass;
            j["N0"] = spec.tb_N0;
            j["T_K"] = spec.tb_T0;
            j[p.dim == 2 ? "lambda_m" : "sigma_m2"] = p.lambda;
            j["zeta"] = p.zeta;
            j["eta"] = p.eta;
            j["stop_frac"] = spec.tb_stop_frac;
            j["dt_s"] = p.dt;
            j["record_stride"] = p.record_stride;
            break;
        }
        case ExperimentKind::Antievap: {
            const auto& p = spec.antievap;
            j["trap"] = trap_echo(p.trap);
            j["mass_kg"] = p.mass;
            j["N0"] = p.N0;
            j["T_K"] = p.T0;
            j[p.trap.dim == 2 ? "lambda_re_m" : "sigma_re_m2"] = p.lambda_re_ref;
            j["E_ref_J"] = p.E_ref;
            j["power_law"] = p.power_law;
            j["stop_frac"] = p.stop_frac;
            j["dt_frac"] = p.dt_frac;
            j["record_stride"] = p.record_stride;
            break;
        }
        case ExperimentKind::Multiband: {
            const auto& p = spec.multiband;
            j["N0"] = p.N0;
            j["T_K"] = p.T0;
            j["nu_r_Hz"] = p.nu_r;
            j["nu_z_Hz"] = p.nu_z;
            j["mass_kg"] = p.mass;
            j["bp3_m3"] = p.bp3;
            j["n_max"] = p.n_max;
            j["bands"] = spec.multiband_bands;
            j["t_end_s"] = p.t_end;
            j["n_out"] = p.n_out;
            j["draws"] = p.draws;
            break;
        }
        case ExperimentKind::Sweep: {
            const char* m = spec.sweep.method == SweepMethod::Tb
                                ? "tb"
                                : spec.sweep.method == SweepMethod::Mc ? "mc" : "thermalization";
            j["method"] = m;
            json kids = json::array();
            for (std::size_t k = 0; k < spec.sweep.children.size(); ++k) {
                const auto& c = spec.sweep.children[k];
                json cj{{"index", k}, {"seed", spec.seed + k}};
                if (spec.sweep.method == SweepMethod::Thermalization) {
                    cj["alpha"] = c.alpha;
                } else {
                    cj["law"] = c.law;
                    cj["eta"] = c.eta;
                    cj["dim"] = c.dim;
                }
                kids.push_back(cj);
            }
            j["children"] = kids;
            if (spec.sweep.method == SweepMethod::Tb) {
                j["base"] = json{{"N0", spec.tb_N0}, {"T_K", spec.tb_T0}, {"lambda_si", spec.tb.lambda},
                                 {"zeta", spec.tb.zeta}, {"stop_frac", spec.tb_stop_frac}};
            } else if (spec.sweep.method == SweepMethod::Mc) {
                j["base"] = json{{"N0", spec.evap.N0}, {"T_K", spec.evap.T0}, {"zeta", spec.evap.zeta},
                                 {"use_builtin_table", spec.evap.use_builtin_table},
                                 {"lambda_si", spec.evap.lambda}, {"stop_frac", spec.evap.stop_frac}};
            } else {
                j["base"] = json{{"N0", spec.thermal.N}, {"T_K", spec.thermal.T}, {"xi", spec.thermal.xi},
                                 {"lambda_si", spec.thermal.lambda}, {"repeats", spec.thermal_repeats}};
            }
            break;
        }
    }
    return j.dump(2) + "\n";
}

}  // namespace evapsim
