#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "evapsim/mc_engine.hpp"
#include "evapsim/multiband.hpp"
#include "evapsim/tb_kinetics.hpp"

namespace evapsim {

// Configuration faults (syntax, unknown keys, bad units, invalid values).
// Everything else escaping the runner is a runtime failure.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ExperimentKind { Thermalization, Evaporation, Tb, Antievap, Multiband, Sweep };

enum class SweepMethod { Tb, Mc, Thermalization };

// One resolved sweep child; only the fields meaningful for the method are set.
struct SweepChild {
    std::string law = "isotropic";  // mc
    double eta = 0.0;               // mc / tb
    int dim = 0;                    // tb
    double alpha = 0.0;             // thermalization
};

struct SweepSpec {
    SweepMethod method = SweepMethod::Tb;
    std::vector<double> eta;            // eta axis (tb, mc)
    std::vector<std::string> laws;      // law axis (mc)
    std::vector<int> dims;              // dimension axis (tb)
    std::vector<double> alpha;          // alpha axis (thermalization)
    std::vector<SweepChild> children;   // resolved expansion, laws x dims x eta
};

// A fully resolved experiment: every physical quantity in SI, defaults
// applied, ranges checked.  Only the payload matching `kind` is meaningful.
struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::Evaporation;
    std::string name;                   // artifact stem / label
    std::string out_dir = "runs";
    std::uint64_t seed = 1;
    int workers = 0;                    // 0 = EVAPSIM_WORKERS or hardware default

    ThermalizationParams thermal;
    int thermal_repeats = 8;

    EvaporationParams evap;

    TbConfig tb;
    double tb_N0 = 0.0;
    double tb_T0 = 0.0;
    double tb_stop_frac = 0.1;
    double tb_lambda2 = 0.0;  // 2D cross section (length), kept for dim-mixed sweeps
    double tb_sigma3 = 0.0;   // 3D cross section (area), kept for dim-mixed sweeps

    AntievapParams antievap;

    MultibandParams multiband;
    std::vector<int> multiband_bands;   // band-count variants to run

    SweepSpec sweep;
};

// Angular-law lookup by name: "isotropic", "alpha:<x>" (single cos^{2x} term)
// or "table:<1nK|10nK|100nK|1uK>" (built-in two-term rows).
AngularLaw angular_law_by_name(const std::string& name);

// JSON configs.  Dimensioned keys carry a unit suffix (T_nK, lambda_cm,
// nu_z_kHz, ...) from a fixed table; unknown keys and unknown suffixes are
// rejected with the line they appear on.
ExperimentSpec parse_config(const std::string& path);
ExperimentSpec parse_config_text(const std::string& text);

// Canonical SI echo of a resolved spec (JSON text), also embedded in run
// manifests.
std::string resolved_echo(const ExperimentSpec& spec);

} // namespace evapsim
