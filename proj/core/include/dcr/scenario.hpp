// scenario.hpp: experiment documents, runs, sweeps and truncation checks
//
// Documents are JSON. Mode labels are free-form; the SQUID is always modes[0].

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dcr/cavity.hpp"
#include "dcr/dynamics.hpp"
#include "dcr/model.hpp"

namespace dcr {

using LabelPair = std::pair<std::string, std::string>;

struct PairCoupling {
    LabelPair pair;
    double g = 0.0;
    bool operator==(const PairCoupling&) const = default;
};

enum class CouplingMode { Direct, Derived };

struct DerivedCoupling {
    cavity::CavityGeometry geometry;
    double ecj_over_ej = 0.0;
    /// E_J in units of ħω_0 (ω_0 = v/d).
    double ej = 0.0;
    /// cavity label -> 1-based index into solve_modes()
    std::vector<std::pair<std::string, std::size_t>> cavity_modes;
    bool operator==(const DerivedCoupling&) const = default;
};

struct CouplingSpec {
    CouplingMode mode = CouplingMode::Direct;
    double g = 0.05;
    std::vector<PairCoupling> overrides;
    DerivedCoupling derived;
    bool operator==(const CouplingSpec&) const = default;
};

struct TimeGrid {
    double t_max = 200.0;
    std::size_t n_points = 400;
    bool operator==(const TimeGrid&) const = default;
};

struct EngineSpec {
    std::string method = "auto";
    double epsilon_tail = 0.0;
    std::size_t max_members = 1'000'000;
    /// Runs refuse Fock spaces larger than this.
    std::size_t max_total_dim = 4'000'000;
    double norm_drift = 1e-9;
    double energy_drift_rel = 1e-8;
    std::size_t krylov_dim = 30;
    double rk4_dt = 1e-3;
    /// Negative selects the model default (1e-9·ω_f).
    double resonance_tolerance = -1.0;
    /// 0 defers to DCR_THREADS, then 1.
    unsigned threads = 0;
    bool operator==(const EngineSpec&) const = default;
};

struct RefrigeratorRoles {
    std::string cold;
    std::string hot;
    double threshold_fraction = 0.99;
    bool operator==(const RefrigeratorRoles&) const = default;
};

struct OutputSpec {
    std::string csv;
    std::string json;
    std::string report;
    bool operator==(const OutputSpec&) const = default;
};

struct Scenario {
    std::string name;
    std::string description;
    /// Marks literal-parameter documents that need large dims and long runs.
    bool expensive = false;
    std::vector<ModeSpec> modes;
    CouplingSpec coupling;
    /// nullopt selects resonant pairs automatically.
    std::optional<std::vector<LabelPair>> pairs;
    bool free_theory = false;
    RefrigeratorRoles refrigerator;
    TimeGrid times;
    EngineSpec engine;
    OutputSpec outputs;

    bool operator==(const Scenario&) const = default;

    std::size_t mode_index(const std::string& label) const;
};

/// Parses and validates; throws ScenarioError carrying a path such as
/// `modes[1].temperature`.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);
std::string serialize_scenario(const Scenario& s);
/// FNV-1a of the serialized document, as 16 hex digits.
std::string scenario_hash(const Scenario& s);

/// Sets a numeric field addressed by a dotted path (`modes[c3].temperature`,
/// `modes[2].dim`, `coupling.g`, `times.t_max`) and revalidates.
Scenario with_parameter(const Scenario& s, const std::string& path, double value);

/// Same scenario with every mode set to the given truncation.
Scenario with_dims(const Scenario& s, const std::vector<std::size_t>& dims);

/// Drops cavity modes outside the refrigerator pair, keeping the pair itself.
Scenario two_mode_baseline(const Scenario& s);

struct ResolvedTerm {
    LabelPair pair;
    InteractionTerm term;
};

struct ResolvedModel {
    HamiltonianModel model;
    std::vector<ResolvedTerm> terms;
    /// Derived coupling only: solver ω minus declared ω per mapped cavity mode.
    std::vector<std::pair<std::string, double>> detunings;
    double squid_frequency = 0.0;
};

ResolvedModel resolve_model(const Scenario& s);
PropagatorOptions propagator_options(const Scenario& s);
/// Thread count after DCR_THREADS fallback.
unsigned resolve_threads(const Scenario& s);

struct RunResult {
    Trajectory trajectory;
    RefrigeratorReport report;
    std::vector<ResolvedTerm> terms;
    std::vector<std::pair<std::string, double>> detunings;
    std::string hash;
};

RunResult simulate(const Scenario& s);

struct OutputPaths {
    std::filesystem::path csv;
    std::filesystem::path json;
    std::filesystem::path report;
};

OutputPaths output_paths(const Scenario& s, const std::filesystem::path& dir);

/// simulate() then write the trajectory CSV, metadata sidecar and report.
RunResult run(const Scenario& s, const std::filesystem::path& out_dir);

void write_trajectory_csv(std::ostream& os, const Trajectory& t);
std::string metadata_json(const Scenario& s, const RunResult& r);
std::string report_json(const Scenario& s, const RunResult& r);

struct SweepRow {
    double value = 0.0;
    bool ok = false;
    std::string error;
    RefrigeratorReport report;
};

/// One run per value with every path in `paths` set to it; failures mark the
/// row and the sweep continues. Rows follow the order of `values`. With a
/// non-empty `out_dir` each row also writes its run files as `<name>_row<i>`.
std::vector<SweepRow> sweep(const Scenario& s, const std::vector<std::string>& paths,
                            const std::vector<double>& values, const std::filesystem::path& out_dir = {});
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

struct ConvergenceRung {
    std::vector<std::size_t> dims;
    double cold_initial = 0.0;
    /// max_t |E_cold(t; this) - E_cold(t; next)|, absent on the top rung
    std::optional<double> delta_to_next;
};

struct ConvergenceResult {
    std::vector<ConvergenceRung> rungs;
    double tolerance_fraction = 0.01;
    /// Index of the first rung whose delta to the next is within tolerance.
    std::optional<std::size_t> converged_at;
    /// Delta between the last two rungs is within tolerance.
    bool converged = false;
};

ConvergenceResult convergence_check(const Scenario& s, const std::vector<std::vector<std::size_t>>& ladder,
                                    double tolerance_fraction = 0.01);
void write_convergence_csv(std::ostream& os, const ConvergenceResult& r);

/// Cavity modes of a derived-coupling scenario as a CSV
/// (index, parity, k_d, omega_over_v, dk_df) plus a JSON sidecar.
struct ModeTable {
    std::vector<cavity::CavityMode> modes;
    double gram_residual = 0.0;
};

ModeTable mode_table(const cavity::CavityGeometry& g, std::size_t n_modes);
void write_modes_csv(std::ostream& os, const ModeTable& t);
std::string modes_json(const cavity::CavityGeometry& g, const ModeTable& t);

} // namespace dcr
