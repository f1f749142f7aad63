#include "dcr/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dcr/error.hpp"
#include "dcr/thermal.hpp"

namespace dcr {

namespace {

using json = nlohmann::ordered_json;

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

std::string at_index(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
}

void require_object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
        throw ScenarioError(path, "expected an object");
    }
    for (const auto& [key, value] : j.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!known) {
            throw ScenarioError(join(path, key), "unknown key");
        }
    }
}

const json* find(const json& obj, const char* key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

const json& require(const json& obj, const std::string& path, const char* key) {
    const json* v = find(obj, key);
    if (v == nullptr) {
        throw ScenarioError(join(path, key), "missing required key");
    }
    return *v;
}

double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) {
        throw ScenarioError(path, "expected a number");
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
        throw ScenarioError(path, "must be finite");
    }
    return x;
}

std::size_t as_count(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) {
        return v.get<std::size_t>();
    }
    if (v.is_number_integer()) {
        throw ScenarioError(path, "must be a non-negative integer");
    }
    const double x = as_number(v, path);
    if (x < 0.0 || x != std::floor(x)) {
        throw ScenarioError(path, "must be a non-negative integer");
    }
    return static_cast<std::size_t>(x);
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) {
        throw ScenarioError(path, "expected a string");
    }
    return v.get<std::string>();
}

bool as_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) {
        throw ScenarioError(path, "expected true or false");
    }
    return v.get<bool>();
}

template <class T, class F>
void optional_field(const json& obj, const std::string& path, const char* key, T& out, F convert) {
    if (const json* v = find(obj, key)) {
        out = convert(*v, join(path, key));
    }
}

LabelPair as_label_pair(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 2) {
        throw ScenarioError(path, "expected a pair of mode labels");
    }
    return {as_string(v[0], at_index(path, 0)), as_string(v[1], at_index(path, 1))};
}

ModeSpec parse_mode(const json& j, const std::string& path) {
    require_object(j, path, {"label", "frequency", "dim", "temperature"});
    ModeSpec m;
    m.label = as_string(require(j, path, "label"), join(path, "label"));
    m.frequency = as_number(require(j, path, "frequency"), join(path, "frequency"));
    m.dim = as_count(require(j, path, "dim"), join(path, "dim"));
    m.temperature = as_number(require(j, path, "temperature"), join(path, "temperature"));
    if (m.label.empty()) {
        throw ScenarioError(join(path, "label"), "must not be empty");
    }
    if (!(m.frequency > 0.0)) {
        throw ScenarioError(join(path, "frequency"), "must be > 0");
    }
    if (m.dim < 2) {
        throw ScenarioError(join(path, "dim"), "truncation dimension must be >= 2");
    }
    if (!(m.temperature >= 0.0)) {
        throw ScenarioError(join(path, "temperature"), "must be >= 0");
    }
    return m;
}

cavity::CavityGeometry parse_geometry(const json& j, const std::string& path) {
    require_object(j, path, {"cap_ratio", "josephson_strength", "inductive_ratio", "flux_bias", "external"});
    cavity::CavityGeometry g;
    g.cap_ratio = as_number(require(j, path, "cap_ratio"), join(path, "cap_ratio"));
    g.josephson_strength = as_number(require(j, path, "josephson_strength"), join(path, "josephson_strength"));
    optional_field(j, path, "inductive_ratio", g.inductive_ratio, as_number);
    if (const json* ext = find(j, "external")) {
        const std::string p = join(path, "external");
        require_object(*ext, p, {"mutual_ratio", "flux"});
        cavity::ExternalFlux e;
        e.mutual_ratio = as_number(require(*ext, p, "mutual_ratio"), join(p, "mutual_ratio"));
        e.flux = as_number(require(*ext, p, "flux"), join(p, "flux"));
        g.external = e;
    }
    if (const json* f = find(j, "flux_bias")) {
        g.flux_bias = as_number(*f, join(path, "flux_bias"));
    } else if (g.external) {
        try {
            g.flux_bias = cavity::stationary_flux(g);
        } catch (const Error& e) {
            throw ScenarioError(join(path, "external"), e.what());
        }
    } else {
        throw ScenarioError(join(path, "flux_bias"), "missing required key (or give external)");
    }
    try {
        g.validate();
    } catch (const Error& e) {
        throw ScenarioError(path, e.what());
    }
    return g;
}

CouplingSpec parse_coupling(const json& j, const std::string& path) {
    CouplingSpec c;
    if (!j.is_object()) {
        throw ScenarioError(path, "expected an object");
    }
    std::string mode = "direct";
    optional_field(j, path, "mode", mode, as_string);
    if (mode == "direct") {
        require_object(j, path, {"mode", "g", "overrides"});
        c.mode = CouplingMode::Direct;
        optional_field(j, path, "g", c.g, as_number);
        if (const json* o = find(j, "overrides")) {
            const std::string p = join(path, "overrides");
            if (!o->is_array()) {
                throw ScenarioError(p, "expected an array");
            }
            for (std::size_t i = 0; i < o->size(); ++i) {
                const std::string pi = at_index(p, i);
                require_object((*o)[i], pi, {"pair", "g"});
                c.overrides.push_back({as_label_pair(require((*o)[i], pi, "pair"), join(pi, "pair")),
                                       as_number(require((*o)[i], pi, "g"), join(pi, "g"))});
            }
        }
    } else if (mode == "derived") {
        require_object(j, path, {"mode", "geometry", "ecj_over_ej", "ej", "cavity_modes"});
        c.mode = CouplingMode::Derived;
        auto& d = c.derived;
        d.geometry = parse_geometry(require(j, path, "geometry"), join(path, "geometry"));
        d.ecj_over_ej = as_number(require(j, path, "ecj_over_ej"), join(path, "ecj_over_ej"));
        d.ej = as_number(require(j, path, "ej"), join(path, "ej"));
        if (!(d.ecj_over_ej > 0.0)) {
            throw ScenarioError(join(path, "ecj_over_ej"), "must be > 0");
        }
        if (!(d.ej > 0.0)) {
            throw ScenarioError(join(path, "ej"), "must be > 0");
        }
        const std::string p = join(path, "cavity_modes");
        const json& cm = require(j, path, "cavity_modes");
        if (!cm.is_object()) {
            throw ScenarioError(p, "expected an object mapping labels to solver indices");
        }
        for (const auto& [label, idx] : cm.items()) {
            const std::size_t n = as_count(idx, join(p, label));
            if (n == 0) {
                throw ScenarioError(join(p, label), "solver indices start at 1");
            }
            d.cavity_modes.emplace_back(label, n);
        }
    } else {
        throw ScenarioError(join(path, "mode"), "expected \"direct\" or \"derived\"");
    }
    return c;
}

/// Everything resolve_model needs short of building operators.
struct TermResolution {
    std::vector<ResolvedTerm> terms;
    std::vector<std::pair<std::string, double>> detunings;
    double squid_frequency = 0.0;
};

double resonance_tolerance(const Scenario& s) {
    return s.engine.resonance_tolerance < 0.0 ? 1e-9 * s.modes[0].frequency : s.engine.resonance_tolerance;
}

std::size_t cavity_index(const Scenario& s, const std::string& label, const std::string& path) {
    for (std::size_t i = 1; i < s.modes.size(); ++i) {
        if (s.modes[i].label == label) {
            return i;
        }
    }
    if (!s.modes.empty() && s.modes[0].label == label) {
        throw ScenarioError(path, "'" + label + "' is the SQUID mode, not a cavity mode");
    }
    throw ScenarioError(path, "no mode labelled '" + label + "'");
}

TermResolution resolve_terms(const Scenario& s) {
    TermResolution out;
    if (s.free_theory) {
        return out;
    }
    const double omega_f = s.modes[0].frequency;
    const double tol = resonance_tolerance(s);

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (s.pairs) {
        std::set<std::pair<std::size_t, std::size_t>> seen;
        for (std::size_t i = 0; i < s.pairs->size(); ++i) {
            const std::string p = at_index("pairs", i);
            const auto& [l1, l2] = (*s.pairs)[i];
            std::size_t n = cavity_index(s, l1, at_index(p, 0));
            std::size_t m = cavity_index(s, l2, at_index(p, 1));
            if (n == m) {
                throw ScenarioError(p, "a pair needs two distinct cavity modes");
            }
            const double detuning = s.modes[n].frequency + s.modes[m].frequency - omega_f;
            if (std::abs(detuning) > tol) {
                std::ostringstream os;
                os << "pair (" << l1 << ", " << l2 << ") is off resonance by " << detuning;
                throw ScenarioError(p, os.str());
            }
            if (!seen.insert(std::minmax(n, m)).second) {
                throw ScenarioError(p, "duplicate pair");
            }
            pairs.emplace_back(n, m);
        }
    } else {
        std::vector<double> freqs;
        for (std::size_t i = 1; i < s.modes.size(); ++i) {
            freqs.push_back(s.modes[i].frequency);
        }
        for (const auto& [n, m] : resonant_pairs(freqs, omega_f, tol)) {
            pairs.emplace_back(n, m);
        }
    }
    if (pairs.empty()) {
        throw ScenarioError("pairs", "no resonant cavity pair; set free_theory to run without interaction");
    }

    auto label_pair = [&](std::size_t n, std::size_t m) { return LabelPair{s.modes[n].label, s.modes[m].label}; };

    if (s.coupling.mode == CouplingMode::Direct) {
        std::vector<double> g(pairs.size(), s.coupling.g);
        for (std::size_t i = 0; i < s.coupling.overrides.size(); ++i) {
            const std::string p = join(at_index("coupling.overrides", i), "pair");
            const auto& o = s.coupling.overrides[i];
            const auto key = std::minmax(cavity_index(s, o.pair.first, at_index(p, 0)),
                                         cavity_index(s, o.pair.second, at_index(p, 1)));
            const auto it = std::find_if(pairs.begin(), pairs.end(),
                                         [&](const auto& q) { return std::minmax(q.first, q.second) == key; });
            if (it == pairs.end()) {
                throw ScenarioError(p, "override names a pair that is not coupled");
            }
            g[static_cast<std::size_t>(it - pairs.begin())] = o.g;
        }
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto [n, m] = pairs[i];
            out.terms.push_back({label_pair(n, m), {n, m, g[i]}});
        }
        return out;
    }

    // derived: g from the cavity solver and coupling integrals
    const auto& d = s.coupling.derived;
    const double e_cj = d.ecj_over_ej * d.ej;
    out.squid_frequency = cavity::squid_frequency(d.geometry).in_josephson_units(d.ecj_over_ej) * d.ej;
    if (std::abs(out.squid_frequency - omega_f) > 1e-6 * omega_f) {
        std::ostringstream os;
        os << "declared SQUID frequency " << omega_f << " differs from the derived value "
           << out.squid_frequency << " by more than 1e-6 relative";
        throw ScenarioError("modes[0].frequency", os.str());
    }
    std::vector<std::size_t> solver_index(s.modes.size(), 0);
    std::size_t n_solve = 0;
    for (const auto& [label, idx] : d.cavity_modes) {
        solver_index[cavity_index(s, label, join("coupling.cavity_modes", label))] = idx;
        n_solve = std::max(n_solve, idx);
    }
    for (const auto& [n, m] : pairs) {
        for (std::size_t i : {n, m}) {
            if (solver_index[i] == 0) {
                throw ScenarioError("coupling.cavity_modes", "coupled mode '" + s.modes[i].label +
                                                                 "' has no solver index");
            }
        }
    }
    std::vector<cavity::CavityMode> solved;
    cavity::CouplingMatrix mat;
    try {
        solved = cavity::solve_modes(d.geometry, n_solve);
        mat = cavity::coupling_matrix(solved, d.geometry);
    } catch (const Error& e) {
        throw ScenarioError("coupling.geometry", e.what());
    }
    for (const auto& [label, idx] : d.cavity_modes) {
        const std::size_t i = cavity_index(s, label, join("coupling.cavity_modes", label));
        out.detunings.emplace_back(label, solved[idx - 1].omega - s.modes[i].frequency);
    }
    for (const auto& [n, m] : pairs) {
        const std::size_t a = solver_index[n] - 1;
        const std::size_t b = solver_index[m] - 1;
        const double wn = s.modes[n].frequency;
        const double wm = s.modes[m].frequency;
        // both orderings of the asymmetric prefactor contribute to one term
        const double g = cavity::coupling_strength(mat(a, b), wn, wm, omega_f, e_cj) +
                         cavity::coupling_strength(mat(b, a), wm, wn, omega_f, e_cj);
        out.terms.push_back({label_pair(n, m), {n, m, g}});
    }
    return out;
}

void validate(Scenario& s) {
    if (s.name.empty()) {
        throw ScenarioError("name", "must not be empty");
    }
    if (s.modes.size() < 2) {
        throw ScenarioError("modes", "need the SQUID mode and at least one cavity mode");
    }
    std::set<std::string> labels;
    for (std::size_t i = 0; i < s.modes.size(); ++i) {
        if (!labels.insert(s.modes[i].label).second) {
            throw ScenarioError(join(at_index("modes", i), "label"), "duplicate label '" + s.modes[i].label + "'");
        }
    }

    auto& r = s.refrigerator;
    if (r.cold.empty() || r.hot.empty()) {
        if (s.modes.size() < 3) {
            throw ScenarioError("refrigerator", "cold and hot modes must be named when fewer than two cavity modes exist");
        }
        if (r.cold.empty()) {
            r.cold = s.modes[2].label;
        }
        if (r.hot.empty()) {
            r.hot = s.modes[1].label;
        }
    }
    if (cavity_index(s, r.cold, "refrigerator.cold") == cavity_index(s, r.hot, "refrigerator.hot")) {
        throw ScenarioError("refrigerator", "cold and hot must be different modes");
    }
    if (!(r.threshold_fraction > 0.0 && r.threshold_fraction <= 1.0)) {
        throw ScenarioError("refrigerator.threshold_fraction", "must lie in (0, 1]");
    }

    if (!(s.times.t_max >= 0.0)) {
        throw ScenarioError("times.t_max", "must be >= 0");
    }
    if (s.times.n_points < 1) {
        throw ScenarioError("times.n_points", "must be >= 1");
    }

    const auto& e = s.engine;
    try {
        method_from_string(e.method);
    } catch (const Error& err) {
        throw ScenarioError("engine.method", err.what());
    }
    if (!(e.epsilon_tail >= 0.0 && e.epsilon_tail < 1.0)) {
        throw ScenarioError("engine.epsilon_tail", "must lie in [0, 1)");
    }
    if (e.max_members < 1) {
        throw ScenarioError("engine.max_members", "must be >= 1");
    }
    if (e.max_total_dim < 4) {
        throw ScenarioError("engine.max_total_dim", "must be >= 4");
    }
    if (!(e.norm_drift > 0.0)) {
        throw ScenarioError("engine.norm_drift", "must be > 0");
    }
    if (!(e.energy_drift_rel > 0.0)) {
        throw ScenarioError("engine.energy_drift_rel", "must be > 0");
    }
    if (e.krylov_dim < 2) {
        throw ScenarioError("engine.krylov_dim", "must be >= 2");
    }
    if (!(e.rk4_dt > 0.0)) {
        throw ScenarioError("engine.rk4_dt", "must be > 0");
    }

    resolve_terms(s);
}

json to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["description"] = s.description;
    j["expensive"] = s.expensive;
    j["modes"] = json::array();
    for (const auto& m : s.modes) {
        j["modes"].push_back({{"label", m.label}, {"frequency", m.frequency}, {"dim", m.dim}, {"temperature", m.temperature}});
    }
    json c;
    if (s.coupling.mode == CouplingMode::Direct) {
        c["mode"] = "direct";
        c["g"] = s.coupling.g;
        c["overrides"] = json::array();
        for (const auto& o : s.coupling.overrides) {
            c["overrides"].push_back({{"pair", {o.pair.first, o.pair.second}}, {"g", o.g}});
        }
    } else {
        const auto& d = s.coupling.derived;
        c["mode"] = "derived";
        json g;
        g["cap_ratio"] = d.geometry.cap_ratio;
        g["josephson_strength"] = d.geometry.josephson_strength;
        g["inductive_ratio"] = d.geometry.inductive_ratio;
        g["flux_bias"] = d.geometry.flux_bias;
        if (d.geometry.external) {
            g["external"] = {{"mutual_ratio", d.geometry.external->mutual_ratio}, {"flux", d.geometry.external->flux}};
        }
        c["geometry"] = g;
        c["ecj_over_ej"] = d.ecj_over_ej;
        c["ej"] = d.ej;
        c["cavity_modes"] = json::object();
        for (const auto& [label, idx] : d.cavity_modes) {
            c["cavity_modes"][label] = idx;
        }
    }
    j["coupling"] = c;
    if (s.pairs) {
        j["pairs"] = json::array();
        for (const auto& [a, b] : *s.pairs) {
            j["pairs"].push_back({a, b});
        }
    } else {
        j["pairs"] = "auto";
    }
    j["free_theory"] = s.free_theory;
    j["refrigerator"] = {{"cold", s.refrigerator.cold},
                         {"hot", s.refrigerator.hot},
                         {"threshold_fraction", s.refrigerator.threshold_fraction}};
    j["times"] = {{"t_max", s.times.t_max}, {"n_points", s.times.n_points}};
    const auto& e = s.engine;
    j["engine"] = {{"method", e.method},
                   {"epsilon_tail", e.epsilon_tail},
                   {"max_members", e.max_members},
                   {"max_total_dim", e.max_total_dim},
                   {"norm_drift", e.norm_drift},
                   {"energy_drift_rel", e.energy_drift_rel},
                   {"krylov_dim", e.krylov_dim},
                   {"rk4_dt", e.rk4_dt},
                   {"resonance_tolerance", e.resonance_tolerance},
                   {"threads", e.threads}};
    j["outputs"] = {{"csv", s.outputs.csv}, {"json", s.outputs.json}, {"report", s.outputs.report}};
    return j;
}

std::string fmt(double v) {
    if (v == 0.0) {
        return "0";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string sanitize(std::string s) {
    for (char& c : s) {
        if (c == ',' || c == '\n' || c == '\r' || c == '"') {
            c = ';';
        }
    }
    return s;
}

template <class Fn>
auto with_context(const Scenario& s, Fn fn) -> decltype(fn()) {
    const std::string ctx = "scenario '" + s.name + "': ";
    try {
        return fn();
    } catch (const ScenarioError&) {
        throw;
    } catch (const PropagationDiverged& e) {
        throw PropagationDiverged(ctx + e.what(), e.time());
    } catch (const EnsembleTooLarge& e) {
        throw EnsembleTooLarge(ctx + e.what());
    } catch (const DenseCapExceeded& e) {
        throw DenseCapExceeded(ctx + e.what());
    } catch (const InvalidDimension& e) {
        throw InvalidDimension(ctx + e.what());
    } catch (const ContractViolation& e) {
        throw ContractViolation(ctx + e.what());
    } catch (const ResonanceViolation& e) {
        throw ResonanceViolation(ctx + e.what());
    } catch (const NoRoot& e) {
        throw NoRoot(ctx + e.what());
    } catch (const InsufficientScan& e) {
        throw InsufficientScan(ctx + e.what());
    } catch (const BranchCrossing& e) {
        throw BranchCrossing(ctx + e.what());
    } catch (const Error& e) {
        throw Error(ctx + e.what());
    }
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) {
        throw Error("cannot open " + p.string() + " for writing");
    }
    os << text;
    if (!os) {
        throw Error("failed writing " + p.string());
    }
}

} // namespace

std::size_t Scenario::mode_index(const std::string& label) const {
    for (std::size_t i = 0; i < modes.size(); ++i) {
        if (modes[i].label == label) {
            return i;
        }
    }
    throw ContractViolation("scenario has no mode labelled '" + label + "'");
}

Scenario parse_scenario(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioError("", std::string("malformed JSON: ") + e.what());
    }
    require_object(j, "", {"name", "description", "expensive", "modes", "coupling", "pairs", "free_theory",
                           "refrigerator", "times", "engine", "outputs"});
    Scenario s;
    s.name = as_string(require(j, "", "name"), "name");
    optional_field(j, "", "description", s.description, as_string);
    optional_field(j, "", "expensive", s.expensive, as_bool);

    const json& modes = require(j, "", "modes");
    if (!modes.is_array()) {
        throw ScenarioError("modes", "expected an array");
    }
    for (std::size_t i = 0; i < modes.size(); ++i) {
        s.modes.push_back(parse_mode(modes[i], at_index("modes", i)));
    }

    if (const json* c = find(j, "coupling")) {
        s.coupling = parse_coupling(*c, "coupling");
    }
    if (const json* p = find(j, "pairs")) {
        if (p->is_string()) {
            if (p->get<std::string>() != "auto") {
                throw ScenarioError("pairs", "expected \"auto\" or a list of label pairs");
            }
        } else if (p->is_array()) {
            std::vector<LabelPair> pairs;
            for (std::size_t i = 0; i < p->size(); ++i) {
                pairs.push_back(as_label_pair((*p)[i], at_index("pairs", i)));
            }
            s.pairs = std::move(pairs);
        } else {
            throw ScenarioError("pairs", "expected \"auto\" or a list of label pairs");
        }
    }
    optional_field(j, "", "free_theory", s.free_theory, as_bool);

    if (const json* r = find(j, "refrigerator")) {
        require_object(*r, "refrigerator", {"cold", "hot", "threshold_fraction"});
        optional_field(*r, "refrigerator", "cold", s.refrigerator.cold, as_string);
        optional_field(*r, "refrigerator", "hot", s.refrigerator.hot, as_string);
        optional_field(*r, "refrigerator", "threshold_fraction", s.refrigerator.threshold_fraction, as_number);
    }
    if (const json* t = find(j, "times")) {
        require_object(*t, "times", {"t_max", "n_points"});
        optional_field(*t, "times", "t_max", s.times.t_max, as_number);
        optional_field(*t, "times", "n_points", s.times.n_points, as_count);
    }
    if (const json* e = find(j, "engine")) {
        const std::string p = "engine";
        require_object(*e, p, {"method", "epsilon_tail", "max_members", "max_total_dim", "norm_drift", "energy_drift_rel",
                               "krylov_dim", "rk4_dt", "resonance_tolerance", "threads"});
        auto& en = s.engine;
        optional_field(*e, p, "method", en.method, as_string);
        optional_field(*e, p, "epsilon_tail", en.epsilon_tail, as_number);
        optional_field(*e, p, "max_members", en.max_members, as_count);
        optional_field(*e, p, "max_total_dim", en.max_total_dim, as_count);
        optional_field(*e, p, "norm_drift", en.norm_drift, as_number);
        optional_field(*e, p, "energy_drift_rel", en.energy_drift_rel, as_number);
        optional_field(*e, p, "krylov_dim", en.krylov_dim, as_count);
        optional_field(*e, p, "rk4_dt", en.rk4_dt, as_number);
        optional_field(*e, p, "resonance_tolerance", en.resonance_tolerance, as_number);
        std::size_t threads = en.threads;
        optional_field(*e, p, "threads", threads, as_count);
        en.threads = static_cast<unsigned>(threads);
    }
    if (const json* o = find(j, "outputs")) {
        require_object(*o, "outputs", {"csv", "json", "report"});
        optional_field(*o, "outputs", "csv", s.outputs.csv, as_string);
        optional_field(*o, "outputs", "json", s.outputs.json, as_string);
        optional_field(*o, "outputs", "report", s.outputs.report, as_string);
    }

    validate(s);
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error("cannot open scenario file " + path.string());
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_scenario(ss.str());
}

std::string serialize_scenario(const Scenario& s) { return to_json(s).dump(2) + "\n"; }

std::string scenario_hash(const Scenario& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : serialize_scenario(s)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

// Resolves a dotted path with optional [index] / [label] selectors to a numeric leaf.
json* locate(json& doc, const std::string& path) {
    json* cur = &doc;
    std::size_t start = 0;
    while (start <= path.size()) {
        const std::size_t dot = path.find('.', start);
        std::string seg = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        std::string selector;
        const std::size_t br = seg.find('[');
        if (br != std::string::npos) {
            if (seg.back() != ']') {
                throw ScenarioError(path, "malformed selector");
            }
            selector = seg.substr(br + 1, seg.size() - br - 2);
            seg = seg.substr(0, br);
        }
        if (!cur->is_object() || !cur->contains(seg)) {
            throw ScenarioError(path, "no field '" + seg + "'");
        }
        cur = &(*cur)[seg];
        if (br != std::string::npos) {
            if (!cur->is_array()) {
                throw ScenarioError(path, "'" + seg + "' is not a list");
            }
            json* picked = nullptr;
            const bool numeric = !selector.empty() &&
                                 std::all_of(selector.begin(), selector.end(), [](char c) { return c >= '0' && c <= '9'; });
            if (numeric) {
                const std::size_t i = std::stoul(selector);
                if (i < cur->size()) {
                    picked = &(*cur)[i];
                }
            } else {
                for (auto& el : *cur) {
                    if (el.is_object() && el.value("label", std::string()) == selector) {
                        picked = &el;
                    }
                }
            }
            if (picked == nullptr) {
                throw ScenarioError(path, "no element '" + selector + "' in '" + seg + "'");
            }
            cur = picked;
        }
        if (dot == std::string::npos) {
            break;
        }
        start = dot + 1;
    }
    if (!cur->is_number()) {
        throw ScenarioError(path, "does not address a numeric field");
    }
    return cur;
}

} // namespace

Scenario with_parameter(const Scenario& s, const std::string& path, double value) {
    json doc = to_json(s);
    json* cur = locate(doc, path);
    if (cur->is_number_integer()) {
        if (value < 0.0 || value != std::floor(value)) {
            throw ScenarioError(path, "integer field needs a non-negative integral value");
        }
        *cur = static_cast<std::size_t>(value);
    } else {
        *cur = value;
    }
    return parse_scenario(doc.dump());
}

Scenario with_dims(const Scenario& s, const std::vector<std::size_t>& dims) {
    if (dims.size() != s.modes.size()) {
        throw ContractViolation("with_dims: expected " + std::to_string(s.modes.size()) + " dims");
    }
    Scenario out = s;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (dims[i] < 2) {
            throw InvalidDimension("truncation dimension must be >= 2");
        }
        out.modes[i].dim = dims[i];
    }
    return out;
}

Scenario two_mode_baseline(const Scenario& s) {
    const std::set<std::string> keep{s.modes[0].label, s.refrigerator.cold, s.refrigerator.hot};
    auto kept = [&](const LabelPair& p) { return keep.count(p.first) && keep.count(p.second); };

    Scenario out = s;
    out.name = s.name + "_baseline";
    out.outputs = {};
    out.modes.clear();
    for (const auto& m : s.modes) {
        if (keep.count(m.label)) {
            out.modes.push_back(m);
        }
    }
    if (out.pairs) {
        std::erase_if(*out.pairs, [&](const LabelPair& p) { return !kept(p); });
    }
    std::erase_if(out.coupling.overrides, [&](const PairCoupling& o) { return !kept(o.pair); });
    std::erase_if(out.coupling.derived.cavity_modes, [&](const auto& cm) { return !keep.count(cm.first); });
    validate(out);
    return out;
}

ResolvedModel resolve_model(const Scenario& s) {
    TermResolution tr = resolve_terms(s);
    std::vector<InteractionTerm> terms;
    for (const auto& t : tr.terms) {
        terms.push_back(t.term);
    }
    BuildOptions opts;
    opts.resonance_tolerance = s.engine.resonance_tolerance;
    return {build_hamiltonian(s.modes, std::move(terms), opts), std::move(tr.terms), std::move(tr.detunings),
            tr.squid_frequency};
}

unsigned resolve_threads(const Scenario& s) {
    if (s.engine.threads > 0) {
        return s.engine.threads;
    }
    if (const char* env = std::getenv("DCR_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) {
            return static_cast<unsigned>(v);
        }
    }
    return 1;
}

PropagatorOptions propagator_options(const Scenario& s) {
    PropagatorOptions o;
    o.method = method_from_string(s.engine.method);
    o.norm_drift = s.engine.norm_drift;
    o.energy_drift_rel = s.engine.energy_drift_rel;
    o.krylov_dim = s.engine.krylov_dim;
    o.rk4_dt = s.engine.rk4_dt;
    o.threads = resolve_threads(s);
    return o;
}

RunResult simulate(const Scenario& s) {
    return with_context(s, [&] {
        double total = 1.0;
        for (const auto& m : s.modes) {
            total *= static_cast<double>(m.dim);
        }
        if (total > static_cast<double>(s.engine.max_total_dim)) {
            std::ostringstream os;
            os << "Fock space of dimension " << total << " exceeds engine.max_total_dim = "
               << s.engine.max_total_dim << (s.expensive ? " (scenario is marked expensive)" : "");
            throw InvalidDimension(os.str());
        }
        ResolvedModel rm = resolve_model(s);
        const auto ensemble = product_ensemble(s.modes, {s.engine.epsilon_tail, s.engine.max_members});
        const auto times = uniform_times(s.times.t_max, s.times.n_points);
        RunResult r;
        r.trajectory = evolve_ensemble(rm.model, ensemble, times, propagator_options(s));
        ReportOptions ro;
        ro.cold = s.mode_index(s.refrigerator.cold);
        ro.hot = s.mode_index(s.refrigerator.hot);
        ro.threshold_fraction = s.refrigerator.threshold_fraction;
        r.report = refrigerator_report(r.trajectory, s.modes, ro);
        r.terms = std::move(rm.terms);
        r.detunings = std::move(rm.detunings);
        r.hash = scenario_hash(s);
        return r;
    });
}

OutputPaths output_paths(const Scenario& s, const std::filesystem::path& dir) {
    auto pick = [&](const std::string& given, const std::string& suffix) {
        return dir / (given.empty() ? s.name + suffix : given);
    };
    return {pick(s.outputs.csv, ".csv"), pick(s.outputs.json, ".meta.json"), pick(s.outputs.report, ".report.json")};
}

RunResult run(const Scenario& s, const std::filesystem::path& out_dir) {
    RunResult r = simulate(s);
    std::filesystem::create_directories(out_dir);
    const auto paths = output_paths(s, out_dir);
    std::ostringstream csv;
    write_trajectory_csv(csv, r.trajectory);
    write_file(paths.csv, csv.str());
    write_file(paths.json, metadata_json(s, r));
    write_file(paths.report, report_json(s, r));
    return r;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& t) {
    os << "t";
    for (const auto& l : t.labels) {
        os << ",N_" << l << ",E_" << l;
    }
    for (const auto& c : t.charge_names) {
        os << "," << c;
    }
    os << "\n";
    for (std::size_t i = 0; i < t.times.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        os << fmt(t.times[i]);
        for (Eigen::Index m = 0; m < t.occupations.cols(); ++m) {
            os << "," << fmt(t.occupations(r, m)) << "," << fmt(t.energies(r, m));
        }
        for (Eigen::Index c = 0; c < t.charges.cols(); ++c) {
            os << "," << fmt(t.charges(r, c));
        }
        os << "\n";
    }
}

std::string metadata_json(const Scenario& s, const RunResult& r) {
    const auto& m = r.trajectory.meta;
    json j;
    j["scenario"] = to_json(s);
    j["scenario_hash"] = r.hash;
    j["units"] = {{"frequency", "omega_0"}, {"time", "1/omega_0"}, {"energy", "hbar*omega_0"}, {"temperature", "hbar*omega_0/k_B"}};
    j["dims"] = m.dims;
    j["method"] = m.method;
    j["threads"] = resolve_threads(s);
    j["members"] = m.members;
    j["discarded_mass"] = m.discarded_mass;
    j["tolerances"] = {{"norm_drift", s.engine.norm_drift},
                       {"energy_drift_rel", s.engine.energy_drift_rel},
                       {"epsilon_tail", s.engine.epsilon_tail},
                       {"resonance_tolerance", resonance_tolerance(s)}};
    j["max_energy_drift_rel"] = m.max_energy_drift_rel;
    j["max_charge_drift_rel"] = m.max_charge_drift_rel;
    j["interaction"] = json::array();
    for (const auto& t : r.terms) {
        j["interaction"].push_back({{"pair", {t.pair.first, t.pair.second}}, {"g", t.term.g}});
    }
    if (s.coupling.mode == CouplingMode::Derived) {
        json d = json::object();
        for (const auto& [label, v] : r.detunings) {
            d[label] = v;
        }
        j["solver_detuning"] = d;
    }
    j["columns"] = json::array({"t"});
    for (const auto& l : r.trajectory.labels) {
        j["columns"].push_back("N_" + l);
        j["columns"].push_back("E_" + l);
    }
    for (const auto& c : r.trajectory.charge_names) {
        j["columns"].push_back(c);
    }
    j["wall_seconds"] = m.wall_seconds;
    return j.dump(2) + "\n";
}

std::string report_json(const Scenario& s, const RunResult& r) {
    const auto& rep = r.report;
    json j;
    j["scenario"] = s.name;
    j["scenario_hash"] = r.hash;
    j["cold"] = rep.cold_label;
    j["hot"] = rep.hot_label;
    j["temperatures"] = {{"squid", s.modes[0].temperature},
                         {"cold", s.modes[s.mode_index(rep.cold_label)].temperature},
                         {"hot", s.modes[s.mode_index(rep.hot_label)].temperature}};
    j["regime_ok"] = rep.regime_ok;
    j["cooling_achieved"] = rep.cooling_achieved;
    j["cold_initial"] = rep.cold_initial;
    j["cold_min"] = rep.cold_min;
    j["t_min"] = rep.t_min;
    j["threshold_fraction"] = rep.threshold_fraction;
    j["dwell"] = rep.dwell;
    j["squid_initial"] = rep.squid_initial;
    j["squid_max"] = rep.squid_max;
    j["t_squid_max"] = rep.t_squid_max;
    return j.dump(2) + "\n";
}

std::vector<SweepRow> sweep(const Scenario& s, const std::vector<std::string>& paths,
                            const std::vector<double>& values, const std::filesystem::path& out_dir) {
    if (paths.empty()) {
        throw ContractViolation("sweep needs at least one parameter path");
    }
    // bad paths fail the whole sweep; bad values only fail their row
    json doc = to_json(s);
    for (const auto& p : paths) {
        locate(doc, p);
    }
    std::vector<SweepRow> rows;
    for (double v : values) {
        SweepRow row;
        row.value = v;
        try {
            Scenario sc = s;
            for (const auto& p : paths) {
                sc = with_parameter(sc, p, v);
            }
            if (out_dir.empty()) {
                row.report = simulate(sc).report;
            } else {
                sc.name = s.name + "_row" + std::to_string(rows.size());
                sc.outputs = {};
                row.report = run(sc, out_dir).report;
            }
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "value,min_E_cold,t_min,dwell,max_E_f,status\n";
    for (const auto& r : rows) {
        os << fmt(r.value);
        if (r.ok) {
            os << "," << fmt(r.report.cold_min) << "," << fmt(r.report.t_min) << "," << fmt(r.report.dwell) << ","
               << fmt(r.report.squid_max) << ",ok\n";
        } else {
            os << ",,,,,failed: " << sanitize(r.error) << "\n";
        }
    }
}

ConvergenceResult convergence_check(const Scenario& s, const std::vector<std::vector<std::size_t>>& ladder,
                                    double tolerance_fraction) {
    if (ladder.size() < 2) {
        throw ContractViolation("convergence ladder needs at least two rungs");
    }
    for (std::size_t i = 1; i < ladder.size(); ++i) {
        bool grows = false;
        for (std::size_t k = 0; k < ladder[i].size() && k < ladder[i - 1].size(); ++k) {
            if (ladder[i][k] < ladder[i - 1][k]) {
                throw ContractViolation("convergence ladder must be increasing");
            }
            grows = grows || ladder[i][k] > ladder[i - 1][k];
        }
        if (!grows) {
            throw ContractViolation("convergence ladder must be increasing");
        }
    }
    const std::size_t cold = s.mode_index(s.refrigerator.cold);
    ConvergenceResult out;
    out.tolerance_fraction = tolerance_fraction;
    Eigen::VectorXd prev;
    for (const auto& dims : ladder) {
        const auto r = simulate(with_dims(s, dims));
        const Eigen::VectorXd e = r.trajectory.energies.col(static_cast<Eigen::Index>(cold));
        if (!out.rungs.empty()) {
            out.rungs.back().delta_to_next = (e - prev).cwiseAbs().maxCoeff();
        }
        out.rungs.push_back({dims, e(0), std::nullopt});
        prev = e;
    }
    for (std::size_t i = 0; i + 1 < out.rungs.size(); ++i) {
        const double limit = tolerance_fraction * std::abs(out.rungs[i + 1].cold_initial) + 1e-12;
        const bool ok = *out.rungs[i].delta_to_next <= limit;
        if (ok && !out.converged_at) {
            out.converged_at = i;
        }
        if (i + 2 == out.rungs.size()) {
            out.converged = ok;
        }
    }
    return out;
}

void write_convergence_csv(std::ostream& os, const ConvergenceResult& r) {
    os << "rung,dims,E_cold_initial,max_delta_to_next,within_tolerance\n";
    for (std::size_t i = 0; i < r.rungs.size(); ++i) {
        const auto& g = r.rungs[i];
        os << i << ",";
        for (std::size_t k = 0; k < g.dims.size(); ++k) {
            os << (k ? "x" : "") << g.dims[k];
        }
        os << "," << fmt(g.cold_initial) << ",";
        if (g.delta_to_next) {
            const double limit = r.tolerance_fraction * std::abs(r.rungs[i + 1].cold_initial) + 1e-12;
            os << fmt(*g.delta_to_next) << "," << (*g.delta_to_next <= limit ? "yes" : "no");
        } else {
            os << ",";
        }
        os << "\n";
    }
}

ModeTable mode_table(const cavity::CavityGeometry& g, std::size_t n_modes) {
    ModeTable t;
    t.modes = cavity::solve_modes(g, n_modes);
    const Eigen::MatrixXd gram = cavity::gram_matrix(t.modes, g);
    t.gram_residual = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
    return t;
}

void write_modes_csv(std::ostream& os, const ModeTable& t) {
    os << "index,parity,k_d,omega_over_v,dk_df\n";
    for (const auto& m : t.modes) {
        os << m.index << "," << cavity::to_string(m.parity) << "," << fmt(m.k) << "," << fmt(m.omega) << ","
           << fmt(m.dk_df) << "\n";
    }
}

std::string modes_json(const cavity::CavityGeometry& g, const ModeTable& t) {
    json j;
    j["geometry"] = {{"cap_ratio", g.cap_ratio},
                     {"josephson_strength", g.josephson_strength},
                     {"inductive_ratio", g.inductive_ratio},
                     {"flux_bias", g.flux_bias}};
    if (g.external) {
        j["geometry"]["external"] = {{"mutual_ratio", g.external->mutual_ratio}, {"flux", g.external->flux}};
    }
    j["n_modes"] = t.modes.size();
    j["gram_residual"] = t.gram_residual;
    j["squid_frequency_factor"] = cavity::squid_frequency(g).factor;
    return j.dump(2) + "\n";
}

} // namespace dcr
