#pragma once

// Descriptors on disk: canonical JSON for potentials, families and towers,
// CSV emission, atomic writes, and the optional monodromy cache.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cocyclelab/cocycle.hpp"
#include "cocyclelab/labverify.hpp"
#include "cocyclelab/slowdeform.hpp"
#include "cocyclelab/solenoid.hpp"

namespace cocyclelab {

using nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------- numbers

/// Shortest text that reads back to the same double.
inline std::string fmt_double(double x) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

// ---------------------------------------------------------------- towers

/// A tower descriptor: base potential plus the recipe of its stages. Cover
/// steps carry their rho windows; realized steps derive theirs.
struct TowerDescriptor {
  struct Step {
    std::string op;  // "cover", "realize-pad", "realize-mix"
    long mult = 1;
    std::vector<RhoWindow> windows;
    PaddingSpec padding;
    double delta = 0.0, eps0 = 0.0;
    long n = 1, big_n = 1;
  };
  ContinuumPotential base;
  std::vector<Step> steps;

  /// Every stage, the base first.
  std::vector<StagePtr> build() const {
    std::vector<StagePtr> out{TowerStage::base(base)};
    for (const auto& s : steps) {
      if (s.op == "cover") out.push_back(TowerStage::cover(out.back(), s.mult, s.windows));
      else if (s.op == "realize-pad") out.push_back(realize_padding(out.back(), s.padding, s.eps0));
      else out.push_back(realize_mixing(out.back(), s.delta, s.n, s.eps0, s.big_n));
    }
    return out;
  }
};

/// The smooth elliptic family used by the normal-form checks.
inline json to_json(const SmoothCocycleFamily& f) {
  return {{"kind", "smooth-family"},
          {"lo", f.lo},
          {"hi", f.hi},
          {"inner_period", f.inner_period},
          {"potential", to_json(f.potential)}};
}

using Descriptor =
    std::variant<ContinuumPotential, DiscretePotential, DiscreteFamily, CirclePotential, TowerDescriptor, SmoothCocycleFamily>;

// ---------------------------------------------------------------- to JSON

namespace detail {

inline json segments_json(const SegmentList& list) {
  json arr = json::array();
  for (const auto& s : list.items) {
    switch (s.kind) {
      case Segment::Kind::Gap: arr.push_back({{"gap", s.len}}); break;
      case Segment::Kind::Piece:
        arr.push_back({{"piece", {{"base", s.base}, {"shift", s.shift}, {"timescale", s.timescale}, {"len", s.len}}}});
        break;
      case Segment::Kind::Block:
        arr.push_back({{"block", {{"repeat", s.repeat}, {"segments", segments_json(*s.body)}}}});
        break;
    }
  }
  return arr;
}

}  // namespace detail

inline json to_json(const ContinuumPotential& v) {
  json bases = json::object();
  for (const auto& [k, e] : v.bases) bases[k] = to_json(e);
  return {{"kind", "continuum-periodic"},
          {"period", v.period},
          {"zero_nbhd", v.zero_nbhd},
          {"bases", bases},
          {"segments", detail::segments_json(*v.segments)}};
}

inline json to_json(const DiscretePotential& v) { return {{"kind", "discrete-periodic"}, {"values", v.values}}; }

inline json to_json(const DiscreteFamily& f) {
  return {{"kind", "discrete-family"}, {"n0", f.n0}, {"n1", f.n1}, {"expr", to_json(f.expr)}};
}

inline json to_json(const CirclePotential& v) {
  return {{"kind", "circle"}, {"period", v.period}, {"const_nbhd", v.const_nbhd}, {"expr", to_json(v.expr)}};
}

inline json to_json(const RhoWindow& w) {
  return {{"x0", w.x0}, {"x1", w.x1}, {"value", w.value}, {"ramp", w.ramp}};
}

inline json to_json(const TowerDescriptor& t) {
  const auto built = t.build();
  json stages = json::array();
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const auto& s = t.steps[i];
    const TowerStage& st = *built[i + 1];
    json rec;
    if (s.op == "cover") rec = {{"op", "cover"}};
    else if (s.op == "realize-pad")
      rec = {{"op", "realize-pad"}, {"delta", s.padding.delta}, {"N", s.padding.N}, {"n", s.padding.n}, {"eps0", s.eps0}};
    else
      rec = {{"op", "realize-mix"}, {"delta", s.delta}, {"n", s.n}, {"N", s.big_n}, {"eps0", s.eps0}};
    rec["multiplicity"] = st.multiplicity();
    json rho = json::array();
    for (const auto& w : st.windows()) rho.push_back(to_json(w));
    rec["rho"] = rho;
    stages.push_back(rec);
  }
  return {{"kind", "tower"}, {"base", to_json(t.base)}, {"stages", stages}};
}

inline json to_json(const Descriptor& d) {
  return std::visit([](const auto& x) { return to_json(x); }, d);
}

// ---------------------------------------------------------------- from JSON

namespace detail {

inline const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) fail(ErrorKind::Validation, where + "." + key + ": missing");
  return j[key];
}

inline double num(const json& j, const char* key, const std::string& where) {
  const json& x = field(j, key, where);
  if (!x.is_number()) fail(ErrorKind::Validation, where + "." + key + ": expected a number");
  return x.get<double>();
}

inline long integer(const json& j, const char* key, const std::string& where) {
  const json& x = field(j, key, where);
  if (!x.is_number_integer()) fail(ErrorKind::Validation, where + "." + key + ": expected an integer");
  return x.get<long>();
}

/// Runs a struct's own validate() and prefixes its messages with `where`.
template <class T>
void validate_at(const T& x, const std::string& where) {
  try {
    x.validate();
  } catch (const LabError& e) {
    if (e.kind() != ErrorKind::Validation) throw;
    std::string msg = e.what();
    const std::string tag = std::string(to_string(ErrorKind::Validation)) + ": ";
    if (msg.rfind(tag, 0) == 0) msg.erase(0, tag.size());
    fail(ErrorKind::Validation, where + "." + msg);
  }
}

inline std::shared_ptr<const SegmentList> segments_from(const json& arr, const std::string& where) {
  if (!arr.is_array()) fail(ErrorKind::Validation, where + ": expected an array");
  std::vector<Segment> items;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string at = where + "[" + std::to_string(i) + "]";
    const json& s = arr[i];
    if (s.is_object() && s.contains("gap")) {
      if (!s["gap"].is_number()) fail(ErrorKind::Validation, at + ".gap: expected a number");
      items.push_back(Segment::gap(s["gap"].get<double>()));
    } else if (s.is_object() && s.contains("piece")) {
      const json& p = s["piece"];
      const json& b = field(p, "base", at + ".piece");
      if (!b.is_string()) fail(ErrorKind::Validation, at + ".piece.base: expected a string");
      items.push_back(Segment::piece(b.get<std::string>(), num(p, "shift", at + ".piece"),
                                     num(p, "timescale", at + ".piece"), num(p, "len", at + ".piece")));
    } else if (s.is_object() && s.contains("block")) {
      const json& b = s["block"];
      auto body = segments_from(field(b, "segments", at + ".block"), at + ".block.segments");
      if (body->items.empty()) fail(ErrorKind::Validation, at + ".block.segments: empty");
      items.push_back(Segment::block(body, integer(b, "repeat", at + ".block")));
    } else {
      fail(ErrorKind::Validation, at + ": expected {gap}, {piece} or {block}");
    }
  }
  return SegmentList::make(std::move(items));
}

inline ContinuumPotential continuum_from(const json& j, const std::string& where) {
  ContinuumPotential v;
  v.period = num(j, "period", where);
  v.zero_nbhd = j.contains("zero_nbhd") ? num(j, "zero_nbhd", where) : 0.0;
  if (j.contains("bases")) {
    if (!j["bases"].is_object()) fail(ErrorKind::Validation, where + ".bases: expected an object");
    for (const auto& [k, e] : j["bases"].items()) v.bases[k] = expr_from_json(e, where + ".bases." + k);
  }
  v.segments = segments_from(field(j, "segments", where), where + ".segments");
  validate_at(v, where);
  return v;
}

}  // namespace detail

inline Descriptor descriptor_from_json(const json& j, const std::string& where = "descriptor") {
  const json& kind = detail::field(j, "kind", where);
  if (!kind.is_string()) fail(ErrorKind::Validation, where + ".kind: expected a string");
  const auto k = kind.get<std::string>();
  if (k == "continuum-periodic") return detail::continuum_from(j, where);
  if (k == "discrete-periodic") {
    const json& vals = detail::field(j, "values", where);
    if (!vals.is_array() || vals.empty()) fail(ErrorKind::Validation, where + ".values: expected a non-empty array");
    DiscretePotential v;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (!vals[i].is_number())
        fail(ErrorKind::Validation, where + ".values[" + std::to_string(i) + "]: expected a number");
      v.values.push_back(vals[i].get<double>());
    }
    detail::validate_at(v, where);
    return v;
  }
  if (k == "discrete-family") {
    DiscreteFamily f;
    f.n0 = detail::num(j, "n0", where);
    f.n1 = detail::integer(j, "n1", where);
    f.expr = expr_from_json(detail::field(j, "expr", where), where + ".expr");
    detail::validate_at(f, where);
    return f;
  }
  if (k == "circle") {
    CirclePotential c;
    c.period = detail::integer(j, "period", where);
    c.const_nbhd = j.contains("const_nbhd") ? detail::num(j, "const_nbhd", where) : 0.0;
    c.expr = expr_from_json(detail::field(j, "expr", where), where + ".expr");
    detail::validate_at(c, where);
    return c;
  }
  if (k == "tower") {
    TowerDescriptor t;
    t.base = detail::continuum_from(detail::field(j, "base", where), where + ".base");
    const json& stages = detail::field(j, "stages", where);
    if (!stages.is_array()) fail(ErrorKind::Validation, where + ".stages: expected an array");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const std::string at = where + ".stages[" + std::to_string(i) + "]";
      const json& s = stages[i];
      const json& op = detail::field(s, "op", at);
      TowerDescriptor::Step step;
      step.op = op.is_string() ? op.get<std::string>() : "";
      if (step.op == "cover") {
        step.mult = detail::integer(s, "multiplicity", at);
        if (step.mult < 1) fail(ErrorKind::Validation, at + ".multiplicity: must be >= 1");
        if (s.contains("rho")) {
          const json& rho = s["rho"];
          if (!rho.is_array()) fail(ErrorKind::Validation, at + ".rho: expected an array");
          for (std::size_t k = 0; k < rho.size(); ++k) {
            const std::string wat = at + ".rho[" + std::to_string(k) + "]";
            RhoWindow w{detail::num(rho[k], "x0", wat), detail::num(rho[k], "x1", wat), detail::num(rho[k], "value", wat),
                        detail::num(rho[k], "ramp", wat)};
            if (!(w.x1 > w.x0)) fail(ErrorKind::Validation, wat + ".x1: must exceed x0");
            step.windows.push_back(w);
          }
        }
      } else if (step.op == "realize-pad") {
        step.padding = {detail::num(s, "delta", at), detail::integer(s, "N", at), detail::integer(s, "n", at)};
        step.eps0 = detail::num(s, "eps0", at);
      } else if (step.op == "realize-mix") {
        step.delta = detail::num(s, "delta", at);
        step.n = detail::integer(s, "n", at);
        step.big_n = detail::integer(s, "N", at);
        step.eps0 = detail::num(s, "eps0", at);
      } else {
        fail(ErrorKind::Validation, at + ".op: expected cover, realize-pad or realize-mix");
      }
      t.steps.push_back(step);
    }
    t.build();
    return t;
  }
  if (k == "smooth-family") {
    SmoothCocycleFamily f;
    f.lo = detail::num(j, "lo", where);
    f.hi = detail::num(j, "hi", where);
    f.inner_period = j.contains("inner_period") ? detail::integer(j, "inner_period", where) : 1;
    f.potential = expr_from_json(detail::field(j, "potential", where), where + ".potential");
    if (!(f.hi > f.lo)) fail(ErrorKind::Validation, where + ".hi: must exceed lo");
    if (f.inner_period < 1) fail(ErrorKind::Validation, where + ".inner_period: must be >= 1");
    return f;
  }
  fail(ErrorKind::Validation, where + ".kind: unknown kind '" + k + "'");
}

/// Canonical text: sorted keys, two-space indent, shortest round-trip numbers.
inline std::string canonical(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------- files

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Usage, path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary file in the same directory and renames it.
inline void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Usage, path + ": cannot write");
    out << content;
    if (!out) fail(ErrorKind::Usage, path + ": write failed");
  }
  fs::rename(tmp, target);
}

inline Descriptor load_descriptor(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Validation, path + ": not valid JSON (" + std::string(e.what()) + ")");
  }
  return descriptor_from_json(j, path);
}

inline void save_descriptor(const std::string& path, const Descriptor& d) { atomic_write(path, canonical(to_json(d))); }

/// CSV text with a header row; numbers in round-trip form.
inline std::string csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + fmt_double(r[i]);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------- cache

inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

/// Monodromies over an energy grid, memoized under $COCYCLE_LAB_CACHE when it
/// is set, keyed by the canonical descriptor and the grid bits.
template <class P>
std::vector<Mat2> monodromy_table(const P& v, const std::vector<double>& energies, int jobs = 1) {
  std::vector<Mat2> out(energies.size());
  const char* dir = std::getenv("COCYCLE_LAB_CACHE");
  std::filesystem::path file;
  if (dir && *dir) {
    const std::string desc = canonical(to_json(v));
    const std::uint64_t h1 = fnv1a(desc.data(), desc.size());
    const std::uint64_t h2 = fnv1a(energies.data(), energies.size() * sizeof(double));
    char name[64];
    std::snprintf(name, sizeof name, "mono-%016llx-%016llx.json", static_cast<unsigned long long>(h1),
                  static_cast<unsigned long long>(h2));
    file = std::filesystem::path(dir) / name;
    std::error_code ec;
    if (std::filesystem::exists(file, ec)) {
      try {
        const json j = json::parse(read_file(file.string()));
        if (j.size() == energies.size()) {
          for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = {j[i][0].get<double>(), j[i][1].get<double>(), j[i][2].get<double>(), j[i][3].get<double>()};
          return out;
        }
      } catch (const json::exception&) {
      }
    }
  }
  parallel_for(energies.size(), jobs, [&](std::size_t i) { out[i] = monodromy(v, energies[i]); });
  if (!file.empty()) {
    json j = json::array();
    for (const Mat2& m : out) j.push_back({m.a, m.b, m.c, m.d});
    atomic_write(file.string(), j.dump());
  }
  return out;
}

// ---------------------------------------------------------------- reports

inline json to_json(const Mat2& m) { return json::array({json::array({m.a, m.b}), json::array({m.c, m.d})}); }

inline json to_json(const ParsevalReport& r) {
  return {{"lhs", r.lhs}, {"rhs", r.rhs}, {"gap", r.gap}, {"grid", r.grid}};
}

inline json to_json(const B1Report& r) {
  return {{"B0", to_json(r.b0)}, {"B1", to_json(r.b1)}, {"secant_error", r.secant_error}};
}

inline json to_json(const WjStats& s) {
  return {{"mean_sum", s.mean_sum},
          {"p_below_c0", s.p_below_c0},
          {"bin_width", s.bin_width},
          {"histogram", s.histogram}};
}

inline json to_json(const GoodNiceReport& r) {
  return {{"good", r.good},
          {"nice", r.nice},
          {"sup_lyapunov", r.sup_lyapunov},
          {"ids_at_cap", r.ids_at_cap},
          {"density_integral", r.density_integral},
          {"ids_deficit", r.ids_deficit},
          {"sigma_measure", r.sigma_measure}};
}

inline json to_json(const CrookedReport& r) {
  return {{"eps1", r.eps1},
          {"C1", r.c1},
          {"M", r.m_cap},
          {"grid", r.grid},
          {"samples", r.samples},
          {"sigma_measure", r.sigma_measure},
          {"gamma_measure", r.gamma_measure},
          {"deficit", r.deficit},
          {"measure_band", r.measure_band},
          {"crooked", r.crooked},
          {"energies", r.energies},
          {"large_fraction", r.large_fraction}};
}

inline json to_json(const CrookedReduction& r) {
  return {{"C", r.c_avg},
          {"C0_needed", r.c0_needed},
          {"gamma_measure", r.gamma_measure},
          {"deficit", r.deficit},
          {"measure_band", r.measure_band},
          {"applicable", r.applicable},
          {"crooked", r.crooked}};
}

inline json to_json(const Lemma22Report& r) {
  const auto& p = r.params;
  json steps = json::array();
  for (const auto& s : r.steps)
    steps.push_back({{"index", s.index},
                     {"N", s.big_n},
                     {"n", s.small_n},
                     {"period", s.period},
                     {"dense_share", s.dense_share},
                     {"density_met", s.density_met},
                     {"drift_proxy", s.drift_proxy},
                     {"trace_proxy", s.trace_proxy},
                     {"proxies_met", s.proxies_met},
                     {"retained_before", s.retained_before},
                     {"retained", s.retained},
                     {"excluded_fraction", s.excluded_fraction},
                     {"cprime", s.cprime},
                     {"cprime_events", s.cprime_events},
                     {"cprime_exclusion", s.cprime_exclusion},
                     {"cprime_fit", s.cprime_fit},
                     {"gammas", p.gammas},
                     {"event_fraction", s.event_fraction}});
  json energies = json::array();
  for (const auto& e : r.energies)
    energies.push_back({{"E", e.energy},
                        {"dropped_at", e.dropped_at},
                        {"sup", e.sup},
                        {"avg0", e.avg0},
                        {"avg_lo", e.avg_lo},
                        {"avg_hi", e.avg_hi},
                        {"drift", e.drift}});
  return {{"delta", p.delta},
          {"xi", p.xi},
          {"C0", p.c0},
          {"M", p.m_cap},
          {"P", p.steps},
          {"kappa", p.kappa},
          {"sigma_measure", r.sigma_measure},
          {"measure_band", r.measure_band},
          {"C_measured", r.c_meas},
          {"C_start", r.c_lemma},
          {"start_count", r.start_count},
          {"retained_fraction", r.retained_fraction},
          {"sup_c0_fraction", r.sup_c0_fraction},
          {"worst_average_margin", r.worst_average_margin},
          {"averages_ok", r.averages_ok},
          {"steps", steps},
          {"energies", energies}};
}

inline json to_json(const Asd12Report& r) {
  const auto& p = r.params;
  json steps = json::array();
  for (const auto& s : r.steps)
    steps.push_back({{"index", s.index},
                     {"n0", s.n0},
                     {"n1", s.n1},
                     {"retained_before", s.retained_before},
                     {"retained", s.retained},
                     {"excluded_fraction", s.excluded_fraction},
                     {"slide_excluded_fraction", s.slide_excluded_fraction},
                     {"mean_slide_gain", s.mean_slide_gain},
                     {"max_slide_gain", s.max_slide_gain},
                     {"max_average", s.max_average},
                     {"max_closeness", s.max_closeness}});
  json energies = json::array();
  for (const auto& e : r.energies)
    energies.push_back({{"E", e.energy},
                        {"dropped_at", e.dropped_at},
                        {"closeness", e.closeness},
                        {"inf_sup", e.inf_sup},
                        {"slide_gain", e.slide_gain},
                        {"average", e.average}});
  return {{"lambda0", p.lambda0},
          {"J", {p.e_lo, p.e_hi}},
          {"delta", p.delta},
          {"N", {p.n2, p.n3, p.n4, p.n5}},
          {"steps_requested", p.steps},
          {"eps1", std::isfinite(p.eps1) ? json(p.eps1) : json("inf")},
          {"C", r.c_avg},
          {"C0", r.c0},
          {"threshold", r.threshold},
          {"bad_fraction", r.bad_fraction},
          {"cert_pairs", r.cert_pairs},
          {"certificate_ok", r.certificate_ok},
          {"steps", steps},
          {"energies", energies}};
}

inline json to_json(const NormalFormReport& r) {
  return {{"m", r.m},
          {"n", r.n},
          {"residual", r.residual},
          {"b_drift", r.b_drift},
          {"theta_drift", r.theta_drift},
          {"conjugation_error", r.conjugation_error}};
}

inline json to_json(const UniformnessReport& r) {
  return {{"pass", r.pass}, {"worst_s", r.worst_s}, {"worst_deficit", r.worst_deficit}, {"deficits", r.deficits}};
}

inline json to_json(const MixednessReport& r) {
  json rows = json::array();
  for (const auto& row : r.per_j)
    rows.push_back({{"j", row.j},
                    {"t", row.t},
                    {"u_measure", row.u_measure},
                    {"v_measure", row.v_measure},
                    {"from_metadata", row.from_metadata}});
  return {{"pass", r.pass}, {"per_j", rows}};
}

inline json to_json(const LiftCloseness& c) { return {{"flow_gap", c.flow_gap}, {"sample_gap", c.sample_gap}}; }

}  // namespace cocyclelab
