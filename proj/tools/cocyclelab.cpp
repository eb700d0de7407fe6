// cocyclelab: command-line front end over the header library.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cocyclelab/deform.hpp"
#include "cocyclelab/io.hpp"
#include "cocyclelab/parallel.hpp"

using namespace cocyclelab;

namespace {

// ---------------------------------------------------------------- config echo

json typed(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  char* end = nullptr;
  const long long i = std::strtoll(s.c_str(), &end, 10);
  if (!s.empty() && *end == '\0') return i;
  const double d = std::strtod(s.c_str(), &end);
  if (!s.empty() && *end == '\0') return d;
  return s;
}

std::string command_path(const CLI::App* app) {
  std::string path;
  for (; app && app->get_parent(); app = app->get_parent()) path = app->get_name() + (path.empty() ? "" : " " + path);
  return path;
}

/// Every resolved option of the verb except those that cannot change the
/// result (--jobs, --out) and the seed, which has its own field.
json config_of(const CLI::App* app) {
  json cfg = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "jobs" || name == "out" || name == "seed") continue;
    const bool list = opt->get_expected_max() > 1;
    std::vector<std::string> vals;
    if (opt->count() > 0) {
      vals = opt->results();
    } else {
      std::string d = opt->get_default_str();
      if (d.empty()) continue;
      if (list && d.size() >= 2 && d.front() == '[') d = d.substr(1, d.size() - 2);
      std::stringstream ss(d);
      for (std::string tok; std::getline(ss, tok, ',');) vals.push_back(tok);
    }
    if (list) {
      json arr = json::array();
      for (const auto& v : vals) arr.push_back(typed(v));
      cfg[name] = arr;
    } else {
      cfg[name] = typed(vals.empty() ? "" : vals.back());
    }
  }
  return cfg;
}

json envelope(const CLI::App* app, std::optional<std::uint64_t> seed) {
  return {{"tool", "cocyclelab"},
          {"version", kVersion},
          {"command", command_path(app)},
          {"config", config_of(app)},
          {"seed", seed ? json(*seed) : json(nullptr)}};
}

void write_out(const std::string& out, const std::string& text) {
  if (out == "-") std::cout << text;
  else atomic_write(out, text);
}

void emit_report(const CLI::App* app, const std::string& out, json report, std::optional<std::uint64_t> seed = {}) {
  json env = envelope(app, seed);
  env["report"] = std::move(report);
  write_out(out, canonical(env));
}

/// CSV and descriptor outputs keep their own format; the run record goes to
/// a sidecar next to them.
void emit_with_sidecar(const CLI::App* app, const std::string& out, const std::string& text) {
  write_out(out, text);
  if (out != "-") atomic_write(out + ".meta.json", canonical(envelope(app, std::nullopt)));
}

// ---------------------------------------------------------------- inputs

using Spectral = std::variant<ContinuumPotential, DiscretePotential>;

Spectral spectral_of(const Descriptor& d, double t, const std::string& path) {
  if (auto* c = std::get_if<ContinuumPotential>(&d)) return *c;
  if (auto* p = std::get_if<DiscretePotential>(&d)) return *p;
  if (auto* f = std::get_if<DiscreteFamily>(&d)) return f->slice(t);
  if (auto* c = std::get_if<CirclePotential>(&d)) return c->as_family().slice(t);
  fail(ErrorKind::Usage, path + ": expected a periodic potential or a family");
}

template <class T>
T expect(const std::string& path, const char* what) {
  const Descriptor d = load_descriptor(path);
  if (auto* x = std::get_if<T>(&d)) return *x;
  fail(ErrorKind::Usage, path + ": expected a " + std::string(what) + " descriptor");
}

DiscreteFamily family_of(const std::string& path) {
  const Descriptor d = load_descriptor(path);
  if (auto* f = std::get_if<DiscreteFamily>(&d)) return *f;
  if (auto* c = std::get_if<CirclePotential>(&d)) return c->as_family();
  fail(ErrorKind::Usage, path + ": expected a discrete-family or circle descriptor");
}

TowerDescriptor tower_of(const std::string& path) {
  const Descriptor d = load_descriptor(path);
  if (auto* t = std::get_if<TowerDescriptor>(&d)) return *t;
  if (auto* c = std::get_if<ContinuumPotential>(&d)) return TowerDescriptor{*c, {}};
  fail(ErrorKind::Usage, path + ": expected a tower or continuum-periodic descriptor");
}

std::vector<double> linspace(double lo, double hi, long points) {
  if (points < 1) fail(ErrorKind::Usage, "--points must be >= 1");
  std::vector<double> out(static_cast<std::size_t>(points));
  for (long i = 0; i < points; ++i)
    out[static_cast<std::size_t>(i)] = points == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (points - 1);
  return out;
}

/// x rounded to the decimals of tol, trailing zeros dropped.
std::string at_resolution(double x, double tol) {
  const int digits = std::clamp(static_cast<int>(std::ceil(-std::log10(tol))), 0, 17);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  std::string s = buf;
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

double lyapunov_from_trace(double tr, double period) {
  const double t = std::abs(tr);
  if (t <= 2.0) return 0.0;
  return std::log(0.5 * t + std::sqrt(0.25 * t * t - 1.0)) / period;
}

StagePtr pick_stage(const std::vector<StagePtr>& stages, long index) {
  const long n = static_cast<long>(stages.size());
  const long k = index < 0 ? n + index : index;
  if (k < 0 || k >= n) fail(ErrorKind::Usage, "--stage out of range (tower has " + std::to_string(n) + " stages)");
  return stages[static_cast<std::size_t>(k)];
}

// ---------------------------------------------------------------- options

struct Opts {
  std::string potential, in, out, family;
  double emin = 0.0, emax = 0.0, t = 0.0, tol = 1e-10, t0 = 0.0;
  long points = 101;
  int quad = 256, samples = 1024;

  double delta = 0.05, eps0 = 0.1;
  long big_n = 8, n = 16;

  long stage = -1;
  double tmax = 0.0;
  int trace_samples = 1001, mix_samples = 4096;
  long mix_n = 0;

  std::uint64_t seed = 0;
  long grid = 2000;
  double lambda_max = 0.3, theta = 0.25, s = 1e-3;
  long instances = 1;
  std::vector<long> ns{0, 10, 25};
  std::vector<int> ms{2, 3};
  std::vector<long> decay_ns{16, 32, 64, 128, 256};
  int energies = 9, t_grid = 256, s_samples = 16, band_quad = 512;
  long parseval_grid = 16384;
  double eps = 1e-2, c_cut = 10.0, m_cap = 30.0, eps1 = 0.1, c1 = 2.0;

  Lemma22Params l22;
  Asd12Params asd;
  std::optional<double> asd_eps1;
  RandomModelSpec wj;

  int jobs = 1;
};

struct Verb {
  CLI::App* app;
  std::function<void(const CLI::App*)> run;
};

class Cli {
 public:
  Cli() {
    root.require_subcommand(1);
    root.option_defaults()->always_capture_default();
    root.set_version_flag("--version", kVersion);
    spectral();
    deform();
    tower();
    verify();
  }

  CLI::App root{"Periodic Schrodinger cocycles: spectra, deformations, towers and lab checks.", "cocyclelab"};

  /// The selected leaf verb and its action.
  const Verb* chosen() const {
    for (const auto& v : verbs_)
      if (v.app->parsed()) return &v;
    return nullptr;
  }

 private:
  Opts o;
  std::vector<Verb> verbs_;

  CLI::App* leaf(CLI::App* parent, const std::string& name, const std::string& desc,
                 std::function<void(const CLI::App*)> run) {
    CLI::App* app = parent->add_subcommand(name, desc);
    app->add_option("--out", o.out, "output path, - for stdout")->required();
    verbs_.push_back({app, std::move(run)});
    return app;
  }
  CLI::App* group(const std::string& name, const std::string& desc) {
    CLI::App* app = root.add_subcommand(name, desc);
    app->require_subcommand(1);
    return app;
  }
  void jobs(CLI::App* app) { app->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber); }
  void seed(CLI::App* app) { app->add_option("--seed", o.seed, "generator seed")->required(); }
  void potential(CLI::App* app) { app->add_option("--potential", o.potential, "descriptor path")->required(); }
  void range(CLI::App* app) {
    app->add_option("--emin", o.emin, "lowest energy")->required();
    app->add_option("--emax", o.emax, "highest energy")->required();
    app->add_option("--points", o.points, "energies on the grid");
    app->add_option("--t", o.t, "slice parameter for families");
  }

  void table(const std::string& name, const std::string& desc,
             std::function<std::vector<double>(const Spectral&, const std::vector<double>&)> eval,
             std::function<void(CLI::App*)> extra = nullptr) {
    CLI::App* app = leaf(&root, name, desc, [this, eval](const CLI::App* a) {
      const Spectral v = spectral_of(load_descriptor(o.potential), o.t, o.potential);
      const auto es = linspace(o.emin, o.emax, o.points);
      const auto vals = eval(v, es);
      std::vector<std::vector<double>> rows;
      for (std::size_t i = 0; i < es.size(); ++i) rows.push_back({es[i], vals[i]});
      emit_with_sidecar(a, o.out, csv({"E", "value"}, rows));
    });
    potential(app);
    range(app);
    if (extra) extra(app);
  }

  void spectral() {
    CLI::App* bands = leaf(&root, "bands", "band edges inside [emin, emax] as E_lo,E_hi", [this](const CLI::App* a) {
      const Spectral v = spectral_of(load_descriptor(o.potential), o.t, o.potential);
      const BandSet b = std::visit([&](const auto& p) { return band_spectrum(p, o.emin, o.emax, o.tol); }, v);
      std::string text = "E_lo,E_hi\n";
      for (const Band& band : b.bands) text += at_resolution(band.lo, o.tol) + "," + at_resolution(band.hi, o.tol) + "\n";
      emit_with_sidecar(a, o.out, text);
    });
    potential(bands);
    bands->add_option("--emin", o.emin, "lowest energy")->required();
    bands->add_option("--emax", o.emax, "highest energy")->required();
    bands->add_option("--tol", o.tol, "edge tolerance")->check(CLI::PositiveNumber);
    bands->add_option("--t", o.t, "slice parameter for families");

    table("ids", "integrated density of states as E,value", [](const Spectral& v, const std::vector<double>& es) {
      return std::visit(
          [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            IdsTable<P> tab(p, bands_from_bottom(p, es.back() + 1.0));
            std::vector<double> out;
            for (double e : es) out.push_back(tab(e));
            return out;
          },
          v);
    });
    table("lyapunov", "Lyapunov exponent as E,value", [](const Spectral& v, const std::vector<double>& es) {
      return std::visit(
          [&](const auto& p) {
            std::vector<double> out;
            for (double e : es) out.push_back(lyapunov(p, e));
            return out;
          },
          v);
    });
    table(
        "density", "density of states as E,value; 0 off the spectrum",
        [this](const Spectral& v, const std::vector<double>& es) {
          std::vector<double> out;
          for (double e : es) {
            if (!std::visit([&](const auto& p) { return is_elliptic(monodromy(p, e)); }, v)) out.push_back(0.0);
            else if (auto* c = std::get_if<ContinuumPotential>(&v)) out.push_back(ids_density_continuum(*c, e, o.quad));
            else out.push_back(ids_density_discrete(std::get<DiscretePotential>(v), e));
          }
          return out;
        },
        [this](CLI::App* app) { app->add_option("--quad", o.quad, "quadrature points over the period"); });
    table(
        "growth", "growth functional as E,value; nan off the spectrum",
        [this](const Spectral& v, const std::vector<double>& es) {
          return std::visit(
              [&](const auto& p) {
                std::vector<double> out;
                for (double e : es)
                  out.push_back(is_elliptic(monodromy(p, e)) ? growth_functional(p, e, o.t0, o.samples)
                                                             : std::numeric_limits<double>::quiet_NaN());
                return out;
              },
              v);
        },
        [this](CLI::App* app) {
          app->add_option("--t0", o.t0, "basepoint");
          app->add_option("--samples", o.samples, "basepoints over the period");
        });

    CLI::App* sweep = leaf(&root, "sweep", "E,trace,lyapunov,ids over an energy grid", [this](const CLI::App* a) {
      const Spectral v = spectral_of(load_descriptor(o.potential), o.t, o.potential);
      const auto es = linspace(o.emin, o.emax, o.points);
      const auto rows = std::visit(
          [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            const auto monos = monodromy_table(p, es, o.jobs);
            IdsTable<P> tab(p, bands_from_bottom(p, std::max(es.front(), es.back()) + 1.0));
            std::vector<std::vector<double>> out(es.size());
            parallel_for(es.size(), o.jobs, [&](std::size_t i) {
              const double tr = monos[i].trace();
              out[i] = {es[i], tr, lyapunov_from_trace(tr, period_length(p)), tab(es[i])};
            });
            return out;
          },
          v);
      emit_with_sidecar(a, o.out, csv({"E", "trace", "lyapunov", "ids"}, rows));
    });
    potential(sweep);
    range(sweep);
    jobs(sweep);
  }

  void deform() {
    CLI::App* g = group("deform", "deformation operators on descriptors");
    auto save = [this](const CLI::App* a, const Descriptor& d) { emit_with_sidecar(a, o.out, canonical(to_json(d))); };

    CLI::App* pad_app = leaf(g, "pad", "(delta, N, n)-padding of a continuum potential", [this, save](const CLI::App* a) {
      save(a, pad(expect<ContinuumPotential>(o.in, "continuum-periodic"), PaddingSpec{o.delta, o.big_n, o.n}));
    });
    pad_app->add_option("--in", o.in, "input descriptor")->required();
    pad_app->add_option("--delta", o.delta, "padding amplitude")->required();
    pad_app->add_option("--N", o.big_n, "profile exponent")->required();
    pad_app->add_option("--n", o.n, "half the number of blocks")->required();

    CLI::App* simple = leaf(g, "pad-simple", "n-fold repetition with a delta gap at the end", [this, save](const CLI::App* a) {
      save(a, pad_simple(expect<ContinuumPotential>(o.in, "continuum-periodic"), o.delta, o.n));
    });
    simple->add_option("--in", o.in, "input descriptor")->required();
    simple->add_option("--delta", o.delta, "gap length")->required();
    simple->add_option("--n", o.n, "repetitions")->required();

    CLI::App* rep = leaf(g, "repeat", "n-fold repetition of a family", [this, save](const CLI::App* a) {
      save(a, repeat_family(family_of(o.in), o.n));
    });
    rep->add_option("--in", o.in, "input descriptor")->required();
    rep->add_option("--n", o.n, "repetitions")->required();

    CLI::App* tw = leaf(g, "twist", "twist of a family", [this, save](const CLI::App* a) {
      save(a, twist_family(family_of(o.in), o.n));
    });
    tw->add_option("--in", o.in, "input descriptor")->required();
    tw->add_option("--n", o.n, "twist count")->required();

    CLI::App* sl = leaf(g, "slide", "slide of a family", [this, save](const CLI::App* a) {
      save(a, slide_family(family_of(o.in), o.delta, o.n));
    });
    sl->add_option("--in", o.in, "input descriptor")->required();
    sl->add_option("--delta", o.delta, "slide amplitude")->required();
    sl->add_option("--n", o.n, "slide count")->required();

    CLI::App* cr = leaf(g, "crumble", "crumbling of a circle potential", [this, save](const CLI::App* a) {
      save(a, crumble(expect<CirclePotential>(o.in, "circle"), o.n));
    });
    cr->add_option("--in", o.in, "input descriptor")->required();
    cr->add_option("--n", o.n, "crumbling factor")->required();
  }

  void tower() {
    CLI::App* g = group("tower", "flow towers over a continuum potential");

    CLI::App* rp = leaf(g, "realize-pad", "append a realized padding stage", [this](const CLI::App* a) {
      TowerDescriptor t = tower_of(o.in);
      TowerDescriptor::Step s;
      s.op = "realize-pad";
      s.padding = {o.delta, o.big_n, o.n};
      s.eps0 = o.eps0;
      t.steps.push_back(s);
      emit_with_sidecar(a, o.out, canonical(to_json(t)));
    });
    rp->add_option("--in", o.in, "tower or continuum descriptor")->required();
    rp->add_option("--delta", o.delta, "padding amplitude")->required();
    rp->add_option("--N", o.big_n, "profile exponent")->required();
    rp->add_option("--n", o.n, "half the number of blocks")->required();
    rp->add_option("--eps0", o.eps0, "trailing zero window")->required();

    CLI::App* rm = leaf(g, "realize-mix", "append a realized mixing stage", [this](const CLI::App* a) {
      TowerDescriptor t = tower_of(o.in);
      TowerDescriptor::Step s;
      s.op = "realize-mix";
      s.delta = o.delta;
      s.n = o.n;
      s.big_n = o.big_n;
      s.eps0 = o.eps0;
      t.steps.push_back(s);
      emit_with_sidecar(a, o.out, canonical(to_json(t)));
    });
    rm->add_option("--in", o.in, "tower or continuum descriptor")->required();
    rm->add_option("--delta", o.delta, "gap length")->required();
    rm->add_option("--n", o.n, "repetitions")->required();
    rm->add_option("--N", o.big_n, "mixing resolution")->required();
    rm->add_option("--eps0", o.eps0, "trailing zero window")->required();

    CLI::App* tr = leaf(g, "trace", "potential along the flow as t,V", [this](const CLI::App* a) {
      const auto stages = tower_of(o.in).build();
      const StagePtr st = pick_stage(stages, o.stage);
      const double tmax = o.tmax > 0.0 ? o.tmax : st->period();
      std::vector<std::vector<double>> rows;
      for (const auto& smp : potential_trace(*st, tmax, o.trace_samples)) rows.push_back({smp.t, smp.value});
      emit_with_sidecar(a, o.out, csv({"t", "V"}, rows));
    });
    tr->add_option("--in", o.in, "tower descriptor")->required();
    tr->add_option("--stage", o.stage, "stage index, negative from the end");
    tr->add_option("--tmax", o.tmax, "time span, 0 for one period");
    tr->add_option("--samples", o.trace_samples, "sample count")->check(CLI::PositiveNumber);

    CLI::App* mx = leaf(g, "mixedness", "finite-stage mixedness of a stage over its parent", [this](const CLI::App* a) {
      const auto stages = tower_of(o.in).build();
      const StagePtr child = pick_stage(stages, o.stage);
      if (!child->parent()) fail(ErrorKind::Usage, "--stage: the base stage has no parent");
      const long big_n = o.mix_n > 0 ? o.mix_n : child->mixing_N;
      if (big_n < 1) fail(ErrorKind::Usage, "--N: required for stages without mixing metadata");
      const auto rep = mixedness_check(*child, *child->parent(), big_n, o.mix_samples);
      json out = to_json(rep);
      out["N"] = big_n;
      out["closeness"] = to_json(lift_closeness(*child, *child->parent()));
      emit_report(a, o.out, out);
    });
    mx->add_option("--in", o.in, "tower descriptor")->required();
    mx->add_option("--stage", o.stage, "stage index, negative from the end");
    mx->add_option("--N", o.mix_n, "mixing resolution, 0 for the stage metadata");
    mx->add_option("--samples", o.mix_samples, "x-samples for the window measures");
  }

  void verify() {
    CLI::App* g = group("verify", "lab checks producing JSON reports");

    CLI::App* l22 = leaf(g, "lemma22", "iterated padding pipeline on a continuum potential", [this](const CLI::App* a) {
      Lemma22Params p = o.l22;
      p.jobs = o.jobs;
      const auto rep = run_lemma22(expect<ContinuumPotential>(o.potential, "continuum-periodic"), p);
      emit_report(a, o.out, to_json(rep));
    });
    potential(l22);
    l22->add_option("--delta", o.l22.delta, "padding amplitude");
    l22->add_option("--xi", o.l22.xi, "total deformation budget");
    l22->add_option("--C0", o.l22.c0, "growth threshold");
    l22->add_option("--M", o.l22.m_cap, "energy cap");
    l22->add_option("--kappa", o.l22.kappa, "drift tolerance");
    l22->add_option("--grid", o.l22.energy_grid, "energies on the spectrum");
    l22->add_option("--steps", o.l22.steps, "padding steps");
    jobs(l22);

    CLI::App* asd = leaf(g, "asd12", "composite twist/slide pipeline on the discrete family", [this](const CLI::App* a) {
      Asd12Params p = o.asd;
      if (o.asd_eps1) p.eps1 = *o.asd_eps1;
      p.jobs = o.jobs;
      emit_report(a, o.out, to_json(run_asd12(p)));
    });
    asd->add_option("--lambda0", o.asd.lambda0, "coupling of the starting family");
    asd->add_option("--delta", o.asd.delta, "slide amplitude");
    asd->add_option("--grid", o.asd.energy_grid, "energies on the interval");
    asd->add_option("--steps", o.asd.steps, "composite steps");
    asd->add_option("--n2", o.asd.n2, "repetitions");
    asd->add_option("--n3", o.asd.n3, "first twist");
    asd->add_option("--n4", o.asd.n4, "slide count");
    asd->add_option("--n5", o.asd.n5, "second twist");
    asd->add_option("--eps1", o.asd_eps1, "closeness cut, unset for none");
    asd->add_option("--C0", o.asd.c0, "growth constant, 0 for the least inf-sup");
    jobs(asd);

    CLI::App* pv = leaf(g, "parseval", "rotation-averaged product size vs the sum of sizes", [this](const CLI::App* a) {
      if (o.instances < 1) fail(ErrorKind::Usage, "--instances must be >= 1");
      std::vector<CarlesonInstance> inst(static_cast<std::size_t>(o.instances));
      std::vector<ParsevalReport> reps(inst.size());
      parallel_for(inst.size(), o.jobs, [&](std::size_t k) {
        inst[k] = carleson_random_instance(o.n, o.lambda_max, o.seed, k);
        reps[k] = carleson_parseval(inst[k].matrices(), o.parseval_grid);
      });
      json rows = json::array();
      double worst = 0.0;
      for (std::size_t k = 0; k < inst.size(); ++k) {
        json r = to_json(reps[k]);
        r["lambdas"] = inst[k].lambdas;
        r["betas"] = inst[k].betas;
        rows.push_back(r);
        worst = std::max(worst, reps[k].gap);
      }
      emit_report(a, o.out, {{"max_gap", worst}, {"instances", rows}}, o.seed);
    });
    pv->add_option("--n", o.n, "factors")->required();
    pv->add_option("--grid", o.parseval_grid, "rotation grid");
    pv->add_option("--lambda-max", o.lambda_max, "largest log-singular value");
    pv->add_option("--instances", o.instances, "random instances");
    seed(pv);
    jobs(pv);

    CLI::App* b1 = leaf(g, "b1", "first-order expansion of the rotated product", [this](const CLI::App* a) {
      const auto inst = carleson_random_instance(o.n, o.lambda_max, o.seed);
      json r = to_json(carleson_b1(inst.lambdas, inst.betas, o.n, o.theta, o.s));
      r["lambdas"] = inst.lambdas;
      r["betas"] = inst.betas;
      emit_report(a, o.out, r, o.seed);
    });
    b1->add_option("--n", o.n, "factors")->required();
    b1->add_option("--lambda-max", o.lambda_max, "largest log-singular value");
    b1->add_option("--theta", o.theta, "rotation");
    b1->add_option("--s", o.s, "secant step");
    seed(b1);
    jobs(b1);

    CLI::App* sp = leaf(g, "spectral-parseval", "spectral mass of the Bloch solutions and the band bound",
                        [this](const CLI::App* a) {
                          const auto v = expect<DiscretePotential>(o.potential, "discrete-periodic");
                          const BandSet bands = bands_from_bottom(v, 0.0);
                          std::vector<json> rows(o.ns.size());
                          parallel_for(o.ns.size(), o.jobs, [&](std::size_t k) {
                            rows[k] = {{"n", o.ns[k]},
                                       {"parseval", spectral_parseval(v, o.ns[k], o.band_quad)},
                                       {"band_bound", band_norm_bound(v, 0, o.ns[k], bands, o.band_quad)}};
                          });
                          emit_report(a, o.out, {{"spectrum_measure", bands.measure()}, {"rows", rows}});
                        });
    potential(sp);
    sp->add_option("--n", o.ns, "sites")->expected(1, -1);
    sp->add_option("--quad", o.band_quad, "quadrature points per band");
    jobs(sp);

    CLI::App* sd = leaf(g, "slowdecay", "normal-form residuals as m,n,residual,B_drift,theta_drift",
                        [this](const CLI::App* a) {
                          SmoothCocycleFamily f = smooth_cos_family();
                          if (!o.family.empty()) f = expect<SmoothCocycleFamily>(o.family, "smooth-family");
                          const auto es = f.energy_grid(o.energies);
                          std::vector<std::vector<double>> rows;
                          for (int m : o.ms)
                            for (long n : o.decay_ns) {
                              const auto r = normal_form(f, m, n, es, o.t_grid, o.jobs);
                              rows.push_back({static_cast<double>(m), static_cast<double>(n), r.residual, r.b_drift,
                                              r.theta_drift});
                            }
                          emit_with_sidecar(a, o.out, csv({"m", "n", "residual", "B_drift", "theta_drift"}, rows));
                        });
    sd->add_option("--family", o.family, "smooth-family descriptor, bundled family when omitted");
    sd->add_option("--m", o.ms, "stages")->expected(1, -1);
    sd->add_option("--n", o.decay_ns, "slowness values")->expected(1, -1);
    sd->add_option("--energies", o.energies, "energies on the family interval");
    sd->add_option("--t-grid", o.t_grid, "t samples");
    jobs(sd);

    CLI::App* un = leaf(g, "uniform", "uniformness of the density of states below the cap", [this](const CLI::App* a) {
      const auto v = expect<ContinuumPotential>(o.potential, "continuum-periodic");
      emit_report(a, o.out, to_json(uniformness_check(v, o.eps, o.c_cut, o.m_cap, o.s_samples, o.quad)));
    });
    potential(un);
    un->add_option("--eps", o.eps, "allowed deficit");
    un->add_option("--C", o.c_cut, "density cut");
    un->add_option("--M", o.m_cap, "energy cap");
    un->add_option("--s-samples", o.s_samples, "basepoints");
    un->add_option("--quad", o.quad, "quadrature points");
    jobs(un);

    CLI::App* ck = leaf(g, "crooked", "measure of energies with large growth", [this](const CLI::App* a) {
      const Spectral v = spectral_of(load_descriptor(o.potential), 0.0, o.potential);
      const auto rep = std::visit(
          [&](const auto& p) { return crooked_metric(p, o.eps1, o.c1, o.m_cap, o.grid, o.samples, o.jobs); }, v);
      emit_report(a, o.out, to_json(rep));
    });
    potential(ck);
    ck->add_option("--eps1", o.eps1, "allowed deficit");
    ck->add_option("--C1", o.c1, "growth threshold");
    ck->add_option("--M", o.m_cap, "energy cap");
    ck->add_option("--grid", o.grid, "energies on the spectrum");
    ck->add_option("--samples", o.samples, "basepoints");
    jobs(ck);

    CLI::App* gn = leaf(g, "good-nice", "zero Lyapunov exponent and full density below the cap", [this](const CLI::App* a) {
      const Spectral v = spectral_of(load_descriptor(o.potential), 0.0, o.potential);
      const auto rep =
          std::visit([&](const auto& p) { return good_nice_metrics(p, o.eps, o.m_cap, o.grid, o.quad); }, v);
      emit_report(a, o.out, to_json(rep));
    });
    potential(gn);
    gn->add_option("--eps", o.eps, "allowed deficit");
    gn->add_option("--M", o.m_cap, "energy cap");
    gn->add_option("--grid", o.grid, "energies on the spectrum");
    gn->add_option("--quad", o.quad, "quadrature points");
    jobs(gn);

    CLI::App* wj = leaf(g, "wj-model", "random model for the sum of growth gains", [this](const CLI::App* a) {
      RandomModelSpec spec = o.wj;
      spec.seed = o.seed;
      if (spec.P == 0 && spec.delta > 0.0) spec.P = static_cast<long>(std::floor(1.0 / spec.delta + 1e-9));
      json r = to_json(wj_model(spec, o.jobs));
      r["P"] = spec.P;
      emit_report(a, o.out, r, o.seed);
    });
    wj->add_option("--delta", o.wj.delta, "step size");
    wj->add_option("--R", o.wj.R, "resolution");
    wj->add_option("--cprime", o.wj.cprime, "tail constant");
    wj->add_option("--P", o.wj.P, "steps, 0 for floor(1/delta)");
    wj->add_option("--trials", o.wj.trials, "trials");
    wj->add_option("--c0", o.wj.c0, "threshold");
    wj->add_option("--bins", o.wj.bins, "histogram bins");
    seed(wj);
    jobs(wj);
  }
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Usage:
    case ErrorKind::Validation: return 2;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  Cli cli;
  try {
    cli.root.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.root.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const Verb* v = cli.chosen();
  if (!v) {
    std::cerr << "cocyclelab: no command given\n";
    return 2;
  }
  try {
    v->run(v->app);
  } catch (const LabError& e) {
    std::cerr << "cocyclelab: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "cocyclelab: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
