#pragma once

// Closed-form expression trees in two variables (t, j), used for potential
// profiles and one-parameter families. Trees are immutable and shared.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "cocyclelab/error.hpp"
#include "cocyclelab/sl2.hpp"

namespace cocyclelab {

enum class Op { Const, T, J, Add, Mul, Cos2pi, Sin2pi, Bump, Psi, Mod, Floor, Ge, Subst };

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  Op op = Op::Const;
  double value = 0.0;
  std::vector<Expr> args;
  // Subst only: replacement for t and optionally j.
  Expr sub_t, sub_j;
};

/// exp(-1/x) cutoff glued into a C-infinity step from 0 (x<=0) to 1 (x>=1).
inline double smooth_step(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double f0 = std::exp(-1.0 / x), f1 = std::exp(-1.0 / (1.0 - x));
  return f0 / (f0 + f1);
}

/// Smooth bump supported on [0,1] with peak value 1 at 1/2.
inline double bump_profile(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  const double y = 2.0 * x - 1.0;
  return std::exp(1.0 - 1.0 / (1.0 - y * y));
}

/// Plateau profile on [-1,2]: 0 on [-1,-3/4] and [7/4,2], 1 on [-1/4,5/4],
/// smooth monotone ramps in between, 0 outside [-1,2].
inline double psi_profile(double x) {
  if (x <= -0.75 || x >= 1.75) return 0.0;
  if (x < -0.25) return smooth_step(2.0 * (x + 0.75));
  if (x <= 1.25) return 1.0;
  return smooth_step(2.0 * (1.75 - x));
}

/// Mathematical modulus with result in [0, m).
inline double fmod_pos(double x, double m) {
  double r = std::fmod(x, m);
  if (r < 0.0) r += m;
  if (r >= m) r -= m;
  return r;
}

namespace expr {

inline Expr make(Op op, std::vector<Expr> args = {}, double value = 0.0) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->value = value;
  n->args = std::move(args);
  return n;
}

inline Expr constant(double v) { return make(Op::Const, {}, v); }
inline Expr t() { return make(Op::T); }
inline Expr j() { return make(Op::J); }
inline Expr add(Expr a, Expr b) { return make(Op::Add, {std::move(a), std::move(b)}); }
inline Expr add(std::vector<Expr> xs) { return make(Op::Add, std::move(xs)); }
inline Expr mul(Expr a, Expr b) { return make(Op::Mul, {std::move(a), std::move(b)}); }
inline Expr scale(double s, Expr a) { return mul(constant(s), std::move(a)); }
inline Expr shift(Expr a, double s) { return add(std::move(a), constant(s)); }
inline Expr cos2pi(Expr a) { return make(Op::Cos2pi, {std::move(a)}); }
inline Expr sin2pi(Expr a) { return make(Op::Sin2pi, {std::move(a)}); }
inline Expr bump(Expr a) { return make(Op::Bump, {std::move(a)}); }
inline Expr psi(Expr a) { return make(Op::Psi, {std::move(a)}); }
inline Expr mod(Expr a, double m) { return make(Op::Mod, {std::move(a)}, m); }
inline Expr floor(Expr a) { return make(Op::Floor, {std::move(a)}); }
/// Indicator of a >= c.
inline Expr ge(Expr a, double c) { return make(Op::Ge, {std::move(a)}, c); }

/// body with t replaced by `new_t` (and j by `new_j` when given).
inline Expr subst(Expr body, Expr new_t, Expr new_j = nullptr) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Subst;
  n->args = {std::move(body)};
  n->sub_t = std::move(new_t);
  n->sub_j = std::move(new_j);
  return n;
}

}  // namespace expr

inline double eval(const ExprNode& e, double t, double j) {
  switch (e.op) {
    case Op::Const: return e.value;
    case Op::T: return t;
    case Op::J: return j;
    case Op::Add: {
      double s = 0.0;
      for (const auto& a : e.args) s += eval(*a, t, j);
      return s;
    }
    case Op::Mul: {
      double p = 1.0;
      for (const auto& a : e.args) p *= eval(*a, t, j);
      return p;
    }
    case Op::Cos2pi: return std::cos(kTwoPi * eval(*e.args[0], t, j));
    case Op::Sin2pi: return std::sin(kTwoPi * eval(*e.args[0], t, j));
    case Op::Bump: return bump_profile(eval(*e.args[0], t, j));
    case Op::Psi: return psi_profile(eval(*e.args[0], t, j));
    case Op::Mod: return fmod_pos(eval(*e.args[0], t, j), e.value);
    case Op::Floor: return std::floor(eval(*e.args[0], t, j));
    case Op::Ge: return eval(*e.args[0], t, j) >= e.value ? 1.0 : 0.0;
    case Op::Subst: {
      const double nt = e.sub_t ? eval(*e.sub_t, t, j) : t;
      const double nj = e.sub_j ? eval(*e.sub_j, t, j) : j;
      return eval(*e.args[0], nt, nj);
    }
  }
  return 0.0;
}

inline double eval(const Expr& e, double t, double j = 0.0) { return eval(*e, t, j); }

namespace detail {

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::Cos2pi: return "cos2pi";
    case Op::Sin2pi: return "sin2pi";
    case Op::Bump: return "bump";
    case Op::Psi: return "psi";
    case Op::Mod: return "mod";
    case Op::Floor: return "floor";
    case Op::Ge: return "ge";
    case Op::Subst: return "subst";
    default: return "";
  }
}

inline std::size_t op_arity(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Mul: return 0;  // variadic, at least one
    default: return 1;
  }
}

}  // namespace detail

inline nlohmann::json to_json(const Expr& e) {
  using nlohmann::json;
  switch (e->op) {
    case Op::Const: return e->value;
    case Op::T: return "t";
    case Op::J: return "j";
    case Op::Subst: {
      json out = {{"op", "subst"}, {"body", to_json(e->args[0])}};
      if (e->sub_t) out["t"] = to_json(e->sub_t);
      if (e->sub_j) out["j"] = to_json(e->sub_j);
      return out;
    }
    default: {
      json args = json::array();
      for (const auto& a : e->args) args.push_back(to_json(a));
      json out = {{"op", detail::op_name(e->op)}, {"args", args}};
      if (e->op == Op::Mod || e->op == Op::Ge) out["param"] = e->value;
      return out;
    }
  }
}

inline Expr expr_from_json(const nlohmann::json& j, const std::string& where = "expr") {
  if (j.is_number()) return expr::constant(j.get<double>());
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "t") return expr::t();
    if (s == "j") return expr::j();
    fail(ErrorKind::Validation, where + ": unknown variable '" + s + "'");
  }
  if (!j.is_object() || !j.contains("op") || !j["op"].is_string())
    fail(ErrorKind::Validation, where + ": expected number, variable or {op: ...}");
  const auto name = j["op"].get<std::string>();
  if (name == "subst") {
    if (!j.contains("body")) fail(ErrorKind::Validation, where + ".body: missing");
    Expr body = expr_from_json(j["body"], where + ".body");
    Expr nt = j.contains("t") ? expr_from_json(j["t"], where + ".t") : nullptr;
    Expr nj = j.contains("j") ? expr_from_json(j["j"], where + ".j") : nullptr;
    return expr::subst(body, nt, nj);
  }
  static const std::pair<const char*, Op> table[] = {
      {"add", Op::Add},   {"mul", Op::Mul},     {"cos2pi", Op::Cos2pi}, {"sin2pi", Op::Sin2pi},
      {"bump", Op::Bump}, {"psi", Op::Psi},     {"mod", Op::Mod},       {"floor", Op::Floor},
      {"ge", Op::Ge}};
  for (const auto& [n, op] : table) {
    if (name != n) continue;
    if (!j.contains("args") || !j["args"].is_array())
      fail(ErrorKind::Validation, where + ".args: missing");
    std::vector<Expr> args;
    for (std::size_t k = 0; k < j["args"].size(); ++k)
      args.push_back(expr_from_json(j["args"][k], where + ".args[" + std::to_string(k) + "]"));
    const std::size_t want = detail::op_arity(op);
    if ((want == 0 && args.empty()) || (want != 0 && args.size() != want))
      fail(ErrorKind::Validation, where + ": wrong number of arguments for '" + name + "'");
    double param = 0.0;
    if (op == Op::Mod || op == Op::Ge) {
      if (!j.contains("param") || !j["param"].is_number())
        fail(ErrorKind::Validation, where + ".param: missing");
      param = j["param"].get<double>();
      if (op == Op::Mod && !(param > 0.0)) fail(ErrorKind::Validation, where + ".param: must be positive");
    }
    return expr::make(op, std::move(args), param);
  }
  fail(ErrorKind::Validation, where + ": unknown op '" + name + "'");
}

}  // namespace cocyclelab
