#pragma once

// Potential representations: exact segment lists for periodic potentials on
// the line, periodic sequences, one-parameter discrete families, and circle
// potentials viewed as families.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cocyclelab/error.hpp"
#include "cocyclelab/expr.hpp"

namespace cocyclelab {

struct SegmentList;

struct Segment {
  enum class Kind { Gap, Piece, Block };
  Kind kind = Kind::Gap;
  double len = 0.0;
  // Piece: t -> base(t * timescale + shift), t local to the segment.
  std::string base;
  double shift = 0.0;
  double timescale = 1.0;
  // Block: `repeat` consecutive copies of `body`.
  std::shared_ptr<const SegmentList> body;
  long repeat = 1;

  static Segment gap(double len) {
    Segment s;
    s.kind = Kind::Gap;
    s.len = len;
    return s;
  }
  static Segment piece(std::string base, double shift, double timescale, double len) {
    Segment s;
    s.kind = Kind::Piece;
    s.base = std::move(base);
    s.shift = shift;
    s.timescale = timescale;
    s.len = len;
    return s;
  }
  static Segment block(std::shared_ptr<const SegmentList> body, long repeat);
};

/// Immutable ordered list of segments with cached start offsets.
struct SegmentList {
  std::vector<Segment> items;
  std::vector<double> starts;
  double length = 0.0;

  static std::shared_ptr<const SegmentList> make(std::vector<Segment> items) {
    auto out = std::make_shared<SegmentList>();
    out->items = std::move(items);
    out->starts.reserve(out->items.size());
    double acc = 0.0;
    for (const auto& s : out->items) {
      out->starts.push_back(acc);
      acc += s.len;
    }
    out->length = acc;
    return out;
  }

  /// Index of the segment containing local coordinate x in [0, length).
  std::size_t locate(double x) const {
    auto it = std::upper_bound(starts.begin(), starts.end(), x);
    std::size_t idx = it == starts.begin() ? 0 : static_cast<std::size_t>(it - starts.begin()) - 1;
    return std::min(idx, items.size() - 1);
  }
};

inline Segment Segment::block(std::shared_ptr<const SegmentList> body, long repeat) {
  Segment s;
  s.kind = Kind::Block;
  s.repeat = repeat;
  s.len = body->length * static_cast<double>(repeat);
  s.body = std::move(body);
  return s;
}

/// Periodic potential on the line given by an exact segment list.
struct ContinuumPotential {
  double period = 1.0;
  double zero_nbhd = 0.0;
  std::map<std::string, Expr> bases;
  std::shared_ptr<const SegmentList> segments;

  double eval_list(const SegmentList& list, double x) const {
    const std::size_t i = list.locate(x);
    const Segment& s = list.items[i];
    const double y = x - list.starts[i];
    switch (s.kind) {
      case Segment::Kind::Gap: return 0.0;
      case Segment::Kind::Piece: return eval(bases.at(s.base), y * s.timescale + s.shift);
      case Segment::Kind::Block: {
        const double bl = s.body->length;
        double r = y - bl * std::floor(y / bl);
        if (r >= bl) r = 0.0;
        return eval_list(*s.body, r);
      }
    }
    return 0.0;
  }

  double operator()(double t) const {
    double r = fmod_pos(t, period);
    return eval_list(*segments, std::min(r, segments->length));
  }

  /// Rough sup norm from a uniform sample of one period.
  double sup_estimate(int samples = 4096) const {
    double m = 0.0;
    for (int k = 0; k < samples; ++k) m = std::max(m, std::abs((*this)(period * k / samples)));
    return m;
  }

  double min_estimate(int samples = 4096) const {
    double m = (*this)(0.0);
    for (int k = 1; k < samples; ++k) m = std::min(m, (*this)(period * k / samples));
    return m;
  }

  void validate() const {
    if (!(period > 0.0) || !std::isfinite(period)) fail(ErrorKind::Validation, "period: must be positive");
    if (!(zero_nbhd >= 0.0)) fail(ErrorKind::Validation, "zero_nbhd: must be non-negative");
    if (!segments || segments->items.empty()) fail(ErrorKind::Validation, "segments: empty");
    validate_list(*segments, "segments");
    const double deficit = segments->length - period;
    if (std::abs(deficit) > 1e-9 * std::max(1.0, period)) {
      fail(ErrorKind::Validation, "segments: lengths sum to " + std::to_string(segments->length) +
                                      ", deficit " + std::to_string(deficit) + " against period");
    }
    if (zero_nbhd > 0.0) {
      if (2.0 * zero_nbhd > period) fail(ErrorKind::Validation, "zero_nbhd: exceeds half the period");
      for (int k = 0; k <= 64; ++k) {
        const double x = zero_nbhd * k / 64.0;
        if (std::abs((*this)(x)) > 1e-12 || std::abs((*this)(period - x)) > 1e-12)
          fail(ErrorKind::Validation, "zero_nbhd: potential does not vanish near 0");
      }
    }
  }

 private:
  void validate_list(const SegmentList& list, const std::string& where) const {
    for (std::size_t i = 0; i < list.items.size(); ++i) {
      const Segment& s = list.items[i];
      const std::string at = where + "[" + std::to_string(i) + "]";
      if (!(s.len > 0.0) || !std::isfinite(s.len)) fail(ErrorKind::Validation, at + ".len: must be positive");
      if (s.kind == Segment::Kind::Piece) {
        if (!bases.count(s.base)) fail(ErrorKind::Validation, at + ".base: unknown base '" + s.base + "'");
        if (!(s.timescale > 0.0)) fail(ErrorKind::Validation, at + ".timescale: must be positive");
      }
      if (s.kind == Segment::Kind::Block) {
        if (!s.body || s.body->items.empty()) fail(ErrorKind::Validation, at + ".segments: empty");
        if (s.repeat < 1) fail(ErrorKind::Validation, at + ".repeat: must be >= 1");
        validate_list(*s.body, at + ".segments");
      }
    }
  }
};

/// Free potential V = 0 with the given period.
inline ContinuumPotential free_continuum(double period = 1.0) {
  ContinuumPotential v;
  v.period = period;
  v.zero_nbhd = 0.0;
  v.segments = SegmentList::make({Segment::gap(period)});
  return v;
}

/// Periodic potential on Z.
struct DiscretePotential {
  std::vector<double> values;

  long period() const { return static_cast<long>(values.size()); }
  double operator()(long n) const {
    const long p = period();
    long r = n % p;
    if (r < 0) r += p;
    return values[static_cast<std::size_t>(r)];
  }
  void validate() const {
    if (values.empty()) fail(ErrorKind::Validation, "values: empty");
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!std::isfinite(values[i])) fail(ErrorKind::Validation, "values[" + std::to_string(i) + "]: not finite");
  }
};

/// One-parameter family (t, j) -> V(t, j), t in R/n0 Z, j in Z/n1 Z.
struct DiscreteFamily {
  double n0 = 1.0;
  long n1 = 1;
  Expr expr;

  double operator()(double t, long j) const {
    long r = j % n1;
    if (r < 0) r += n1;
    return eval(expr, fmod_pos(t, n0), static_cast<double>(r));
  }

  DiscretePotential slice(double t) const {
    DiscretePotential p;
    p.values.resize(static_cast<std::size_t>(n1));
    for (long j = 0; j < n1; ++j) p.values[static_cast<std::size_t>(j)] = (*this)(t, j);
    return p;
  }

  void validate() const {
    if (!(n0 > 0.0)) fail(ErrorKind::Validation, "n0: must be positive");
    if (n1 < 1) fail(ErrorKind::Validation, "n1: must be >= 1");
    if (!expr) fail(ErrorKind::Validation, "expr: missing");
  }
};

/// Continuous function on R/NZ, read as the family V_t(j) = V(t + j).
struct CirclePotential {
  long period = 1;
  double const_nbhd = 0.0;
  Expr expr;

  double operator()(double x) const { return eval(expr, fmod_pos(x, static_cast<double>(period))); }

  DiscreteFamily as_family() const {
    DiscreteFamily f;
    f.n0 = static_cast<double>(period);
    f.n1 = period;
    f.expr = expr::subst(expr, expr::mod(expr::add(expr::t(), expr::j()), static_cast<double>(period)));
    return f;
  }

  void validate() const {
    if (period < 1) fail(ErrorKind::Validation, "period: must be >= 1");
    if (!expr) fail(ErrorKind::Validation, "expr: missing");
  }
};

}  // namespace cocyclelab
