#pragma once
// SmoothMap: a type-erased real function of a fixed number of inputs that can
// be evaluated on plain doubles and on jets up to kMaxJetDepth levels of
// nesting. Composition is just a lambda capturing other SmoothMaps.

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

#include "anholo/errors.hpp"
#include "anholo/expr.hpp"
#include "anholo/jet.hpp"

namespace anholo {

class SmoothMap {
 public:
  SmoothMap() = default;

  /// Wraps a generic callable `f(std::span<const T>) -> T`. It must compile
  /// for T in {double, J1, J2, J3}.
  template <class F>
  static SmoothMap from(std::size_t arity, F f) {
    SmoothMap m;
    m.arity_ = arity;
    m.impl_ = std::make_shared<const Model<F>>(std::move(f));
    return m;
  }

  static SmoothMap constant(std::size_t arity, double c) {
    return from(arity, [c](auto x) {
      using T = std::remove_cv_t<typename decltype(x)::element_type>;
      return T(c);
    });
  }

  /// The i-th input, as a map.
  static SmoothMap coordinate(std::size_t arity, std::size_t i) {
    return from(arity, [i](auto x) { return x[i]; });
  }

  /// A bound expression with the parameter values fixed.
  static SmoothMap from_expr(const Expr& e, std::size_t arity, std::vector<double> params) {
    return from(arity, [e, params = std::move(params)](auto x) {
      using T = std::remove_cv_t<typename decltype(x)::element_type>;
      return e.eval<T>(x, params);
    });
  }

  bool valid() const { return impl_ != nullptr; }
  std::size_t arity() const { return arity_; }

  template <class T>
  T operator()(std::span<const T> x) const {
    return impl_->eval(x);
  }
  template <class T>
  T operator()(const std::vector<T>& x) const {
    return impl_->eval(std::span<const T>(x));
  }

 private:
  struct Concept {
    virtual ~Concept() = default;
    virtual double eval(std::span<const double>) const = 0;
    virtual J1 eval(std::span<const J1>) const = 0;
    virtual J2 eval(std::span<const J2>) const = 0;
    virtual J3 eval(std::span<const J3>) const = 0;
  };

  template <class F>
  struct Model final : Concept {
    explicit Model(F f) : fn(std::move(f)) {}
    double eval(std::span<const double> x) const override { return fn(x); }
    J1 eval(std::span<const J1> x) const override { return fn(x); }
    J2 eval(std::span<const J2> x) const override { return fn(x); }
    J3 eval(std::span<const J3> x) const override { return fn(x); }
    F fn;
  };

  std::size_t arity_ = 0;
  std::shared_ptr<const Concept> impl_;
};

/// Seeds x + e1*dir1 + e2*dir2 as jets over T.
template <class T>
std::vector<Jet2<T>> seed(std::span<const T> x, std::span<const T> dir1,
                          std::span<const T> dir2) {
  std::vector<Jet2<T>> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = Jet2<T>(x[i], dir1.empty() ? T(0.0) : dir1[i], dir2.empty() ? T(0.0) : dir2[i],
                     T(0.0));
  return out;
}

/// 2-jet of f at x along dir1, dir2 (either direction may be empty = zero).
inline J1 jet(const SmoothMap& f, std::span<const double> x, std::span<const double> dir1,
              std::span<const double> dir2) {
  const auto s = seed<double>(x, dir1, dir2);
  return f(std::span<const J1>(s));
}

/// Directional derivative of f at x along dir, evaluated over scalar T.
/// Needs one more level of jet nesting than T already carries.
template <class T>
T directional(const SmoothMap& f, std::span<const T> x, std::span<const T> dir) {
  if constexpr (jet_depth_v<T> >= kMaxJetDepth) {
    throw DepthError();
  } else {
    const auto s = seed<T>(x, dir, {});
    return f(std::span<const Jet2<T>>(s)).d1;
  }
}

/// Mixed second derivative of f at x along a and b, over scalar T.
template <class T>
T second_directional(const SmoothMap& f, std::span<const T> x, std::span<const T> a,
                     std::span<const T> b) {
  if constexpr (jet_depth_v<T> >= kMaxJetDepth) {
    throw DepthError();
  } else {
    const auto s = seed<T>(x, a, b);
    return f(std::span<const Jet2<T>>(s)).d12;
  }
}

}  // namespace anholo
