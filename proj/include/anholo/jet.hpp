#pragma once
// Second-order jets: value plus two directional derivatives and their mixed
// second derivative. Nesting Jet2<Jet2<T>> gives higher-order information.

#include <cmath>
#include <type_traits>

namespace anholo {

template <class T>
struct Jet2 {
  T value{};
  T d1{};
  T d2{};
  T d12{};

  constexpr Jet2() = default;
  constexpr Jet2(T v) : value(v) {}  // NOLINT: constants promote implicitly
  constexpr Jet2(T v, T a, T b, T ab) : value(v), d1(a), d2(b), d12(ab) {}

  // Allows Jet2<Jet2<double>> x = 2.0 and similar for deeper nesting.
  template <class U,
            std::enable_if_t<std::is_arithmetic_v<U> && !std::is_same_v<U, T>, int> = 0>
  constexpr Jet2(U v) : value(T(v)) {}  // NOLINT
};

using J1 = Jet2<double>;
using J2 = Jet2<J1>;
using J3 = Jet2<J2>;

inline constexpr int kMaxJetDepth = 3;

template <class T>
struct jet_depth : std::integral_constant<int, 0> {};
template <class T>
struct jet_depth<Jet2<T>> : std::integral_constant<int, 1 + jet_depth<T>::value> {};
template <class T>
inline constexpr int jet_depth_v = jet_depth<T>::value;

template <class T>
struct is_jet : std::false_type {};
template <class T>
struct is_jet<Jet2<T>> : std::true_type {};

/// Innermost real value of a (possibly nested) jet.
constexpr double primal(double x) { return x; }
template <class T>
constexpr double primal(const Jet2<T>& x) {
  return primal(x.value);
}

// ---- arithmetic ----------------------------------------------------------

template <class T>
constexpr Jet2<T> operator+(const Jet2<T>& a, const Jet2<T>& b) {
  return {a.value + b.value, a.d1 + b.d1, a.d2 + b.d2, a.d12 + b.d12};
}
template <class T>
constexpr Jet2<T> operator-(const Jet2<T>& a, const Jet2<T>& b) {
  return {a.value - b.value, a.d1 - b.d1, a.d2 - b.d2, a.d12 - b.d12};
}
template <class T>
constexpr Jet2<T> operator-(const Jet2<T>& a) {
  return {-a.value, -a.d1, -a.d2, -a.d12};
}
template <class T>
constexpr Jet2<T> operator*(const Jet2<T>& a, const Jet2<T>& b) {
  return {a.value * b.value, a.d1 * b.value + a.value * b.d1,
          a.d2 * b.value + a.value * b.d2,
          a.d12 * b.value + (a.d1 * b.d2 + a.d2 * b.d1) + a.value * b.d12};
}

// Scalar-jet mixing, for any scalar the inner type accepts.
template <class T, class S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
constexpr Jet2<T> operator*(const Jet2<T>& a, S s) {
  return {a.value * T(s), a.d1 * T(s), a.d2 * T(s), a.d12 * T(s)};
}
template <class T, class S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
constexpr Jet2<T> operator*(S s, const Jet2<T>& a) {
  return a * s;
}
template <class T, class S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
constexpr Jet2<T> operator+(const Jet2<T>& a, S s) {
  return {a.value + T(s), a.d1, a.d2, a.d12};
}
template <class T, class S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
constexpr Jet2<T> operator+(S s, const Jet2<T>& a) {
  return a + s;
}
template <class T, class S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
constexpr Jet2<T> operator-(const Jet2<T>& a, S s) {
  return {a.value - T(s), a.d1, a.d2, a.d12};
}
template <class T, class S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
constexpr Jet2<T> operator-(S s, const Jet2<T>& a) {
  return {T(s) - a.value, -a.d1, -a.d2, -a.d12};
}

template <class T>
Jet2<T>& operator+=(Jet2<T>& a, const Jet2<T>& b) {
  return a = a + b;
}
template <class T>
Jet2<T>& operator-=(Jet2<T>& a, const Jet2<T>& b) {
  return a = a - b;
}
template <class T>
Jet2<T>& operator*=(Jet2<T>& a, const Jet2<T>& b) {
  return a = a * b;
}

// Chain rule for a scalar function with value f0, first derivative f1 and
// second derivative f2 at a.value.
template <class T>
constexpr Jet2<T> chain(const Jet2<T>& a, const T& f0, const T& f1, const T& f2) {
  // d1 * d2 first so that swapping the directions leaves d12 bit-identical.
  return {f0, f1 * a.d1, f1 * a.d2, f1 * a.d12 + f2 * (a.d1 * a.d2)};
}

// Reciprocal; the caller is responsible for the zero check.
inline double reciprocal(double x) { return 1.0 / x; }
template <class T>
Jet2<T> reciprocal(const Jet2<T>& a) {
  const T r = reciprocal(a.value);
  const T r2 = r * r;
  return chain(a, r, -r2, T(2.0) * r2 * r);
}

template <class T>
Jet2<T> operator/(const Jet2<T>& a, const Jet2<T>& b) {
  return a * reciprocal(b);
}
template <class T, class S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
Jet2<T> operator/(const Jet2<T>& a, S s) {
  return a * (1.0 / static_cast<double>(s));
}
template <class T, class S, std::enable_if_t<std::is_arithmetic_v<S>, int> = 0>
Jet2<T> operator/(S s, const Jet2<T>& a) {
  return reciprocal(a) * s;
}

// ---- elementary functions -------------------------------------------------
// Found by ADL for jets; callers write `using std::sin; sin(x)`.

template <class T>
Jet2<T> sin(const Jet2<T>& a) {
  using std::cos;
  using std::sin;
  const T s = sin(a.value);
  return chain(a, s, T(cos(a.value)), -s);
}
template <class T>
Jet2<T> cos(const Jet2<T>& a) {
  using std::cos;
  using std::sin;
  const T c = cos(a.value);
  return chain(a, c, -T(sin(a.value)), -c);
}
template <class T>
Jet2<T> tan(const Jet2<T>& a) {
  using std::tan;
  const T t = tan(a.value);
  const T sec2 = T(1.0) + t * t;
  return chain(a, t, sec2, T(2.0) * t * sec2);
}
template <class T>
Jet2<T> exp(const Jet2<T>& a) {
  using std::exp;
  const T e = exp(a.value);
  return chain(a, e, e, e);
}
template <class T>
Jet2<T> log(const Jet2<T>& a) {
  using std::log;
  const T r = reciprocal(a.value);
  return chain(a, T(log(a.value)), r, -r * r);
}
template <class T>
Jet2<T> sqrt(const Jet2<T>& a) {
  using std::sqrt;
  const T s = sqrt(a.value);
  const T h = T(0.5) * reciprocal(s);
  return chain(a, s, h, -h * reciprocal(T(2.0) * a.value));
}

inline double intpow(double x, int n) {
  if (n < 0) return 1.0 / intpow(x, -n);
  double result = 1.0;
  double base = x;
  while (n > 0) {
    if (n & 1) result *= base;
    base *= base;
    n >>= 1;
  }
  return result;
}
template <class T>
Jet2<T> intpow(const Jet2<T>& a, int n) {
  if (n == 0) return Jet2<T>(T(1.0));
  if (n == 1) return a;
  const T f1 = T(static_cast<double>(n)) * intpow(a.value, n - 1);
  const T f2 = (n == 2) ? T(2.0)
                        : T(static_cast<double>(n) * static_cast<double>(n - 1)) *
                              intpow(a.value, n - 2);
  return chain(a, intpow(a.value, n), f1, f2);
}

}  // namespace anholo
