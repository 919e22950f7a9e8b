#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace meissner {

struct EllipticKE {
  double K = 0.0;
  double E = 0.0;
};

// Complete elliptic integrals of the first and second kind for parameter
// m = k^2 in [0, 1), computed with the arithmetic-geometric mean. Iterates
// until |a - b| <= tol * a.
EllipticKE elliptic_ke(double m, double tol = 1e-13);

namespace detail {

inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

inline double magnitude(double v) { return std::abs(v); }
template <typename V>
double magnitude(const V& v) {
  return v.norm();
}

template <typename T>
struct Panel {
  double a;
  double b;
  T value;
  double error;
};

template <typename T, typename F>
Panel<T> kronrod15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const T fc = f(center);
  T kronrod = fc * kKronrodWeights[7];
  T gauss = fc * kGaussWeights[3];
  for (std::size_t j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[j];
    const T sum = f(center - dx) + f(center + dx);
    kronrod = kronrod + sum * kKronrodWeights[j];
    if (j % 2 == 1) gauss = gauss + sum * kGaussWeights[j / 2];
  }
  kronrod = kronrod * half;
  gauss = gauss * half;
  return {a, b, kronrod, magnitude(T(kronrod - gauss))};
}

}  // namespace detail

template <typename T>
struct QuadratureResult {
  T value;
  double error_estimate = 0.0;
  int panels = 0;
};

// Globally adaptive 7/15-point Gauss-Kronrod quadrature. The panel with the
// largest error estimate is bisected until the summed estimate falls below
// max(abs_tol, rel_tol * |integral|) or max_panels is reached. T is double or
// any Eigen fixed-size vector.
template <typename T, typename F>
QuadratureResult<T> integrate_adaptive(F&& f, double a, double b, double rel_tol,
                                       double abs_tol = 0.0, int max_panels = 4000) {
  using Panel = detail::Panel<T>;
  std::vector<Panel> panels;
  panels.push_back(detail::kronrod15<T>(f, a, b));
  auto by_error = [](const Panel& l, const Panel& r) { return l.error < r.error; };

  T total = panels.front().value;
  double err = panels.front().error;
  while (err > std::max(abs_tol, rel_tol * detail::magnitude(total)) &&
         static_cast<int>(panels.size()) < max_panels) {
    std::pop_heap(panels.begin(), panels.end(), by_error);
    const Panel worst = panels.back();
    panels.pop_back();
    const double mid = 0.5 * (worst.a + worst.b);
    panels.push_back(detail::kronrod15<T>(f, worst.a, mid));
    std::push_heap(panels.begin(), panels.end(), by_error);
    panels.push_back(detail::kronrod15<T>(f, mid, worst.b));
    std::push_heap(panels.begin(), panels.end(), by_error);

    // Re-summing in heap order would make the result depend on heap layout;
    // sort by left edge so the sum is reproducible.
    std::vector<const Panel*> ordered;
    ordered.reserve(panels.size());
    for (const auto& p : panels) ordered.push_back(&p);
    std::sort(ordered.begin(), ordered.end(),
              [](const Panel* l, const Panel* r) { return l->a < r->a; });
    total = ordered.front()->value;
    err = ordered.front()->error;
    for (std::size_t i = 1; i < ordered.size(); ++i) {
      total = total + ordered[i]->value;
      err += ordered[i]->error;
    }
  }
  return {total, err, static_cast<int>(panels.size())};
}

}  // namespace meissner
