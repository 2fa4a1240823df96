#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace kacsim {

// Adaptive Simpson on [a, b] with absolute tolerance.
template <class F>
double adaptive_simpson(const F& f, double a, double b, double tol = 1e-12,
                        int max_depth = 40) {
  struct Impl {
    const F& f;
    int max_depth;
    double run(double a, double b, double fa, double fm, double fb,
               double whole, double tol, int depth) const {
      const double m = 0.5 * (a + b);
      const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
      const double flm = f(lm), frm = f(rm);
      const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
      const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
      const double delta = left + right - whole;
      if (depth >= max_depth || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
      return run(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
             run(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
    }
  };
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return Impl{f, max_depth}.run(a, b, fa, fm, fb, whole, tol, 0);
}

// Gauss-Legendre nodes/weights on [-1, 1], Newton iteration on P_n.
struct GaussLegendre {
  std::vector<double> node, weight;

  explicit GaussLegendre(int n) : node(n), weight(n) {
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-15) break;
      }
      node[i] = -x;
      node[n - 1 - i] = x;
      weight[i] = weight[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }

  template <class F>
  double integrate(const F& f, double a, double b) const {
    const double c = 0.5 * (b - a), m = 0.5 * (a + b);
    double s = 0.0;
    for (std::size_t i = 0; i < node.size(); ++i)
      s += weight[i] * f(m + c * node[i]);
    return c * s;
  }

  // Composite rule over `pieces` equal subintervals.
  template <class F>
  double integrate(const F& f, double a, double b, int pieces) const {
    double s = 0.0;
    const double h = (b - a) / pieces;
    for (int k = 0; k < pieces; ++k)
      s += integrate(f, a + k * h, a + (k + 1) * h);
    return s;
  }
};

}  // namespace kacsim
