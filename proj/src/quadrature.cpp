#include "cornerheat/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "cornerheat/errors.hpp"

namespace cornerheat {

namespace {

using Bary = std::array<double, 3>;

bool same_point(Point2 a, Point2 b, double scale) { return distance(a, b) <= 1e-12 * scale; }

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, a + t * ab);
}

double min_distance(Point2 p, const std::array<Point2, 3>& tri) {
  const double s0 = signed_area(tri[0], tri[1], p);
  const double s1 = signed_area(tri[1], tri[2], p);
  const double s2 = signed_area(tri[2], tri[0], p);
  if ((s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0)) return 0.0;
  return std::min({point_segment_distance(p, tri[0], tri[1]), point_segment_distance(p, tri[1], tri[2]),
                   point_segment_distance(p, tri[2], tri[0])});
}

Point2 physical(const std::array<Point2, 3>& tri, const Bary& b) {
  return Point2{b[0] * tri[0].x + b[1] * tri[1].x + b[2] * tri[2].x,
                b[0] * tri[0].y + b[1] * tri[1].y + b[2] * tri[2].y};
}

Bary mix(const Bary& a, const Bary& b, const Bary& c, double la, double lb, double lc) {
  return {la * a[0] + lb * b[0] + lc * c[0], la * a[1] + lb * b[1] + lc * c[1], la * a[2] + lb * b[2] + lc * c[2]};
}

struct TriangleIntegrator {
  const std::array<Point2, 3>& tri;
  const IntegrationOptions& opt;
  const QuadratureRule& rule;
  const QuadraturePointFn& fn;
  double scale;

  void run(const std::array<Bary, 3>& sub, int depth) const {
    const std::array<Point2, 3> p{physical(tri, sub[0]), physical(tri, sub[1]), physical(tri, sub[2])};
    if (opt.support && min_distance(opt.support->center, p) >= opt.support->radius) return;
    if (depth < opt.circle_depth) {
      for (const auto& c : opt.circles) {
        if (circle_crosses_triangle(c, p)) {
          const Bary m01 = mix(sub[0], sub[1], sub[2], 0.5, 0.5, 0.0);
          const Bary m12 = mix(sub[0], sub[1], sub[2], 0.0, 0.5, 0.5);
          const Bary m20 = mix(sub[0], sub[1], sub[2], 0.5, 0.0, 0.5);
          run({sub[0], m01, m20}, depth + 1);
          run({m01, sub[1], m12}, depth + 1);
          run({m20, m12, sub[2]}, depth + 1);
          run({m01, m12, m20}, depth + 1);
          return;
        }
      }
    }
    for (const auto& s : opt.singular_points) {
      for (int k = 0; k < 3; ++k) {
        if (same_point(p[static_cast<std::size_t>(k)], s, scale)) {
          duffy(sub, k);
          return;
        }
      }
    }
    const double area = signed_area(p[0], p[1], p[2]) * std::abs(signed_area(tri[0], tri[1], tri[2])) /
                        signed_area(tri[0], tri[1], tri[2]);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const auto& l = rule.points[q];
      const Bary b = mix(sub[0], sub[1], sub[2], l[0], l[1], l[2]);
      fn(physical(tri, b), b, rule.weights[q] * area);
    }
  }

  // x(u, v) = s + u (p1 - s) + u v (p2 - p1), graded geometrically in u.
  void duffy(const std::array<Bary, 3>& sub, int k) const {
    const Bary& s = sub[static_cast<std::size_t>(k)];
    const Bary& b1 = sub[static_cast<std::size_t>((k + 1) % 3)];
    const Bary& b2 = sub[static_cast<std::size_t>((k + 2) % 3)];
    const std::array<Point2, 3> p{physical(tri, s), physical(tri, b1), physical(tri, b2)};
    const double two_area = 2.0 * std::abs(signed_area(p[0], p[1], p[2]));
    const auto& g = gauss_legendre(opt.duffy_points);
    std::vector<double> breaks{0.0};
    for (int l = opt.duffy_levels; l >= 1; --l) breaks.push_back(std::pow(opt.duffy_ratio, l));
    breaks.push_back(1.0);
    for (std::size_t seg = 0; seg + 1 < breaks.size(); ++seg) {
      const double u0 = breaks[seg];
      const double du = breaks[seg + 1] - u0;
      for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const double u = u0 + du * g.nodes[i];
        for (std::size_t j = 0; j < g.nodes.size(); ++j) {
          const double v = g.nodes[j];
          const Bary b = mix(s, b1, b2, 1.0 - u, u * (1.0 - v), u * v);
          fn(physical(tri, b), b, g.weights[i] * du * g.weights[j] * u * two_area);
        }
      }
    }
  }
};

}  // namespace

QuadratureRule QuadratureRule::dunavant4() {
  constexpr double a1 = 0.445948490915964886;
  constexpr double b1 = 0.108103018168070227;
  constexpr double w1 = 0.223381589678011466;
  constexpr double a2 = 0.091576213509770743;
  constexpr double b2 = 0.816847572980458514;
  constexpr double w2 = 0.109951743655321868;
  QuadratureRule r;
  r.points = {{b1, a1, a1}, {a1, b1, a1}, {a1, a1, b1}, {b2, a2, a2}, {a2, b2, a2}, {a2, a2, b2}};
  r.weights = {w1, w1, w1, w2, w2, w2};
  r.degree = 4;
  return r;
}

QuadratureRule QuadratureRule::vertices() {
  QuadratureRule r;
  r.points = {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
  r.weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  r.degree = 1;
  return r;
}

QuadratureRule QuadratureRule::centroid() {
  QuadratureRule r;
  r.points = {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}};
  r.weights = {1.0};
  r.degree = 1;
  return r;
}

QuadratureRule QuadratureRule::conical(int n) {
  const auto& g = gauss_legendre(n);
  QuadratureRule r;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (std::size_t j = 0; j < g.nodes.size(); ++j) {
      const double u = g.nodes[i];
      const double v = g.nodes[j];
      r.points.push_back({1.0 - u, u * (1.0 - v), u * v});
      r.weights.push_back(2.0 * u * g.weights[i] * g.weights[j]);
    }
  }
  r.degree = 2 * n - 2;
  return r;
}

const GaussRule1D& gauss_legendre(int n) {
  if (n < 1) throw Error("Gauss-Legendre rule needs at least one point");
  static std::mutex mutex;
  static std::map<int, GaussRule1D> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  GaussRule1D rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    // Newton iteration on P_n from the Chebyshev-like initial guess.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      const double pn = n == 1 ? x : p1;
      const double pm = n == 1 ? 1.0 : p0;
      dp = n * (x * pn - pm) / (x * x - 1.0);
      const double dx = pn / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // map [-1, 1] -> [0, 1], ascending order
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = 0.5 * (x + 1.0);
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = 0.5 * w;
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

bool circle_crosses_triangle(const Circle& c, const std::array<Point2, 3>& tri) {
  const double dmax = std::max({distance(c.center, tri[0]), distance(c.center, tri[1]), distance(c.center, tri[2])});
  return min_distance(c.center, tri) < c.radius && c.radius < dmax;
}

void for_each_quadrature_point(const std::array<Point2, 3>& tri, const IntegrationOptions& options,
                               const QuadraturePointFn& fn) {
  static const QuadratureRule kDefault = QuadratureRule::dunavant4();
  const QuadratureRule& rule = options.rule ? *options.rule : kDefault;
  const double scale = std::max({distance(tri[0], tri[1]), distance(tri[1], tri[2]), distance(tri[2], tri[0])});
  TriangleIntegrator integrator{tri, options, rule, fn, scale};
  integrator.run({Bary{1.0, 0.0, 0.0}, Bary{0.0, 1.0, 0.0}, Bary{0.0, 0.0, 1.0}}, 0);
}

void for_each_segment_point(Point2 a, Point2 b, const SegmentOptions& options,
                            const std::function<void(Point2, double, double)>& fn) {
  const Vec2 d = b - a;
  const double len = norm(d);
  if (len == 0.0) return;
  std::vector<double> breaks{0.0, 1.0};
  for (const auto& c : options.circles) {
    // |a + t d - center|^2 = R^2
    const Vec2 m = a - c.center;
    const double qa = dot(d, d);
    const double qb = 2.0 * dot(m, d);
    const double qc = dot(m, m) - c.radius * c.radius;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc <= 0.0) continue;
    const double sq = std::sqrt(disc);
    for (double t : {(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)}) {
      if (t > 1e-14 && t < 1.0 - 1e-14) breaks.push_back(t);
    }
  }
  std::sort(breaks.begin(), breaks.end());
  bool sing_a = false;
  bool sing_b = false;
  for (const auto& s : options.singular_points) {
    sing_a = sing_a || same_point(a, s, len);
    sing_b = sing_b || same_point(b, s, len);
  }
  if (sing_a && sing_b) {
    breaks.push_back(0.5);
    std::sort(breaks.begin(), breaks.end());
  }
  const auto& g = gauss_legendre(options.points);
  auto plain = [&](double t0, double t1) {
    for (std::size_t q = 0; q < g.nodes.size(); ++q) {
      const double t = t0 + (t1 - t0) * g.nodes[q];
      fn(a + t * d, t, g.weights[q] * (t1 - t0) * len);
    }
  };
  // Geometric grading toward `anchor` (either t0 or t1).
  auto graded = [&](double t0, double t1, bool toward_start) {
    const double span = t1 - t0;
    double inner = 0.0;
    for (int l = options.grading_levels; l >= 0; --l) {
      const double outer = l == 0 ? 1.0 : std::pow(options.grading_ratio, l);
      if (toward_start) {
        plain(t0 + inner * span, t0 + outer * span);
      } else {
        plain(t1 - outer * span, t1 - inner * span);
      }
      inner = outer;
    }
  };
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double t0 = breaks[k];
    const double t1 = breaks[k + 1];
    if (sing_a && t0 == 0.0) {
      graded(t0, t1, true);
    } else if (sing_b && t1 == 1.0) {
      graded(t0, t1, false);
    } else {
      plain(t0, t1);
    }
  }
}

}  // namespace cornerheat
