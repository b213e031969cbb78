#include "cornerheat/singular.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "cornerheat/errors.hpp"

namespace cornerheat {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kWedgeTol = 1e-12;

// sin(lambda phi) with lambda theta = n pi; near the far edge it is evaluated
// as a reflection about that edge so both edges give exact zeros.
double wedge_sine(int n, double lambda, double phi, double theta) {
  if (phi <= 0.5 * theta) return std::sin(lambda * phi);
  const double s = std::sin(lambda * (theta - phi));
  return (n % 2 == 0) ? -s : s;
}
}  // namespace

CutoffEta::CutoffEta(double inner, double outer) : r0(inner), r1(outer) {
  if (!(inner > 0.0 && inner < outer)) throw Error("cutoff radii must satisfy 0 < r0 < r1");
}

double CutoffEta::value(double r) const {
  if (r <= r0) return 1.0;
  if (r >= r1) return 0.0;
  const double s = (r - r0) / (r1 - r0);
  return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

double CutoffEta::d1(double r) const {
  if (r <= r0 || r >= r1) return 0.0;
  const double w = r1 - r0;
  const double s = (r - r0) / w;
  return -30.0 * s * s * (1.0 - s) * (1.0 - s) / w;
}

double CutoffEta::d2(double r) const {
  if (r <= r0 || r >= r1) return 0.0;
  const double w = r1 - r0;
  const double s = (r - r0) / w;
  return -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (w * w);
}

SingularFunction::SingularFunction(int n, const ReentrantCorner& corner, std::optional<CutoffEta> eta)
    : n_(n), corner_(corner), lambda_(n * kPi / corner.theta), eta_(eta) {
  if (n == 0) throw Error("singular function index must be nonzero");
  if (!(corner.theta > kPi && corner.theta < 2.0 * kPi)) throw Error("corner angle must lie in (pi, 2pi)");
}

bool SingularFunction::outside_support(Point2 x) const {
  return eta_ && distance(x, corner_.vertex) >= eta_->r1;
}

SingularFunction::Polar SingularFunction::polar(Point2 x) const {
  const Vec2 d = x - corner_.vertex;
  const double r = norm(d);
  if (r == 0.0) return {0.0, 0.0};
  double phi = std::atan2(d.y, d.x) - corner_.edge_angle;
  phi = std::fmod(phi, 2.0 * kPi);
  if (phi < 0.0) phi += 2.0 * kPi;
  if (phi > corner_.theta) {
    // coordinate rounding turns into an angular error of about eps * |x| / r
    const double tol = kWedgeTol + 1e-15 * (1.0 + norm(x) + norm(corner_.vertex)) / r;
    if (phi >= 2.0 * kPi - tol) {
      phi = 0.0;
    } else if (phi <= corner_.theta + tol) {
      phi = corner_.theta;
    } else {
      std::ostringstream msg;
      msg << "point (" << x.x << ", " << x.y << ") lies outside the corner wedge";
      throw DomainError(msg.str());
    }
  }
  return {r, phi};
}

double SingularFunction::value(Point2 x) const {
  if (outside_support(x)) return 0.0;
  const auto [r, phi] = polar(x);
  if (r == 0.0) {
    if (n_ > 0) return 0.0;
    throw DomainError("dual singular function evaluated at the corner");
  }
  const double eta = eta_ ? eta_->value(r) : 1.0;
  return eta * std::pow(r, lambda_) * wedge_sine(n_, lambda_, phi, corner_.theta);
}

Vec2 SingularFunction::polar_gradient(Point2 x) const {
  if (outside_support(x)) return {0.0, 0.0};
  const auto [r, phi] = polar(x);
  if (r == 0.0) throw DomainError("gradient evaluated at the corner");
  const double eta = eta_ ? eta_->value(r) : 1.0;
  const double deta = eta_ ? eta_->d1(r) : 0.0;
  const double rl = std::pow(r, lambda_);
  const double s = wedge_sine(n_, lambda_, phi, corner_.theta);
  const double c = std::cos(lambda_ * phi);
  return {(deta * rl + eta * lambda_ * rl / r) * s, eta * lambda_ * rl / r * c};
}

Vec2 SingularFunction::gradient(Point2 x) const {
  if (outside_support(x)) return {0.0, 0.0};
  const Vec2 pg = polar_gradient(x);
  const auto [r, phi] = polar(x);
  const double a = phi + corner_.edge_angle;
  const double ca = std::cos(a);
  const double sa = std::sin(a);
  return {pg.x * ca - pg.y * sa, pg.x * sa + pg.y * ca};
}

double SingularFunction::laplacian(Point2 x) const {
  if (!eta_) return 0.0;
  const double r = distance(x, corner_.vertex);
  if (r <= eta_->r0 || r >= eta_->r1) return 0.0;
  const auto p = polar(x);
  return wedge_sine(n_, lambda_, p.phi, corner_.theta) * std::pow(r, lambda_) *
         (eta_->d2(r) + (1.0 + 2.0 * lambda_) * eta_->d1(r) / r);
}

ScalarField SingularFunction::field() const {
  return [s = *this](Point2 x) { return s.value(x); };
}

double laplacian_dual(const SingularFunction& s, Point2 x) {
  if (s.index() >= 0) throw Error("laplacian_dual expects a dual function (n < 0)");
  if (!s.eta()) throw Error("dual function needs a cutoff");
  return s.laplacian(x);
}

ReentrantCorner l_shape_corner() {
  ReentrantCorner c;
  c.vertex = {0.0, 0.0};
  c.theta = 1.5 * kPi;
  c.edge_angle = 0.0;
  c.bisector_angle = 0.75 * kPi;
  c.vertex_index = -1;
  return c;
}

Table1Solution::Table1Solution(const ReentrantCorner& corner) {
  for (int n = 1; n <= 3; ++n) modes_.emplace_back(n, corner);
}

double Table1Solution::u(double t, Point2 x) const {
  return std::sin(t) * modes_[0].value(x) + std::sin(2.0 * t) * modes_[1].value(x) -
         std::sin(3.0 * t) * modes_[2].value(x);
}

double Table1Solution::u_t(double t, Point2 x) const {
  return std::cos(t) * modes_[0].value(x) + 2.0 * std::cos(2.0 * t) * modes_[1].value(x) -
         3.0 * std::cos(3.0 * t) * modes_[2].value(x);
}

Vec2 Table1Solution::grad_u(double t, Point2 x) const {
  return std::sin(t) * modes_[0].gradient(x) + std::sin(2.0 * t) * modes_[1].gradient(x) +
         (-std::sin(3.0 * t)) * modes_[2].gradient(x);
}

double Table1Solution::k1(double t) const { return std::sin(t); }

double advection_qoi_shape(Point2 x) {
  const double d2 = (x.x - 2.0) * (x.x - 2.0) + (x.y - 1.5) * (x.y - 1.5);
  if (d2 == 0.0) throw DomainError("advection source evaluated at its singular point (2, 1.5)");
  return 1.0 / d2;
}

double advection_qoi_source(double t, Point2 x) { return std::sin(kPi * t) * advection_qoi_shape(x); }

ManufacturedValues manufactured_solution(ManufacturedKind kind, double t, Point2 x) {
  if (kind == ManufacturedKind::table1) {
    static const Table1Solution sol;
    const double u = sol.u(t, x);
    const double ut = sol.u_t(t, x);
    return {u, ut, ut, u};
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {nan, nan, advection_qoi_source(t, x), 0.0};
}

}  // namespace cornerheat
