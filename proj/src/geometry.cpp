#include "pvx/geometry.hpp"

#include <algorithm>

#include "pvx/error.hpp"

namespace pvx {

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Homography::Homography() : m_{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}} {}

Homography::Homography(const Matrix& m) : m_(m) {}

Homography Homography::translation(double dx, double dy) {
  return Homography({{{1, 0, dx}, {0, 1, dy}, {0, 0, 1}}});
}

Homography Homography::scaling(double sx, double sy) {
  return Homography({{{sx, 0, 0}, {0, sy, 0}, {0, 0, 1}}});
}

Point2 Homography::apply(Point2 p) const {
  const double w = m_[2][0] * p.x + m_[2][1] * p.y + m_[2][2];
  return {(m_[0][0] * p.x + m_[0][1] * p.y + m_[0][2]) / w,
          (m_[1][0] * p.x + m_[1][1] * p.y + m_[1][2]) / w};
}

double Homography::determinant() const {
  const auto& a = m_;
  return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
         a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
         a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

Homography Homography::inverse() const {
  const auto& a = m_;
  const double det = determinant();
  if (std::abs(det) < 1e-300) fail(ErrorCode::DegenerateConfiguration, "singular homography");
  Matrix inv;
  inv[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
  inv[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
  inv[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
  inv[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
  inv[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
  inv[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
  inv[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
  inv[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
  inv[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
  return Homography(inv).normalized();
}

Homography Homography::normalized() const {
  const double s = m_[2][2];
  if (std::abs(s) < 1e-15) fail(ErrorCode::DegenerateConfiguration, "homography h33 is zero");
  Matrix out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out[r][c] = m_[r][c] / s;
  return Homography(out);
}

Homography operator*(const Homography& a, const Homography& b) {
  Homography::Matrix out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a(r, k) * b(k, c);
      out[r][c] = s;
    }
  return Homography(out).normalized();
}

double max_abs_difference(const Homography& a, const Homography& b) {
  const Homography na = a.normalized();
  const Homography nb = b.normalized();
  double worst = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(na(r, c) - nb(r, c)));
  return worst;
}

}  // namespace pvx
