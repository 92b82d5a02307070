#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace pvx {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point2 p) { return std::hypot(p.x, p.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

// Axis-aligned box in continuous pixel coordinates; max edges are exclusive.
struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool well_formed() const { return x_min < x_max && y_min < y_max; }
  friend bool operator==(const Box&, const Box&) = default;
};

double iou(const Box& a, const Box& b);

// 3x3 projective map acting on column vectors (x, y, 1).
class Homography {
 public:
  using Matrix = std::array<std::array<double, 3>, 3>;

  Homography();  // identity
  explicit Homography(const Matrix& m);

  static Homography translation(double dx, double dy);
  static Homography scaling(double sx, double sy);

  const Matrix& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_[r][c]; }

  Point2 apply(Point2 p) const;
  Homography inverse() const;
  double determinant() const;

  // Scales the matrix so that h[2][2] == 1. Throws DegenerateConfiguration
  // when h[2][2] is numerically zero.
  Homography normalized() const;

  friend Homography operator*(const Homography& a, const Homography& b);

 private:
  Matrix m_;
};

double max_abs_difference(const Homography& a, const Homography& b);

}  // namespace pvx
