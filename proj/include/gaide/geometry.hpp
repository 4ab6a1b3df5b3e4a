#pragma once

#include <array>
#include <cmath>

namespace gaide {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  double dist(const Vec3& o) const { return (*this - o).norm(); }
  double dist2(const Vec3& o) const {
    const Vec3 d = *this - o;
    return d.dot(d);
  }
};

struct Mat3 {
  // row-major
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }

  // Rodrigues rotation about a unit axis
  static Mat3 axis_angle(const Vec3& axis, double angle) {
    const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    const double ax = axis.x, ay = axis.y, az = axis.z;
    Mat3 r;
    r.m = {t * ax * ax + c,      t * ax * ay - s * az, t * ax * az + s * ay,
           t * ax * ay + s * az, t * ay * ay + c,      t * ay * az - s * ax,
           t * ax * az - s * ay, t * ay * az + s * ax, t * az * az + c};
    return r;
  }

  Vec3 apply(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 3; ++k) acc += m[i * 3 + k] * o.m[k * 3 + j];
        r.m[i * 3 + j] = acc;
      }
    return r;
  }
};

// rigid transform p -> R p + t
struct Pose {
  Mat3 r;
  Vec3 t;

  Vec3 apply(const Vec3& p) const { return r.apply(p) + t; }
  Pose compose(const Pose& o) const { return {r * o.r, r.apply(o.t) + t}; }
};

}  // namespace gaide
