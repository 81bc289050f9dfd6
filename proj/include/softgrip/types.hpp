#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace softgrip {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec4 = Eigen::Matrix<Scalar, 4, 1>;
template <typename Scalar>
using Vec6 = Eigen::Matrix<Scalar, 6, 1>;
template <typename Scalar>
using Vec8 = Eigen::Matrix<Scalar, 8, 1>;
template <typename Scalar>
using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
template <typename Scalar>
using Mat4 = Eigen::Matrix<Scalar, 4, 4>;
template <typename Scalar>
using Mat8 = Eigen::Matrix<Scalar, 8, 8>;
template <typename Scalar>
using Mat8x2 = Eigen::Matrix<Scalar, 8, 2>;
template <typename Scalar>
using Mat2x6 = Eigen::Matrix<Scalar, 2, 6>;
template <typename Scalar>
using Mat2x8 = Eigen::Matrix<Scalar, 2, 8>;

using Vector2 = Vec2<double>;
using Vector4 = Vec4<double>;
using Vector6 = Vec6<double>;
using Matrix2 = Mat2<double>;
using Matrix4 = Mat4<double>;

/// Raised when an input lies outside the domain of a model function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a simulation leaves the finite/bounded region.
class SimulationDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for malformed or out-of-range configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bending curvature of each segment (rad) and its rate (rad/s).
template <typename Scalar>
struct CurvatureState {
  Vec2<Scalar> q = Vec2<Scalar>::Zero();
  Vec2<Scalar> qdot = Vec2<Scalar>::Zero();
};

/// Segment lengths in meters. These are the adapted kinematic quantities.
template <typename Scalar>
struct KinematicParams {
  Scalar L1{0.067};
  Scalar L2{0.077};

  Vec2<Scalar> asVector() const { return {L1, L2}; }
  static KinematicParams fromVector(const Vec2<Scalar>& v) { return {v(0), v(1)}; }
  KinematicParams scaled(Scalar c) const { return {c * L1, c * L2}; }
  template <typename T>
  KinematicParams<T> cast() const {
    return {T(L1), T(L2)};
  }
};

/// Point masses (kg), stiffness (N m/rad) and damping (N m s/rad) per segment.
/// Vector order is (m1, m2, K1, K2, D1, D2), matching the regressor columns.
template <typename Scalar>
struct DynamicParams {
  Scalar m1{0.020};
  Scalar m2{0.0251};
  Scalar K1{0.068};
  Scalar K2{0.07};
  Scalar D1{0.0029};
  Scalar D2{0.0029};

  Vec6<Scalar> asVector() const { return (Vec6<Scalar>() << m1, m2, K1, K2, D1, D2).finished(); }
  static DynamicParams fromVector(const Vec6<Scalar>& v) { return {v(0), v(1), v(2), v(3), v(4), v(5)}; }
  DynamicParams scaled(Scalar c) const { return fromVector(c * asVector()); }
  template <typename T>
  DynamicParams<T> cast() const {
    return DynamicParams<T>::fromVector(asVector().template cast<T>());
  }
  Mat2<Scalar> stiffness() const { return Vec2<Scalar>(K1, K2).asDiagonal(); }
  Mat2<Scalar> damping() const { return Vec2<Scalar>(D1, D2).asDiagonal(); }
};

/// Torque-per-pressure slope of each actuator, N m/bar.
template <typename Scalar>
struct ActuationMap {
  Scalar alpha1{0.076};
  Scalar alpha2{0.062};

  Vec2<Scalar> asVector() const { return {alpha1, alpha2}; }
  ActuationMap scaled(Scalar c) const { return {c * alpha1, c * alpha2}; }
};

/// Planar pose; theta is wrapped to (-pi, pi].
template <typename Scalar>
struct PlanarPose {
  Scalar x{0};
  Scalar y{0};
  Scalar theta{0};

  Vec2<Scalar> position() const { return {x, y}; }
};

template <typename Scalar>
Scalar wrapAngle(Scalar a) {
  using std::fmod;
  if (a > -std::numbers::pi_v<Scalar> && a <= std::numbers::pi_v<Scalar>) return a;
  const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  Scalar w = fmod(a + std::numbers::pi_v<Scalar>, two_pi);
  if (w <= Scalar(0)) w += two_pi;
  return w - std::numbers::pi_v<Scalar>;
}

template <typename Scalar>
Mat2<Scalar> rotation(Scalar angle) {
  using std::cos;
  using std::sin;
  const Scalar c = cos(angle), s = sin(angle);
  return (Mat2<Scalar>() << c, -s, s, c).finished();
}

/// Derivative of rotation(angle) with respect to angle.
template <typename Scalar>
Mat2<Scalar> rotationDerivative(Scalar angle) {
  using std::cos;
  using std::sin;
  const Scalar c = cos(angle), s = sin(angle);
  return (Mat2<Scalar>() << -s, -c, c, -s).finished();
}

}  // namespace softgrip
