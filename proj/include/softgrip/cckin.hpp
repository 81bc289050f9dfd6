#pragma once

// Constant-curvature kinematics of one two-segment planar finger.
//
// A segment of length L bent by arc angle q maps its base frame to its tip
// frame by the rotation R(q) and the translation L * (f(q), g(q)) with
//
//   f(q) = (1 - cos q) / q,   g(q) = sin q / q.
//
// The straight finger points along +y. Segment 2 is attached to the tip frame
// of segment 1, so the finger tip is p(q1, L1) + R(q1) p(q2, L2).

#include <cmath>

#include "softgrip/types.hpp"

namespace softgrip {

namespace detail {

// Below these magnitudes the closed forms lose digits to cancellation and the
// Taylor expansions are used instead.
inline constexpr double kSeriesSwitch = 1e-4;
inline constexpr double kSeriesSwitchFirst = 1e-2;
inline constexpr double kSeriesSwitchSecond = 5e-2;

/// Values and derivatives of the chord shape functions f and g at q.
template <typename Scalar>
struct ShapeFunctions {
  Scalar f, g;      // value
  Scalar df, dg;    // d/dq
  Scalar ddf, ddg;  // d2/dq2
};

template <typename Scalar>
Scalar chordF(Scalar q) {
  using std::abs;
  using std::sin;
  if (abs(q) < Scalar(kSeriesSwitch)) return q / Scalar(2) - q * q * q / Scalar(24);
  const Scalar h = sin(q / Scalar(2));
  return Scalar(2) * h * h / q;
}

template <typename Scalar>
Scalar chordG(Scalar q) {
  using std::abs;
  using std::sin;
  if (abs(q) < Scalar(kSeriesSwitch)) return Scalar(1) - q * q / Scalar(6);
  return sin(q) / q;
}

template <typename Scalar>
ShapeFunctions<Scalar> shapeFunctions(Scalar q) {
  using std::abs;
  using std::cos;
  using std::sin;
  ShapeFunctions<Scalar> s;
  s.f = chordF(q);
  s.g = chordG(q);

  const Scalar q2 = q * q;
  const Scalar sn = sin(q), cs = cos(q);
  const Scalar half = sin(q / Scalar(2));
  const Scalar one_minus_cos = Scalar(2) * half * half;

  if (abs(q) < Scalar(kSeriesSwitchFirst)) {
    s.df = Scalar(0.5) - q2 / Scalar(8) + q2 * q2 / Scalar(144) - q2 * q2 * q2 / Scalar(5760);
    s.dg = -q / Scalar(3) + q * q2 / Scalar(30) - q * q2 * q2 / Scalar(840);
  } else {
    s.df = (q * sn - one_minus_cos) / q2;
    s.dg = (q * cs - sn) / q2;
  }

  if (abs(q) < Scalar(kSeriesSwitchSecond)) {
    s.ddf = -q / Scalar(4) + q * q2 / Scalar(36) - q * q2 * q2 / Scalar(960);
    s.ddg = -Scalar(1) / Scalar(3) + q2 / Scalar(10) - q2 * q2 / Scalar(168) + q2 * q2 * q2 / Scalar(6480);
  } else {
    const Scalar q3 = q2 * q;
    s.ddf = (q2 * cs - Scalar(2) * q * sn + Scalar(2) * one_minus_cos) / q3;
    s.ddg = (-q2 * sn - Scalar(2) * q * cs + Scalar(2) * sn) / q3;
  }
  return s;
}

template <typename Scalar>
void requireFinite(Scalar v, const char* what) {
  using std::isfinite;
  if (!isfinite(v)) throw DomainError(std::string(what) + " must be finite");
}

template <typename Scalar>
void requireValid(const Vec2<Scalar>& q, const KinematicParams<Scalar>& k) {
  requireFinite(q(0), "curvature q1");
  requireFinite(q(1), "curvature q2");
  requireFinite(k.L1, "length L1");
  requireFinite(k.L2, "length L2");
  if (!(k.L1 > Scalar(0)) || !(k.L2 > Scalar(0))) throw DomainError("segment lengths must be positive");
}

}  // namespace detail

/// Tip pose of one constant-curvature segment relative to its base frame.
template <typename Scalar>
PlanarPose<Scalar> segment_transform(Scalar q, Scalar length) {
  detail::requireFinite(q, "curvature");
  detail::requireFinite(length, "length");
  if (!(length > Scalar(0))) throw DomainError("segment length must be positive");
  return {length * detail::chordF(q), length * detail::chordG(q), wrapAngle(q)};
}

/// Chord vector of a segment, L * (f(q), g(q)).
template <typename Scalar>
Vec2<Scalar> segment_chord(Scalar q, Scalar length) {
  return length * Vec2<Scalar>(detail::chordF(q), detail::chordG(q));
}

template <typename Scalar>
PlanarPose<Scalar> fk_tip(const Vec2<Scalar>& q, const KinematicParams<Scalar>& k) {
  detail::requireValid(q, k);
  const Vec2<Scalar> p = segment_chord(q(0), k.L1) + rotation(q(0)) * segment_chord(q(1), k.L2);
  return {p(0), p(1), wrapAngle(q(0) + q(1))};
}

/// Point-mass locations: midpoint of each segment's chord, in the finger base frame.
template <typename Scalar>
struct ComPositions {
  Vec2<Scalar> com1;
  Vec2<Scalar> com2;
};

template <typename Scalar>
ComPositions<Scalar> fk_com(const Vec2<Scalar>& q, const KinematicParams<Scalar>& k) {
  detail::requireValid(q, k);
  const Vec2<Scalar> chord1 = segment_chord(q(0), k.L1);
  const Vec2<Scalar> chord2 = segment_chord(q(1), k.L2);
  return {chord1 / Scalar(2), chord1 + rotation(q(0)) * chord2 / Scalar(2)};
}

/// d(tip x, y)/d(q1, q2).
template <typename Scalar>
Mat2<Scalar> task_jacobian(const Vec2<Scalar>& q, const KinematicParams<Scalar>& k) {
  detail::requireValid(q, k);
  const auto s1 = detail::shapeFunctions(q(0));
  const auto s2 = detail::shapeFunctions(q(1));
  const Vec2<Scalar> chord2 = k.L2 * Vec2<Scalar>(s2.f, s2.g);
  Mat2<Scalar> J;
  J.col(0) = k.L1 * Vec2<Scalar>(s1.df, s1.dg) + rotationDerivative(q(0)) * chord2;
  J.col(1) = rotation(q(0)) * (k.L2 * Vec2<Scalar>(s2.df, s2.dg));
  return J;
}

/// Time derivative of task_jacobian along qdot.
template <typename Scalar>
Mat2<Scalar> task_jacobian_dot(const Vec2<Scalar>& q, const Vec2<Scalar>& qdot, const KinematicParams<Scalar>& k) {
  detail::requireValid(q, k);
  const auto s1 = detail::shapeFunctions(q(0));
  const auto s2 = detail::shapeFunctions(q(1));
  const Mat2<Scalar> R = rotation(q(0));
  const Mat2<Scalar> dR = rotationDerivative(q(0));
  const Vec2<Scalar> chord2 = k.L2 * Vec2<Scalar>(s2.f, s2.g);
  const Vec2<Scalar> dchord2 = k.L2 * Vec2<Scalar>(s2.df, s2.dg);
  const Vec2<Scalar> ddchord2 = k.L2 * Vec2<Scalar>(s2.ddf, s2.ddg);

  // Second partials of the tip position; R'' = -R.
  const Vec2<Scalar> d11 = k.L1 * Vec2<Scalar>(s1.ddf, s1.ddg) - R * chord2;
  const Vec2<Scalar> d12 = dR * dchord2;
  const Vec2<Scalar> d22 = R * ddchord2;

  Mat2<Scalar> Jdot;
  Jdot.col(0) = d11 * qdot(0) + d12 * qdot(1);
  Jdot.col(1) = d12 * qdot(0) + d22 * qdot(1);
  return Jdot;
}

/// Kinematic regressor: kin_regressor(q, qdot) * (L1, L2) == task_jacobian(q, L) * qdot.
template <typename Scalar>
Mat2<Scalar> kin_regressor(const Vec2<Scalar>& q, const Vec2<Scalar>& qdot) {
  detail::requireFinite(q(0), "curvature q1");
  detail::requireFinite(q(1), "curvature q2");
  const auto s1 = detail::shapeFunctions(q(0));
  const auto s2 = detail::shapeFunctions(q(1));
  Mat2<Scalar> Y;
  Y.col(0) = Vec2<Scalar>(s1.df, s1.dg) * qdot(0);
  Y.col(1) = rotationDerivative(q(0)) * Vec2<Scalar>(s2.f, s2.g) * qdot(0) +
             rotation(q(0)) * Vec2<Scalar>(s2.df, s2.dg) * qdot(1);
  return Y;
}

}  // namespace softgrip
