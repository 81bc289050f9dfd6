#pragma once

// Equivalent rigid manipulator route to the soft-finger dynamics.
//
// Each constant-curvature segment is replaced by a planar RPPR chain with
// joint vector (theta_a, d_2, d_3, theta_b):
//   - revolute theta_a turns the chord heading, u(theta_a) = (sin, cos);
//   - two prismatic joints of equal extension d_2 = d_3 run along the chord,
//     the segment's point mass sits at the end of the first one;
//   - revolute theta_b closes the chain; the segment's frame rotation is
//     theta_a - theta_b.
// With (q/2, L sin(q/2)/q, L sin(q/2)/q, -q/2) the chain reproduces fk_tip and
// places each mass at its chord midpoint.

#include <array>
#include <cmath>
#include <type_traits>

#include "softgrip/cckin.hpp"
#include "softgrip/types.hpp"

namespace softgrip {

/// Mass, Coriolis and gravity terms of one finger in curvature space.
template <typename Scalar>
struct DynamicsMatrices {
  Mat2<Scalar> M = Mat2<Scalar>::Zero();
  Mat2<Scalar> C = Mat2<Scalar>::Zero();
  Vec2<Scalar> G = Vec2<Scalar>::Zero();
};

/// Same terms for the 8-dof rigid chain.
template <typename Scalar>
struct RigidDynamics {
  Mat8<Scalar> M = Mat8<Scalar>::Zero();
  Mat8<Scalar> C = Mat8<Scalar>::Zero();
  Vec8<Scalar> G = Vec8<Scalar>::Zero();
};

/// Step used for every finite-difference derivative of an inertia matrix.
inline constexpr double kInertiaDiffStep = 1e-6;

namespace detail {

/// h(q) = sin(q/2)/q and its first two derivatives.
template <typename Scalar>
struct HalfChord {
  Scalar h, dh, ddh;
};

template <typename Scalar>
HalfChord<Scalar> halfChord(Scalar q) {
  using std::abs;
  using std::cos;
  using std::sin;
  const Scalar q2 = q * q;
  HalfChord<Scalar> r;
  r.h = abs(q) < Scalar(kSeriesSwitch) ? Scalar(0.5) - q2 / Scalar(48) : sin(q / Scalar(2)) / q;
  if (abs(q) < Scalar(kSeriesSwitchFirst)) {
    r.dh = -q / Scalar(24) + q * q2 / Scalar(960) - q * q2 * q2 / Scalar(107520);
  } else {
    r.dh = (q / Scalar(2) * cos(q / Scalar(2)) - sin(q / Scalar(2))) / q2;
  }
  if (abs(q) < Scalar(kSeriesSwitchSecond)) {
    r.ddh = -Scalar(1) / Scalar(24) + q2 / Scalar(320) - q2 * q2 / Scalar(21504);
  } else {
    const Scalar sh = sin(q / Scalar(2)), ch = cos(q / Scalar(2));
    r.ddh = (-q2 / Scalar(4) * sh - q * ch + Scalar(2) * sh) / (q2 * q);
  }
  return r;
}

template <typename Scalar>
Vec2<Scalar> heading(Scalar a) {
  using std::cos;
  using std::sin;
  return {sin(a), cos(a)};
}

template <typename Scalar>
Vec2<Scalar> headingDerivative(Scalar a) {
  using std::cos;
  using std::sin;
  return {cos(a), -sin(a)};
}

/// Christoffel-symbol Coriolis matrix from the partials dM/dx_i of an n x n inertia.
template <typename MatrixType, typename VectorType>
MatrixType christoffelCoriolis(const std::array<MatrixType, VectorType::RowsAtCompileTime>& dM,
                               const VectorType& xdot) {
  constexpr int n = VectorType::RowsAtCompileTime;
  using Scalar = typename VectorType::Scalar;
  MatrixType C = MatrixType::Zero();
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      Scalar acc(0);
      for (int i = 0; i < n; ++i) acc += (dM[i](k, j) + dM[j](k, i) - dM[k](i, j)) * xdot(i);
      C(k, j) = acc / Scalar(2);
    }
  }
  return C;
}

/// Precision used inside finite differences: doubles are differenced in long double.
template <typename Scalar>
struct DiffPrecision {
  using type = Scalar;
};
template <>
struct DiffPrecision<double> {
  using type = long double;
};

/// Central-difference partials of an inertia function over its configuration vector.
/// inertia is called with a vector of DiffPrecision<Scalar>::type. Coordinates from
/// `active` on are known not to enter the inertia and get zero partials.
template <typename VectorType, typename InertiaFn>
auto inertiaPartials(const VectorType& x, InertiaFn&& inertia, int active = VectorType::RowsAtCompileTime) {
  constexpr int n = VectorType::RowsAtCompileTime;
  using Scalar = typename VectorType::Scalar;
  using Wide = typename DiffPrecision<Scalar>::type;
  using WideVector = Eigen::Matrix<Wide, n, 1>;
  using MatrixType = Eigen::Matrix<Scalar, n, n>;
  std::array<MatrixType, n> dM;
  const Wide h(kInertiaDiffStep);
  const WideVector xw = x.template cast<Wide>();
  for (int i = 0; i < n; ++i) {
    if (i >= active) {
      dM[i].setZero();
      continue;
    }
    WideVector xp = xw, xm = xw;
    xp(i) += h;
    xm(i) -= h;
    dM[i] = ((inertia(xp) - inertia(xm)) / (Wide(2) * h)).template cast<Scalar>();
  }
  return dM;
}

}  // namespace detail

/// Joint vector of the two chained RPPR manipulators.
template <typename Scalar>
using RigidJointVector = Vec8<Scalar>;

template <typename Scalar>
RigidJointVector<Scalar> config_map(const Vec2<Scalar>& q, const KinematicParams<Scalar>& k) {
  detail::requireValid(q, k);
  RigidJointVector<Scalar> zeta;
  const Scalar L[2] = {k.L1, k.L2};
  for (int i = 0; i < 2; ++i) {
    const Scalar d = L[i] * detail::halfChord(q(i)).h;
    zeta.template segment<4>(4 * i) << q(i) / Scalar(2), d, d, -q(i) / Scalar(2);
  }
  return zeta;
}

/// d zeta / d q, 8 x 2 and block diagonal.
template <typename Scalar>
Mat8x2<Scalar> map_jacobian(const Vec2<Scalar>& q, const KinematicParams<Scalar>& k) {
  detail::requireValid(q, k);
  Mat8x2<Scalar> Jm = Mat8x2<Scalar>::Zero();
  const Scalar L[2] = {k.L1, k.L2};
  for (int i = 0; i < 2; ++i) {
    const Scalar dd = L[i] * detail::halfChord(q(i)).dh;
    Jm.template block<4, 1>(4 * i, i) << Scalar(0.5), dd, dd, Scalar(-0.5);
  }
  return Jm;
}

template <typename Scalar>
Mat8x2<Scalar> map_jacobian_dot(const Vec2<Scalar>& q, const Vec2<Scalar>& qdot, const KinematicParams<Scalar>& k) {
  detail::requireValid(q, k);
  Mat8x2<Scalar> Jmd = Mat8x2<Scalar>::Zero();
  const Scalar L[2] = {k.L1, k.L2};
  for (int i = 0; i < 2; ++i) {
    const Scalar dd = L[i] * detail::halfChord(q(i)).ddh * qdot(i);
    Jmd.template block<4, 1>(4 * i, i) << Scalar(0), dd, dd, Scalar(0);
  }
  return Jmd;
}

/// Tip pose of the chained rigid manipulator.
template <typename Scalar>
PlanarPose<Scalar> rigid_chain_tip(const RigidJointVector<Scalar>& zeta) {
  const Vec2<Scalar> tip1 = (zeta(1) + zeta(2)) * detail::heading(zeta(0));
  const Scalar phi1 = zeta(0) - zeta(3);
  const Vec2<Scalar> tip = tip1 + rotation(phi1) * ((zeta(5) + zeta(6)) * detail::heading(zeta(4)));
  return {tip(0), tip(1), wrapAngle(phi1 + zeta(4) - zeta(7))};
}

/// Positions of the two point masses and their 2 x 8 Jacobians w.r.t. zeta.
template <typename Scalar>
struct RigidMassPoints {
  Vec2<Scalar> c1, c2;
  Mat2x8<Scalar> J1 = Mat2x8<Scalar>::Zero();
  Mat2x8<Scalar> J2 = Mat2x8<Scalar>::Zero();
};

namespace detail {

template <typename Scalar>
struct SinCos {
  Scalar s, c;
};

template <typename Scalar>
SinCos<Scalar> sinCos(Scalar a) {
  using std::cos;
  using std::sin;
  return {sin(a), cos(a)};
}

/// sin and cos of (base + delta) by the addition formulas. Evaluations that
/// share a base carry the same rounding in it, which cancels in differences.
template <typename Wide, typename Scalar>
SinCos<Wide> shifted(const SinCos<Scalar>& base, Wide delta) {
  using std::cos;
  using std::sin;
  const Wide sd = sin(delta), cd = cos(delta);
  const Wide s(base.s), c(base.c);
  return {s * cd + c * sd, c * cd - s * sd};
}

/// Trigonometry of the chain: first chord heading, frame rotation after segment 1, second chord heading.
template <typename Scalar>
struct ChainTrig {
  SinCos<Scalar> a1, phi1, a2;
};

template <typename Scalar>
ChainTrig<Scalar> chainTrig(const Vec8<Scalar>& zeta) {
  return {sinCos(zeta(0)), sinCos(zeta(0) - zeta(3)), sinCos(zeta(4))};
}

template <typename Scalar>
RigidMassPoints<Scalar> massPoints(const Vec8<Scalar>& zeta, const ChainTrig<Scalar>& t) {
  RigidMassPoints<Scalar> p;
  const Vec2<Scalar> ua(t.a1.s, t.a1.c), dua(t.a1.c, -t.a1.s);
  const Mat2<Scalar> R = (Mat2<Scalar>() << t.phi1.c, -t.phi1.s, t.phi1.s, t.phi1.c).finished();
  const Mat2<Scalar> dR = (Mat2<Scalar>() << -t.phi1.s, -t.phi1.c, t.phi1.c, -t.phi1.s).finished();
  const Vec2<Scalar> ub(t.a2.s, t.a2.c), dub(t.a2.c, -t.a2.s);
  const Vec2<Scalar> local2 = zeta(5) * ub;

  p.c1 = zeta(1) * ua;
  p.J1.col(0) = zeta(1) * dua;
  p.J1.col(1) = ua;

  p.c2 = (zeta(1) + zeta(2)) * ua + R * local2;
  p.J2.col(0) = (zeta(1) + zeta(2)) * dua + dR * local2;
  p.J2.col(1) = ua;
  p.J2.col(2) = ua;
  p.J2.col(3) = -dR * local2;
  p.J2.col(4) = R * (zeta(5) * dub);
  p.J2.col(5) = R * ub;
  return p;
}

}  // namespace detail

template <typename Scalar>
RigidMassPoints<Scalar> rigid_mass_points(const RigidJointVector<Scalar>& zeta) {
  return detail::massPoints(zeta, detail::chainTrig(zeta));
}

template <typename Scalar>
Mat8<Scalar> rigid_inertia(const RigidJointVector<Scalar>& zeta, Scalar m1, Scalar m2) {
  const auto p = rigid_mass_points(zeta);
  return m1 * p.J1.transpose() * p.J1 + m2 * p.J2.transpose() * p.J2;
}

/// Point-mass chain dynamics of the rigid equivalent; Coriolis from Christoffel symbols.
template <typename Scalar>
RigidDynamics<Scalar> rigid_dynamics(const RigidJointVector<Scalar>& zeta, const RigidJointVector<Scalar>& zeta_dot,
                                     Scalar m1, Scalar m2, const Vec2<Scalar>& gravity) {
  const auto p = rigid_mass_points(zeta);
  RigidDynamics<Scalar> d;
  d.M = m1 * p.J1.transpose() * p.J1 + m2 * p.J2.transpose() * p.J2;
  d.G = -(m1 * p.J1.transpose() * gravity + m2 * p.J2.transpose() * gravity);
  const auto dM = detail::inertiaPartials(zeta, [&](const auto& z) {
    using W = typename std::decay_t<decltype(z)>::Scalar;
    return rigid_inertia<W>(z, W(m1), W(m2));
  }, 6);  // d_3 and theta_b of the last segment only place the tip
  d.C = detail::christoffelCoriolis(dM, zeta_dot);
  return d;
}

/// Jm^T C_zeta Jm without forming C_zeta: the Christoffel sum only needs the
/// inertia derivatives along the two columns of Jm, since zeta_dot = Jm qdot.
template <typename Scalar>
Mat2<Scalar> projected_rigid_coriolis(const RigidJointVector<Scalar>& zeta, const Mat8x2<Scalar>& Jm,
                                      const Vec2<Scalar>& qdot, Scalar m1, Scalar m2) {
  using Wide = typename detail::DiffPrecision<Scalar>::type;
  using WideVector = Vec8<Wide>;
  const WideVector zw = zeta.template cast<Wide>();
  const auto base = detail::chainTrig(zeta);
  const Wide h(kInertiaDiffStep);
  const Eigen::Matrix<Wide, 8, 2> Jw = Jm.template cast<Wide>();
  // Inertia seen through the fixed columns of Jm at a shifted configuration.
  const auto projectedInertia = [&](const WideVector& step) {
    const detail::ChainTrig<Wide> t{detail::shifted(base.a1, step(0)), detail::shifted(base.phi1, step(0) - step(3)),
                                    detail::shifted(base.a2, step(4))};
    const auto p = detail::massPoints<Wide>(zw + step, t);
    const Mat2<Wide> A1 = p.J1 * Jw, A2 = p.J2 * Jw;
    return Mat2<Wide>(Wide(m1) * A1.transpose() * A1 + Wide(m2) * A2.transpose() * A2);
  };
  // P[c] = Jm^T (dM_zeta / d Jm_c) Jm; every Christoffel term reduces to these since zeta_dot = Jm qdot.
  std::array<Mat2<Scalar>, 2> P;
  for (int c = 0; c < 2; ++c) {
    const WideVector step = h * Jw.col(c);
    P[c] = ((projectedInertia(step) - projectedInertia(-step)) / (Wide(2) * h)).template cast<Scalar>();
  }
  Mat2<Scalar> C = (P[0] * qdot(0) + P[1] * qdot(1)) / Scalar(2);
  for (int a = 0; a < 2; ++a) {
    for (int c = 0; c < 2; ++c) C(a, c) += ((P[c] * qdot)(a) - (P[a] * qdot)(c)) / Scalar(2);
  }
  return C;
}

/// Curvature-space M, C, G through the configuration mapping:
///   M = Jm^T M_zeta Jm,  C = Jm^T M_zeta Jm_dot + Jm^T C_zeta Jm,  G = Jm^T G_zeta.
template <typename Scalar>
DynamicsMatrices<Scalar> soft_dynamics(const Vec2<Scalar>& q, const Vec2<Scalar>& qdot, const DynamicParams<Scalar>& dyn,
                                       const KinematicParams<Scalar>& kin, const Vec2<Scalar>& gravity) {
  const RigidJointVector<Scalar> zeta = config_map(q, kin);
  const Mat8x2<Scalar> Jm = map_jacobian(q, kin);
  const Mat8x2<Scalar> Jmd = map_jacobian_dot(q, qdot, kin);
  const auto p = rigid_mass_points(zeta);
  const Mat8<Scalar> Mz = dyn.m1 * p.J1.transpose() * p.J1 + dyn.m2 * p.J2.transpose() * p.J2;
  const Vec8<Scalar> Gz = -(dyn.m1 * p.J1.transpose() * gravity + dyn.m2 * p.J2.transpose() * gravity);

  DynamicsMatrices<Scalar> out;
  out.M = Jm.transpose() * Mz * Jm;
  out.C = Jm.transpose() * Mz * Jmd + projected_rigid_coriolis(zeta, Jm, qdot, dyn.m1, dyn.m2);
  out.G = Jm.transpose() * Gz;
  return out;
}

/// Jacobians of the two centers of mass w.r.t. q, derived directly in curvature space.
template <typename Scalar>
std::array<Mat2<Scalar>, 2> com_jacobians(const Vec2<Scalar>& q, const KinematicParams<Scalar>& kin) {
  const auto s1 = detail::shapeFunctions(q(0));
  const auto s2 = detail::shapeFunctions(q(1));
  const Vec2<Scalar> dchord1 = kin.L1 * Vec2<Scalar>(s1.df, s1.dg);
  const Vec2<Scalar> half_chord2 = kin.L2 * Vec2<Scalar>(s2.f, s2.g) / Scalar(2);
  const Vec2<Scalar> half_dchord2 = kin.L2 * Vec2<Scalar>(s2.df, s2.dg) / Scalar(2);
  std::array<Mat2<Scalar>, 2> J;
  J[0].col(0) = dchord1 / Scalar(2);
  J[0].col(1).setZero();
  J[1].col(0) = dchord1 + rotationDerivative(q(0)) * half_chord2;
  J[1].col(1) = rotation(q(0)) * half_dchord2;
  return J;
}

template <typename Scalar>
Mat2<Scalar> direct_inertia(const Vec2<Scalar>& q, const DynamicParams<Scalar>& dyn, const KinematicParams<Scalar>& kin) {
  const auto J = com_jacobians(q, kin);
  return dyn.m1 * J[0].transpose() * J[0] + dyn.m2 * J[1].transpose() * J[1];
}

/// Independent route: point masses handled directly in curvature space.
template <typename Scalar>
DynamicsMatrices<Scalar> direct_dynamics_oracle(const Vec2<Scalar>& q, const Vec2<Scalar>& qdot,
                                                const DynamicParams<Scalar>& dyn, const KinematicParams<Scalar>& kin,
                                                const Vec2<Scalar>& gravity) {
  detail::requireValid(q, kin);
  const auto J = com_jacobians(q, kin);
  DynamicsMatrices<Scalar> out;
  out.M = dyn.m1 * J[0].transpose() * J[0] + dyn.m2 * J[1].transpose() * J[1];
  out.G = -(dyn.m1 * J[0].transpose() * gravity + dyn.m2 * J[1].transpose() * gravity);
  const auto dM = detail::inertiaPartials(q, [&](const auto& x) {
    using W = typename std::decay_t<decltype(x)>::Scalar;
    return direct_inertia<W>(x, dyn.template cast<W>(), kin.template cast<W>());
  });
  out.C = detail::christoffelCoriolis(dM, qdot);
  return out;
}

/// Gravitational potential of the two point masses.
template <typename Scalar>
Scalar gravity_potential(const Vec2<Scalar>& q, const DynamicParams<Scalar>& dyn, const KinematicParams<Scalar>& kin,
                         const Vec2<Scalar>& gravity) {
  const auto com = fk_com(q, kin);
  return -(dyn.m1 * gravity.dot(com.com1) + dyn.m2 * gravity.dot(com.com2));
}

/// Dynamic regressor with columns (m1, m2, K1, K2, D1, D2):
///   Y_d * theta_d = M qr_ddot + C qr_dot + G + D qdot + K q.
template <typename Scalar>
Mat2x6<Scalar> dyn_regressor(const Vec2<Scalar>& q, const Vec2<Scalar>& qdot, const Vec2<Scalar>& qr_dot,
                             const Vec2<Scalar>& qr_ddot, const KinematicParams<Scalar>& kin,
                             const Vec2<Scalar>& gravity) {
  Mat2x6<Scalar> Y = Mat2x6<Scalar>::Zero();
  for (int i = 0; i < 2; ++i) {
    DynamicParams<Scalar> unit;
    unit.m1 = i == 0 ? Scalar(1) : Scalar(0);
    unit.m2 = i == 1 ? Scalar(1) : Scalar(0);
    const auto d = soft_dynamics(q, qdot, unit, kin, gravity);
    Y.col(i) = d.M * qr_ddot + d.C * qr_dot + d.G;
  }
  Y(0, 2) = q(0);
  Y(1, 3) = q(1);
  Y(0, 4) = qdot(0);
  Y(1, 5) = qdot(1);
  return Y;
}

}  // namespace softgrip
