#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "qwp/metrology.hpp"
#include "support.hpp"

using namespace qwp;
using C = std::complex<double>;

namespace {

// ⟨1|rho|0⟩ on the qubit, as a matrix on the arms.
Matrix qubit_coherence_block(const QuantumState& s) {
  const HilbertSpec& sp = s.space();
  const std::size_t f = sp.index_of(labels::qubit);
  const std::size_t half = sp.size() / 2;
  const Matrix rho = s.density();
  Matrix b(static_cast<Eigen::Index>(half), static_cast<Eigen::Index>(half));
  for (std::size_t i = 0; i < sp.size(); ++i)
    for (std::size_t j = 0; j < sp.size(); ++j)
      if (sp.level(i, f) == 1 && sp.level(j, f) == 0)
        b(static_cast<Eigen::Index>(i - half), static_cast<Eigen::Index>(j)) = rho(i, j);
  return b;
}

// Literal dilation: attach a vacuum loss mode per arm, mix, trace the loss modes out.
QuantumState loss_by_dilation(const QuantumState& s, double p1, double p2) {
  const HilbertSpec& sp = s.space();
  const std::size_t d1 = sp.dim_of(labels::arm1), d2 = sp.dim_of(labels::arm2);
  const HilbertSpec env({fock_factor("loss1", d1), fock_factor("loss2", d2)});
  const QuantumState env0 = product_state(env, {fock_vector(0, d1), fock_vector(0, d2)});
  QuantumState big = tensor(s, env0);
  big = apply_unitary(big, beamsplitter_unitary(loss_angle(p1), big.space(), labels::arm1, "loss1"));
  big = apply_unitary(big, beamsplitter_unitary(loss_angle(p2), big.space(), labels::arm2, "loss2"));
  std::vector<std::string> keep;
  for (const auto& f : sp.factors()) keep.push_back(f.label);
  return partial_trace(big, keep);
}

// Full-spectrum oracle: 2 sum (l_k - l_l)^2/(l_k + l_l) |A_kl|^2 over every eigenpair.
double qfi_full_spectrum(const QuantumState& s, const Matrix& a) {
  const auto es = hermitian_eig(s.density());
  const Matrix akl = es.vectors.adjoint() * a * es.vectors;
  double sum = 0.0;
  for (Eigen::Index k = 0; k < es.values.size(); ++k)
    for (Eigen::Index l = 0; l < es.values.size(); ++l) {
      const double lk = std::max(es.values(k), 0.0), ll = std::max(es.values(l), 0.0);
      if (lk + ll < 1e-12) continue;
      sum += 2.0 * (lk - ll) * (lk - ll) / (lk + ll) * std::norm(akl(k, l));
    }
  return sum;
}

double mean_photons(const QuantumState& s) {
  return (expectation(s, number_operator(s.space(), labels::arm1)) + expectation(s, number_operator(s.space(), labels::arm2))).real();
}

}  // namespace

// ---------------------------------------------------------------------------
// phase and loss

TEST(Phase, ZeroIsIdentity) {
  const auto p = build_probe(ProbeKind::qwp, 1.0);
  EXPECT_LT((apply_phase(p.state, 0.0).vector() - p.state.vector()).norm(), 1e-15);
}

TEST(Phase, RotatesCoherentAmplitudeInArmOne) {
  const C a(0.7, 0.2);
  const double phi = 0.4;
  const HilbertSpec sp({fock_factor(labels::arm1, 20), fock_factor(labels::arm2, 20)});
  const auto s = product_state(sp, {coherent_vector(a, 20), coherent_vector(a, 20)});
  const auto expected = product_state(sp, {coherent_vector(std::polar(1.0, -phi) * a, 20), coherent_vector(a, 20)});
  EXPECT_NEAR(std::abs(expected.vector().dot(apply_phase(s, phi).vector())), 1.0, 1e-12);
}

TEST(Phase, FockStatePicksUpNumberPhase) {
  const double phi = 0.9;
  const HilbertSpec sp({fock_factor(labels::arm1, 6), fock_factor(labels::arm2, 6)});
  const auto s = product_state(sp, {fock_vector(3, 6), fock_vector(2, 6)});
  const C amp = s.vector().dot(apply_phase(s, phi).vector());
  EXPECT_NEAR(std::abs(amp - std::polar(1.0, -3.0 * phi)), 0.0, 1e-14);
}

TEST(Phase, QfiDoesNotDependOnSignConvention) {
  const auto p = build_probe(ProbeKind::qwp, 2.0);
  const LossModel loss{0.1, 0.3, 1.0};
  const double plus = qfi_numeric(apply_loss(apply_phase(p.state, 0.7), loss), labels::arm1);
  const double minus = qfi_numeric(apply_loss(apply_phase(p.state, -0.7), loss), labels::arm1);
  EXPECT_NEAR(plus, minus, 1e-9 * plus);
}

TEST(Loss, ZeroLossLeavesStateUnchanged) {
  const auto p = build_probe(ProbeKind::qwp, 1.0);
  const auto out = apply_loss(p.state, {});
  EXPECT_LT(qwp::testing::max_abs(out.density() - p.state.density()), 1e-12);
}

TEST(Loss, CoherentAmplitudeShrinks) {
  const C a(1.1, -0.4);
  const double p1 = 0.3, p2 = 0.15;
  const HilbertSpec sp({fock_factor(labels::arm1, 25), fock_factor(labels::arm2, 25)});
  const auto s = product_state(sp, {coherent_vector(a, 25), coherent_vector(a, 25)});
  const auto out = apply_loss(s, {p1, p2, 1.0});
  const auto expected = product_state(sp, {coherent_vector(a * std::sqrt(1.0 - p1), 25), coherent_vector(a * std::sqrt(1.0 - p2), 25)});
  EXPECT_NEAR(fidelity(expected.vector(), out), 1.0, 1e-10);
}

TEST(Loss, QwpCoherenceDecaysWithAverageLoss) {
  const double n = 2.0, p1 = 0.1, p2 = 0.3;
  const auto p = build_probe(ProbeKind::qwp, n);
  const auto out = apply_loss(p.state, {p1, p2, 1.0});
  const std::size_t d = out.space().dim_of(labels::arm1);
  const HilbertSpec arms({fock_factor(labels::arm1, d), fock_factor(labels::arm2, d)});
  const Vector phi1 = product_state(arms, {coherent_vector(std::sqrt(n * (1 - p1)), d), fock_vector(0, d)}).vector();
  const Vector phi0 = product_state(arms, {fock_vector(0, d), coherent_vector(std::sqrt(n * (1 - p2)), d)}).vector();
  const Matrix expected = 0.5 * std::exp(-0.5 * (p1 + p2) * n) * phi1 * phi0.adjoint();
  EXPECT_LT(qwp::testing::max_abs(qubit_coherence_block(out) - expected), 1e-9);
}

TEST(Loss, KrausMapMatchesBeamsplitterDilation) {
  std::mt19937_64 rng(3);
  const HilbertSpec sp({qubit_factor(labels::qubit), fock_factor(labels::arm1, 4), fock_factor(labels::arm2, 4)});
  const auto s = QuantumState::mixed(sp, qwp::testing::random_density(rng, sp.size()));
  for (const auto& [p1, p2] : std::vector<std::pair<double, double>>{{0.0, 0.2}, {0.35, 0.1}, {1.0, 0.5}}) {
    const auto kraus = apply_loss(s, {p1, p2, 1.0});
    const auto dilation = loss_by_dilation(s, p1, p2);
    EXPECT_LT(qwp::testing::max_abs(kraus.density() - dilation.density()), 1e-12) << p1 << "," << p2;
  }
}

TEST(Loss, PreservesTrace) {
  std::mt19937_64 rng(11);
  const HilbertSpec sp({qubit_factor(labels::qubit), fock_factor(labels::arm1, 6), fock_factor(labels::arm2, 6)});
  const auto s = QuantumState::mixed(sp, qwp::testing::random_density(rng, sp.size()));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    const auto out = apply_loss(s, {u(rng), u(rng), 1.0});
    EXPECT_NEAR(out.density().trace().real(), 1.0, 1e-10);
  }
}

TEST(Loss, CommutesWithPhaseOnCoherentSector) {
  const auto p = build_probe(ProbeKind::qwp, 1.5, 1e-12);
  const LossModel loss{0.25, 0.4, 1.0};
  for (double phi : {0.3, 1.1, 2.5}) {
    const auto a = apply_loss(apply_phase(p.state, phi), loss);
    const auto b = apply_phase(apply_loss(p.state, loss), phi);
    EXPECT_LT(trace_distance(a, b), 1e-10) << phi;
  }
}

TEST(Loss, RejectsOutOfRangeProbabilities) {
  const auto p = build_probe(ProbeKind::qwp, 1.0);
  EXPECT_THROW(apply_loss(p.state, {1.2, 0.0, 1.0}), ValidationError);
  EXPECT_THROW(apply_loss(p.state, {0.0, -0.1, 1.0}), ValidationError);
}

// ---------------------------------------------------------------------------
// closed form

TEST(QfiAnalytic, LosslessExample) { EXPECT_DOUBLE_EQ(qfi_qwp_analytic(4.0, {}), 24.0); }

TEST(QfiAnalytic, FullLossInPhaseArm) {
  for (double n : {0.5, 2.0, 7.0})
    for (double p2 : {0.0, 0.4, 1.0}) EXPECT_EQ(qfi_qwp_analytic(n, {1.0, p2, 1.0}), 0.0);
}

TEST(QfiAnalytic, AsymmetricLossExample) {
  const LossModel loss{0.1, 0.3, 1.0};
  const double expected = std::exp(-0.8) * 1.8 * 1.8 + 3.6;
  EXPECT_NEAR(qfi_qwp_analytic(2.0, loss), expected, 1e-14);
  const double numeric = probe_qfi(build_probe(ProbeKind::qwp, 2.0), loss);
  EXPECT_NEAR(numeric / expected, 1.0, 1e-3);
}

TEST(QfiAnalytic, NonIncreasingInEachLoss) {
  for (double n : {0.25, 1.0, 4.0, 9.0})
    for (double fixed : {0.0, 0.3, 0.8}) {
      double prev1 = qfi_qwp_analytic(n, {0.0, fixed, 1.0}), prev2 = qfi_qwp_analytic(n, {fixed, 0.0, 1.0});
      for (int k = 1; k <= 20; ++k) {
        const double p = 0.05 * k;
        const double q1 = qfi_qwp_analytic(n, {p, fixed, 1.0}), q2 = qfi_qwp_analytic(n, {fixed, p, 1.0});
        EXPECT_LE(q1, prev1 + 1e-12);
        EXPECT_LE(q2, prev2 + 1e-12);
        prev1 = q1;
        prev2 = q2;
      }
    }
}

// ---------------------------------------------------------------------------
// spectral QFI

TEST(QfiNumeric, PureStateIsFourTimesVariance) {
  std::mt19937_64 rng(5);
  const HilbertSpec sp({qubit_factor("q"), fock_factor("m", 5)});
  for (int trial = 0; trial < 20; ++trial) {
    const Vector psi = qwp::testing::random_vector(rng, sp.size());
    Matrix g(10, 10);
    for (Eigen::Index i = 0; i < 10; ++i)
      for (Eigen::Index j = 0; j < 10; ++j) g(i, j) = qwp::testing::random_cplx(rng);
    const Operator a(sp, 0.5 * (g + g.adjoint()), OperatorKind::hermitian);
    const double mean = std::real(psi.dot(a.matrix() * psi));
    const double var = (a.matrix() * psi).squaredNorm() - mean * mean;
    EXPECT_NEAR(qfi_numeric(QuantumState::pure(sp, psi), a), 4.0 * var, 1e-9);
    // the same state through the mixed-state spectral sum
    EXPECT_NEAR(qfi_numeric(sp, psi * psi.adjoint(), a), 4.0 * var, 1e-8);
  }
}

TEST(QfiNumeric, LosslessQwpClosedForm) {
  for (double n : {1.0, 2.0, 4.0}) {
    const auto p = build_probe(ProbeKind::qwp, n);
    const double iq = qfi_numeric(p.state, labels::arm1);
    EXPECT_NEAR(iq / (n * n + 2.0 * n), 1.0, 1e-6) << n;
  }
}

TEST(QfiNumeric, LossyQwpIsRankTwo) {
  const double n = 2.0;
  const LossModel loss{0.1, 0.3, 1.0};
  const auto s = apply_loss(build_probe(ProbeKind::qwp, n).state, loss);
  const auto es = hermitian_eig(s.density());
  const double c = std::exp(-loss.mean() * n);
  EXPECT_NEAR(es.values(0), 0.5 * (1.0 + c), 1e-9);
  EXPECT_NEAR(es.values(1), 0.5 * (1.0 - c), 1e-9);
  EXPECT_LT(es.values.tail(es.values.size() - 2).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(QfiNumeric, SupportSubspaceMatchesFullSpectrum) {
  // 2 x 17 x 17 = 578 states: above the size where the full decomposition is used
  const auto p = build_probe(ProbeKind::qwp, 2.0);
  ASSERT_GT(p.state.dim(), 512u);
  for (const LossModel& loss : {LossModel{0.1, 0.3, 1.0}, LossModel{0.3, 0.0, 1.0}}) {
    const auto s = apply_loss(apply_phase(p.state, 0.3), loss);
    const Operator n1 = number_operator(s.space(), labels::arm1);
    const double oracle = qfi_full_spectrum(s, n1.matrix());
    EXPECT_NEAR(qfi_numeric(s, labels::arm1) / oracle, 1.0, 1e-9);
    EXPECT_NEAR(qfi_numeric(s, n1) / oracle, 1.0, 1e-9);
  }
}

TEST(QfiNumeric, MixedEcsMatchesFullSpectrum) {
  const auto p = build_probe(ProbeKind::ecs, 1.0);
  const auto s = apply_loss(p.state, {0.2, 0.1, 1.0});
  const double oracle = qfi_full_spectrum(s, number_operator(s.space(), labels::arm1).matrix());
  EXPECT_NEAR(qfi_numeric(s, labels::arm1) / oracle, 1.0, 1e-9);
}

TEST(QfiNumeric, IndependentOfPhase) {
  const LossModel loss{0.1, 0.3, 1.0};
  for (auto kind : {ProbeKind::qwp, ProbeKind::ecs, ProbeKind::noon}) {
    const auto p = build_probe(kind, 2.0);
    const double ref = probe_qfi(p, loss, 0.0);
    for (double phi : {0.3, 1.1}) EXPECT_NEAR(probe_qfi(p, loss, phi) / ref, 1.0, 1e-6) << to_string(kind) << " " << phi;
  }
}

TEST(QfiNumeric, RejectsInvalidInput) {
  const HilbertSpec sp({fock_factor(labels::arm1, 3)});
  const Operator n1 = number_operator(sp, labels::arm1);
  Matrix bad = Matrix::Identity(3, 3);
  try {
    qfi_numeric(sp, bad, n1);
    FAIL() << "trace 3 accepted";
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "not a state");
  }
  Matrix g = Matrix::Zero(3, 3);
  g(0, 1) = 1.0;
  EXPECT_THROW(qfi_numeric(QuantumState::pure(sp, fock_vector(0, 3)), Operator(sp, g)), ValidationError);
}

// ---------------------------------------------------------------------------
// probes

TEST(Probes, NoonLosslessIsHeisenberg) {
  for (int n = 1; n <= 6; ++n) {
    const auto p = build_probe(ProbeKind::noon, n);
    EXPECT_NEAR(qfi_numeric(p.state, labels::arm1), static_cast<double>(n * n), 1e-10) << n;
    EXPECT_NEAR(qfi_numeric(p.state, number_operator(p.state.space(), labels::arm1)), static_cast<double>(n * n), 1e-10);
  }
}

TEST(Probes, NoonNeedsIntegerN) {
  try {
    build_probe(ProbeKind::noon, 2.5);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "NOON requires integer N");
  }
}

TEST(Probes, EcsNormalizationIncludesOverlap) {
  for (double n : {0.1, 1.0, 3.0}) {
    const std::size_t d = minimal_fock_dim(std::sqrt(n));
    const HilbertSpec sp({fock_factor(labels::arm1, d), fock_factor(labels::arm2, d)});
    const Vector coh = coherent_vector(std::sqrt(n), d), vac = fock_vector(0, d);
    const Vector raw = product_state(sp, {coh, vac}).vector() + product_state(sp, {vac, coh}).vector();
    EXPECT_NEAR(raw.squaredNorm(), 2.0 * (1.0 + std::exp(-n)), 1e-9);
    EXPECT_NEAR(build_probe(ProbeKind::ecs, n).state.vector().norm(), 1.0, 1e-9);
  }
}

TEST(Probes, MeanPhotonNumbers) {
  for (double n : {0.5, 2.0, 5.0}) {
    EXPECT_NEAR(mean_photons(build_probe(ProbeKind::qwp, n).state), n, 1e-8);
    // ECS with |alpha|^2 = N carries N / (1 + e^{-N}) photons on average
    EXPECT_NEAR(mean_photons(build_probe(ProbeKind::ecs, n).state), n / (1.0 + std::exp(-n)), 1e-8);
  }
  EXPECT_NEAR(mean_photons(build_probe(ProbeKind::noon, 3.0).state), 3.0, 1e-14);
}

TEST(Probes, QwpBeatsEcsWithShrinkingGap) {
  double prev_gap = 1e300;
  for (int k = 1; k <= 100; ++k) {
    const double n = 0.1 * k;
    const double qwp = qfi_numeric(build_probe(ProbeKind::qwp, n).state, labels::arm1);
    const double ecs = qfi_numeric(build_probe(ProbeKind::ecs, n).state, labels::arm1);
    EXPECT_GE(qwp, ecs) << n;
    if (n >= 3.0) {
      EXPECT_LT(qwp - ecs, prev_gap) << n;
      prev_gap = qwp - ecs;
    }
  }
}

TEST(Probes, RejectNonPositiveN) {
  EXPECT_THROW(build_probe(ProbeKind::qwp, 0.0), ValidationError);
  EXPECT_THROW(build_probe(ProbeKind::ecs, -1.0), ValidationError);
}

// ---------------------------------------------------------------------------
// Cramer-Rao

TEST(CramerRao, Reciprocal) { EXPECT_DOUBLE_EQ(cramer_rao(24.0), 1.0 / 24.0); }

TEST(CramerRao, QwpBoundBelowNoon) {
  const double qwp = cramer_rao(qfi_numeric(build_probe(ProbeKind::qwp, 4.0).state, labels::arm1));
  const double noon = cramer_rao(qfi_numeric(build_probe(ProbeKind::noon, 4.0).state, labels::arm1));
  EXPECT_NEAR(qwp, 1.0 / 24.0, 1e-8);
  EXPECT_NEAR(noon, 1.0 / 16.0, 1e-12);
  EXPECT_LT(qwp, noon);
}

TEST(CramerRao, NoInformation) {
  for (double iq : {0.0, -1.0, 1e-320}) {
    try {
      cramer_rao(iq);
      FAIL() << iq;
    } catch (const ValidationError& e) {
      EXPECT_STREQ(e.what(), "no information");
    }
  }
}

// ---------------------------------------------------------------------------
// sweep rows

TEST(Sweep, RowColumnsAndNoonPolicy) {
  const auto row = qfi_point(2.0, {0.1, 0.3, 1.0});
  EXPECT_NEAR(row.qwp_numeric / row.qwp_analytic, 1.0, 1e-3);
  EXPECT_TRUE(std::isfinite(row.noon));
  EXPECT_TRUE(std::isnan(qfi_point(1.5, {0.1, 0.0, 1.0}).noon));
  EXPECT_DOUBLE_EQ(qfi_point(1.5, {}).noon, 2.25);
  const auto t = qfi_table({row});
  EXPECT_EQ(t.header, (std::vector<std::string>{"N", "p1", "p2", "IQ_qwp_analytic", "IQ_qwp_numeric", "IQ_ecs", "IQ_noon"}));
}
