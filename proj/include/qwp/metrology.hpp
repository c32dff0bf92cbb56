#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "qwp/csv.hpp"
#include "qwp/fock.hpp"
#include "qwp/virtual_cavity.hpp"

namespace qwp {

struct LossModel {
  double p1 = 0.0;
  double p2 = 0.0;
  double eta = 1.0;

  double mean() const { return 0.5 * (p1 + p2); }

  void validate() const {
    detail::require(p1 >= 0.0 && p1 <= 1.0, "p1 must lie in [0,1]");
    detail::require(p2 >= 0.0 && p2 <= 1.0, "p2 must lie in [0,1]");
    detail::require(eta >= 0.0 && eta <= 1.0, "eta must lie in [0,1]");
  }
};

enum class ProbeKind { qwp, ecs, noon };

inline std::string to_string(ProbeKind k) {
  switch (k) {
    case ProbeKind::qwp: return "qwp";
    case ProbeKind::ecs: return "ecs";
    case ProbeKind::noon: return "noon";
  }
  return "?";
}

struct ProbeState {
  ProbeKind kind = ProbeKind::qwp;
  double size = 0.0;  // N: |alpha|^2 for QWP and ECS, photon number for NOON
  QuantumState state;
};

// U(phi) = exp(-i phi n_1), so |alpha>_1 -> |e^{-i phi} alpha>_1 and |N>_1 -> e^{-i N phi}|N>_1.
inline QuantumState apply_phase(const QuantumState& s, double phi) {
  const HilbertSpec& sp = s.space();
  const std::size_t f = sp.index_of(labels::arm1);
  Vector ph(static_cast<Eigen::Index>(sp.size()));
  for (std::size_t i = 0; i < sp.size(); ++i)
    ph(static_cast<Eigen::Index>(i)) = std::polar(1.0, -phi * static_cast<double>(sp.level(i, f)));
  if (s.is_pure()) return QuantumState::pure(sp, ph.cwiseProduct(s.vector()));
  Matrix rho = ph.asDiagonal() * s.density_ref() * ph.conjugate().asDiagonal();
  return QuantumState::mixed(sp, std::move(rho), 1e-9, 0);
}

// Fictitious beamsplitter with a vacuum loss mode in each arm, loss mode traced out (applied
// as the equivalent Kraus map).
inline QuantumState apply_loss(const QuantumState& s, const LossModel& loss) {
  loss.validate();
  QuantumState out = s;
  if (loss.p1 > 0.0) out = apply_local_channel(out, labels::arm1, loss_kraus(loss.p1, out.space().dim_of(labels::arm1)));
  if (loss.p2 > 0.0) out = apply_local_channel(out, labels::arm2, loss_kraus(loss.p2, out.space().dim_of(labels::arm2)));
  return out;
}

// e^{-2 pbar N} [(1 - p1) N]^2 + 2 (1 - p1) N
inline double qfi_qwp_analytic(double n, const LossModel& loss) {
  detail::require(n >= 0.0, "N must be non-negative");
  loss.validate();
  const double m = (1.0 - loss.p1) * n;
  return std::exp(-2.0 * loss.mean() * n) * m * m + 2.0 * m;
}

inline constexpr double default_eig_cutoff = 1e-12;

namespace detail {

using ApplyGenerator = std::function<Matrix(const Matrix&)>;

inline double qfi_pure(const Vector& psi, const ApplyGenerator& a) {
  const Matrix av = a(psi);
  const double mean = std::real(psi.dot(av.col(0)));
  return 4.0 * (av.col(0).squaredNorm() - mean * mean);
}

// Eigenpairs of rho covering its support, found in a Krylov-type subspace rho^2 Omega with a
// fixed-seed Omega, enlarged until the Ritz values include one below `eps` and the captured
// trace is 1. Falls back to the full decomposition for small or nearly full-rank rho.
inline EigenSystem support_eigenpairs(const Matrix& rho, double eps) {
  const Eigen::Index n = rho.rows();
  constexpr Eigen::Index full_limit = 512;
  if (n <= full_limit) return hermitian_eig(rho, 1e-8);
  std::mt19937_64 rng(20240601);
  std::normal_distribution<double> g;
  for (Eigen::Index r = 16; 2 * r <= n; r *= 2) {
    Matrix omega(n, r);
    for (Eigen::Index j = 0; j < r; ++j)
      for (Eigen::Index i = 0; i < n; ++i) omega(i, j) = cplx(g(rng), g(rng));
    const Matrix y = rho * (rho * omega);
    const Matrix q = Eigen::HouseholderQR<Matrix>(y).householderQ() * Matrix::Identity(n, r);
    const Matrix t = q.adjoint() * rho * q;
    EigenSystem small = hermitian_eig(t, 1e-8);
    if (small.values(r - 1) < eps && std::abs(1.0 - small.values.sum()) < 1e-11)
      return {small.values, q * small.vectors};
  }
  return hermitian_eig(rho, 1e-8);
}

// 2 sum_{kl} (l_k - l_l)^2 / (l_k + l_l) |<k|A|l>|^2 with pairs l_k + l_l < eps dropped.
// Over a partial eigenbasis the pairs with a null-space partner are summed through
// sum_l |<k|A|l>|^2 = ||A|k>||^2.
inline double qfi_mixed(const Matrix& rho, const ApplyGenerator& a, double eps) {
  EigenSystem es = support_eigenpairs(rho, eps);
  const Eigen::Index r = es.values.size();
  for (Eigen::Index k = 0; k < r; ++k) es.values(k) = std::max(es.values(k), 0.0);
  const Matrix av = a(es.vectors);
  const Matrix akl = es.vectors.adjoint() * av;
  if (r == rho.rows()) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < r; ++k)
      for (Eigen::Index l = 0; l < r; ++l) {
        const double sum = es.values(k) + es.values(l);
        if (sum < eps) continue;
        const double diff = es.values(k) - es.values(l);
        s += diff * diff / sum * std::norm(akl(k, l));
      }
    return 2.0 * s;
  }
  double s = 0.0;
  for (Eigen::Index k = 0; k < r; ++k) {
    s += 4.0 * es.values(k) * av.col(k).squaredNorm();
    for (Eigen::Index l = 0; l < r; ++l) {
      const double sum = es.values(k) + es.values(l);
      if (sum < eps) continue;
      s -= 8.0 * es.values(k) * es.values(l) / sum * std::norm(akl(k, l));
    }
  }
  return s;
}

inline double qfi_state(const QuantumState& s, const ApplyGenerator& a, double eps) {
  if (s.is_pure()) return qfi_pure(s.vector(), a);
  return qfi_mixed(s.density_ref(), a, eps);
}

}  // namespace detail

// Quantum Fisher information of `rho` with respect to the Hermitian generator.
inline double qfi_numeric(const QuantumState& rho, const Operator& generator, double eps = default_eig_cutoff) {
  detail::require(rho.space() == generator.space(), "operator and state act on different spaces");
  if (!detail::is_hermitian(generator.matrix(), 1e-10)) throw ValidationError("generator not Hermitian");
  const Matrix& a = generator.matrix();
  return detail::qfi_state(rho, [&](const Matrix& x) -> Matrix { return a * x; }, eps);
}

inline double qfi_numeric(const HilbertSpec& space, const Matrix& rho, const Operator& generator,
                          double eps = default_eig_cutoff) {
  return qfi_numeric(QuantumState::mixed(space, rho, 1e-9, 0), generator, eps);
}

// Same with the photon number of one mode as generator, applied as a diagonal.
inline double qfi_numeric(const QuantumState& rho, const std::string& mode, double eps = default_eig_cutoff) {
  const HilbertSpec& sp = rho.space();
  const std::size_t f = sp.index_of(mode);
  Eigen::VectorXd n(static_cast<Eigen::Index>(sp.size()));
  for (std::size_t i = 0; i < sp.size(); ++i) n(static_cast<Eigen::Index>(i)) = static_cast<double>(sp.level(i, f));
  return detail::qfi_state(rho, [&](const Matrix& x) -> Matrix { return n.asDiagonal() * x; }, eps);
}

inline double cramer_rao(double iq) {
  if (!(iq > 0.0) || !std::isfinite(1.0 / iq)) throw ValidationError("no information");
  return 1.0 / iq;
}

inline bool is_integer(double n) { return std::abs(n - std::round(n)) < 1e-12; }

// Lossless probe with N = |alpha|^2 (QWP, ECS) or N photons (NOON). Coherent factors get the
// smallest dimension with Poisson tail below `tol`.
inline ProbeState build_probe(ProbeKind kind, double n, double tol = default_tail_tolerance) {
  detail::require(n > 0.0, "N must be positive");
  ProbeState p{kind, n, QuantumState()};
  if (kind == ProbeKind::noon) {
    if (!is_integer(n)) throw ValidationError("NOON requires integer N");
    const auto k = static_cast<std::size_t>(std::llround(n));
    const HilbertSpec sp({fock_factor(labels::arm1, k + 1, tol), fock_factor(labels::arm2, k + 1, tol)});
    const Vector psi = product_state(sp, {fock_vector(k, k + 1), fock_vector(0, k + 1)}).vector() +
                       product_state(sp, {fock_vector(0, k + 1), fock_vector(k, k + 1)}).vector();
    p.state = QuantumState::pure(sp, psi / std::sqrt(2.0));
    return p;
  }
  const double alpha = std::sqrt(n);
  const std::size_t d = minimal_fock_dim(alpha, tol);
  if (kind == ProbeKind::qwp) {
    p.state = ideal_qwp_state(alpha, qwp_space(d, tol));
    return p;
  }
  const HilbertSpec sp({fock_factor(labels::arm1, d, tol), fock_factor(labels::arm2, d, tol)});
  const Vector coh = coherent_vector(alpha, d), vac = fock_vector(0, d);
  const Vector psi = product_state(sp, {coh, vac}).vector() + product_state(sp, {vac, coh}).vector();
  p.state = QuantumState::pure(sp, psi / std::sqrt(2.0 * (1.0 + std::exp(-n))));
  return p;
}

// QFI of a probe after the phase and the loss channel, generator n_1.
inline double probe_qfi(const ProbeState& probe, const LossModel& loss, double phi = 0.0,
                        double eps = default_eig_cutoff) {
  return qfi_numeric(apply_loss(apply_phase(probe.state, phi), loss), labels::arm1, eps);
}

struct QfiRow {
  double n, p1, p2;
  double qwp_analytic, qwp_numeric, ecs, noon;
};

// NOON is evaluated only at integer N; elsewhere it is N^2 when lossless and NaN otherwise.
inline QfiRow qfi_point(double n, const LossModel& loss, double tol = default_tail_tolerance) {
  QfiRow row{n, loss.p1, loss.p2, qfi_qwp_analytic(n, loss), 0.0, 0.0, 0.0};
  row.qwp_numeric = probe_qfi(build_probe(ProbeKind::qwp, n, tol), loss);
  row.ecs = probe_qfi(build_probe(ProbeKind::ecs, n, tol), loss);
  if (is_integer(n))
    row.noon = probe_qfi(build_probe(ProbeKind::noon, n, tol), loss);
  else
    row.noon = loss.p1 == 0.0 && loss.p2 == 0.0 ? n * n : std::numeric_limits<double>::quiet_NaN();
  return row;
}

inline csv::Table qfi_table(const std::vector<QfiRow>& rows) {
  csv::Table t;
  t.header = {"N", "p1", "p2", "IQ_qwp_analytic", "IQ_qwp_numeric", "IQ_ecs", "IQ_noon"};
  for (const auto& r : rows) t.rows.push_back({r.n, r.p1, r.p2, r.qwp_analytic, r.qwp_numeric, r.ecs, r.noon});
  return t;
}

}  // namespace qwp
