#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>

#include "qwp/csv.hpp"
#include "qwp/fock.hpp"
#include "qwp/metrology.hpp"
#include "qwp/virtual_cavity.hpp"

namespace qwp {

namespace labels {
inline const std::string a_plus = "a_plus";
inline const std::string a_minus = "a_minus";
inline const std::string target = "target";
}  // namespace labels

// |+> = (|1> + |0>)/sqrt2, |-> = (|1> - |0>)/sqrt2.
inline Vector plus_vector() { return Vector::Constant(2, 1.0 / std::numbers::sqrt2); }
inline Vector minus_vector() {
  Vector v(2);
  v << -1.0 / std::numbers::sqrt2, 1.0 / std::numbers::sqrt2;
  return v;
}

// ---------------------------------------------------------------------------
// Re-encoding and cat states

// 50:50 beamsplitter taking arm1, arm2 to a_+ = (a1 + a2)/sqrt2, a_- = (a1 - a2)/sqrt2. The
// factors keep their positions and are renamed.
inline QuantumState reencode(const QuantumState& qwp) {
  const HilbertSpec& sp = qwp.space();
  const std::size_t d = sp.dim_of(labels::arm1);
  detail::require(sp.dim_of(labels::arm2) == d, "arms need equal dimensions");
  // exp{pi/4 (a1^dag a2 - a1 a2^dag)} sends (a1, a2) -> ((a1 + a2), (a2 - a1))/sqrt2; the
  // parity (-1)^{n_2} flips the sign of the second output.
  Matrix bs = two_mode_exchange(cplx(0.0, -0.25 * std::numbers::pi), d);
  for (std::size_t n1 = 0; n1 < d; ++n1)
    for (std::size_t n2 = 1; n2 < d; n2 += 2) bs.row(static_cast<Eigen::Index>(n1 * d + n2)) *= -1.0;
  const SparseMatrix u = embed_sparse(sp, labels::arm1, labels::arm2, bs);
  const HilbertSpec out = sp.relabel({{labels::arm1, labels::a_plus}, {labels::arm2, labels::a_minus}});
  if (qwp.is_pure()) return QuantumState::pure(out, u * qwp.vector());
  const Matrix ur = u * qwp.density_ref();
  Matrix rho = u * ur.adjoint();
  return QuantumState::mixed(out, rho.adjoint(), 1e-9, 0);
}

enum class Parity { even, odd };

// (|alpha> +- |-alpha>)/sqrt(N_+-), N_+- = 2(1 +- e^{-2|alpha|^2}). Only the even or odd Fock
// components are filled, so the parity is exact.
inline Vector cat_vector(cplx alpha, Parity parity, std::size_t dim, double tol = default_tail_tolerance) {
  check_truncation(alpha, dim, tol);
  const double m = std::norm(alpha);
  if (parity == Parity::odd && m == 0.0) throw ValidationError("odd cat undefined at alpha=0");
  const double norm = parity == Parity::even ? 2.0 * (1.0 + std::exp(-2.0 * m)) : -2.0 * std::expm1(-2.0 * m);
  const Vector coh = coherent_vector(alpha, dim);
  Vector v = Vector::Zero(static_cast<Eigen::Index>(dim));
  for (std::size_t n = parity == Parity::even ? 0 : 1; n < dim; n += 2)
    v(static_cast<Eigen::Index>(n)) = 2.0 * coh(static_cast<Eigen::Index>(n));
  return v / std::sqrt(norm);
}

inline QuantumState cat_state(cplx alpha, Parity parity, std::size_t dim, double tol = default_tail_tolerance) {
  return QuantumState::pure(HilbertSpec({fock_factor("mode", dim, tol)}), cat_vector(alpha, parity, dim, tol));
}

// ---------------------------------------------------------------------------
// Parity-conditioned phase gate

// Z = |1><1| - |0><0| on the target when the field parity is odd; diagonal in the product basis.
inline Eigen::VectorXd parity_gate_diagonal(const HilbertSpec& sp, const std::string& target, const std::string& field) {
  const std::size_t ft = sp.index_of(target), ff = sp.index_of(field);
  detail::require(!sp.factor(ft).fock, "parity gate target must be a qubit");
  detail::require(sp.factor(ff).fock, "parity gate field must be a Fock mode");
  Eigen::VectorXd s(static_cast<Eigen::Index>(sp.size()));
  for (std::size_t i = 0; i < sp.size(); ++i)
    s(static_cast<Eigen::Index>(i)) = sp.level(i, ff) % 2 == 1 && sp.level(i, ft) == 0 ? -1.0 : 1.0;
  return s;
}

inline Operator parity_gate_operator(const HilbertSpec& sp, const std::string& target, const std::string& field) {
  return Operator(sp, Matrix(parity_gate_diagonal(sp, target, field).cast<cplx>().asDiagonal()), OperatorKind::unitary);
}

inline QuantumState parity_gate(const QuantumState& s, const std::string& target = labels::target,
                                const std::string& field = labels::a_minus) {
  const Eigen::VectorXd z = parity_gate_diagonal(s.space(), target, field);
  if (s.is_pure()) return QuantumState::pure(s.space(), z.cast<cplx>().cwiseProduct(s.vector()));
  Matrix rho = z.asDiagonal() * s.density_ref() * z.asDiagonal();
  return QuantumState::mixed(s.space(), std::move(rho), 1e-9, 0);
}

// ---------------------------------------------------------------------------
// Homodyne POVM

struct MeasurementModel {
  double eta = 1.0;
  double theta = 0.0;    // quadrature direction; alpha_p = e^{i theta}|alpha_p|
  double alpha_p = 0.0;  // |alpha_p|, used for the quadrature convergence check
};

struct Povm {
  Operator plus;
  Operator minus;
};

namespace detail {

// Hermite functions psi_0..psi_{dim-1} at x (eigenfunctions of x = (a + a^dag)/sqrt2).
inline void hermite_functions(double x, Eigen::VectorXd& out) {
  const auto d = out.size();
  out(0) = std::pow(std::numbers::pi, -0.25) * std::exp(-0.5 * x * x);
  if (d > 1) out(1) = std::numbers::sqrt2 * x * out(0);
  for (Eigen::Index n = 1; n + 1 < d; ++n) {
    const double nn = static_cast<double>(n);
    out(n + 1) = std::sqrt(2.0 / (nn + 1.0)) * x * out(n) - std::sqrt(nn / (nn + 1.0)) * out(n - 1);
  }
}

// C_0 = int dy f(y) |y><y| over the x eigenbasis, composite 20-point Gauss-Legendre on
// `panels` panels per half line [0, l] and [-l, 0].
inline Eigen::MatrixXd quadrature_operator(double k, std::size_t dim, double l, std::size_t panels) {
  using GL = boost::math::quadrature::gauss<double, 20>;
  const auto& xs = GL::abscissa();
  const auto& ws = GL::weights();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  Eigen::VectorXd psi(static_cast<Eigen::Index>(dim));
  const double h = l / static_cast<double>(panels);
  auto add = [&](double y, double w) {
    const double f = std::isinf(k) ? (y > 0 ? 1.0 : -1.0) : std::erf(k * y);
    hermite_functions(y, psi);
    c.noalias() += (w * f) * psi * psi.transpose();
  };
  for (std::size_t p = 0; p < panels; ++p) {
    const double mid = (static_cast<double>(p) + 0.5) * h;
    // the rule stores non-negative abscissae only; the zero node has weight ws[0]
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double w = 0.5 * h * ws[i];
      for (double sgn : {1.0, -1.0}) {
        if (xs[i] == 0.0 && sgn < 0) continue;
        const double y = mid + sgn * 0.5 * h * xs[i];
        add(y, w);
        add(-y, w);
      }
    }
  }
  return c;
}

}  // namespace detail

// P_+- = (1 +- C_theta)/2 on one mode. The x integral of the smeared kernel against sign(x)
// is done analytically, C_0 = erf(sqrt(eta/(1-eta)) x), which becomes sign(x) at eta = 1;
// the remaining integral over the x eigenbasis is done by quadrature.
inline Povm homodyne_povm(const MeasurementModel& m, std::size_t dim, const std::string& label = labels::a_minus,
                          double tol = default_tail_tolerance) {
  if (!(m.eta >= 0.0 && m.eta <= 1.0)) throw ValidationError("invalid efficiency");
  detail::require(dim >= 1, "homodyne needs dim >= 1");
  const auto n = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd c0 = Eigen::MatrixXd::Zero(n, n);
  if (m.eta > 0.0) {
    const double k = m.eta == 1.0 ? std::numeric_limits<double>::infinity() : std::sqrt(m.eta / (1.0 - m.eta));
    const double l = std::max(6.0 * (m.alpha_p + 1.0), std::sqrt(2.0 * static_cast<double>(dim) + 1.0) + 10.0);
    std::size_t panels = 8;
    Eigen::MatrixXd prev = detail::quadrature_operator(k, dim, l, panels);
    for (;;) {
      panels *= 2;
      c0 = detail::quadrature_operator(k, dim, l, panels);
      if ((c0 - prev).cwiseAbs().maxCoeff() < 1e-12) break;
      if (panels >= 8192) throw NumericalError("homodyne quadrature did not converge");
      prev = c0;
    }
  }
  // C_theta = R C_0 R^dag with R = e^{i theta n}
  Matrix c = c0.cast<cplx>();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) c(i, j) *= std::polar(1.0, m.theta * static_cast<double>(i - j));
  c = 0.5 * (c + c.adjoint()).eval();
  const HilbertSpec sp({fock_factor(label, dim, tol)});
  const Matrix id = Matrix::Identity(n, n);
  Matrix plus = 0.5 * (id + c);
  Matrix minus = id - plus;
  return {Operator(sp, std::move(plus), OperatorKind::hermitian), Operator(sp, std::move(minus), OperatorKind::hermitian)};
}

// ---------------------------------------------------------------------------
// Measurement update

struct MeasuredState {
  QuantumState state;
  double probability = 0.0;
};

namespace detail {
inline Matrix psd_sqrt(const Matrix& p) {
  if (max_abs(p - p.adjoint()) > 1e-10) throw ValidationError("POVM element not Hermitian");
  const EigenSystem es = hermitian_eig(p);
  if (es.values.size() > 0 && es.values.minCoeff() < -1e-10) throw ValidationError("POVM element not positive");
  const Eigen::VectorXd r = es.values.cwiseMax(0.0).cwiseSqrt();
  return es.vectors * r.cast<cplx>().asDiagonal() * es.vectors.adjoint();
}

inline MeasuredState kraus_update(const QuantumState& s, const SparseMatrix& k) {
  Matrix rho;
  if (s.is_pure()) {
    const Vector v = k * s.vector();
    rho = v * v.adjoint();
  } else {
    const Matrix kr = k * s.density_ref();
    rho = Matrix(k * kr.adjoint()).adjoint();
  }
  const double prob = rho.trace().real();
  if (!(prob > 1e-14)) throw ValidationError("outcome has zero support");
  rho /= prob;
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return {QuantumState::mixed(s.space(), std::move(rho), 1e-9, 0), prob};
}
}  // namespace detail

// Generalized measurement with Kraus operator sqrt(P); P acts on the factor named by its
// single-factor space.
inline MeasuredState measurement_update(const QuantumState& s, const Operator& p) {
  const HilbertSpec& psp = p.space();
  if (psp == s.space()) return detail::kraus_update(s, detail::psd_sqrt(p.matrix()).sparseView());
  detail::require(psp.num_factors() == 1, "POVM element must act on one factor or the whole space");
  const std::string& label = psp.factor(0).label;
  detail::require(s.space().dim_of(label) == psp.size(), "POVM element does not match factor '" + label + "'");
  return detail::kraus_update(s, embed_sparse(s.space(), label, detail::psd_sqrt(p.matrix())));
}

// ---------------------------------------------------------------------------
// X states and concurrence

// Basis {|00>, |01>, |10>, |11>}: diagonal a, b, c, d; w = rho_{00,11}, z = rho_{01,10}.
struct XState {
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
  cplx w = 0.0, z = 0.0;

  bool valid() const {
    return a >= -1e-12 && b >= -1e-12 && c >= -1e-12 && d >= -1e-12 && std::abs(a + b + c + d - 1.0) <= 1e-9 &&
           std::norm(w) <= a * d + 1e-12 && std::norm(z) <= b * c + 1e-12;
  }

  Matrix matrix() const {
    Matrix m = Matrix::Zero(4, 4);
    m(0, 0) = a;
    m(1, 1) = b;
    m(2, 2) = c;
    m(3, 3) = d;
    m(0, 3) = w;
    m(3, 0) = std::conj(w);
    m(1, 2) = z;
    m(2, 1) = std::conj(z);
    return m;
  }

  // X-shaped entries of a two-qubit density matrix; the rest is dropped.
  static XState from_matrix(const Matrix& rho) {
    detail::require(rho.rows() == 4 && rho.cols() == 4, "two-qubit density matrix required");
    return {rho(0, 0).real(), rho(1, 1).real(), rho(2, 2).real(), rho(3, 3).real(), rho(0, 3), rho(1, 2)};
  }
};

inline double concurrence_xstate(const XState& x) {
  if (!x.valid()) throw ValidationError("not a state");
  return 2.0 * std::max({0.0, std::abs(x.z) - std::sqrt(x.a * x.d), std::abs(x.w) - std::sqrt(x.b * x.c)});
}

// max(0, l1 - l2 - l3 - l4) with l_i the square roots of the eigenvalues of
// rho (sy x sy) rho^* (sy x sy), taken from the Hermitian form sqrt(rho) rho~ sqrt(rho).
inline double concurrence_general(const Matrix& rho) {
  detail::require(rho.rows() == 4 && rho.cols() == 4, "two-qubit density matrix required");
  Matrix yy = Matrix::Zero(4, 4);
  yy(0, 3) = yy(3, 0) = -1.0;
  yy(1, 2) = yy(2, 1) = 1.0;
  const Matrix tilde = yy * rho.conjugate() * yy;
  const EigenSystem es = hermitian_eig(rho);
  const Eigen::VectorXd r = es.values.cwiseMax(0.0).cwiseSqrt();
  const Matrix sq = es.vectors * r.cast<cplx>().asDiagonal() * es.vectors.adjoint();
  Matrix m = sq * tilde * sq;
  m = 0.5 * (m + m.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> ev(m, Eigen::EigenvaluesOnly);
  Eigen::VectorXd l = ev.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  std::sort(l.data(), l.data() + 4, std::greater<>());
  return std::max(0.0, l(0) - l(1) - l(2) - l(3));
}

inline double concurrence_general(const QuantumState& s) {
  detail::require(s.dim() == 4, "two-qubit state required");
  return concurrence_general(s.density());
}

// ---------------------------------------------------------------------------
// Protocol closed forms

enum class Outcome { plus, minus };

// Post-beamsplitter amplitude |alpha_p| = sqrt(N (1 - p) / 2).
inline double post_beamsplitter_amplitude(double n, double p) { return std::sqrt(0.5 * n * (1.0 - p)); }

// rho~_+- = p_+- rho_+ + p_-+ rho_-, p_+- = [1 +- erf(sqrt(2 eta)|alpha_p|)]/2, with
// rho_+ on {|00>,|11>} and rho_- on {|01>,|10>}, both with coherence e^{-pN}/2.
inline XState post_measurement_xstate(double n, const LossModel& loss, Outcome outcome = Outcome::plus) {
  detail::require(n >= 0.0, "N must be non-negative");
  loss.validate();
  if (loss.p1 != loss.p2) throw ValidationError("protocol analysis requires p1=p2");
  const double p = loss.p1;
  const double e = std::erf(std::sqrt(2.0 * loss.eta) * post_beamsplitter_amplitude(n, p));
  const double hi = 0.5 * (1.0 + e), lo = 0.5 * std::erfc(std::sqrt(2.0 * loss.eta) * post_beamsplitter_amplitude(n, p));
  const double pp = outcome == Outcome::plus ? hi : lo;
  const double pm = outcome == Outcome::plus ? lo : hi;
  const double coh = std::exp(-p * n);
  return {0.5 * pp, 0.5 * pm, 0.5 * pm, 0.5 * pp, 0.5 * pp * coh, 0.5 * pm * coh};
}

// C = max{0, (1 - delta) e^{-N_lost} - delta}, delta = erfc(sqrt(N_det))/2.
inline double concurrence_protocol(double n_det, double n_lost) {
  detail::require(n_det >= 0.0 && n_lost >= 0.0, "photon numbers must be non-negative");
  const double s = std::sqrt(n_det);
  return std::max(0.0, 0.5 * ((1.0 + std::erf(s)) * std::exp(-n_lost) - std::erfc(s)));
}

// N_lost at which concurrence_protocol reaches zero, by bracketed root finding.
inline double sudden_death_threshold(double n_det) {
  detail::require(n_det > 0.0, "N_det must be positive");
  const double s = std::sqrt(n_det);
  const double ec = std::erfc(s);
  if (!(ec > 0.0)) throw NumericalError("erfc underflow: threshold beyond double range");
  const double up = 1.0 + std::erf(s);
  auto f = [&](double x) { return 0.5 * (up * std::exp(-x) - ec); };
  double hi = 1.0;
  while (f(hi) > 0.0) hi *= 2.0;
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(f, 0.0, hi, boost::math::tools::eps_tolerance<double>(50), iters);
  return 0.5 * (r.first + r.second);
}

inline csv::Table concurrence_map(const std::vector<double>& n_det, const std::vector<double>& n_lost) {
  csv::Table t;
  t.header = {"N_det", "N_lost", "C"};
  for (double nd : n_det)
    for (double nl : n_lost) t.rows.push_back({nd, nl, concurrence_protocol(nd, nl)});
  return t;
}

// ---------------------------------------------------------------------------
// Dense pipeline

struct ProtocolOptions {
  Outcome outcome = Outcome::plus;
  double tail_tolerance = default_tail_tolerance;
  std::size_t arm_dim = 0;  // 0: smallest dimension meeting the tail tolerance
};

namespace detail {
inline std::size_t protocol_dim(cplx alpha0, const ProtocolOptions& opt) {
  const std::size_t d = opt.arm_dim ? opt.arm_dim : minimal_fock_dim(alpha0, opt.tail_tolerance);
  check_truncation(alpha0, d, opt.tail_tolerance);
  return d;
}

// QWP state -> beamsplitter -> trace a_+: qubit (x) a_-.
inline QuantumState which_path_field(cplx alpha0, double p, std::size_t d, double tol) {
  const QuantumState qwp = apply_loss(ideal_qwp_state(alpha0, qwp_space(d, tol)), {p, p, 1.0});
  return partial_trace(reencode(qwp), {labels::qubit, labels::a_minus});
}

inline QuantumState add_target(const QuantumState& s, const std::string& label) {
  return tensor(s, QuantumState::pure(HilbertSpec({qubit_factor(label)}), plus_vector()));
}

inline QuantumState measure_field(const QuantumState& s, double eta, double theta, double amp, Outcome outcome,
                                  double tol) {
  const Povm povm = homodyne_povm({eta, theta, amp}, s.space().dim_of(labels::a_minus), labels::a_minus, tol);
  const MeasuredState m = measurement_update(s, outcome == Outcome::plus ? povm.plus : povm.minus);
  std::vector<std::string> keep;
  for (const auto& f : s.space().factors())
    if (f.label != labels::a_minus) keep.push_back(f.label);
  return partial_trace(m.state, keep);
}
}  // namespace detail

// QWP state at alpha0 = sqrt(N) with symmetric loss, re-encoded, parity gate on a target in
// |+>, homodyne with efficiency eta, field traced out. Qubit order: control, target.
inline QuantumState protocol_state(double n, const LossModel& loss, const ProtocolOptions& opt = {}) {
  detail::require(n >= 0.0, "N must be non-negative");
  loss.validate();
  if (loss.p1 != loss.p2) throw ValidationError("protocol analysis requires p1=p2");
  const cplx alpha0 = std::sqrt(n);
  const std::size_t d = detail::protocol_dim(alpha0, opt);
  QuantumState s = detail::add_target(detail::which_path_field(alpha0, loss.p1, d, opt.tail_tolerance), labels::target);
  s = parity_gate(s, labels::target, labels::a_minus);
  return detail::measure_field(s, loss.eta, 0.0, post_beamsplitter_amplitude(n, loss.p1), opt.outcome,
                               opt.tail_tolerance);
}

inline std::string target_label(std::size_t k) { return labels::target + std::to_string(k); }

// Control plus m-1 targets; the field meets the targets in turn, with a pure-loss channel of
// probability loss_per_hop on the field before each parity gate. Qubit order: control,
// target1, ..., target{m-1}.
inline QuantumState ghz_builder(std::size_t m, cplx alpha0, double loss_per_hop, double eta = 1.0,
                                const ProtocolOptions& opt = {}) {
  detail::require(m >= 2, "GHZ needs at least two qubits");
  detail::require(loss_per_hop >= 0.0 && loss_per_hop <= 1.0, "loss probability outside [0,1]");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("invalid efficiency");
  const std::size_t d = detail::protocol_dim(alpha0, opt);
  QuantumState s = detail::which_path_field(alpha0, 0.0, d, opt.tail_tolerance);
  const auto kraus = loss_kraus(loss_per_hop, d);
  for (std::size_t k = 1; k < m; ++k) {
    if (loss_per_hop > 0.0) s = apply_local_channel(s, labels::a_minus, kraus);
    s = detail::add_target(s, target_label(k));
    s = parity_gate(s, target_label(k), labels::a_minus);
  }
  const double amp = std::abs(alpha0) / std::numbers::sqrt2 * std::pow(1.0 - loss_per_hop, 0.5 * static_cast<double>(m - 1));
  return detail::measure_field(s, eta, std::arg(alpha0), amp, opt.outcome, opt.tail_tolerance);
}

// (|+...+> +- |-...->)/sqrt2 on m qubits.
inline Vector ghz_vector(std::size_t m, Outcome sign = Outcome::plus) {
  Vector p = plus_vector(), q = minus_vector();
  for (std::size_t k = 1; k < m; ++k) {
    Vector np(p.size() * 2), nq(q.size() * 2);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      np.segment(2 * i, 2) = p(i) * plus_vector();
      nq.segment(2 * i, 2) = q(i) * minus_vector();
    }
    p = np;
    q = nq;
  }
  return (p + (sign == Outcome::plus ? 1.0 : -1.0) * q) / std::numbers::sqrt2;
}

}  // namespace qwp
