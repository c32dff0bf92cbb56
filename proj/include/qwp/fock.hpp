#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "qwp/error.hpp"
#include "qwp/hilbert.hpp"

namespace qwp {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using SparseMatrix = Eigen::SparseMatrix<cplx>;

inline constexpr double default_tail_tolerance = 1e-10;

// ---------------------------------------------------------------------------
// Truncation helpers

// Poisson(mean) mass on n >= dim, summed directly so tiny tails keep full precision.
inline double poisson_tail(double mean, std::size_t dim) {
  if (mean <= 0.0) return dim == 0 ? 1.0 : 0.0;
  double tail = 0.0;
  for (std::size_t n = dim;; ++n) {
    const double nn = static_cast<double>(n);
    const double term = std::exp(nn * std::log(mean) - mean - std::lgamma(nn + 1.0));
    tail += term;
    if (nn > mean && term < 1e-17 * std::max(tail, 1e-300)) break;
    if (n > dim + 100000) break;
  }
  return tail;
}

// Rule-of-thumb dimension ceil(|a|^2 + 8|a| + 10).
inline std::size_t default_fock_dim(cplx alpha) {
  const double a = std::abs(alpha);
  return static_cast<std::size_t>(std::ceil(a * a + 8.0 * a + 10.0));
}

// Smallest dimension whose coherent-state tail mass is below `tol`.
inline std::size_t minimal_fock_dim(cplx alpha, double tol = default_tail_tolerance) {
  const double mean = std::norm(alpha);
  std::size_t d = 2;
  while (poisson_tail(mean, d) >= tol) ++d;
  return d;
}

inline void check_truncation(cplx alpha, std::size_t dim, double tol) {
  if (poisson_tail(std::norm(alpha), dim) > tol) throw ValidationError("truncation too small");
}

// ---------------------------------------------------------------------------
// Single-mode matrices

inline Matrix annihilation(std::size_t dim) {
  Matrix a = Matrix::Zero(dim, dim);
  for (std::size_t n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

inline Matrix number_matrix(std::size_t dim) {
  Matrix n = Matrix::Zero(dim, dim);
  for (std::size_t k = 0; k < dim; ++k) n(k, k) = static_cast<double>(k);
  return n;
}

// Truncated coherent state amplitudes, renormalized.
inline Vector coherent_vector(cplx alpha, std::size_t dim) {
  Vector v(dim);
  v(0) = std::exp(-0.5 * std::norm(alpha));
  for (std::size_t n = 1; n < dim; ++n) v(n) = v(n - 1) * alpha / std::sqrt(static_cast<double>(n));
  return v / v.norm();
}

inline Vector fock_vector(std::size_t n, std::size_t dim) {
  detail::require(n < dim, "Fock level outside truncation");
  Vector v = Vector::Zero(dim);
  v(n) = 1.0;
  return v;
}

namespace detail {

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline bool is_hermitian(const Matrix& m, double tol) {
  return m.rows() == m.cols() && max_abs(m - m.adjoint()) <= tol;
}

// exp(i H) for Hermitian H.
inline Matrix expi_hermitian(const Matrix& h) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (h + h.adjoint()));
  const Vector phases = (cplx(0.0, 1.0) * es.eigenvalues().cast<cplx>()).array().exp();
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operator

enum class OperatorKind { general, hermitian, unitary };

class Operator {
public:
  Operator() = default;

  Operator(HilbertSpec space, Matrix m, OperatorKind kind = OperatorKind::general, double tol = 1e-10)
      : space_(std::move(space)), m_(std::move(m)), kind_(kind) {
    const auto n = static_cast<Eigen::Index>(space_.size());
    detail::require(m_.rows() == n && m_.cols() == n, "operator matrix does not match its space");
    if (kind_ == OperatorKind::hermitian && !detail::is_hermitian(m_, tol))
      throw ValidationError("not Hermitian");
    if (kind_ == OperatorKind::unitary &&
        detail::max_abs(m_.adjoint() * m_ - Matrix::Identity(n, n)) > tol)
      throw ValidationError("not unitary");
  }

  const HilbertSpec& space() const { return space_; }
  const Matrix& matrix() const { return m_; }
  OperatorKind kind() const { return kind_; }
  std::size_t dim() const { return space_.size(); }

  Operator adjoint() const {
    return Operator(space_, m_.adjoint(), kind_ == OperatorKind::hermitian ? kind_ : OperatorKind::general);
  }

  friend Operator operator*(const Operator& x, const Operator& y) {
    detail::require(x.space_ == y.space_, "operators act on different spaces");
    const bool both_unitary = x.kind_ == OperatorKind::unitary && y.kind_ == OperatorKind::unitary;
    return Operator(x.space_, x.m_ * y.m_, both_unitary ? OperatorKind::unitary : OperatorKind::general, 1e-9);
  }
  friend Operator operator+(const Operator& x, const Operator& y) {
    detail::require(x.space_ == y.space_, "operators act on different spaces");
    return Operator(x.space_, x.m_ + y.m_);
  }
  friend Operator operator-(const Operator& x, const Operator& y) {
    detail::require(x.space_ == y.space_, "operators act on different spaces");
    return Operator(x.space_, x.m_ - y.m_);
  }
  friend Operator operator*(cplx c, const Operator& x) { return Operator(x.space_, c * x.m_); }

private:
  HilbertSpec space_;
  Matrix m_;
  OperatorKind kind_ = OperatorKind::general;
};

// ---------------------------------------------------------------------------
// QuantumState

class QuantumState {
public:
  QuantumState() = default;

  static QuantumState pure(HilbertSpec space, Vector psi, double tol = 1e-9) {
    detail::require(psi.size() == static_cast<Eigen::Index>(space.size()), "state vector does not match its space");
    if (std::abs(psi.norm() - 1.0) > tol) throw ValidationError("not a state");
    QuantumState s;
    s.space_ = std::move(space);
    s.psi_ = std::move(psi);
    s.pure_ = true;
    return s;
  }

  // Positivity is checked with an eigendecomposition for dimensions up to `eig_check_limit`.
  static QuantumState mixed(HilbertSpec space, Matrix rho, double tol = 1e-9,
                            std::size_t eig_check_limit = 1024) {
    const auto n = static_cast<Eigen::Index>(space.size());
    detail::require(rho.rows() == n && rho.cols() == n, "density matrix does not match its space");
    if (!detail::is_hermitian(rho, tol) || std::abs(rho.trace() - 1.0) > tol)
      throw ValidationError("not a state");
    rho = 0.5 * (rho + rho.adjoint()).eval();
    if (space.size() <= eig_check_limit) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(rho, Eigen::EigenvaluesOnly);
      if (n > 0 && es.eigenvalues().minCoeff() < -1e-10) throw ValidationError("not a state");
    }
    QuantumState s;
    s.space_ = std::move(space);
    s.rho_ = std::move(rho);
    s.pure_ = false;
    return s;
  }

  bool is_pure() const { return pure_; }
  const HilbertSpec& space() const { return space_; }
  std::size_t dim() const { return space_.size(); }

  const Vector& vector() const {
    detail::require(pure_, "state is not stored as a vector");
    return psi_;
  }

  Matrix density() const { return pure_ ? Matrix(psi_ * psi_.adjoint()) : rho_; }

  // Density matrix without copying when stored mixed.
  const Matrix& density_ref() const {
    detail::require(!pure_, "state is stored as a vector");
    return rho_;
  }

  QuantumState as_mixed() const { return pure_ ? mixed(space_, density()) : *this; }

  QuantumState relabel(const std::vector<std::pair<std::string, std::string>>& renames) const {
    QuantumState s = *this;
    s.space_ = space_.relabel(renames);
    return s;
  }

private:
  HilbertSpec space_;
  Vector psi_;
  Matrix rho_;
  bool pure_ = true;
};

// ---------------------------------------------------------------------------
// Embedding of local operators

// Local operator on one factor, embedded as a sparse matrix on the full space.
inline SparseMatrix embed_sparse(const HilbertSpec& space, const std::string& label, const Matrix& local) {
  const std::size_t f = space.index_of(label);
  const auto d = static_cast<Eigen::Index>(space.factor(f).dim);
  detail::require(local.rows() == d && local.cols() == d, "local operator does not match factor '" + label + "'");
  std::vector<Eigen::Triplet<cplx>> trip;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto n = static_cast<Eigen::Index>(space.level(i, f));
    for (Eigen::Index l = 0; l < d; ++l) {
      const cplx v = local(l, n);
      if (v == cplx(0.0)) continue;
      if (auto j = space.with_level(i, f, static_cast<std::size_t>(l)))
        trip.emplace_back(static_cast<Eigen::Index>(*j), static_cast<Eigen::Index>(i), v);
    }
  }
  const auto n = static_cast<Eigen::Index>(space.size());
  SparseMatrix s(n, n);
  s.setFromTriplets(trip.begin(), trip.end());
  return s;
}

// Local operator on two factors (row/col index = level_a * dim_b + level_b).
inline SparseMatrix embed_sparse(const HilbertSpec& space, const std::string& label_a,
                                 const std::string& label_b, const Matrix& local) {
  const std::size_t fa = space.index_of(label_a), fb = space.index_of(label_b);
  detail::require(fa != fb, "two-mode operator needs two distinct factors");
  const std::size_t da = space.factor(fa).dim, db = space.factor(fb).dim;
  detail::require(local.rows() == static_cast<Eigen::Index>(da * db) && local.cols() == local.rows(),
                  "local operator does not match factors");
  std::vector<Eigen::Triplet<cplx>> trip;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(space.level(i, fa) * db + space.level(i, fb));
    for (std::size_t la = 0; la < da; ++la)
      for (std::size_t lb = 0; lb < db; ++lb) {
        const cplx v = local(static_cast<Eigen::Index>(la * db + lb), col);
        if (v == cplx(0.0)) continue;
        if (auto j = space.with_levels(i, fa, la, fb, lb))
          trip.emplace_back(static_cast<Eigen::Index>(*j), static_cast<Eigen::Index>(i), v);
      }
  }
  const auto n = static_cast<Eigen::Index>(space.size());
  SparseMatrix s(n, n);
  s.setFromTriplets(trip.begin(), trip.end());
  return s;
}

inline Operator embed(const HilbertSpec& space, const std::string& label, const Matrix& local,
                      OperatorKind kind = OperatorKind::general) {
  return Operator(space, Matrix(embed_sparse(space, label, local)), kind);
}

inline Operator embed(const HilbertSpec& space, const std::string& label_a, const std::string& label_b,
                      const Matrix& local, OperatorKind kind = OperatorKind::general) {
  return Operator(space, Matrix(embed_sparse(space, label_a, label_b, local)), kind);
}

inline Operator annihilation(const HilbertSpec& space, const std::string& label) {
  return embed(space, label, annihilation(space.dim_of(label)));
}

inline Operator number_operator(const HilbertSpec& space, const std::string& label) {
  return embed(space, label, number_matrix(space.dim_of(label)), OperatorKind::hermitian);
}

// ---------------------------------------------------------------------------
// Unitaries

// exp(alpha a^dag - alpha^* a) on a single mode labelled "mode".
inline Operator displacement_operator(cplx alpha, std::size_t dim, double tol = default_tail_tolerance) {
  detail::require(dim >= 2, "displacement needs dim >= 2");
  check_truncation(alpha, dim, tol);
  const Matrix a = annihilation(dim);
  // alpha a^dag - alpha^* a = i H with H Hermitian.
  const Matrix h = cplx(0.0, -1.0) * (alpha * a.adjoint() - std::conj(alpha) * a);
  HilbertSpec space({fock_factor("mode", dim, tol)});
  return Operator(std::move(space), detail::expi_hermitian(h), OperatorKind::unitary);
}

// exp{i (c a^dag b + c^* a b^dag)} on two modes of equal dimension, built block by block
// in the conserved total-number sectors. Row/col index = n_a * dim + n_b.
inline Matrix two_mode_exchange(cplx c, std::size_t dim) {
  const std::size_t d = dim;
  Matrix u = Matrix::Zero(static_cast<Eigen::Index>(d * d), static_cast<Eigen::Index>(d * d));
  for (std::size_t m = 0; m + 1 < 2 * d; ++m) {
    const std::size_t k0 = m >= d ? m - d + 1 : 0;
    const std::size_t k1 = std::min(m, d - 1);
    const auto len = static_cast<Eigen::Index>(k1 - k0 + 1);
    Matrix g = Matrix::Zero(len, len);
    for (std::size_t k = k0; k < k1; ++k) {
      // a^dag b |k, m-k> = sqrt((k+1)(m-k)) |k+1, m-k-1>
      const double amp = std::sqrt(static_cast<double>((k + 1) * (m - k)));
      const auto r = static_cast<Eigen::Index>(k - k0);
      g(r + 1, r) = c * amp;
      g(r, r + 1) = std::conj(c) * amp;
    }
    const Matrix blk = detail::expi_hermitian(g);
    for (Eigen::Index r = 0; r < len; ++r)
      for (Eigen::Index s = 0; s < len; ++s) {
        const std::size_t kr = k0 + static_cast<std::size_t>(r), ks = k0 + static_cast<std::size_t>(s);
        u(static_cast<Eigen::Index>(kr * d + (m - kr)), static_cast<Eigen::Index>(ks * d + (m - ks))) = blk(r, s);
      }
  }
  return u;
}

// B = exp{i (theta/2)(a^dag b + a b^dag)}: a -> cos(theta/2) a + i sin(theta/2) b.
inline Operator beamsplitter_unitary(double theta, const HilbertSpec& space, const std::string& mode_a,
                                     const std::string& mode_b) {
  const auto& fa = space.factor(space.index_of(mode_a));
  const auto& fb = space.factor(space.index_of(mode_b));
  if (!fa.fock || !fb.fock || fa.dim != fb.dim) throw ValidationError("incompatible modes");
  return embed(space, mode_a, mode_b, two_mode_exchange(cplx(0.5 * theta, 0.0), fa.dim), OperatorKind::unitary);
}

// Mixing angle whose survival probability cos^2(theta/2) equals 1 - p.
inline double loss_angle(double p) { return 2.0 * std::acos(std::sqrt(1.0 - p)); }

// Kraus operators of the pure-loss channel with loss probability p, read off from the
// beamsplitter with a vacuum loss mode: E_k = <k|_b B |0>_b.
inline std::vector<Matrix> loss_kraus(double p, std::size_t dim) {
  detail::require(p >= 0.0 && p <= 1.0, "loss probability outside [0,1]");
  const Matrix b = two_mode_exchange(cplx(0.5 * loss_angle(p), 0.0), dim);
  std::vector<Matrix> kraus;
  for (std::size_t k = 0; k < dim; ++k) {
    Matrix e = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t out = 0; out < dim; ++out)
      for (std::size_t in = 0; in < dim; ++in)
        e(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)) =
            b(static_cast<Eigen::Index>(out * dim + k), static_cast<Eigen::Index>(in * dim));
    if (detail::max_abs(e) > 0.0) kraus.push_back(std::move(e));
  }
  return kraus;
}

// ---------------------------------------------------------------------------
// Composite systems

namespace detail {
inline std::vector<Factor> joined_factors(const HilbertSpec& a, const HilbertSpec& b) {
  detail::require(!a.capped() && !b.capped(), "tensor product of capped spaces is not supported");
  auto fs = a.factors();
  fs.insert(fs.end(), b.factors().begin(), b.factors().end());
  return fs;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}
}  // namespace detail

inline HilbertSpec tensor(const HilbertSpec& a, const HilbertSpec& b) {
  return HilbertSpec(detail::joined_factors(a, b));
}

inline QuantumState tensor(const QuantumState& a, const QuantumState& b) {
  HilbertSpec space = tensor(a.space(), b.space());
  if (a.is_pure() && b.is_pure()) {
    Vector v(a.vector().size() * b.vector().size());
    for (Eigen::Index i = 0; i < a.vector().size(); ++i)
      v.segment(i * b.vector().size(), b.vector().size()) = a.vector()(i) * b.vector();
    return QuantumState::pure(std::move(space), std::move(v));
  }
  return QuantumState::mixed(std::move(space), detail::kron(a.density(), b.density()));
}

inline Operator tensor(const Operator& a, const Operator& b) {
  const bool unitary = a.kind() == OperatorKind::unitary && b.kind() == OperatorKind::unitary;
  const bool herm = a.kind() == OperatorKind::hermitian && b.kind() == OperatorKind::hermitian;
  return Operator(tensor(a.space(), b.space()), detail::kron(a.matrix(), b.matrix()),
                  unitary ? OperatorKind::unitary : herm ? OperatorKind::hermitian : OperatorKind::general, 1e-9);
}

template <class T, class... Rest>
T tensor(const T& a, const T& b, const T& c, const Rest&... rest) {
  return tensor(tensor(a, b), c, rest...);
}

// Product state on a (possibly capped) space; components outside the basis are dropped
// and the result renormalized.
inline QuantumState product_state(const HilbertSpec& space, const std::vector<Vector>& factors) {
  detail::require(factors.size() == space.num_factors(), "one vector per factor required");
  for (std::size_t f = 0; f < factors.size(); ++f)
    detail::require(factors[f].size() == static_cast<Eigen::Index>(space.factor(f).dim),
                    "vector does not match factor '" + space.factor(f).label + "'");
  Vector v(static_cast<Eigen::Index>(space.size()));
  for (std::size_t i = 0; i < space.size(); ++i) {
    cplx amp = 1.0;
    for (std::size_t f = 0; f < factors.size(); ++f) amp *= factors[f](static_cast<Eigen::Index>(space.level(i, f)));
    v(static_cast<Eigen::Index>(i)) = amp;
  }
  const double nrm = v.norm();
  detail::require(nrm > 0.0, "product state has no support in the truncated basis");
  return QuantumState::pure(space, v / nrm);
}

// Reduced state on the listed factors (kept in the space's order).
inline QuantumState partial_trace(const QuantumState& state, const std::vector<std::string>& keep) {
  const HilbertSpec& sp = state.space();
  const HilbertSpec sub = sp.subsystem(keep);
  std::vector<std::size_t> kept, traced;
  for (std::size_t f = 0; f < sp.num_factors(); ++f) {
    const bool k = std::find(keep.begin(), keep.end(), sp.factor(f).label) != keep.end();
    (k ? kept : traced).push_back(f);
  }
  // Group basis states by their traced-out levels.
  std::vector<std::size_t> kidx(sp.size()), group(sp.size());
  std::vector<std::size_t> key_of_group;
  {
    std::vector<std::size_t> lv(kept.size());
    std::vector<std::pair<std::size_t, std::size_t>> keys(sp.size());
    for (std::size_t i = 0; i < sp.size(); ++i) {
      for (std::size_t q = 0; q < kept.size(); ++q) lv[q] = sp.level(i, kept[q]);
      kidx[i] = *sub.find(lv);
      std::size_t key = 0;
      for (auto f : traced) key = key * sp.factor(f).dim + sp.level(i, f);
      keys[i] = {key, i};
    }
    std::sort(keys.begin(), keys.end());
    for (std::size_t r = 0; r < keys.size(); ++r) {
      if (r == 0 || keys[r].first != keys[r - 1].first) key_of_group.push_back(keys[r].first);
      group[keys[r].second] = key_of_group.size() - 1;
    }
  }
  const auto nk = static_cast<Eigen::Index>(sub.size());
  const auto ng = static_cast<Eigen::Index>(key_of_group.size());
  Matrix red = Matrix::Zero(nk, nk);
  if (state.is_pure()) {
    Matrix m = Matrix::Zero(nk, ng);
    const Vector& psi = state.vector();
    for (std::size_t i = 0; i < sp.size(); ++i)
      m(static_cast<Eigen::Index>(kidx[i]), static_cast<Eigen::Index>(group[i])) = psi(static_cast<Eigen::Index>(i));
    red = m * m.adjoint();
  } else {
    std::vector<std::vector<std::size_t>> members(key_of_group.size());
    for (std::size_t i = 0; i < sp.size(); ++i) members[group[i]].push_back(i);
    const Matrix& rho = state.density_ref();
    for (const auto& g : members)
      for (auto i : g)
        for (auto j : g)
          red(static_cast<Eigen::Index>(kidx[i]), static_cast<Eigen::Index>(kidx[j])) +=
              rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  // Positivity is inherited from the input state.
  return QuantumState::mixed(sub, std::move(red), 1e-9, 0);
}

// ---------------------------------------------------------------------------
// Spectral decomposition and figures of merit

struct EigenSystem {
  Eigen::VectorXd values;  // descending
  Matrix vectors;          // columns
};

inline EigenSystem hermitian_eig(const Matrix& m, double tol = 1e-10) {
  if (!detail::is_hermitian(m, tol)) throw ValidationError("not Hermitian");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.adjoint()));
  const Eigen::Index n = m.rows();
  EigenSystem out{Eigen::VectorXd(n), Matrix(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = es.eigenvalues()(n - 1 - k);
    out.vectors.col(k) = es.eigenvectors().col(n - 1 - k);
  }
  return out;
}

inline EigenSystem hermitian_eig(const Operator& op) { return hermitian_eig(op.matrix()); }

inline cplx expectation(const QuantumState& s, const Matrix& op) {
  if (s.is_pure()) return s.vector().dot(op * s.vector());
  return (op * s.density_ref()).trace();
}

inline cplx expectation(const QuantumState& s, const Operator& op) {
  detail::require(s.space() == op.space(), "operator and state act on different spaces");
  return expectation(s, op.matrix());
}

inline double purity(const QuantumState& s) {
  if (s.is_pure()) return 1.0;
  return s.density_ref().cwiseAbs2().sum();
}

// <psi| rho |psi> for a pure reference.
inline double fidelity(const Vector& psi, const QuantumState& s) {
  detail::require(psi.size() == static_cast<Eigen::Index>(s.dim()), "reference does not match state");
  if (s.is_pure()) return std::norm(psi.dot(s.vector()));
  return std::real(psi.dot(s.density_ref() * psi));
}

inline double trace_distance(const QuantumState& a, const QuantumState& b) {
  detail::require(a.space() == b.space(), "states act on different spaces");
  const Matrix d = a.density() - b.density();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (d + d.adjoint()), Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

inline QuantumState apply_unitary(const QuantumState& s, const Matrix& u) {
  if (s.is_pure()) {
    Vector v = u * s.vector();
    return QuantumState::pure(s.space(), v / v.norm());
  }
  Matrix r = u * s.density_ref() * u.adjoint();
  r /= r.trace().real();
  return QuantumState::mixed(s.space(), std::move(r));
}

inline QuantumState apply_unitary(const QuantumState& s, const Operator& u) {
  detail::require(s.space() == u.space(), "operator and state act on different spaces");
  return apply_unitary(s, u.matrix());
}

// Channel with Kraus operators on one factor.
inline QuantumState apply_local_channel(const QuantumState& s, const std::string& label,
                                        const std::vector<Matrix>& kraus) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(s.dim()), static_cast<Eigen::Index>(s.dim()));
  const bool pure = s.is_pure();
  const Matrix rho = pure ? Matrix() : s.density_ref();
  for (const auto& k : kraus) {
    const SparseMatrix e = embed_sparse(s.space(), label, k);
    if (pure) {
      const Vector v = e * s.vector();
      out.noalias() += v * v.adjoint();
    } else {
      const Matrix er = e * rho;
      out.noalias() += Matrix(e * er.adjoint()).adjoint();
    }
  }
  out = 0.5 * (out + out.adjoint()).eval();
  // A Kraus map preserves positivity; only Hermiticity and trace are rechecked.
  return QuantumState::mixed(s.space(), std::move(out), 1e-8, 0);
}

}  // namespace qwp
