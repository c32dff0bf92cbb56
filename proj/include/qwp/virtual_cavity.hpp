#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qwp/cavity_io.hpp"
#include "qwp/couplings.hpp"
#include "qwp/csv.hpp"
#include "qwp/fock.hpp"

namespace qwp {

// Labels of the five factors of the cascaded model.
namespace labels {
inline const std::string qubit = "qubit";
inline const std::string emitter = "a_u";
inline const std::string cavity = "a";
inline const std::string absorber1 = "a_v1";
inline const std::string absorber2 = "a_v2";
inline const std::string arm1 = "arm1";
inline const std::string arm2 = "arm2";
}  // namespace labels

// Per-mode dimension plus a cap on the total photon number of the four modes.
struct CascadeTruncation {
  std::size_t mode_dim = 9;
  std::optional<std::size_t> max_excitations = 8;
  double tail_tolerance = 1e-7;
};

using RowSparseMatrix = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

namespace detail {

// Linear combinations sum_j c_j T_j of fixed sparse terms evaluated on a shared pattern.
class SparseCombination {
public:
  SparseCombination() = default;

  explicit SparseCombination(const std::vector<SparseMatrix>& terms) {
    for (const auto& t : terms) {
      terms_.emplace_back(t);
      terms_.back().makeCompressed();
    }
    const Eigen::Index n = terms_.front().rows();
    std::vector<Eigen::Triplet<cplx>> trip;
    for (const auto& t : terms_)
      for (Eigen::Index r = 0; r < t.outerSize(); ++r)
        for (RowSparseMatrix::InnerIterator it(t, r); it; ++it) trip.emplace_back(it.row(), it.col(), 1.0);
    pattern_.resize(n, n);
    pattern_.setFromTriplets(trip.begin(), trip.end());
    pattern_.makeCompressed();
    for (const auto& t : terms_) {
      std::vector<Eigen::Index> pos;
      for (Eigen::Index r = 0; r < t.outerSize(); ++r)
        for (RowSparseMatrix::InnerIterator it(t, r); it; ++it) {
          const auto* first = pattern_.innerIndexPtr() + pattern_.outerIndexPtr()[r];
          const auto* last = pattern_.innerIndexPtr() + pattern_.outerIndexPtr()[r + 1];
          pos.push_back(std::lower_bound(first, last, it.col()) - pattern_.innerIndexPtr());
        }
      positions_.push_back(std::move(pos));
    }
  }

  RowSparseMatrix operator()(const std::vector<cplx>& coeffs) const {
    RowSparseMatrix out = pattern_;
    cplx* v = out.valuePtr();
    std::fill(v, v + out.nonZeros(), cplx(0.0));
    for (std::size_t j = 0; j < terms_.size(); ++j) {
      if (coeffs[j] == cplx(0.0)) continue;
      const cplx* tv = terms_[j].valuePtr();
      const auto& pos = positions_[j];
      for (std::size_t k = 0; k < pos.size(); ++k) v[pos[k]] += coeffs[j] * tv[k];
    }
    return out;
  }

private:
  std::vector<RowSparseMatrix> terms_;
  RowSparseMatrix pattern_;
  std::vector<std::vector<Eigen::Index>> positions_;
};

// y = a x for compressed row-major a and column-major x, with plain real arithmetic in the
// inner loop.
inline void sparse_times_dense(const RowSparseMatrix& a, const Matrix& x, Matrix& y) {
  const Eigen::Index n = a.rows(), m = x.cols();
  y.resize(n, m);
  const auto* ptr = a.outerIndexPtr();
  const auto* idx = a.innerIndexPtr();
  const auto* val = reinterpret_cast<const double*>(a.valuePtr());
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto* xc = reinterpret_cast<const double*>(x.col(j).data());
    auto* yc = reinterpret_cast<double*>(y.col(j).data());
    for (Eigen::Index r = 0; r < n; ++r) {
      double re = 0.0, im = 0.0;
      for (auto k = ptr[r]; k < ptr[r + 1]; ++k) {
        const double vr = val[2 * k], vi = val[2 * k + 1];
        const double xr = xc[2 * idx[k]], xi = xc[2 * idx[k] + 1];
        re += vr * xr - vi * xi;
        im += vr * xi + vi * xr;
      }
      yc[2 * r] = re;
      yc[2 * r + 1] = im;
    }
  }
}

// out += y l^dag, one column axpy per nonzero of l.
inline void add_dense_times_adjoint(const Matrix& y, const RowSparseMatrix& l, Matrix& out) {
  const auto* ptr = l.outerIndexPtr();
  const auto* idx = l.innerIndexPtr();
  const cplx* val = l.valuePtr();
  for (Eigen::Index s = 0; s < l.rows(); ++s)
    for (auto k = ptr[s]; k < ptr[s + 1]; ++k) out.col(s) += std::conj(val[k]) * y.col(idx[k]);
}

}  // namespace detail

// Instantaneous generator of the cascade: K = H - (i/2) sum L^dag L and the two collapse operators.
struct CascadeGenerator {
  RowSparseMatrix h, k, l1, l2;
};

class CascadedModel {
public:
  CascadedModel(const Waveform& u, const SystemParams& params, const CascadeTruncation& trunc = {},
                double tail_kappa = 30.0, double floor = default_coupling_floor)
      : params_(params) {
    params_.validate();
    require_normalized(u);
    detail::check_step(u, params_.kappa());
    const auto d = trunc.mode_dim;
    space_ = HilbertSpec({qubit_factor(labels::qubit), fock_factor(labels::emitter, d, trunc.tail_tolerance),
                          fock_factor(labels::cavity, d, trunc.tail_tolerance),
                          fock_factor(labels::absorber1, d, trunc.tail_tolerance),
                          fock_factor(labels::absorber2, d, trunc.tail_tolerance)},
                         trunc.max_excitations);
    // even number of tail intervals, so the padded grid splits into RK4 steps of two or more intervals
    auto tail_steps = static_cast<std::size_t>(std::ceil(tail_kappa / params_.kappa() / u.dt - 1e-9));
    if ((u.size() - 1 + tail_steps) % 2) ++tail_steps;
    tail_kappa = static_cast<double>(tail_steps) * u.dt * params_.kappa();
    const Waveform up = pad_zeros(u, tail_kappa / params_.kappa());
    const auto q = quasimode_shapes(u, params_, tail_kappa);
    couplings_ = build_couplings(up, q.v1, q.v2, floor);
    gz_ = matched_envelope(up, params_);

    // Grid points next to a jump in any coefficient (pulse truncation, absorber gate).
    rough_.assign(up.size(), false);
    const double jump = 1e-2 * std::sqrt(params_.kappa());
    for (const auto* w : {&couplings_.lambda_u, &couplings_.lambda_v1, &couplings_.lambda_v2, &gz_})
      for (std::size_t k = 1; k + 1 < w->size(); ++k)
        if (std::abs(w->samples[k + 1] - 2.0 * w->samples[k] + w->samples[k - 1]) > jump)
          rough_[k - 1] = rough_[k] = rough_[k + 1] = true;

    auto ops = std::make_shared<Ops>();
    const Matrix ad = annihilation(d);
    const std::string* mode_labels[4] = {&labels::emitter, &labels::cavity, &labels::absorber1, &labels::absorber2};
    for (int m = 0; m < 4; ++m) ops->mode[m] = embed_sparse(space_, *mode_labels[m], ad);
    Matrix p1 = Matrix::Zero(2, 2);
    p1(1, 1) = 1.0;
    const SparseMatrix p1_adag = embed_sparse(space_, labels::qubit, p1) * SparseMatrix(ops->mode[A].adjoint());
    // terms: P1 a^dag, its adjoint, then all bilinears a_x^dag a_y
    std::vector<SparseMatrix> terms{p1_adag, SparseMatrix(p1_adag.adjoint())};
    for (int x = 0; x < 4; ++x)
      for (int y = 0; y < 4; ++y) terms.push_back(SparseMatrix(ops->mode[x].adjoint()) * ops->mode[y]);
    ops->k_terms = detail::SparseCombination(terms);
    ops->l_terms = detail::SparseCombination({ops->mode[U], ops->mode[A], ops->mode[V1], ops->mode[V2]});
    ops_ = std::move(ops);
  }

  const HilbertSpec& space() const { return space_; }
  const SystemParams& params() const { return params_; }
  const VirtualCouplings& couplings() const { return couplings_; }
  const Waveform& envelope() const { return gz_; }
  std::size_t steps() const { return gz_.size(); }
  double dt() const { return gz_.dt; }
  double time(std::size_t k) const { return gz_.time(k); }
  // True if no coefficient jumps on grid points [from, to].
  bool smooth(std::size_t from, std::size_t to) const {
    return std::none_of(rough_.begin() + static_cast<std::ptrdiff_t>(from), rough_.begin() + static_cast<std::ptrdiff_t>(to + 1),
                        [](bool r) { return r; });
  }

  CascadeGenerator generator(std::size_t k) const {
    const cplx i(0.0, 1.0);
    const cplx g = gz_.samples[k];
    const cplx lu = couplings_.lambda_u.samples[k];
    const cplx l1 = couplings_.lambda_v1.samples[k];
    const cplx l2 = couplings_.lambda_v2.samples[k];
    const double s1 = std::sqrt(params_.kappa1), s2 = std::sqrt(params_.kappa2);

    // H = A + A^dag with A = i g P1 a^dag + (i/2)[s1 lu* au^dag a + lu* l1 au^dag av1 + s1 l1 a^dag av1 + s2 l2 a^dag av2]
    std::vector<cplx> hc(18, 0.0);
    const auto b = [](int x, int y) { return 2 + 4 * x + y; };
    const auto add_a = [&](int x, int y, cplx c) {
      hc[b(x, y)] += c;
      hc[b(y, x)] += std::conj(c);
    };
    hc[0] = i * g;
    hc[1] = std::conj(i * g);
    add_a(U, A, 0.5 * i * s1 * std::conj(lu));
    add_a(U, V1, 0.5 * i * std::conj(lu) * l1);
    add_a(A, V1, 0.5 * i * s1 * l1);
    add_a(A, V2, 0.5 * i * s2 * l2);

    // sum L^dag L over L1 = lu au + l1 av1 + s1 a and L2 = l2 av2 + s2 a
    std::vector<cplx> kc = hc;
    const std::vector<std::pair<int, cplx>> c1{{U, lu}, {V1, l1}, {A, s1}}, c2{{V2, l2}, {A, s2}};
    for (const auto* cl : {&c1, &c2})
      for (const auto& [x, cx] : *cl)
        for (const auto& [y, cy] : *cl) kc[b(x, y)] += -0.5 * i * std::conj(cx) * cy;

    CascadeGenerator gen;
    gen.h = ops_->k_terms(hc);
    gen.k = ops_->k_terms(kc);
    gen.l1 = ops_->l_terms({lu, s1, l1, 0.0});
    gen.l2 = ops_->l_terms({0.0, s2, 0.0, l2});
    return gen;
  }

  Operator hamiltonian(std::size_t k) const {
    return Operator(space_, Matrix(generator(k).h), OperatorKind::hermitian);
  }
  Operator collapse1(std::size_t k) const { return Operator(space_, Matrix(generator(k).l1)); }
  Operator collapse2(std::size_t k) const { return Operator(space_, Matrix(generator(k).l2)); }

  const SparseMatrix& mode_op(const std::string& label) const {
    if (label == labels::emitter) return ops_->mode[U];
    if (label == labels::cavity) return ops_->mode[A];
    if (label == labels::absorber1) return ops_->mode[V1];
    if (label == labels::absorber2) return ops_->mode[V2];
    throw ValidationError("no mode labelled '" + label + "'");
  }

private:
  enum { U = 0, A = 1, V1 = 2, V2 = 3 };
  struct Ops {
    SparseMatrix mode[4];
    detail::SparseCombination k_terms, l_terms;
  };
  HilbertSpec space_;
  SystemParams params_;
  VirtualCouplings couplings_;
  Waveform gz_;
  std::vector<bool> rough_;
  std::shared_ptr<const Ops> ops_;
};

struct EvolveOptions {
  // RK4 step = substeps * grid step; must be even so stage midpoints fall on the grid.
  std::size_t substeps = 12;
  std::size_t record_every = 1;
  double overflow_threshold = 1e-6;
  double trace_tolerance = 1e-5;
};

struct TrajectoryPoint {
  double t = 0.0;
  cplx a, av1, av2;
  double trace_err = 0.0;
};

struct Evolution {
  QuantumState final_state;
  std::vector<TrajectoryPoint> trajectory;
  double max_trace_error = 0.0;
  double max_top_occupation = 0.0;
};

namespace detail {

inline cplx trace_product(const SparseMatrix& a, const Matrix& rho) {
  cplx s = 0.0;
  for (Eigen::Index col = 0; col < a.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(a, col); it; ++it) s += it.value() * rho(it.col(), it.row());
  return s;
}

// Largest population on the top level of any Fock factor or on the top excitation shell.
inline double top_occupation(const HilbertSpec& sp, const Matrix& rho) {
  std::vector<double> per(sp.num_factors() + 1, 0.0);
  const auto cap = sp.max_excitations();
  for (std::size_t i = 0; i < sp.size(); ++i) {
    const double pop = rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
    for (std::size_t f = 0; f < sp.num_factors(); ++f)
      if (sp.factor(f).fock && sp.level(i, f) + 1 == sp.factor(f).dim) per[f] += pop;
    if (cap && sp.excitations(i) == *cap) per.back() += pop;
  }
  return *std::max_element(per.begin(), per.end());
}

}  // namespace detail

// Fixed-step RK4 integration of the cascaded master equation over the model's grid.
inline Evolution evolve(const CascadedModel& model, const QuantumState& initial, const EvolveOptions& opt = {}) {
  detail::require(initial.space() == model.space(), "initial state is not on the model space");
  detail::require(opt.substeps >= 2 && opt.substeps % 2 == 0, "substeps must be even and >= 2");
  const HilbertSpec& sp = model.space();
  const cplx i(0.0, 1.0);

  // drho = -i (K rho - rho K^dag) + sum L rho L^dag, using rho K^dag = (K rho)^dag for Hermitian rho
  Matrix x, y;
  const auto rhs = [&](const CascadeGenerator& g, const Matrix& rho, Matrix& out) {
    detail::sparse_times_dense(g.k, rho, x);
    out = -i * x;
    out += i * x.adjoint();
    for (const RowSparseMatrix* l : {&g.l1, &g.l2}) {
      detail::sparse_times_dense(*l, rho, y);
      detail::add_dense_times_adjoint(y, *l, out);
    }
  };

  Matrix rho = initial.density();
  Evolution ev;
  const auto record = [&](std::size_t idx) {
    const double terr = std::abs(rho.trace() - 1.0);
    ev.max_trace_error = std::max(ev.max_trace_error, terr);
    if (!(terr <= opt.trace_tolerance)) throw NumericalError("integrator accuracy exceeded");
    const double top = detail::top_occupation(sp, rho);
    ev.max_top_occupation = std::max(ev.max_top_occupation, top);
    if (!(top <= opt.overflow_threshold)) throw NumericalError("truncation overflow");
    ev.trajectory.push_back({model.time(idx), detail::trace_product(model.mode_op(labels::cavity), rho),
                             detail::trace_product(model.mode_op(labels::absorber1), rho),
                             detail::trace_product(model.mode_op(labels::absorber2), rho), terr});
  };

  record(0);
  // Steps span `substeps` grid intervals, two near coefficient jumps, and the remainder at the end.
  const std::size_t last = model.steps() - 1;
  CascadeGenerator g0 = model.generator(0);
  Matrix k1, k2, k3, k4, tmp;
  std::size_t step = 0;
  for (std::size_t idx = 0; idx < last;) {
    std::size_t stride = std::min(opt.substeps, last - idx);
    if (!model.smooth(idx, idx + stride)) stride = 2;
    const double h = static_cast<double>(stride) * model.dt();
    const CascadeGenerator gm = model.generator(idx + stride / 2);
    CascadeGenerator g1 = model.generator(idx + stride);
    rhs(g0, rho, k1);
    tmp = rho + (0.5 * h) * k1;
    rhs(gm, tmp, k2);
    tmp = rho + (0.5 * h) * k2;
    rhs(gm, tmp, k3);
    tmp = rho + h * k3;
    rhs(g1, tmp, k4);
    rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    g0 = std::move(g1);
    idx += stride;
    if (++step % opt.record_every == 0 || idx == last) record(idx);
  }
  const double tr = rho.trace().real();
  rho = 0.5 * (rho + rho.adjoint()).eval() / tr;
  ev.final_state = QuantumState::mixed(sp, std::move(rho), 1e-9, 0);
  return ev;
}

inline csv::Table trajectory_table(const Evolution& ev) {
  csv::Table t;
  t.header = {"t", "re_a", "im_a", "re_av1", "im_av1", "re_av2", "im_av2", "trace_err"};
  for (const auto& p : ev.trajectory)
    t.rows.push_back({p.t, p.a.real(), p.a.imag(), p.av1.real(), p.av1.imag(), p.av2.real(), p.av2.imag(), p.trace_err});
  return t;
}

// Qubit amplitudes (c0 |0> + c1 |1>) x |alpha0>_u x vacuum.
inline QuantumState cascade_initial_state(const CascadedModel& model, cplx alpha0, cplx c0, cplx c1) {
  const HilbertSpec& sp = model.space();
  const std::size_t d = sp.dim_of(labels::emitter);
  check_truncation(alpha0, d, sp.factor(sp.index_of(labels::emitter)).tail_tolerance);
  Vector q(2);
  q << c0, c1;
  q /= q.norm();
  const Vector vac = fock_vector(0, d);
  return product_state(sp, {q, coherent_vector(alpha0, d), vac, vac, vac});
}

struct QwpConfig {
  std::size_t arm_dim = 0;  // 0: default rule for the ideal state
  double tail_tolerance = default_tail_tolerance;
  // dynamical generation
  SystemParams params{};
  CascadeTruncation truncation{};
  double step_kappa = default_step_kappa;
  double tail_kappa = 30.0;
  EvolveOptions evolve{};
};

// (|1, a0, 0> + |0, 0, a0>)/sqrt2 on qubit x arm1 x arm2.
inline QuantumState ideal_qwp_state(cplx alpha0, const HilbertSpec& space) {
  const std::size_t d1 = space.dim_of(labels::arm1), d2 = space.dim_of(labels::arm2);
  const Vector one = fock_vector(1, 2), zero = fock_vector(0, 2);
  Vector psi = product_state(space, {one, coherent_vector(alpha0, d1), fock_vector(0, d2)}).vector() +
               product_state(space, {zero, fock_vector(0, d1), coherent_vector(alpha0, d2)}).vector();
  return QuantumState::pure(space, psi / psi.norm());
}

inline HilbertSpec qwp_space(std::size_t arm_dim, double tol = default_tail_tolerance,
                             std::optional<std::size_t> cap = std::nullopt) {
  return HilbertSpec({qubit_factor(labels::qubit), fock_factor(labels::arm1, arm_dim, tol),
                      fock_factor(labels::arm2, arm_dim, tol)},
                     cap);
}

// Runs the cascade with the qubit in |+> and returns the reduced state of the two absorbers.
inline QuantumState dynamical_qwp_state(cplx alpha0, const QwpConfig& cfg, Evolution* trace = nullptr) {
  SystemParams p = cfg.params;
  p.alpha0 = alpha0;
  const Waveform u = default_pulse(p, cfg.step_kappa);
  const CascadedModel model(u, p, cfg.truncation, cfg.tail_kappa);
  const double r = 1.0 / std::sqrt(2.0);
  Evolution ev = evolve(model, cascade_initial_state(model, alpha0, r, r), cfg.evolve);
  QuantumState red = partial_trace(ev.final_state, {labels::qubit, labels::absorber1, labels::absorber2})
                         .relabel({{labels::absorber1, labels::arm1}, {labels::absorber2, labels::arm2}});
  if (trace) *trace = std::move(ev);
  return red;
}

inline QuantumState qwp_state(cplx alpha0, bool ideal, const QwpConfig& cfg = {}) {
  if (!ideal) return dynamical_qwp_state(alpha0, cfg);
  const std::size_t d = cfg.arm_dim ? cfg.arm_dim : default_fock_dim(alpha0);
  check_truncation(alpha0, d, cfg.tail_tolerance);
  return ideal_qwp_state(alpha0, qwp_space(d, cfg.tail_tolerance));
}

}  // namespace qwp
