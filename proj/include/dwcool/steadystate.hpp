#pragma once

// Full master equation over mechanics (x) cavity modes, steady-state solvers
// and Krylov time evolution.
//
// Tensor ordering: mechanics first, then cavities in declaration order; the
// mechanical index varies slowest.  Density matrices are column-stacked.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/IterativeSolvers>

#include "constants.hpp"
#include "error.hpp"
#include "lindblad.hpp"
#include "spectrum.hpp"
#include "superop.hpp"
#include "types.hpp"

namespace dwcool {

struct CavityModeSpec {
  double detuning = 0.0;  ///< Delta_j, rad/s (drive frame)
  double kappa = 0.0;     ///< rad/s
  std::optional<double> g;  ///< rad/s per MechanicalSpectrum::length_unit
  double G0 = 0.0;          ///< rad/s, bare coupling per harmonic zero-point length
  double nbar_c = 0.0;      ///< intracavity photon number
  int fock_truncation = 3;

  void validate() const {
    require(kappa > 0.0, ErrorKind::InvalidArgument, "cavity kappa must be positive");
    require(nbar_c >= 0.0, ErrorKind::InvalidArgument, "nbar_c must be non-negative");
    require(fock_truncation >= 2, ErrorKind::InvalidArgument, "fock_truncation must be >= 2");
  }

  /// Linearized coupling rate per length_unit.  With (G0, nbar_c) the physical
  /// coupling is g0 sqrt(nbar_c) x with g0 = G0 / x_harm, so in units of
  /// length_unit it picks up the factor length_unit / x_harm.
  double coupling(const MechanicalSpectrum& spec, const DoubleWellParams& params) const {
    if (g) return *g;
    require(params.omega_harmonic > 0.0, ErrorKind::InvalidArgument,
            "G0-based coupling needs omega_harmonic");
    return G0 * std::sqrt(nbar_c) * std::sqrt(params.omega_harmonic / spec.omega_unit);
  }
};

struct SystemSpec {
  MechanicalSpectrum spectrum;
  DoubleWellParams params;
  BathParams bath;
  std::vector<CavityModeSpec> cavities;
  /// Additional generators on the mechanical factor (for example CSL diffusion).
  std::vector<Generator> extra_mechanical;
  DampingNormalization normalization = DampingNormalization::well;
  DissipatorForm form = DissipatorForm::standard;
  bool include_mechanical_damping = true;
  std::size_t nonzero_budget = 16'000'000;
  /// Assembled sparse matrix, matrix-free operator, or assembled when the
  /// nonzero estimate fits the budget.
  enum class Assembly { automatic, matrix, matrix_free } assembly = Assembly::automatic;

  std::vector<int> dims() const {
    std::vector<int> d{spectrum.n_levels()};
    for (const auto& c : cavities) d.push_back(c.fock_truncation);
    return d;
  }
};

struct Liouvillian {
  SparseC matrix;  ///< rad/s, acting on column-stacked rho; empty when matrix-free
  bool assembled = false;
  CompiledGenerator op;  ///< matrix-free form, always available
  std::vector<int> dims;
  Eigen::Index hilbert_dim = 0;
  std::size_t nonzeros = 0;    ///< of the assembled matrix (or the estimate when matrix-free)
  double rate_scale = 0.0;     ///< largest |diagonal| entry, rad/s
  double trace_defect = 0.0;   ///< max |L^dag[1]| / rate_scale
  double assembly_seconds = 0.0;
  /// Uncoupled generator of each tensor factor on its own space (may be empty).
  std::vector<Generator> local_generators;

  template <typename Vec>
  VectorXc apply(const Eigen::MatrixBase<Vec>& v) const {
    if (assembled) return matrix * v;
    return op.apply_vec(v);
  }
};

/// Generator pieces of the full system: one local generator per tensor
/// factor plus the mechanics-cavity coupling on the full space.
struct SystemGenerator {
  std::vector<Generator> local;
  Generator coupling;
};

inline SystemGenerator system_generator(const SystemSpec& sys) {
  for (const auto& c : sys.cavities) c.validate();
  const std::vector<int> dims = sys.dims();
  const MechanicalSpectrum& spec = sys.spectrum;
  const int n = spec.n_levels();
  SystemGenerator out;

  MatrixXd h_mech = MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) h_mech(k, k) = spec.delta(k, 0);
  const MatrixXd xd = spec.x_dimensionless();
  Generator mech = commutator(to_sparse(h_mech), cplx(0.0, -1.0));
  if (sys.include_mechanical_damping) {
    const AOperator a = build_a_operator(spec, sys.bath, sys.params, sys.normalization);
    for (auto& t : mechanical_dissipator(a, xd, sys.form)) mech.push_back(std::move(t));
  }
  for (const auto& extra : sys.extra_mechanical)
    for (const auto& t : extra) mech.push_back(t);
  out.local.push_back(std::move(mech));

  const SparseC x_full = lift(to_sparse(xd), dims, 0);
  SparseC h_int(x_full.rows(), x_full.cols());
  for (std::size_t j = 0; j < sys.cavities.size(); ++j) {
    const auto& cav = sys.cavities[j];
    const SparseC a = annihilation(cav.fock_truncation);
    const SparseC ad = SparseC(a.adjoint());
    Generator local = commutator(SparseC(cplx(-cav.detuning) * (ad * a)), cplx(0.0, -1.0));
    for (auto& t : cavity_dissipator(cav.kappa, cav.fock_truncation)) local.push_back(std::move(t));
    out.local.push_back(std::move(local));
    const double g = cav.coupling(spec, sys.params);
    if (g != 0.0) h_int += SparseC(cplx(g) * (lift(SparseC(a + ad), dims, j + 1) * x_full));
  }
  h_int.prune(cplx{0.0, 0.0}, 0.0);
  if (h_int.nonZeros() > 0) out.coupling = commutator(h_int, cplx(0.0, -1.0));
  return out;
}

/// Row vector vec(1)^T L; vanishes for a trace-preserving generator.
inline VectorXc trace_row(const SparseC& l, Eigen::Index dim) {
  VectorXc out = VectorXc::Zero(l.cols());
  for (Eigen::Index c = 0; c < l.outerSize(); ++c)
    for (SparseC::InnerIterator it(l, c); it; ++it)
      if (it.row() % (dim + 1) == 0) out(c) += it.value();
  return out;
}

namespace detail {

inline void finish_liouvillian(Liouvillian& out) {
  const VectorXc diag = out.assembled ? VectorXc(out.matrix.diagonal()) : out.op.diagonal();
  out.rate_scale = diag.size() ? diag.cwiseAbs().maxCoeff() : 0.0;
  if (out.rate_scale == 0.0) out.rate_scale = 1.0;
  const MatrixXc dual = out.op.apply_adjoint(MatrixXc::Identity(out.hilbert_dim, out.hilbert_dim));
  out.trace_defect = dual.cwiseAbs().maxCoeff() / out.rate_scale;
}

}  // namespace detail

inline Liouvillian assemble_liouvillian(const SystemSpec& sys) {
  const auto start = std::chrono::steady_clock::now();
  Liouvillian out;
  out.dims = sys.dims();
  out.hilbert_dim = total_dimension(out.dims);
  SystemGenerator parts = system_generator(sys);

  Generator gen = parts.coupling;
  for (std::size_t f = 0; f < parts.local.size(); ++f)
    for (auto& t : lift(parts.local[f], out.dims, f)) gen.push_back(std::move(t));

  std::size_t estimate = 0;
  for (const auto& t : gen) estimate += estimate_nonzeros(t);
  const bool fits = estimate <= sys.nonzero_budget;
  if (sys.assembly == SystemSpec::Assembly::matrix && !fits) {
    fail(ErrorKind::DimensionOverflow, "Liouvillian needs ~" + std::to_string(estimate) +
                                           " nonzeros, budget is " +
                                           std::to_string(sys.nonzero_budget));
  }
  out.op = compile(gen, out.hilbert_dim);
  out.assembled = sys.assembly != SystemSpec::Assembly::matrix_free && fits;
  if (out.assembled) {
    out.matrix = superoperator(gen, out.hilbert_dim);
    out.nonzeros = static_cast<std::size_t>(out.matrix.nonZeros());
  } else {
    out.nonzeros = estimate;
  }
  detail::finish_liouvillian(out);
  if (out.trace_defect > 1e-10) {
    fail(ErrorKind::SingularAssembly,
         "generator is not trace preserving (defect " + std::to_string(out.trace_defect) + ")");
  }
  out.local_generators = std::move(parts.local);
  out.assembly_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Wrap a bare generator (for models assembled outside SystemSpec).
inline Liouvillian make_liouvillian(const Generator& gen, std::vector<int> dims) {
  Liouvillian out;
  out.dims = std::move(dims);
  out.hilbert_dim = total_dimension(out.dims);
  out.op = compile(gen, out.hilbert_dim);
  out.matrix = superoperator(gen, out.hilbert_dim);
  out.assembled = true;
  out.nonzeros = static_cast<std::size_t>(out.matrix.nonZeros());
  detail::finish_liouvillian(out);
  return out;
}

// ---------------------------------------------------------------------------
// Density-matrix utilities

inline MatrixXc reduce_mechanical(const MatrixXc& rho, std::span<const int> dims) {
  require(!dims.empty(), ErrorKind::DimensionMismatch, "empty dimension list");
  const Eigen::Index dim = total_dimension(dims);
  require(rho.rows() == dim && rho.cols() == dim, ErrorKind::DimensionMismatch,
          "density matrix does not match the tensor dimensions");
  const Eigen::Index n = dims[0];
  const Eigen::Index rest = dim / n;
  MatrixXc out = MatrixXc::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) {
      cplx s = 0.0;
      for (Eigen::Index k = 0; k < rest; ++k) s += rho(a * rest + k, b * rest + k);
      out(a, b) = s;
    }
  return out;
}

inline double trace_distance(const MatrixXc& a, const MatrixXc& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::DimensionMismatch,
          "trace distance between differently sized matrices");
  const MatrixXc diff = a - b;
  const MatrixXc herm = 0.5 * (diff + diff.adjoint());
  Eigen::SelfAdjointEigenSolver<MatrixXc> es(herm, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

inline double min_eigenvalue(const MatrixXc& rho) {
  const MatrixXc herm = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<MatrixXc> es(herm, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Gibbs state of the mechanical spectrum at temperature T (ground state at T = 0).
inline MatrixXc gibbs_state(const MechanicalSpectrum& spec, double temperature) {
  const int n = spec.n_levels();
  MatrixXc rho = MatrixXc::Zero(n, n);
  if (temperature == 0.0) {
    rho(0, 0) = 1.0;
    return rho;
  }
  double z = 0.0;
  for (int k = 0; k < n; ++k) {
    const double w = std::exp(-(spec.energies[k] - spec.energies[0]) / (constants::k_B * temperature));
    rho(k, k) = w;
    z += w;
  }
  return rho / z;
}

inline MatrixXc vacuum_state(int fock) {
  MatrixXc rho = MatrixXc::Zero(fock, fock);
  rho(0, 0) = 1.0;
  return rho;
}

/// Kronecker product of dense states; `a` varies slowest.
inline MatrixXc kron_dense(const MatrixXc& a, const MatrixXc& b) {
  MatrixXc out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Random full-rank density matrix (Ginibre ensemble), deterministic in `rng`.
inline MatrixXc random_density_matrix(Eigen::Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  MatrixXc g(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) g(i, j) = cplx(normal(rng), normal(rng));
  MatrixXc rho = g * g.adjoint();
  return rho / rho.trace();
}

// ---------------------------------------------------------------------------
// Steady state

enum class SteadyMethod { automatic, direct, shifted_inverse, krylov };

inline std::string to_string(SteadyMethod m) {
  switch (m) {
    case SteadyMethod::automatic: return "automatic";
    case SteadyMethod::direct: return "direct";
    case SteadyMethod::shifted_inverse: return "shifted-inverse";
    case SteadyMethod::krylov: return "krylov";
  }
  return "unknown";
}

struct SolverDiagnostics {
  std::string method;
  int iterations = 0;
  double wall_seconds = 0.0;
  double trace_correction = 0.0;        ///< |Tr(rho) - 1| before renormalization
  double hermiticity_correction = 0.0;  ///< ||rho - rho^dag||_max before symmetrization
};

struct SteadyStateResult {
  MatrixXc rho_full;
  MatrixXc rho_mech;
  double residual = 0.0;     ///< ||L rho|| / (rate_scale ||rho||)
  double trace_error = 0.0;  ///< |Tr(rho) - 1| after normalization
  double min_eigenvalue = 0.0;
  SolverDiagnostics diagnostics;
};

namespace detail {

// L with its first row replaced by the (scaled) trace functional.
inline void require_assembled(const Liouvillian& l, const char* what) {
  require(l.assembled, ErrorKind::InvalidArgument,
          std::string(what) + " needs an assembled Liouvillian; use the krylov method");
}

inline SparseC bordered_system(const Liouvillian& l) {
  require_assembled(l, "bordered system");
  const Eigen::Index d = l.hilbert_dim;
  SparseC m = l.matrix;
  m.prune([](Eigen::Index row, Eigen::Index, const cplx&) { return row != 0; });
  std::vector<TripletC> t;
  for (Eigen::Index i = 0; i < d; ++i) t.emplace_back(0, i * (d + 1), cplx(l.rate_scale));
  SparseC tr(m.rows(), m.cols());
  tr.setFromTriplets(t.begin(), t.end());
  m += tr;
  m.makeCompressed();
  return m;
}

inline double relative_residual(const Liouvillian& l, const VectorXc& v) {
  const double nv = v.norm();
  if (nv == 0.0) return std::numeric_limits<double>::infinity();
  return l.apply(v).norm() / (l.rate_scale * nv);
}

inline SteadyStateResult finalize(const Liouvillian& l, const VectorXc& v, SolverDiagnostics diag,
                                  double tol) {
  const Eigen::Index d = l.hilbert_dim;
  MatrixXc rho = unvectorize(v, d);
  const cplx tr = rho.trace();
  require(std::abs(tr) > 0.0, ErrorKind::SingularAssembly, "steady state has zero trace");
  rho /= tr;
  diag.trace_correction = std::abs(tr - 1.0);
  diag.hermiticity_correction = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  rho = 0.5 * (rho + rho.adjoint()).eval();
  SteadyStateResult out;
  out.rho_full = rho;
  out.rho_mech = reduce_mechanical(rho, l.dims);
  out.residual = relative_residual(l, vectorize(rho));
  out.trace_error = std::abs(rho.trace() - 1.0);
  out.min_eigenvalue = min_eigenvalue(rho);
  out.diagnostics = std::move(diag);
  if (!(out.residual <= tol)) {
    fail(ErrorKind::NonConvergence, out.diagnostics.method + " residual " +
                                        std::to_string(out.residual) + " above tolerance " +
                                        std::to_string(tol));
  }
  return out;
}

inline VectorXc solve_direct(const Liouvillian& l, int& iterations) {
  const SparseC m = bordered_system(l);
  Eigen::SparseLU<SparseC, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) fail(ErrorKind::SingularAssembly, "sparse LU failed: " + lu.lastErrorMessage());
  VectorXc rhs = VectorXc::Zero(m.rows());
  rhs(0) = l.rate_scale;
  VectorXc v = lu.solve(rhs);
  // One step of iterative refinement on the bordered system.
  const VectorXc r = rhs - m * v;
  v += lu.solve(r);
  iterations = 2;
  return v;
}

// Exact inverse of the uncoupled generator L0 = sum_f L_f (a Kronecker sum),
// made invertible by the rank-one term s rho0 tr^T, where rho0 is the
// uncoupled stationary state.  Applied through the eigenbases of the small
// factor superoperators.
class KroneckerSumPreconditioner {
 public:
  KroneckerSumPreconditioner() = default;

  KroneckerSumPreconditioner(const std::vector<Generator>& local, std::span<const int> dims) {
    require(local.size() == dims.size(), ErrorKind::DimensionMismatch,
            "one local generator per tensor factor is required");
    const std::size_t nf = dims.size();
    dim_ = total_dimension(dims);
    sizes_.resize(nf);
    v_.resize(nf);
    vinv_.resize(nf);
    std::vector<VectorXc> lambda(nf);
    std::vector<Eigen::Index> zero(nf);
    double smallest_nonzero = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < nf; ++f) {
      const int n = dims[f];
      sizes_[f] = Eigen::Index(n) * n;
      const MatrixXc s = MatrixXc(superoperator(local[f], n));
      Eigen::ComplexEigenSolver<MatrixXc> es(s);
      if (es.info() != Eigen::Success) fail(ErrorKind::SingularAssembly, "factor eigensolver failed");
      v_[f] = es.eigenvectors();
      Eigen::PartialPivLU<MatrixXc> lu(v_[f]);
      vinv_[f] = lu.inverse();
      lambda[f] = es.eigenvalues();
      const VectorXd mag = lambda[f].cwiseAbs();
      mag.minCoeff(&zero[f]);
      const double top = std::max(mag.maxCoeff(), 1e-300);
      for (Eigen::Index k = 0; k < mag.size(); ++k) {
        if (k == zero[f]) continue;
        if (mag(k) <= 1e-9 * top) {
          fail(ErrorKind::SingularAssembly, "factor " + std::to_string(f) +
                                                " has more than one stationary state");
        }
        smallest_nonzero = std::min(smallest_nonzero, mag(k));
      }
      if (mag(zero[f]) > 1e-9 * top) {
        fail(ErrorKind::SingularAssembly, "factor " + std::to_string(f) + " has no stationary state");
      }
      // Condition of the eigenbasis: a defective factor makes this useless.
      if ((v_[f] * vinv_[f] - MatrixXc::Identity(sizes_[f], sizes_[f])).cwiseAbs().maxCoeff() > 1e-6) {
        fail(ErrorKind::SingularAssembly, "factor superoperator is not diagonalizable");
      }
    }
    shift_ = std::isfinite(smallest_nonzero) ? smallest_nonzero : 1.0;

    // Permutation between column-stacked order and factor-pair order.
    std::vector<Eigen::Index> stride(nf, 1);
    std::vector<Eigen::Index> pair_stride(nf, 1);
    for (std::size_t f = nf - 1; f-- > 0;) {
      stride[f] = stride[f + 1] * dims[f + 1];
      pair_stride[f] = pair_stride[f + 1] * sizes_[f + 1];
    }
    const Eigen::Index total = dim_ * dim_;
    perm_.resize(total);
    for (Eigen::Index jcol = 0; jcol < dim_; ++jcol)
      for (Eigen::Index irow = 0; irow < dim_; ++irow) {
        Eigen::Index k = 0;
        for (std::size_t f = 0; f < nf; ++f) {
          const Eigen::Index i_f = (irow / stride[f]) % dims[f];
          const Eigen::Index j_f = (jcol / stride[f]) % dims[f];
          k += (j_f * dims[f] + i_f) * pair_stride[f];
        }
        perm_[jcol * dim_ + irow] = k;
      }

    lambda_sum_.resize(total);
    for (Eigen::Index k = 0; k < total; ++k) {
      cplx sum = 0.0;
      bool is_zero = true;
      for (std::size_t f = 0; f < nf; ++f) {
        const Eigen::Index kf = (k / pair_stride[f]) % sizes_[f];
        sum += lambda[f](kf);
        is_zero = is_zero && kf == zero[f];
      }
      lambda_sum_(k) = sum;
      if (is_zero) zero_index_ = k;
    }
    set_stationary();

    // Stationary state of L0: product of the factor zero modes.
    VectorXc pair = VectorXc::Ones(1);
    for (std::size_t f = 0; f < nf; ++f) {
      VectorXc next(pair.size() * sizes_[f]);
      for (Eigen::Index a = 0; a < pair.size(); ++a)
        next.segment(a * sizes_[f], sizes_[f]) = pair(a) * v_[f].col(zero[f]);
      pair = std::move(next);
    }
    reference_ = VectorXc(total);
    for (Eigen::Index k = 0; k < total; ++k) reference_(k) = pair(perm_[k]);
    cplx tr = 0.0;
    for (Eigen::Index i = 0; i < dim_; ++i) tr += reference_(i * (dim_ + 1));
    reference_ /= tr;
  }

  /// Act as the inverse of P = L0 + s rho0 tr^T.
  void set_stationary() {
    inverse_lambda_ = lambda_sum_.cwiseInverse();
    inverse_lambda_(zero_index_) = 1.0 / shift_;
  }

  /// Act as the inverse of I - c L0.
  void set_implicit(double c) {
    inverse_lambda_ = (1.0 - c * lambda_sum_.array()).cwiseInverse().matrix();
  }

  template <typename Rhs>
  VectorXc solve(const Eigen::MatrixBase<Rhs>& b) const {
    const Eigen::Index total = dim_ * dim_;
    VectorXc work(total);
    for (Eigen::Index k = 0; k < total; ++k) work(perm_[k]) = b(k);
    apply_factors(work, vinv_);
    work.array() *= inverse_lambda_.array();
    apply_factors(work, v_);
    VectorXc out(total);
    for (Eigen::Index k = 0; k < total; ++k) out(k) = work(perm_[k]);
    return out;
  }

  const VectorXc& reference_state() const { return reference_; }
  double shift() const { return shift_; }
  Eigen::ComputationInfo info() const { return Eigen::Success; }

 private:
  // Multiply each factor axis by the matching matrix (first factor slowest).
  void apply_factors(VectorXc& t, const std::vector<MatrixXc>& mats) const {
    const std::size_t nf = sizes_.size();
    Eigen::Index outer = 1;
    Eigen::Index inner = t.size();
    for (std::size_t f = 0; f < nf; ++f) {
      inner /= sizes_[f];
      const Eigen::Index nfsz = sizes_[f];
      for (Eigen::Index o = 0; o < outer; ++o) {
        Eigen::Map<MatrixXc> block(t.data() + o * nfsz * inner, inner, nfsz);
        block = (block * mats[f].transpose()).eval();
      }
      outer *= nfsz;
    }
  }

  Eigen::Index dim_ = 0;
  std::vector<Eigen::Index> sizes_;
  std::vector<MatrixXc> v_;
  std::vector<MatrixXc> vinv_;
  std::vector<Eigen::Index> perm_;
  VectorXc lambda_sum_;
  Eigen::Index zero_index_ = 0;
  VectorXc inverse_lambda_;
  VectorXc reference_;
  double shift_ = 1.0;
};

// L + s rho0 tr^T as a matrix-free operator for GMRES.
struct RankOneBordered {
  const Liouvillian* l = nullptr;
  const VectorXc* rho0 = nullptr;
  double s = 1.0;
  Eigen::Index dim = 0;

  Eigen::Index rows() const { return dim * dim; }
  Eigen::Index cols() const { return dim * dim; }

  template <typename Vec>
  VectorXc operator*(const Eigen::MatrixBase<Vec>& v) const {
    cplx tr = 0.0;
    for (Eigen::Index i = 0; i < dim; ++i) tr += v(i * (dim + 1));
    VectorXc out = l->apply(v);
    out += (s * tr) * (*rho0);
    return out;
  }
};

inline VectorXc solve_krylov(const Liouvillian& l, double tol, int& iterations) {
  if (l.local_generators.size() == l.dims.size()) {
    std::optional<KroneckerSumPreconditioner> precond;
    try {
      precond.emplace(l.local_generators, l.dims);
    } catch (const Error&) {
      precond.reset();  // no usable factor structure; fall back to ILUT below
    }
    if (precond) {
      const RankOneBordered op{&l, &precond->reference_state(), precond->shift(), l.hilbert_dim};
      const VectorXc rhs = precond->shift() * precond->reference_state();
      VectorXc x = precond->reference_state();
      iterations = 0;
      double inner_tol = tol;
      for (int round = 0; round < 4; ++round) {
        Eigen::Index iters = 3000;
        double err = inner_tol;
        Eigen::internal::gmres(op, rhs, x, *precond, iters, Eigen::Index(80), err);
        iterations += static_cast<int>(iters);
        if (relative_residual(l, x) <= 0.5 * tol) break;
        inner_tol *= 1e-2;
      }
      return x;
    }
  }
  require_assembled(l, "ILUT-preconditioned GMRES");
  const SparseC m = bordered_system(l);
  Eigen::GMRES<SparseC, Eigen::IncompleteLUT<cplx>> gmres;
  gmres.preconditioner().setDroptol(1e-6);
  gmres.preconditioner().setFillfactor(20);
  gmres.set_restart(60);
  gmres.setMaxIterations(2000);
  gmres.setTolerance(std::min(1e-3, tol * 1e-2));
  gmres.compute(m);
  if (gmres.info() != Eigen::Success) fail(ErrorKind::SingularAssembly, "ILUT preconditioner failed");
  VectorXc rhs = VectorXc::Zero(m.rows());
  rhs(0) = l.rate_scale;
  VectorXc v = gmres.solve(rhs);
  iterations = static_cast<int>(gmres.iterations());
  if (gmres.info() != Eigen::Success) {
    fail(ErrorKind::NonConvergence, "GMRES stopped after " + std::to_string(iterations) +
                                        " iterations, error " + std::to_string(gmres.error()));
  }
  return v;
}

// Inverse iteration on L - sigma with a small negative shift: converges to the
// eigenvector whose eigenvalue is nearest zero.
inline VectorXc inverse_iteration(const Eigen::SparseLU<SparseC, Eigen::COLAMDOrdering<int>>& lu,
                                  const Liouvillian& l, VectorXc v, double tol, int& iterations) {
  v.normalize();
  for (iterations = 1; iterations <= 50; ++iterations) {
    v = lu.solve(v);
    v.normalize();
    if (relative_residual(l, v) <= 0.1 * tol) break;
  }
  return v;
}

inline VectorXc solve_shifted_inverse(const Liouvillian& l, double tol, int& iterations) {
  const Eigen::Index d = l.hilbert_dim;
  require_assembled(l, "shifted-inverse iteration");
  const double sigma = -1e-9 * l.rate_scale;
  SparseC shifted = l.matrix;
  for (Eigen::Index k = 0; k < shifted.rows(); ++k) shifted.coeffRef(k, k) -= sigma;
  shifted.makeCompressed();
  Eigen::SparseLU<SparseC, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(shifted);
  if (lu.info() != Eigen::Success) fail(ErrorKind::SingularAssembly, "shifted LU failed");

  MatrixXc start = MatrixXc::Identity(d, d) / static_cast<double>(d);
  VectorXc v = inverse_iteration(lu, l, vectorize(start), tol, iterations);

  // A second, perturbed start must converge to the same state when the
  // kernel is one-dimensional.
  std::mt19937_64 rng(12345);
  int second_iterations = 0;
  VectorXc w = inverse_iteration(lu, l, vectorize(random_density_matrix(d, rng)), tol,
                                 second_iterations);
  iterations += second_iterations;
  MatrixXc a = unvectorize(v, d);
  MatrixXc b = unvectorize(w, d);
  a /= a.trace();
  b /= b.trace();
  if (trace_distance(a, b) > std::max(1e-6, 1e3 * tol)) {
    fail(ErrorKind::SingularAssembly, "two starts converge to different stationary states");
  }
  return v;
}

}  // namespace detail

inline SteadyStateResult solve_steady(const Liouvillian& l,
                                      SteadyMethod method = SteadyMethod::automatic,
                                      double tol = 1e-10) {
  const auto start = std::chrono::steady_clock::now();
  if (method == SteadyMethod::automatic) {
    method = (l.assembled && l.hilbert_dim <= 48) ? SteadyMethod::direct : SteadyMethod::krylov;
  }
  SolverDiagnostics diag;
  diag.method = to_string(method);
  VectorXc v;
  switch (method) {
    case SteadyMethod::direct: v = detail::solve_direct(l, diag.iterations); break;
    case SteadyMethod::krylov: v = detail::solve_krylov(l, tol, diag.iterations); break;
    case SteadyMethod::shifted_inverse:
      v = detail::solve_shifted_inverse(l, tol, diag.iterations);
      break;
    case SteadyMethod::automatic: break;
  }
  diag.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return detail::finalize(l, v, std::move(diag), tol);
}

// ---------------------------------------------------------------------------
// Time evolution: TR-BDF2 (trapezoidal stage followed by BDF2), L-stable, with
// its embedded third-order error estimate.  The generator mixes MHz coherent
// oscillation with kHz dissipation, so an explicit or exponential integrator
// would be limited by the fast scale.

struct EvolutionOptions {
  double tol = 1e-7;          ///< local error per step, Frobenius norm of rho
  double initial_step = 0.0;  ///< s; 0 picks 1e-3 of the first sample interval
  double max_step = 0.0;      ///< s; 0 means unbounded
  double min_step = 0.0;      ///< s; 0 means 1e-14 times the final time
  double linear_tol = 1e-12;  ///< relative tolerance of the implicit-stage solves
};

struct EvolutionStats {
  int steps = 0;
  int rejections = 0;
  int linear_iterations = 0;
  double max_trace_drift = 0.0;
  double wall_seconds = 0.0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<MatrixXc> states;
  EvolutionStats stats;
};

namespace detail {

// x - c L x as a matrix-free operator.
struct ShiftedOperator {
  const Liouvillian* l = nullptr;
  double c = 0.0;
  Eigen::Index rows() const { return l->hilbert_dim * l->hilbert_dim; }
  Eigen::Index cols() const { return rows(); }
  template <typename Vec>
  VectorXc operator*(const Eigen::MatrixBase<Vec>& v) const {
    VectorXc out = l->apply(v);
    out *= -c;
    out += v;
    return out;
  }
};

/// Solves (I - c L) x = b.  Uses GMRES with the uncoupled Kronecker-sum
/// inverse when the factor structure is known, sparse LU otherwise.
class ImplicitStageSolver {
 public:
  ImplicitStageSolver(const Liouvillian& l, double linear_tol) : l_(&l), tol_(linear_tol) {
    if (l.local_generators.size() == l.dims.size()) {
      try {
        precond_.emplace(l.local_generators, l.dims);
      } catch (const Error&) {
        precond_.reset();
      }
    }
    if (!precond_) require_assembled(l, "implicit time stepping without factor structure");
  }

  VectorXc solve(double c, const VectorXc& b, int& iterations) {
    if (c != c_) {
      c_ = c;
      if (precond_) {
        precond_->set_implicit(c);
      } else {
        SparseC m = sparse_identity(l_->matrix.rows());
        m -= c * l_->matrix;
        lu_.compute(m);
        if (lu_.info() != Eigen::Success) fail(ErrorKind::SingularAssembly, "implicit stage LU failed");
      }
    }
    if (!precond_) {
      ++iterations;
      return lu_.solve(b);
    }
    const ShiftedOperator op{l_, c};
    VectorXc x = precond_->solve(b);
    Eigen::Index iters = 500;
    double err = tol_;
    Eigen::internal::gmres(op, b, x, *precond_, iters, Eigen::Index(40), err);
    iterations += static_cast<int>(iters);
    if (!(err <= 10.0 * tol_)) {
      fail(ErrorKind::NonConvergence, "implicit stage GMRES stalled at " + std::to_string(err));
    }
    return x;
  }

 private:
  const Liouvillian* l_;
  double tol_;
  double c_ = std::numeric_limits<double>::quiet_NaN();
  std::optional<KroneckerSumPreconditioner> precond_;
  Eigen::SparseLU<SparseC, Eigen::COLAMDOrdering<int>> lu_;
};

inline cplx vec_trace(const VectorXc& v, Eigen::Index dim) {
  cplx tr = 0.0;
  for (Eigen::Index i = 0; i < dim; ++i) tr += v(i * (dim + 1));
  return tr;
}

}  // namespace detail

/// Evolve rho0 under L and record states at `sample_times` (ascending, >= 0).
/// The observer, when given, receives each sample instead of it being stored.
inline Trajectory time_evolve(const Liouvillian& l, const MatrixXc& rho0,
                              const std::vector<double>& sample_times,
                              const EvolutionOptions& opt = {},
                              const std::function<void(double, const MatrixXc&)>& observer = {}) {
  const auto wall_start = std::chrono::steady_clock::now();
  const Eigen::Index d = l.hilbert_dim;
  require(rho0.rows() == d && rho0.cols() == d, ErrorKind::DimensionMismatch,
          "initial state does not match the Liouvillian");
  require(std::is_sorted(sample_times.begin(), sample_times.end()), ErrorKind::InvalidArgument,
          "sample times must be ascending");
  require(sample_times.empty() || sample_times.front() >= 0.0, ErrorKind::InvalidArgument,
          "sample times must be non-negative");
  require(opt.tol > 0.0, ErrorKind::InvalidArgument, "tolerance must be positive");

  const double gamma = 2.0 - std::sqrt(2.0);
  const double err_const = (-3.0 * gamma * gamma + 4.0 * gamma - 2.0) / (12.0 * (2.0 - gamma));
  const double w_stage = 1.0 / (gamma * (2.0 - gamma));
  const double w_prev = (1.0 - gamma) * (1.0 - gamma) / (gamma * (2.0 - gamma));

  Trajectory out;
  VectorXc y = vectorize(rho0);
  const cplx tr0 = detail::vec_trace(y, d);
  const double t_final = sample_times.empty() ? 0.0 : sample_times.back();
  const double min_step = opt.min_step > 0.0 ? opt.min_step : 1e-14 * t_final;
  std::optional<detail::ImplicitStageSolver> solver;
  VectorXc f0;
  double h = opt.initial_step;
  double t = 0.0;

  auto record = [&](double at) {
    MatrixXc rho = unvectorize(y, d);
    out.stats.max_trace_drift = std::max(out.stats.max_trace_drift, std::abs(rho.trace() - tr0));
    if (observer) {
      observer(at, rho);
    } else {
      out.times.push_back(at);
      out.states.push_back(std::move(rho));
    }
  };

  for (double target : sample_times) {
    if (target > t) {
      if (!solver) {
        solver.emplace(l, opt.linear_tol);
        f0 = l.apply(y);
        if (h <= 0.0) h = 1e-3 * (target - t);
      }
      while (t < target) {
        const bool last = h >= target - t;
        const double step = last ? target - t : h;
        const double c = 0.5 * gamma * step;
        int iters = 0;
        const VectorXc yg = solver->solve(c, y + c * f0, iters);
        const VectorXc fg = l.apply(yg);
        const VectorXc y1 = solver->solve(c, w_stage * yg - w_prev * y, iters);
        const VectorXc f1 = l.apply(y1);
        VectorXc est = (2.0 * err_const * step) *
                       (f0 / gamma - fg / (gamma * (1.0 - gamma)) + f1 / (1.0 - gamma));
        est = solver->solve(c, est, iters);
        out.stats.linear_iterations += iters;
        const double err = est.norm() / opt.tol;
        const double factor = std::clamp(0.9 * std::pow(std::max(err, 1e-12), -1.0 / 3.0), 0.2, 5.0);
        if (err <= 1.0) {
          y = y1;
          f0 = f1;
          t = last ? target : t + step;
          ++out.stats.steps;
          // A step clipped to land on a sample should not shrink the next one.
          if (!last || step >= h) h = step * factor;
        } else {
          ++out.stats.rejections;
          h = step * factor;
        }
        if (opt.max_step > 0.0) h = std::min(h, opt.max_step);
        if (h < min_step) fail(ErrorKind::StepUnderflow, "step size fell to " + std::to_string(h) + " s");
      }
    }
    record(target);
  }
  out.stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return out;
}

}  // namespace dwcool
