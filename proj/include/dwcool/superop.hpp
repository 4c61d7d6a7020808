#pragma once

// Superoperators on column-stacked density matrices: vec(A rho B) = (B^T kron A) vec(rho).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "error.hpp"
#include "types.hpp"

namespace dwcool {

/// One term rho -> coef * left * rho * right of a linear generator.
struct SuperTerm {
  cplx coef{1.0, 0.0};
  SparseC left;
  SparseC right;
};

using Generator = std::vector<SuperTerm>;

inline SparseC sparse_identity(Eigen::Index n) {
  SparseC id(n, n);
  id.setIdentity();
  return id;
}

inline SparseC to_sparse(const MatrixXc& m, double drop = 0.0) {
  std::vector<TripletC> t;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (std::abs(m(i, j)) > drop) t.emplace_back(i, j, m(i, j));
  SparseC s(m.rows(), m.cols());
  s.setFromTriplets(t.begin(), t.end());
  return s;
}

inline SparseC to_sparse(const MatrixXd& m, double drop = 0.0) {
  return to_sparse(MatrixXc(m.cast<cplx>()), drop);
}

/// Kronecker product; the index of `a` varies slowest.
inline SparseC kron(const SparseC& a, const SparseC& b) {
  std::vector<TripletC> t;
  t.reserve(static_cast<std::size_t>(a.nonZeros() * b.nonZeros()));
  for (Eigen::Index ja = 0; ja < a.outerSize(); ++ja)
    for (SparseC::InnerIterator ia(a, ja); ia; ++ia)
      for (Eigen::Index jb = 0; jb < b.outerSize(); ++jb)
        for (SparseC::InnerIterator ib(b, jb); ib; ++ib)
          t.emplace_back(ia.row() * b.rows() + ib.row(), ia.col() * b.cols() + ib.col(),
                         ia.value() * ib.value());
  SparseC out(a.rows() * b.rows(), a.cols() * b.cols());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

inline Eigen::Index total_dimension(std::span<const int> dims) {
  return std::accumulate(dims.begin(), dims.end(), Eigen::Index{1},
                         [](Eigen::Index acc, int d) { return acc * d; });
}

/// Embed a local operator acting on tensor factor `factor` into the full space.
inline SparseC lift(const SparseC& op, std::span<const int> dims, std::size_t factor) {
  require(factor < dims.size(), ErrorKind::DimensionMismatch, "tensor factor out of range");
  require(op.rows() == dims[factor] && op.cols() == dims[factor], ErrorKind::DimensionMismatch,
          "local operator does not match its tensor factor");
  Eigen::Index before = 1;
  Eigen::Index after = 1;
  for (std::size_t k = 0; k < factor; ++k) before *= dims[k];
  for (std::size_t k = factor + 1; k < dims.size(); ++k) after *= dims[k];
  SparseC out = op;
  if (before > 1) out = kron(sparse_identity(before), out);
  if (after > 1) out = kron(out, sparse_identity(after));
  return out;
}

inline SuperTerm lift(const SuperTerm& term, std::span<const int> dims, std::size_t factor) {
  return {term.coef, lift(term.left, dims, factor), lift(term.right, dims, factor)};
}

inline Generator lift(const Generator& gen, std::span<const int> dims, std::size_t factor) {
  Generator out;
  out.reserve(gen.size());
  for (const auto& term : gen) out.push_back(lift(term, dims, factor));
  return out;
}

/// Apply a generator to a dense operator without forming its superoperator.
inline MatrixXc apply(const Generator& gen, const MatrixXc& rho) {
  MatrixXc out = MatrixXc::Zero(rho.rows(), rho.cols());
  for (const auto& term : gen) {
    require(term.left.cols() == rho.rows() && term.right.rows() == rho.cols(),
            ErrorKind::DimensionMismatch, "generator and operator dimensions differ");
    MatrixXc left_rho = term.left * rho;
    out += term.coef * (left_rho * term.right);
  }
  return out;
}

/// Dual (Heisenberg-picture) action: Tr[X L(rho)] = Tr[L^dag(X) rho].
inline MatrixXc apply_adjoint(const Generator& gen, const MatrixXc& obs) {
  MatrixXc out = MatrixXc::Zero(obs.rows(), obs.cols());
  for (const auto& term : gen) {
    MatrixXc l = MatrixXc(term.left).adjoint();
    MatrixXc r = MatrixXc(term.right).adjoint();
    out += std::conj(term.coef) * (l * obs * r);
  }
  return out;
}

inline std::size_t estimate_nonzeros(const SuperTerm& term) {
  return static_cast<std::size_t>(term.left.nonZeros()) *
         static_cast<std::size_t>(term.right.nonZeros());
}

/// Append the triplets of coef * (right^T kron left).
inline void append_superoperator(const SuperTerm& term, std::vector<TripletC>& out) {
  const SparseC& a = term.left;
  const SparseC& b = term.right;
  const Eigen::Index d = a.rows();
  for (Eigen::Index jb = 0; jb < b.outerSize(); ++jb)
    for (SparseC::InnerIterator ib(b, jb); ib; ++ib) {
      // (B^T)_{col,row} = B_{row,col}: block row ib.col(), block column ib.row()
      const cplx bv = term.coef * ib.value();
      for (Eigen::Index ja = 0; ja < a.outerSize(); ++ja)
        for (SparseC::InnerIterator ia(a, ja); ia; ++ia)
          out.emplace_back(ib.col() * d + ia.row(), ib.row() * d + ia.col(), bv * ia.value());
    }
}

inline SparseC superoperator(const Generator& gen, Eigen::Index dim) {
  std::vector<TripletC> t;
  std::size_t estimate = 0;
  for (const auto& term : gen) estimate += estimate_nonzeros(term);
  t.reserve(estimate);
  for (const auto& term : gen) {
    require(term.left.rows() == dim && term.right.rows() == dim, ErrorKind::DimensionMismatch,
            "generator term has the wrong dimension");
    append_superoperator(term, t);
  }
  SparseC s(dim * dim, dim * dim);
  s.setFromTriplets(t.begin(), t.end());
  s.prune(cplx{0.0, 0.0}, 0.0);
  return s;
}

inline VectorXc vectorize(const MatrixXc& rho) {
  return Eigen::Map<const VectorXc>(rho.data(), rho.size());
}

inline MatrixXc unvectorize(const VectorXc& v, Eigen::Index dim) {
  require(v.size() == dim * dim, ErrorKind::DimensionMismatch, "vector length is not dim^2");
  return Eigen::Map<const MatrixXc>(v.data(), dim, dim);
}

/// Matrix-free form of a generator: terms with an identity on one side are
/// summed into a single left or right multiplier.
struct CompiledGenerator {
  Eigen::Index dim = 0;
  SparseC left_sum;   ///< rho -> left_sum rho
  SparseC right_sum;  ///< rho -> rho right_sum
  Generator sandwich;

  MatrixXc apply(const MatrixXc& rho) const {
    MatrixXc out = left_sum * rho;
    out += rho * right_sum;
    for (const auto& t : sandwich) {
      const MatrixXc lr = t.left * rho;
      out += t.coef * (lr * t.right);
    }
    return out;
  }

  MatrixXc apply_adjoint(const MatrixXc& obs) const {
    MatrixXc out = SparseC(left_sum.adjoint()) * obs;
    out += obs * SparseC(right_sum.adjoint());
    for (const auto& t : sandwich) {
      const MatrixXc lo = SparseC(t.left.adjoint()) * obs;
      out += std::conj(t.coef) * (lo * SparseC(t.right.adjoint()));
    }
    return out;
  }

  template <typename Vec>
  VectorXc apply_vec(const Eigen::MatrixBase<Vec>& v) const {
    const VectorXc copy = v;
    const MatrixXc out = apply(Eigen::Map<const MatrixXc>(copy.data(), dim, dim));
    return Eigen::Map<const VectorXc>(out.data(), out.size());
  }

  /// Diagonal of the superoperator, column-stacked.
  VectorXc diagonal() const {
    MatrixXc diag(dim, dim);
    const VectorXc l = left_sum.diagonal();
    const VectorXc r = right_sum.diagonal();
    for (Eigen::Index j = 0; j < dim; ++j) diag.col(j) = l.array() + r(j);
    for (const auto& t : sandwich) {
      const VectorXc tl = t.left.diagonal();
      const VectorXc tr = t.right.diagonal();
      diag += t.coef * (tl * tr.transpose());
    }
    return Eigen::Map<const VectorXc>(diag.data(), diag.size());
  }

  /// Upper bound on the induced 1-norm of the superoperator.
  double one_norm_bound() const {
    auto col_norm = [](const SparseC& m) {
      double best = 0.0;
      for (Eigen::Index c = 0; c < m.outerSize(); ++c) {
        double s = 0.0;
        for (SparseC::InnerIterator it(m, c); it; ++it) s += std::abs(it.value());
        best = std::max(best, s);
      }
      return best;
    };
    auto row_norm = [&](const SparseC& m) { return col_norm(SparseC(m.transpose())); };
    double bound = col_norm(left_sum) + row_norm(right_sum);
    for (const auto& t : sandwich) bound += std::abs(t.coef) * col_norm(t.left) * row_norm(t.right);
    return bound;
  }
};

inline bool is_identity(const SparseC& m) {
  if (m.rows() != m.cols() || m.nonZeros() != m.rows()) return false;
  for (Eigen::Index c = 0; c < m.outerSize(); ++c)
    for (SparseC::InnerIterator it(m, c); it; ++it)
      if (it.row() != c || it.value() != cplx(1.0, 0.0)) return false;
  return true;
}

inline CompiledGenerator compile(const Generator& gen, Eigen::Index dim) {
  CompiledGenerator out;
  out.dim = dim;
  out.left_sum = SparseC(dim, dim);
  out.right_sum = SparseC(dim, dim);
  for (const auto& t : gen) {
    require(t.left.rows() == dim && t.right.rows() == dim, ErrorKind::DimensionMismatch,
            "generator term has the wrong dimension");
    if (is_identity(t.right)) {
      out.left_sum += SparseC(t.coef * t.left);
    } else if (is_identity(t.left)) {
      out.right_sum += SparseC(t.coef * t.right);
    } else {
      out.sandwich.push_back(t);
    }
  }
  out.left_sum.prune(cplx{0.0, 0.0}, 0.0);
  out.right_sum.prune(cplx{0.0, 0.0}, 0.0);
  return out;
}

/// Commutator generator rho -> coef [op, rho].
inline Generator commutator(const SparseC& op, cplx coef) {
  const SparseC id = sparse_identity(op.rows());
  return {{coef, op, id}, {-coef, id, op}};
}

}  // namespace dwcool
