#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dwcool/fixtures.hpp"
#include "dwcool/lindblad.hpp"
#include "dwcool/steadystate.hpp"
#include "dwcool/superop.hpp"

using namespace dwcool;

namespace {

MatrixXc random_matrix(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  MatrixXc m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = cplx(g(rng), g(rng));
  return m;
}

SparseC random_sparse(Eigen::Index n, std::mt19937_64& rng) { return to_sparse(random_matrix(n, rng)); }

// Oracle: column stacking gives vec(A X B) = (B^T kron A) vec(X).
TEST(SuperopOracle, ColumnStackingIdentity) {
  std::mt19937_64 rng(1);
  const SparseC a = random_sparse(4, rng);
  const SparseC b = random_sparse(4, rng);
  const MatrixXc x = random_matrix(4, rng);
  const Generator gen{{cplx(0.7, -0.2), a, b}};
  const SparseC s = superoperator(gen, 4);
  const MatrixXc expected = cplx(0.7, -0.2) * MatrixXc(kron(SparseC(b.transpose()), a));
  EXPECT_LT((MatrixXc(s) - expected).norm(), 1e-12 * expected.norm());
  const VectorXc lhs = s * vectorize(x);
  EXPECT_LT((unvectorize(lhs, 4) - dwcool::apply(gen, x)).norm(), 1e-12 * lhs.norm());
}

TEST(SuperopOracle, KronMatchesDenseDefinition) {
  std::mt19937_64 rng(2);
  const MatrixXc a = random_matrix(2, rng);
  const MatrixXc b = random_matrix(3, rng);
  const MatrixXc k = kron(to_sparse(a), to_sparse(b));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) EXPECT_NEAR(std::abs(k(3 * i + p, 3 * j + q) - a(i, j) * b(p, q)), 0.0, 1e-14);
}

TEST(Superop, CompiledFormMatchesExplicit) {
  std::mt19937_64 rng(3);
  const std::vector<int> dims{3, 2};
  const SparseC h = random_sparse(3, rng);
  Generator gen = lift(commutator(h, cplx(0.0, -1.0)), dims, 0);
  for (const auto& t : lift(cavity_dissipator(0.3, 2), dims, 1)) gen.push_back(t);
  gen.push_back({cplx(0.5), lift(random_sparse(3, rng), dims, 0), lift(random_sparse(2, rng), dims, 1)});
  const CompiledGenerator c = compile(gen, 6);
  const MatrixXc x = random_matrix(6, rng);
  const MatrixXc ref = dwcool::apply(gen, x);
  EXPECT_LT((c.apply(x) - ref).norm(), 1e-12 * ref.norm());
  const SparseC s = superoperator(gen, 6);
  const VectorXc diag = s.diagonal();
  EXPECT_LT((c.diagonal() - diag).norm(), 1e-12 * diag.norm());
  // Duality: Tr[Y^dag L(X)] = Tr[(L^dag Y)^dag X].
  const MatrixXc y = random_matrix(6, rng);
  const cplx lhs = (y.adjoint() * ref).trace();
  const cplx rhs = (c.apply_adjoint(y).adjoint() * x).trace();
  EXPECT_LT(std::abs(lhs - rhs), 1e-12 * std::abs(lhs));
}

TEST(Superop, LiftAndPartialTrace) {
  std::mt19937_64 rng(4);
  const MatrixXc a = random_matrix(3, rng);
  const MatrixXc b = random_matrix(2, rng);
  const std::vector<int> dims{3, 2};
  const MatrixXc ab = kron_dense(a, b);
  const MatrixXc reduced = reduce_mechanical(ab, dims);
  EXPECT_LT((reduced - a * b.trace()).norm(), 1e-12 * reduced.norm());
  const MatrixXc lifted = MatrixXc(lift(to_sparse(b), dims, 1));
  EXPECT_LT((lifted - kron_dense(MatrixXc::Identity(3, 3), b)).norm(), 1e-14);
}

// Oracle: Bose occupation and its limits.
TEST(ThermalOccupation, ClosedForm) {
  const double w = constants::two_pi * 1e6;
  EXPECT_DOUBLE_EQ(thermal_occupation(w, 0.0), 0.0);
  const double t = 0.05;
  const double x = constants::hbar * w / (constants::k_B * t);
  const double n_ref = 1.0 / (std::exp(x) - 1.0);
  EXPECT_NEAR(thermal_occupation(w, t), n_ref, 1e-10 * n_ref);
  // kT >> hbar w: N -> kT/(hbar w) - 1/2
  const double hot = 10.0;
  EXPECT_NEAR(thermal_occupation(w, hot), constants::k_B * hot / (constants::hbar * w) - 0.5, 1e-3);
  EXPECT_THROW(thermal_occupation(0.0, 1.0), Error);
}

// Oracle: d<a^dag a>/dt = -kappa <a^dag a> for D_a with rate kappa.
TEST(LindbladOracle, CavityDecayRate) {
  const int f = 5;
  const double kappa = 2.5;
  const Generator d = cavity_dissipator(kappa, f);
  const SparseC a = annihilation(f);
  const MatrixXc n = MatrixXc(SparseC(a.adjoint()) * a);
  const MatrixXc dn = apply_adjoint(d, n);
  // On the truncated space this holds exactly.
  EXPECT_LT((dn + kappa * n).norm(), 1e-12);
  // Vacuum is stationary.
  EXPECT_LT(dwcool::apply(d, vacuum_state(f)).norm(), 1e-14);
}

class MechanicalGenerator : public ::testing::TestWithParam<double> {
 protected:
  void SetUp() override {
    params = fixtures::main_double_well();
    spec = diagonalize_double_well(params);
    bath = {GetParam(), fixtures::quality};
    a = build_a_operator(spec, bath, params);
    gen = mechanical_dissipator(a, spec.x_dimensionless());
    MatrixXd h = MatrixXd::Zero(spec.n_levels(), spec.n_levels());
    for (int n = 0; n < spec.n_levels(); ++n) h(n, n) = (spec.energies[n] - spec.energies[0]) / constants::hbar;
    for (const auto& t : commutator(to_sparse(h), cplx(0.0, -1.0))) gen.push_back(t);
  }
  DoubleWellParams params;
  MechanicalSpectrum spec;
  BathParams bath;
  AOperator a;
  Generator gen;
};

TEST_P(MechanicalGenerator, TraceAndHermiticityPreserving) {
  const int n = spec.n_levels();
  // Trace preservation: L^dag(1) = 0.
  const MatrixXc dual = apply_adjoint(gen, MatrixXc::Identity(n, n));
  const double scale = compile(gen, n).one_norm_bound();
  EXPECT_LT(dual.norm() / scale, 1e-12);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const MatrixXc rho = random_density_matrix(n, rng);
    const MatrixXc out = dwcool::apply(gen, rho);
    EXPECT_LT(std::abs(out.trace()) / scale, 1e-12);
    EXPECT_LT((out - out.adjoint()).norm() / (scale * rho.norm()), 1e-12);
  }
}

TEST_P(MechanicalGenerator, DetailedBalanceRatio) {
  const int n = spec.n_levels();
  for (int m = 1; m < n; ++m)
    for (int k = 0; k < m; ++k) {
      if (a.rate_table(m, k) == 0.0) continue;
      const double up = std::abs(a.matrix(m, k));
      const double down = std::abs(a.matrix(k, m));
      const double expect = bath.temperature == 0.0
                                ? 0.0
                                : std::exp(-constants::hbar * spec.delta(m, k) / (constants::k_B * bath.temperature));
      EXPECT_NEAR(up / down, expect, 1e-10 * std::max(expect, 1e-300)) << m << "," << k;
    }
}

TEST_P(MechanicalGenerator, GibbsStateIsStationary) {
  const MatrixXc rho = gibbs_state(spec, bath.temperature);
  const double scale = compile(gen, spec.n_levels()).one_norm_bound();
  EXPECT_LT(dwcool::apply(gen, rho).norm() / scale, 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Temperatures, MechanicalGenerator, ::testing::Values(0.0, 15e-3, 0.2));

TEST(MechanicalDissipator, ParityAndRates) {
  const DoubleWellParams p = fixtures::main_double_well();
  const MechanicalSpectrum s = diagonalize_double_well(p);
  const AOperator a = build_a_operator(s, {0.0, 1e6}, p);
  const MatrixXd x = s.x_dimensionless();
  for (int m = 0; m < s.n_levels(); ++m)
    for (int k = 0; k < m; ++k) {
      if (s.parities[m] == s.parities[k]) {
        EXPECT_EQ(a.matrix(m, k), cplx(0.0));
        EXPECT_EQ(a.matrix(k, m), cplx(0.0));
      } else {
        // T = 0: only downward entries, gamma_mn x_mn = (delta_mn / Q) x_mn.
        EXPECT_EQ(a.matrix(m, k), cplx(0.0));
        EXPECT_NEAR(a.matrix(k, m).real(), s.delta(m, k) / 1e6 * x(m, k), 1e-12 * std::abs(a.matrix(k, m)));
      }
    }
  const AOperator h = build_a_operator(s, {0.0, 1e6}, p, DampingNormalization::harmonic);
  EXPECT_NEAR(h.rate_scale, p.omega_harmonic / s.omega_unit, 1e-12 * h.rate_scale);
}

TEST(LindbladErrors, RejectInvalid) {
  EXPECT_THROW(lindblad_dissipator(annihilation(3), -1.0), Error);
  EXPECT_THROW(annihilation(1), Error);
  EXPECT_THROW(cavity_dissipator(0.0, 3), Error);
  const std::vector<int> dims{3, 2};
  EXPECT_THROW(lift(annihilation(3), dims, 1), Error);
  EXPECT_THROW(lift(annihilation(3), dims, 2), Error);
}

}  // namespace
