#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mspm/io.hpp"
#include "mspm/tensor.hpp"
#include "oracles.hpp"

using namespace mspm;

namespace {

const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

Eigen::Vector2d vec_u() { return {kInvSqrt2, kInvSqrt2}; }
Eigen::Vector2d vec_v() { return {kInvSqrt2, -kInvSqrt2}; }

// u (x) u (x) v + v (x) v (x) u: orthonormal third slices, both summands unit.
PSTensor odeco_fixture() {
  PSTensor t = make_rank_one({vec_u(), vec_u(), vec_v()}, {1, 1, 1}, 1.0);
  add_rank_one_inplace(t, 1.0, {vec_v(), vec_v(), vec_u()});
  return t;
}

// Unit-slice fixture with non-orthogonal factors: u(x)u(x)(1/sqrt3,1) + e1(x)e1(x)(-2/sqrt3,0).
PSTensor unit_slice_fixture() {
  Eigen::Vector2d c1(1.0 / std::sqrt(3.0), 1.0), c2(-2.0 / std::sqrt(3.0), 0.0), e1(1.0, 0.0);
  PSTensor t = make_rank_one({vec_u(), vec_u(), c1}, {1, 1, 1}, 1.0);
  add_rank_one_inplace(t, 1.0, {e1, e1, c2});
  return t;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(MakeRankOne, CoordinateOuterProduct) {
  Eigen::Vector2d a(1, 0), b(0, 1);
  const PSTensor t = make_rank_one({a, b}, {1, 1}, 2.0);
  EXPECT_EQ(t.size(), 4u);
  EXPECT_DOUBLE_EQ(t.value_at({0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(t.value_at({0, 1}), 2.0);
  EXPECT_DOUBLE_EQ(t.value_at({1, 0}), 0.0);
  EXPECT_DOUBLE_EQ(t.value_at({1, 1}), 0.0);
}

TEST(MakeRankOne, OdecoFixtureMatchesElementwiseSum) {
  const PSTensor t = odeco_fixture();
  const Eigen::Vector2d u = vec_u(), v = vec_v();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        EXPECT_NEAR(t.value_at({i, j, k}), u(i) * u(j) * v(k) + v(i) * v(j) * u(k), 1e-15);
  EXPECT_NEAR(t.frobenius_norm(), std::sqrt(2.0), 1e-14);
}

TEST(MakeRankOne, TripleLoopOracle) {
  Rng rng(11);
  const Eigen::VectorXd a = rng.unit_vector(3), b = rng.unit_vector(3);
  const PSTensor t = make_rank_one({a, b}, {2, 1}, 1.0);
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l) EXPECT_NEAR(t.value_at({j, k, l}), a(j) * a(k) * b(l), 1e-15);
}

TEST(MakeRankOne, DimensionMismatchRejected) {
  Eigen::Vector2d a(1, 0);
  EXPECT_THROW(make_rank_one({a}, {1, 1}, 1.0), std::invalid_argument);
}

TEST(Symmetrize, ProjectorFixedPoint) {
  Rng rng(5);
  const SymmetryType sym({Block{2, 3}, Block{1, 2}});
  const PSTensor t = oracle::random_ps_tensor(sym, rng);
  const PSTensor again = symmetrize(t);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_DOUBLE_EQ(t.values()[i], again.values()[i]);
}

TEST(Symmetrize, MatrixExample) {
  const PSTensor t = symmetrize({0.0, 1.0, 0.0, 0.0}, SymmetryType({Block{2, 2}}));
  EXPECT_DOUBLE_EQ(t.value_at({0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(t.value_at({0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(t.value_at({1, 0}), 0.5);
  EXPECT_DOUBLE_EQ(t.value_at({1, 1}), 0.0);
}

TEST(Symmetrize, PermutationAverageOracle) {
  Rng rng(6);
  const SymmetryType sym({Block{2, 2}, Block{1, 2}});
  std::vector<double> raw(sym.entry_count());
  for (double& x : raw) x = rng.normal();
  const PSTensor got = symmetrize(raw, sym);
  const std::vector<double> want = oracle::naive_symmetrize(raw, sym);
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(got.values()[i], want[i], 1e-15);
}

TEST(Symmetrize, ShapeMismatchRejected) {
  EXPECT_THROW(symmetrize(std::vector<double>(3, 0.0), SymmetryType({Block{2, 2}})), std::invalid_argument);
}

TEST(Contract, RankOneSelfContractionGivesScale) {
  Rng rng(7);
  const SymmetryType sym({Block{2, 4}, Block{1, 3}});
  const FactorTuple w = oracle::random_unit_tuple(sym, rng);
  const PSTensor t = make_rank_one(w, {2, 1}, 1.75);
  EXPECT_NEAR(full_contract(t, w), 1.75, 1e-12);
}

TEST(Contract, OdecoFixtureThirdFactor) {
  const PSTensor t = odeco_fixture();
  const FactorTuple w{vec_u(), vec_u(), Eigen::Vector2d::Zero()};
  const PSTensor g = contract(t, w, {1, 1, 0});
  EXPECT_NEAR((g.as_vector() - vec_v()).norm(), 0.0, 1e-14);
}

TEST(Contract, FirstModeOracle) {
  Rng rng(8);
  const SymmetryType sym({Block{1, 2}, Block{1, 2}, Block{1, 2}});
  const PSTensor t = oracle::random_ps_tensor(sym, rng);
  const Eigen::VectorXd x = rng.unit_vector(2);
  const PSTensor g = contract(t, {x, x, x}, {1, 0, 0});
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k) {
      double want = 0.0;
      for (int i = 0; i < 2; ++i) want += t.value_at({i, j, k}) * x(i);
      EXPECT_NEAR(g.value_at({j, k}), want, 1e-14);
    }
}

TEST(Contract, ExponentOutOfRangeRejected) {
  const PSTensor t = odeco_fixture();
  EXPECT_THROW(contract(t, {vec_u(), vec_u(), vec_u()}, {2, 0, 0}), std::invalid_argument);
}

TEST(Flatten, ZeroTupleIsVectorizeRow) {
  Rng rng(9);
  const SymmetryType sym({Block{2, 2}, Block{1, 3}});
  const PSTensor t = oracle::random_ps_tensor(sym, rng);
  const Eigen::MatrixXd m = flatten(t, {0, 0});
  ASSERT_EQ(m.rows(), 1);
  ASSERT_EQ(m.cols(), static_cast<Eigen::Index>(t.size()));
  EXPECT_NEAR((m.row(0).transpose() - vectorize(t)).norm(), 0.0, 0.0);
}

TEST(Flatten, RankOneIsOuterProductOfVectorizations) {
  Rng rng(10);
  const SymmetryType sym({Block{2, 3}, Block{2, 2}});
  const FactorTuple w = oracle::random_unit_tuple(sym, rng);
  const PSTensor t = make_rank_one(w, {2, 2}, 1.0);
  const FlatteningTuple f{1, 1};
  const Eigen::VectorXd row = vectorize(make_rank_one(w, {1, 1}, 1.0));
  const Eigen::VectorXd col = vectorize(make_rank_one(w, {1, 1}, 1.0));
  const Eigen::MatrixXd m = flatten(t, f);
  EXPECT_NEAR((m - row * col.transpose()).norm(), 0.0, 1e-13);
}

TEST(Flatten, IndexMapOracle) {
  Rng rng(12);
  const SymmetryType sym({Block{2, 2}, Block{1, 2}});
  const PSTensor t = oracle::random_ps_tensor(sym, rng);
  const Eigen::MatrixXd got = flatten(t, {1, 1});
  ASSERT_EQ(got.rows(), 4);
  ASSERT_EQ(got.cols(), 2);
  const Eigen::MatrixXd want = oracle::naive_flatten(t, {1, 1});
  EXPECT_NEAR((got - want).norm(), 0.0, 0.0);
}

TEST(Flatten, InvalidTupleRejected) {
  const PSTensor t = odeco_fixture();
  EXPECT_THROW(flatten(t, {1, 1}), std::invalid_argument);
  EXPECT_THROW(flatten(t, {2, 0, 0}), std::invalid_argument);
}

TEST(Vectorize, IdentityMatrix) {
  const PSTensor t(SymmetryType({Block{1, 2}, Block{1, 2}}), {1.0, 0.0, 0.0, 1.0});
  const Eigen::VectorXd v = vectorize(t);
  EXPECT_EQ(v(0), 1.0);
  EXPECT_EQ(v(1), 0.0);
  EXPECT_EQ(v(2), 0.0);
  EXPECT_EQ(v(3), 1.0);
  EXPECT_NEAR(v.norm(), t.frobenius_norm(), 0.0);
}

TEST(Vectorize, KroneckerOfFactorPowers) {
  Rng rng(13);
  const Eigen::VectorXd a = rng.unit_vector(2), b = rng.unit_vector(3);
  const Eigen::VectorXd got = vectorize(make_rank_one({a, b}, {2, 1}, 1.0));
  Eigen::VectorXd aa(4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) aa(2 * i + j) = a(i) * a(j);
  Eigen::VectorXd want(12);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) want(3 * i + j) = aa(i) * b(j);
  EXPECT_NEAR((got - want).norm(), 0.0, 1e-15);
}

TEST(Vectorize, UnitSliceFixtureLastSlicesOrthonormal) {
  const PSTensor t = unit_slice_fixture();
  Eigen::MatrixXd slices(4, 2);
  for (int k = 0; k < 2; ++k) {
    int pos = 0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) slices(pos++, k) = t.value_at({i, j, k});
  }
  const Eigen::MatrixXd gram = slices.transpose() * slices;
  EXPECT_NEAR((gram - Eigen::MatrixXd::Identity(2, 2)).norm(), 0.0, 1e-12);
}

TEST(AxpyRankOne, ZeroScaleLeavesInputUnchanged) {
  Rng rng(14);
  const SymmetryType sym({Block{2, 3}});
  const PSTensor t = oracle::random_ps_tensor(sym, rng);
  const PSTensor out = axpy_rank_one(t, 0.0, {rng.unit_vector(3)});
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t.values()[i], out.values()[i]);
}

TEST(AxpyRankOne, ExactCancellationLeavesRankOneFlattening) {
  Rng rng(15);
  const SymmetryType sym({Block{2, 4}, Block{1, 3}});
  const FactorTuple w1 = oracle::random_unit_tuple(sym, rng);
  const FactorTuple w2 = oracle::random_unit_tuple(sym, rng);
  PSTensor t = make_rank_one(w1, {2, 1}, 1.3);
  add_rank_one_inplace(t, 0.7, w2);
  const PSTensor residual = axpy_rank_one(t, -1.3, w1);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(flatten(residual, {1, 1}));
  EXPECT_LE(svd.singularValues()(1), 1e-12 * svd.singularValues()(0));
}

TEST(AxpyRankOne, GeneratorRoundTrip) {
  Rng rng(16);
  const SymmetryType sym({Block{2, 5}, Block{1, 4}});
  std::vector<FactorTuple> tuples;
  std::vector<double> lambdas;
  PSTensor t = PSTensor::zeros(sym);
  for (int i = 0; i < 4; ++i) {
    tuples.push_back(oracle::random_unit_tuple(sym, rng));
    lambdas.push_back(std::exp(2.0 * rng.uniform() - 1.0));
    add_rank_one_inplace(t, lambdas.back(), tuples.back());
  }
  PSTensor rebuilt = PSTensor::zeros(sym);
  for (int i = 0; i < 4; ++i) add_rank_one_inplace(rebuilt, lambdas[static_cast<std::size_t>(i)], tuples[static_cast<std::size_t>(i)]);
  EXPECT_LE((t - rebuilt).frobenius_norm(), 1e-12 * t.frobenius_norm());
}

TEST(TensorInvariants, BitwiseSymmetryUnderSampledPermutations) {
  Rng rng(17);
  const SymmetryType sym({Block{3, 3}, Block{2, 2}});
  const FactorTuple w = oracle::random_unit_tuple(sym, rng);
  PSTensor t = make_rank_one(w, {3, 2}, 1.1);
  add_rank_one_inplace(t, -0.4, oracle::random_unit_tuple(sym, rng));
  const PSTensor s = oracle::random_ps_tensor(sym, rng);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> idx{static_cast<int>(rng.bits() % 3), static_cast<int>(rng.bits() % 3),
                         static_cast<int>(rng.bits() % 3), static_cast<int>(rng.bits() % 2),
                         static_cast<int>(rng.bits() % 2)};
    std::vector<int> perm = idx;
    std::swap(perm[0], perm[static_cast<std::size_t>(1 + rng.bits() % 2)]);
    std::swap(perm[3], perm[4]);
    EXPECT_EQ(t.value_at(idx), t.value_at(perm));
    EXPECT_EQ(s.value_at(idx), s.value_at(perm));
  }
}

TEST(TensorInvariants, ContractionLinearity) {
  Rng rng(18);
  const SymmetryType sym({Block{2, 3}, Block{1, 3}});
  const PSTensor a = oracle::random_ps_tensor(sym, rng);
  const PSTensor b = oracle::random_ps_tensor(sym, rng);
  const FactorTuple w = oracle::random_unit_tuple(sym, rng);
  const FlatteningTuple f{1, 1};
  const PSTensor lhs = contract(PSTensor(1.7 * PSTensor(a) + (-0.3) * PSTensor(b)), w, f);
  const PSTensor rhs = 1.7 * contract(a, w, f) + (-0.3) * contract(b, w, f);
  EXPECT_LE((lhs - rhs).frobenius_norm(), 1e-12 * (1.0 + rhs.frobenius_norm()));
}

TEST(TensorInvariants, BruteForceEquivalenceOnTinyShapes) {
  Rng rng(19);
  const std::vector<SymmetryType> shapes{
      SymmetryType({Block{2, 2}}),
      SymmetryType({Block{3, 2}}),
      SymmetryType({Block{1, 3}, Block{1, 2}}),
      SymmetryType({Block{2, 3}, Block{1, 2}}),
      SymmetryType({Block{2, 2}, Block{2, 3}}),
      SymmetryType({Block{1, 2}, Block{1, 3}, Block{1, 2}}),
      SymmetryType({Block{2, 2}, Block{1, 2}, Block{1, 3}}),
  };
  for (const SymmetryType& sym : shapes) {
    const PSTensor t = oracle::random_ps_tensor(sym, rng);
    const FactorTuple w = oracle::random_unit_tuple(sym, rng);
    FlatteningTuple f(static_cast<std::size_t>(sym.block_count()), 0);
    while (true) {
      const PSTensor got = contract(t, w, f);
      const PSTensor want = oracle::naive_contract(t, w, f);
      ASSERT_EQ(got.symmetry(), want.symmetry());
      EXPECT_LE((got - want).frobenius_norm(), 1e-13 * (1.0 + want.frobenius_norm()));
      const Eigen::MatrixXd mg = flatten(t, f);
      const Eigen::MatrixXd mw = oracle::naive_flatten(t, f);
      EXPECT_LE((mg - mw).norm(), 1e-13 * (1.0 + mw.norm()));
      int b = sym.block_count() - 1;
      while (b >= 0 && f[static_cast<std::size_t>(b)] == sym.block(b).exponent) f[static_cast<std::size_t>(b--)] = 0;
      if (b < 0) break;
      ++f[static_cast<std::size_t>(b)];
    }
  }
}

TEST(TensorInvariants, FullContractionMatchesVectorizedInnerProduct) {
  Rng rng(20);
  const SymmetryType sym({Block{2, 3}, Block{2, 2}});
  const PSTensor t = oracle::random_ps_tensor(sym, rng);
  const FactorTuple w = oracle::random_unit_tuple(sym, rng);
  const double got = full_contract(t, w);
  const double want = vectorize(t).dot(vectorize(make_rank_one(w, {2, 2}, 1.0)));
  EXPECT_NEAR(got, want, 1e-12 * (1.0 + std::abs(want)));
}

TEST(TensorInvariants, SymmetrizeIdempotentAndNormNonincreasing) {
  Rng rng(21);
  const SymmetryType sym({Block{2, 3}, Block{2, 2}});
  std::vector<double> raw(sym.entry_count());
  for (double& x : raw) x = rng.normal();
  const double raw_norm = Eigen::Map<const Eigen::VectorXd>(raw.data(), static_cast<Eigen::Index>(raw.size())).norm();
  const PSTensor once = symmetrize(raw, sym);
  const PSTensor twice = symmetrize(once);
  EXPECT_LE(once.frobenius_norm(), raw_norm * (1.0 + 1e-15));
  EXPECT_LE((twice - once).frobenius_norm(), 1e-13 * once.frobenius_norm());
}

TEST(TensorInvariants, RankOneFlatteningsHaveNumericalRankOne) {
  Rng rng(22);
  const SymmetryType sym({Block{2, 3}, Block{2, 2}});
  const PSTensor t = make_rank_one(oracle::random_unit_tuple(sym, rng), {2, 2}, 2.2);
  FlatteningTuple f(2, 0);
  while (true) {
    int b = 1;
    while (b >= 0 && f[static_cast<std::size_t>(b)] == sym.block(b).exponent) f[static_cast<std::size_t>(b--)] = 0;
    if (b < 0) break;
    ++f[static_cast<std::size_t>(b)];
    if (is_zero_tuple(f) || is_full_tuple(sym, f)) continue;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(flatten(t, f));
    EXPECT_LE(svd.singularValues()(1), 1e-12 * svd.singularValues()(0));
  }
}

TEST(TensorIO, BinaryRoundTripIsBitwise) {
  Rng rng(23);
  const SymmetryType sym({Block{2, 3}, Block{1, 4}});
  const PSTensor t = oracle::random_ps_tensor(sym, rng);
  const std::string path = temp_path("mspm_roundtrip.pstf");
  write_tensor(t, path);
  const PSTensor back = read_tensor(path);
  ASSERT_EQ(back.symmetry(), sym);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t.values()[i], back.values()[i]);
  std::remove(path.c_str());
}

TEST(TensorIO, JsonMirrorRoundTrip) {
  Rng rng(24);
  const SymmetryType sym({Block{1, 2}, Block{1, 2}});
  const PSTensor t = oracle::random_ps_tensor(sym, rng);
  const std::string path = temp_path("mspm_roundtrip.json");
  write_tensor(t, path);
  const PSTensor back = read_tensor(path);
  ASSERT_EQ(back.symmetry(), sym);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t.values()[i], back.values()[i]);
  std::remove(path.c_str());
}

TEST(TensorIO, HandWrittenOdecoFileLoads) {
  // bytes written from scratch: header for three vector blocks of dim 2,
  // then the eight entries u_i u_j v_k + v_i v_j u_k
  const Eigen::Vector2d u = vec_u(), v = vec_v();
  std::string bytes = "PSTF";
  auto put16 = [&](std::uint16_t x) {
    bytes.push_back(static_cast<char>(x & 0xff));
    bytes.push_back(static_cast<char>(x >> 8));
  };
  auto put32 = [&](std::uint32_t x) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
  };
  put16(1);
  put16(3);
  for (int b = 0; b < 3; ++b) {
    put16(1);
    put32(2);
  }
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        const double x = u(i) * u(j) * v(k) + v(i) * v(j) * u(k);
        std::uint64_t bits;
        std::memcpy(&bits, &x, 8);
        for (int byte = 0; byte < 8; ++byte) bytes.push_back(static_cast<char>((bits >> (8 * byte)) & 0xff));
      }
  const std::string path = temp_path("mspm_handwritten.pstf");
  std::ofstream(path, std::ios::binary) << bytes;
  const PSTensor t = read_tensor(path);
  EXPECT_NEAR(t.frobenius_norm(), std::sqrt(2.0), 1e-12);
  std::remove(path.c_str());
}

TEST(TensorIO, MalformedFilesRejected) {
  const std::string path = temp_path("mspm_malformed.pstf");
  // zero-exponent block
  {
    std::string bytes = "PSTF";
    const char header[] = {1, 0, 1, 0, 0, 0, 2, 0, 0, 0};
    bytes.append(header, sizeof(header));
    std::ofstream(path, std::ios::binary) << bytes;
    EXPECT_THROW(read_tensor(path), format_error);
  }
  // bad magic
  {
    std::ofstream(path, std::ios::binary) << "NOPE";
    EXPECT_THROW(read_tensor(path), format_error);
  }
  // wrong version
  {
    std::string bytes = "PSTF";
    const char header[] = {9, 0, 1, 0, 1, 0, 2, 0, 0, 0};
    bytes.append(header, sizeof(header));
    std::ofstream(path, std::ios::binary) << bytes;
    EXPECT_THROW(read_tensor(path), format_error);
  }
  // truncated payload
  {
    const PSTensor t = odeco_fixture();
    std::string bytes = encode_tensor(t);
    bytes.resize(bytes.size() - 8);
    std::ofstream(path, std::ios::binary) << bytes;
    EXPECT_THROW(read_tensor(path), format_error);
  }
  // symmetry violation
  {
    const SymmetryType sym({Block{2, 2}});
    std::string bytes = encode_tensor(symmetrize({1.0, 2.0, 2.0, 3.0}, sym));
    bytes[bytes.size() - 8 * 2 - 1] ^= 0x40;  // corrupt one off-diagonal entry
    std::string base = bytes;
    std::ofstream(path, std::ios::binary) << base;
    EXPECT_THROW(read_tensor(path), format_error);
  }
  std::remove(path.c_str());
}

TEST(TensorIO, ScalarTensorNotSerializable) {
  EXPECT_THROW(write_tensor(PSTensor::scalar(1.0), temp_path("mspm_scalar.pstf")), std::invalid_argument);
}
