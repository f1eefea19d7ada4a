#pragma once

// Dense complex linear algebra over tensor-product Hilbert spaces.
//
// Composite indices are row-major over the factor list: the first factor is
// the most significant digit. Atoms are labelled "1".."4" in physical order
// and the resonator, when present, is the last factor ("c").

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "chiforge/errors.hpp"

namespace chiforge {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using SparseMatrix = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;

inline constexpr Complex kI{0.0, 1.0};
inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kUnitaryTol = 1e-10;
inline constexpr double kNormTol = 1e-10;
inline constexpr double kTraceTol = 1e-8;
inline constexpr double kEigenFloor = -1e-9;

class HilbertSpace {
 public:
  struct Factor {
    std::string label;
    int dim;
    bool operator==(const Factor&) const = default;
  };

  HilbertSpace() = default;

  explicit HilbertSpace(std::vector<Factor> factors) : factors_(std::move(factors)) {
    std::set<std::string> seen;
    dim_ = 1;
    for (const auto& f : factors_) {
      if (f.dim < 2) {
        throw std::invalid_argument("factor '" + f.label + "' has dimension < 2");
      }
      if (!seen.insert(f.label).second) {
        throw std::invalid_argument("duplicate factor label '" + f.label + "'");
      }
      dim_ *= static_cast<std::size_t>(f.dim);
    }
    if (factors_.empty()) {
      throw std::invalid_argument("Hilbert space needs at least one factor");
    }
  }

  // n qubits labelled "1".."n".
  static HilbertSpace qubits(int n) { return uniform(n, 2); }

  // n sites of dimension d labelled "1".."n", optionally followed by a
  // resonator truncated to `fock_dim` levels.
  static HilbertSpace uniform(int n, int d, int fock_dim = 0) {
    std::vector<Factor> f;
    for (int k = 1; k <= n; ++k) f.push_back({std::to_string(k), d});
    if (fock_dim > 0) f.push_back({"c", fock_dim});
    return HilbertSpace(std::move(f));
  }

  std::size_t dimension() const { return dim_; }
  std::size_t size() const { return factors_.size(); }
  const std::vector<Factor>& factors() const { return factors_; }
  const Factor& factor(std::size_t k) const { return factors_.at(k); }

  std::size_t position(const std::string& label) const {
    for (std::size_t k = 0; k < factors_.size(); ++k) {
      if (factors_[k].label == label) return k;
    }
    throw std::invalid_argument("unknown factor label '" + label + "'");
  }

  bool has(const std::string& label) const {
    return std::any_of(factors_.begin(), factors_.end(),
                       [&](const Factor& f) { return f.label == label; });
  }

  // Stride of factor k in the row-major composite index.
  std::size_t stride(std::size_t k) const {
    std::size_t s = 1;
    for (std::size_t j = k + 1; j < factors_.size(); ++j) s *= factors_[j].dim;
    return s;
  }

  std::vector<int> digits(std::size_t index) const {
    std::vector<int> d(factors_.size());
    for (std::size_t k = factors_.size(); k-- > 0;) {
      d[k] = static_cast<int>(index % factors_[k].dim);
      index /= factors_[k].dim;
    }
    return d;
  }

  std::size_t index(const std::vector<int>& digits) const {
    if (digits.size() != factors_.size()) {
      throw std::invalid_argument("digit count does not match factor count");
    }
    std::size_t idx = 0;
    for (std::size_t k = 0; k < factors_.size(); ++k) {
      if (digits[k] < 0 || digits[k] >= factors_[k].dim) {
        throw std::invalid_argument("digit out of range for factor '" + factors_[k].label + "'");
      }
      idx = idx * factors_[k].dim + digits[k];
    }
    return idx;
  }

  // Sub-space made of the given factors, kept in canonical order.
  HilbertSpace subspace(const std::vector<std::string>& labels) const {
    std::vector<std::size_t> pos;
    for (const auto& l : labels) pos.push_back(position(l));
    std::sort(pos.begin(), pos.end());
    pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
    std::vector<Factor> f;
    for (auto p : pos) f.push_back(factors_[p]);
    return HilbertSpace(std::move(f));
  }

  bool operator==(const HilbertSpace& o) const { return factors_ == o.factors_; }

 private:
  std::vector<Factor> factors_;
  std::size_t dim_ = 0;
};

inline void require_same_space(const HilbertSpace& a, const HilbertSpace& b, const char* what) {
  if (!(a == b)) throw std::invalid_argument(std::string(what) + ": Hilbert spaces differ");
}

class StateVector {
 public:
  StateVector() = default;

  StateVector(HilbertSpace space, Vector amplitudes)
      : space_(std::move(space)), amp_(std::move(amplitudes)) {
    if (static_cast<std::size_t>(amp_.size()) != space_.dimension()) {
      throw std::invalid_argument("amplitude vector length does not match space dimension");
    }
  }

  static StateVector basis(const HilbertSpace& space, const std::vector<int>& digits) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(space.dimension()));
    v(static_cast<Eigen::Index>(space.index(digits))) = 1.0;
    return {space, std::move(v)};
  }

  const HilbertSpace& space() const { return space_; }
  const Vector& amplitudes() const { return amp_; }
  Vector& amplitudes() { return amp_; }
  Complex operator[](std::size_t i) const { return amp_(static_cast<Eigen::Index>(i)); }

  double norm() const { return amp_.norm(); }

  StateVector& normalize() {
    const double n = amp_.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("cannot normalize a zero or non-finite state");
    amp_ /= n;
    return *this;
  }

  StateVector normalized() const {
    StateVector s = *this;
    s.normalize();
    return s;
  }

  bool is_normalized(double tol = kNormTol) const { return std::abs(norm() - 1.0) <= tol; }

 private:
  HilbertSpace space_;
  Vector amp_;
};

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

class Operator {
 public:
  Operator() = default;

  Operator(HilbertSpace space, Matrix matrix) : space_(std::move(space)), m_(std::move(matrix)) {
    const auto d = static_cast<Eigen::Index>(space_.dimension());
    if (m_.rows() != d || m_.cols() != d) {
      throw std::invalid_argument("operator matrix shape does not match space dimension");
    }
  }

  static Operator identity(const HilbertSpace& space) {
    const auto d = static_cast<Eigen::Index>(space.dimension());
    return {space, Matrix::Identity(d, d)};
  }

  static Operator zero(const HilbertSpace& space) {
    const auto d = static_cast<Eigen::Index>(space.dimension());
    return {space, Matrix::Zero(d, d)};
  }

  const HilbertSpace& space() const { return space_; }
  const Matrix& matrix() const { return m_; }

  double hermiticity_defect() const { return max_abs(m_ - m_.adjoint()); }
  bool is_hermitian(double tol = kHermitianTol) const { return hermiticity_defect() <= tol; }

  double unitarity_defect() const {
    return max_abs(m_.adjoint() * m_ - Matrix::Identity(m_.rows(), m_.cols()));
  }
  bool is_unitary(double tol = kUnitaryTol) const { return unitarity_defect() <= tol; }

  Operator adjoint() const { return {space_, m_.adjoint()}; }

  Operator operator*(const Operator& o) const {
    require_same_space(space_, o.space_, "operator product");
    return {space_, m_ * o.m_};
  }
  Operator operator+(const Operator& o) const {
    require_same_space(space_, o.space_, "operator sum");
    return {space_, m_ + o.m_};
  }
  Operator operator-(const Operator& o) const {
    require_same_space(space_, o.space_, "operator difference");
    return {space_, m_ - o.m_};
  }
  Operator operator*(Complex c) const { return {space_, m_ * c}; }

  StateVector operator*(const StateVector& psi) const {
    require_same_space(space_, psi.space(), "operator action");
    return {space_, m_ * psi.amplitudes()};
  }

 private:
  HilbertSpace space_;
  Matrix m_;
};

class DensityMatrix {
 public:
  DensityMatrix() = default;

  // Validates Hermiticity, unit trace and the eigenvalue floor.
  DensityMatrix(HilbertSpace space, Matrix rho) : space_(std::move(space)), m_(std::move(rho)) {
    const auto d = static_cast<Eigen::Index>(space_.dimension());
    if (m_.rows() != d || m_.cols() != d) {
      throw std::invalid_argument("density matrix shape does not match space dimension");
    }
    if (max_abs(m_ - m_.adjoint()) > kHermitianTol * std::max(1.0, max_abs(m_))) {
      throw std::invalid_argument("density matrix is not Hermitian");
    }
    if (std::abs(m_.trace() - Complex(1.0)) > kTraceTol) {
      throw std::invalid_argument("density matrix trace differs from 1");
    }
    const double lo = eigenvalues().minCoeff();
    if (lo < kEigenFloor) {
      throw std::invalid_argument("density matrix has eigenvalue " + std::to_string(lo));
    }
  }

  static DensityMatrix pure(const StateVector& psi) {
    const Vector& v = psi.amplitudes();
    Matrix rho = v * v.adjoint();
    rho = 0.5 * (rho + rho.adjoint()).eval();
    return {psi.space(), std::move(rho)};
  }

  const HilbertSpace& space() const { return space_; }
  const Matrix& matrix() const { return m_; }

  Eigen::VectorXd eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }

  double purity() const { return (m_ * m_).trace().real(); }

  // <psi|rho|psi>
  double expectation(const StateVector& psi) const {
    require_same_space(space_, psi.space(), "density expectation");
    return (psi.amplitudes().adjoint() * m_ * psi.amplitudes())(0, 0).real();
  }

 private:
  HilbertSpace space_;
  Matrix m_;
};

// --- single-site building blocks -------------------------------------------

// |row><col| on a d-level site.
inline Matrix ket_bra(int d, int row, int col) {
  Matrix m = Matrix::Zero(d, d);
  m(row, col) = 1.0;
  return m;
}

inline Matrix pauli_x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

inline Matrix pauli_y() {
  Matrix m(2, 2);
  m << 0, -kI, kI, 0;
  return m;
}

inline Matrix pauli_z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

// Bosonic annihilation operator truncated to n levels.
inline Matrix annihilation(int n) {
  Matrix a = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  return a;
}

// --- embeddings --------------------------------------------------------------

namespace detail {

inline SparseMatrix sparse_identity(std::size_t d) {
  SparseMatrix id(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  id.setIdentity();
  return id;
}

inline SparseMatrix sparse_kron(const SparseMatrix& a, const SparseMatrix& b) {
  SparseMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  std::vector<Eigen::Triplet<Complex>> trip;
  trip.reserve(static_cast<std::size_t>(a.nonZeros() * b.nonZeros()));
  for (Eigen::Index i = 0; i < a.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator ia(a, i); ia; ++ia) {
      for (Eigen::Index j = 0; j < b.outerSize(); ++j) {
        for (SparseMatrix::InnerIterator ib(b, j); ib; ++ib) {
          trip.emplace_back(ia.row() * b.rows() + ib.row(), ia.col() * b.cols() + ib.col(),
                            ia.value() * ib.value());
        }
      }
    }
  }
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

}  // namespace detail

struct SiteOperator {
  std::string site;
  Matrix op;
};

// Tensor product of local operators on distinct sites, identity elsewhere.
inline SparseMatrix embed_sparse(const std::vector<SiteOperator>& ops, const HilbertSpace& space) {
  std::vector<const Matrix*> local(space.size(), nullptr);
  for (const auto& so : ops) {
    const std::size_t k = space.position(so.site);
    if (so.op.rows() != space.factor(k).dim || so.op.cols() != space.factor(k).dim) {
      throw std::invalid_argument("operator dimension does not match factor '" + so.site + "'");
    }
    if (local[k] != nullptr) throw std::invalid_argument("site '" + so.site + "' given twice");
    local[k] = &so.op;
  }
  SparseMatrix acc = detail::sparse_identity(1);
  for (std::size_t k = 0; k < space.size(); ++k) {
    const SparseMatrix f = local[k] ? SparseMatrix(local[k]->sparseView(0.0, 0.0))
                                    : detail::sparse_identity(space.factor(k).dim);
    acc = detail::sparse_kron(acc, f);
  }
  acc.prune(Complex(0.0));
  return acc;
}

inline SparseMatrix embed_sparse(const Matrix& op, const std::string& site, const HilbertSpace& space) {
  return embed_sparse(std::vector<SiteOperator>{{site, op}}, space);
}

// I ⊗ ... ⊗ op ⊗ ... ⊗ I in canonical factor order.
inline Operator tensor_embed(const Matrix& op, const std::string& site, const HilbertSpace& space) {
  return {space, Matrix(embed_sparse(op, site, space))};
}

inline Operator tensor_embed(const std::vector<SiteOperator>& ops, const HilbertSpace& space) {
  return {space, Matrix(embed_sparse(ops, space))};
}

// --- exponentials -------------------------------------------------------------

// exp(-i H dt) through the Hermitian eigendecomposition.
inline Operator propagator(const Operator& h, double dt) {
  const double scale = std::max(1.0, max_abs(h.matrix()));
  if (h.hermiticity_defect() > kHermitianTol * scale) {
    throw std::invalid_argument("propagator: Hamiltonian is not Hermitian");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(h.matrix());
  const Matrix& v = es.eigenvectors();
  Vector phases = (-kI * dt * es.eigenvalues().cast<Complex>()).array().exp();
  Matrix u = v * phases.asDiagonal() * v.adjoint();
  Operator out(h.space(), std::move(u));
  if (!out.is_unitary()) throw NumericsError("propagator: result is not unitary within tolerance");
  return out;
}

// --- reductions ----------------------------------------------------------------

namespace detail {

struct Split {
  HilbertSpace kept;
  std::vector<std::size_t> keep_pos, trace_pos;
  std::size_t dk = 1, dt = 1;
};

inline Split split_space(const HilbertSpace& space, const std::vector<std::string>& keep) {
  if (keep.empty()) throw std::invalid_argument("partial_trace: keep set is empty");
  Split s{space.subspace(keep), {}, {}, 1, 1};
  std::vector<bool> kept(space.size(), false);
  for (const auto& l : keep) kept[space.position(l)] = true;
  for (std::size_t k = 0; k < space.size(); ++k) {
    (kept[k] ? s.keep_pos : s.trace_pos).push_back(k);
    (kept[k] ? s.dk : s.dt) *= space.factor(k).dim;
  }
  return s;
}

// Full composite index from (kept index, traced index).
inline std::vector<std::size_t> index_table(const HilbertSpace& space, const Split& s) {
  std::vector<std::size_t> table(s.dk * s.dt);
  for (std::size_t full = 0; full < space.dimension(); ++full) {
    const auto d = space.digits(full);
    std::size_t ik = 0, it = 0;
    for (auto p : s.keep_pos) ik = ik * space.factor(p).dim + d[p];
    for (auto p : s.trace_pos) it = it * space.factor(p).dim + d[p];
    table[ik * s.dt + it] = full;
  }
  return table;
}

}  // namespace detail

inline DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<std::string>& keep) {
  const auto& space = rho.space();
  const auto s = detail::split_space(space, keep);
  const auto table = detail::index_table(space, s);
  const auto dk = static_cast<Eigen::Index>(s.dk);
  Matrix red = Matrix::Zero(dk, dk);
  const Matrix& m = rho.matrix();
  for (std::size_t i = 0; i < s.dk; ++i) {
    for (std::size_t j = 0; j < s.dk; ++j) {
      Complex acc = 0.0;
      for (std::size_t t = 0; t < s.dt; ++t) {
        acc += m(static_cast<Eigen::Index>(table[i * s.dt + t]), static_cast<Eigen::Index>(table[j * s.dt + t]));
      }
      red(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = acc;
    }
  }
  red = 0.5 * (red + red.adjoint()).eval();
  return {s.kept, std::move(red)};
}

inline DensityMatrix partial_trace(const StateVector& psi, const std::vector<std::string>& keep) {
  const auto& space = psi.space();
  const auto s = detail::split_space(space, keep);
  const auto table = detail::index_table(space, s);
  Matrix amp(static_cast<Eigen::Index>(s.dk), static_cast<Eigen::Index>(s.dt));
  for (std::size_t i = 0; i < s.dk; ++i) {
    for (std::size_t t = 0; t < s.dt; ++t) {
      amp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = psi[table[i * s.dt + t]];
    }
  }
  Matrix red = amp * amp.adjoint();
  red = 0.5 * (red + red.adjoint()).eval();
  return {s.kept, std::move(red)};
}

// Entropy in bits; eigenvalues at or below 1e-12 contribute nothing.
inline double von_neumann_entropy(const DensityMatrix& rho) {
  double s = 0.0;
  const auto ev = rho.eigenvalues();
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    const double p = ev(k);
    if (p > 1e-12) s -= p * std::log2(p);
  }
  return s;
}

inline Complex overlap(const StateVector& a, const StateVector& b) {
  require_same_space(a.space(), b.space(), "overlap");
  return a.amplitudes().dot(b.amplitudes());
}

// |<a|b>|^2
inline double fidelity(const StateVector& a, const StateVector& b) {
  return std::norm(overlap(a, b));
}

}  // namespace chiforge
