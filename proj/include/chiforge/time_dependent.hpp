#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "chiforge/statespace.hpp"

namespace chiforge {

// H(t) = sum_k M_k exp(i w_k t).
//
// Terms are stored sparse and merged by frequency, so applying H(t) to a
// vector costs one sparse product per distinct frequency. Hermiticity is the
// builder's responsibility; add_hermitian() adds a term together with its
// conjugate partner.
class TimeDependentOperator {
 public:
  struct Term {
    SparseMatrix matrix;
    double frequency;
  };

  TimeDependentOperator() = default;
  explicit TimeDependentOperator(HilbertSpace space) : space_(std::move(space)) {}

  const HilbertSpace& space() const { return space_; }
  const std::vector<Term>& terms() const { return terms_; }
  std::size_t dimension() const { return space_.dimension(); }

  // Adds m * exp(i w t).
  TimeDependentOperator& add(const SparseMatrix& m, double frequency) {
    const auto d = static_cast<Eigen::Index>(space_.dimension());
    if (m.rows() != d || m.cols() != d) throw std::invalid_argument("term shape does not match space");
    for (auto& t : terms_) {
      if (t.frequency == frequency) {
        t.matrix += m;
        t.matrix.prune(Complex(0.0));
        return *this;
      }
    }
    terms_.push_back({m, frequency});
    terms_.back().matrix.prune(Complex(0.0));
    return *this;
  }

  // Adds m * exp(i w t) + h.c.
  TimeDependentOperator& add_hermitian(const SparseMatrix& m, double frequency) {
    add(m, frequency);
    return add(SparseMatrix(m.adjoint()), -frequency);
  }

  TimeDependentOperator& operator+=(const TimeDependentOperator& o) {
    require_same_space(space_, o.space_, "time-dependent sum");
    for (const auto& t : o.terms_) add(t.matrix, t.frequency);
    return *this;
  }

  Operator eval(double t) const {
    const auto d = static_cast<Eigen::Index>(space_.dimension());
    Matrix h = Matrix::Zero(d, d);
    for (const auto& term : terms_) h += Matrix(term.matrix) * std::exp(kI * term.frequency * t);
    return {space_, std::move(h)};
  }

  // out = H(t) in
  void apply(double t, const Vector& in, Vector& out) const {
    out.setZero(in.size());
    for (const auto& term : terms_) {
      if (term.frequency == 0.0) {
        out.noalias() += term.matrix * in;
      } else {
        out.noalias() += std::exp(kI * term.frequency * t) * (term.matrix * in);
      }
    }
  }

  double max_frequency() const {
    double w = 0.0;
    for (const auto& t : terms_) w = std::max(w, std::abs(t.frequency));
    return w;
  }

  // Upper bound on ||H(t)||_2 valid for every t: max row sum of sum_k |M_k|.
  double norm_bound() const {
    std::vector<double> rows(space_.dimension(), 0.0);
    for (const auto& term : terms_) {
      for (Eigen::Index i = 0; i < term.matrix.outerSize(); ++i) {
        for (SparseMatrix::InnerIterator it(term.matrix, i); it; ++it) {
          rows[static_cast<std::size_t>(it.row())] += std::abs(it.value());
        }
      }
    }
    return rows.empty() ? 0.0 : *std::max_element(rows.begin(), rows.end());
  }

  // W^dagger H(t) W for a fixed unitary W.
  TimeDependentOperator conjugated(const SparseMatrix& w) const {
    TimeDependentOperator out(space_);
    const SparseMatrix wd = w.adjoint();
    for (const auto& t : terms_) {
      SparseMatrix m = wd * t.matrix * w;
      m.prune(Complex(0.0), 1e-15);
      out.add(m, t.frequency);
    }
    return out;
  }

  TimeDependentOperator scaled(double s) const {
    TimeDependentOperator out(space_);
    for (const auto& t : terms_) out.add(t.matrix * Complex(s), t.frequency);
    return out;
  }

 private:
  HilbertSpace space_;
  std::vector<Term> terms_;
};

}  // namespace chiforge
