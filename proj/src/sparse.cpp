#include "cornerheat/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "cornerheat/errors.hpp"

namespace cornerheat {

SparseMatrix::SparseMatrix(int rows, int cols)
    : rows_(rows), cols_(cols), row_ptr_(static_cast<std::size_t>(rows) + 1, 0) {}

SparseMatrix SparseMatrix::from_triplets(int rows, int cols, std::span<const Triplet> triplets) {
  SparseMatrix m(rows, cols);
  std::vector<int> count(static_cast<std::size_t>(rows) + 1, 0);
  for (const auto& t : triplets) {
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols) {
      throw Error("triplet index out of range");
    }
    ++count[static_cast<std::size_t>(t.row) + 1];
  }
  std::partial_sum(count.begin(), count.end(), count.begin());
  // Bucket by row keeping input order, then sort each row stably by column.
  std::vector<int> order(triplets.size());
  std::vector<int> fill(count.begin(), count.end() - 1);
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    order[static_cast<std::size_t>(fill[static_cast<std::size_t>(triplets[k].row)]++)] = static_cast<int>(k);
  }
  m.row_ptr_.assign(static_cast<std::size_t>(rows) + 1, 0);
  m.col_idx_.reserve(triplets.size());
  m.values_.reserve(triplets.size());
  for (int r = 0; r < rows; ++r) {
    auto first = order.begin() + count[static_cast<std::size_t>(r)];
    auto last = order.begin() + count[static_cast<std::size_t>(r) + 1];
    std::stable_sort(first, last, [&](int a, int b) {
      return triplets[static_cast<std::size_t>(a)].col < triplets[static_cast<std::size_t>(b)].col;
    });
    for (auto it = first; it != last; ++it) {
      const auto& t = triplets[static_cast<std::size_t>(*it)];
      if (!m.col_idx_.empty() && static_cast<int>(m.col_idx_.size()) > m.row_ptr_[static_cast<std::size_t>(r)] &&
          m.col_idx_.back() == t.col) {
        m.values_.back() += t.value;
      } else {
        m.col_idx_.push_back(t.col);
        m.values_.push_back(t.value);
      }
    }
    m.row_ptr_[static_cast<std::size_t>(r) + 1] = static_cast<int>(m.col_idx_.size());
  }
  return m;
}

double SparseMatrix::at(int i, int j) const {
  const auto first = col_idx_.begin() + row_ptr_[static_cast<std::size_t>(i)];
  const auto last = col_idx_.begin() + row_ptr_[static_cast<std::size_t>(i) + 1];
  const auto it = std::lower_bound(first, last, j);
  if (it == last || *it != j) return 0.0;
  return values_[static_cast<std::size_t>(it - col_idx_.begin())];
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (int i = 0; i < rows_; ++i) y[static_cast<std::size_t>(i)] = row_dot(i, x);
}

std::vector<double> SparseMatrix::multiply(std::span<const double> x) const {
  std::vector<double> y(static_cast<std::size_t>(rows_));
  multiply(x, y);
  return y;
}

double SparseMatrix::row_dot(int i, std::span<const double> x) const {
  double s = 0.0;
  for (int k = row_ptr_[static_cast<std::size_t>(i)]; k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k) {
    s += values_[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(col_idx_[static_cast<std::size_t>(k)])];
  }
  return s;
}

std::vector<double> SparseMatrix::diagonal() const {
  std::vector<double> d(static_cast<std::size_t>(std::min(rows_, cols_)), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = at(static_cast<int>(i), static_cast<int>(i));
  return d;
}

std::vector<double> SparseMatrix::row_sums() const {
  std::vector<double> s(static_cast<std::size_t>(rows_), 0.0);
  for (int i = 0; i < rows_; ++i) {
    for (int k = row_ptr_[static_cast<std::size_t>(i)]; k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k) {
      s[static_cast<std::size_t>(i)] += values_[static_cast<std::size_t>(k)];
    }
  }
  return s;
}

bool SparseMatrix::is_symmetric(double tol) const {
  if (rows_ != cols_) return false;
  for (int i = 0; i < rows_; ++i) {
    for (int k = row_ptr_[static_cast<std::size_t>(i)]; k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k) {
      const int j = col_idx_[static_cast<std::size_t>(k)];
      if (std::abs(values_[static_cast<std::size_t>(k)] - at(j, i)) > tol) return false;
    }
  }
  return true;
}

SparseMatrix combine(double alpha, const SparseMatrix& a, double beta, const SparseMatrix& b) {
  if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw Error("combine: shape mismatch");
  SparseMatrix m(a.rows_, a.cols_);
  m.col_idx_.reserve(a.nonzeros() + b.nonzeros());
  m.values_.reserve(a.nonzeros() + b.nonzeros());
  for (int i = 0; i < a.rows_; ++i) {
    int ka = a.row_ptr_[static_cast<std::size_t>(i)];
    int kb = b.row_ptr_[static_cast<std::size_t>(i)];
    const int ea = a.row_ptr_[static_cast<std::size_t>(i) + 1];
    const int eb = b.row_ptr_[static_cast<std::size_t>(i) + 1];
    while (ka < ea || kb < eb) {
      const int ca = ka < ea ? a.col_idx_[static_cast<std::size_t>(ka)] : a.cols_;
      const int cb = kb < eb ? b.col_idx_[static_cast<std::size_t>(kb)] : b.cols_;
      if (ca == cb) {
        m.col_idx_.push_back(ca);
        m.values_.push_back(alpha * a.values_[static_cast<std::size_t>(ka++)] +
                            beta * b.values_[static_cast<std::size_t>(kb++)]);
      } else if (ca < cb) {
        m.col_idx_.push_back(ca);
        m.values_.push_back(alpha * a.values_[static_cast<std::size_t>(ka++)]);
      } else {
        m.col_idx_.push_back(cb);
        m.values_.push_back(beta * b.values_[static_cast<std::size_t>(kb++)]);
      }
    }
    m.row_ptr_[static_cast<std::size_t>(i) + 1] = static_cast<int>(m.col_idx_.size());
  }
  return m;
}

SparseMatrix SparseMatrix::extract(std::span<const int> rows, std::span<const int> cols) const {
  std::vector<int> col_map(static_cast<std::size_t>(cols_), -1);
  for (std::size_t k = 0; k < cols.size(); ++k) col_map[static_cast<std::size_t>(cols[k])] = static_cast<int>(k);
  SparseMatrix m(static_cast<int>(rows.size()), static_cast<int>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int i = rows[r];
    for (int k = row_ptr_[static_cast<std::size_t>(i)]; k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k) {
      const int j = col_map[static_cast<std::size_t>(col_idx_[static_cast<std::size_t>(k)])];
      if (j < 0) continue;
      m.col_idx_.push_back(j);
      m.values_.push_back(values_[static_cast<std::size_t>(k)]);
    }
    m.row_ptr_[r + 1] = static_cast<int>(m.col_idx_.size());
  }
  return m;
}

void SparseMatrix::write_coordinate(std::ostream& out) const {
  const auto old = out.precision(17);
  for (int i = 0; i < rows_; ++i) {
    for (int k = row_ptr_[static_cast<std::size_t>(i)]; k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k) {
      out << i << ' ' << col_idx_[static_cast<std::size_t>(k)] << ' ' << values_[static_cast<std::size_t>(k)] << '\n';
    }
  }
  out.precision(old);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace cornerheat
