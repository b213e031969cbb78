#pragma once

#include <iosfwd>
#include <span>
#include <vector>

namespace cornerheat {

using FieldVector = std::vector<double>;

struct Triplet {
  int row;
  int col;
  double value;
};

/// Compressed sparse row matrix with sorted, unique column indices per row.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(int rows, int cols);

  /// Duplicate (row, col) entries are summed in input order.
  static SparseMatrix from_triplets(int rows, int cols, std::span<const Triplet> triplets);

  [[nodiscard]] int rows() const { return rows_; }
  [[nodiscard]] int cols() const { return cols_; }
  [[nodiscard]] std::size_t nonzeros() const { return values_.size(); }

  [[nodiscard]] const std::vector<int>& row_ptr() const { return row_ptr_; }
  [[nodiscard]] const std::vector<int>& col_idx() const { return col_idx_; }
  [[nodiscard]] const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  /// Entry (i, j), zero when not stored.
  [[nodiscard]] double at(int i, int j) const;

  /// y = A x
  void multiply(std::span<const double> x, std::span<double> y) const;
  [[nodiscard]] std::vector<double> multiply(std::span<const double> x) const;
  /// Row i of A times x.
  [[nodiscard]] double row_dot(int i, std::span<const double> x) const;

  [[nodiscard]] std::vector<double> diagonal() const;
  [[nodiscard]] std::vector<double> row_sums() const;
  [[nodiscard]] bool is_symmetric(double tol) const;

  /// alpha * A + beta * B on the union pattern.
  friend SparseMatrix combine(double alpha, const SparseMatrix& a, double beta, const SparseMatrix& b);

  /// Submatrix with the given (sorted) row and column index sets.
  [[nodiscard]] SparseMatrix extract(std::span<const int> rows, std::span<const int> cols) const;

  /// Writes "i j value" lines, one per stored entry.
  void write_coordinate(std::ostream& out) const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> col_idx_;
  std::vector<double> values_;
};

SparseMatrix combine(double alpha, const SparseMatrix& a, double beta, const SparseMatrix& b);

/// Positive diagonal operator, used for the lumped mass.
struct DiagonalMatrix {
  std::vector<double> diag;

  [[nodiscard]] std::size_t size() const { return diag.size(); }
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace cornerheat
