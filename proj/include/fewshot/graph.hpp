#pragma once

// Episode similarity graph and feature diffusion.
//
//   S[i][j] = cos(v_i, v_j) for i != j, 0 on the diagonal
//   S       <- keep (i,j) iff it is among the k largest of row i or column j
//   E       =  D^{-1/2} S D^{-1/2},  D = diag(row sums of S)
//   V_new   =  (alpha I + E)^kappa V

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "fewshot/errors.hpp"

namespace fewshot {

struct PropagationParams {
  std::size_t k = 10;
  // 0 disables propagation (identity ablation).
  unsigned kappa = 3;
  double alpha = 0.5;

  void validate() const {
    if (k < 1) throw ValidationError("k must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw ValidationError("alpha must lie in [0, 1]");
    }
  }
};

// Symmetric, zero-diagonal matrix of pairwise cosine similarities in [0, 1].
struct SimilarityMatrix {
  Eigen::MatrixXd values;

  Eigen::Index size() const noexcept { return values.rows(); }
};

enum class Storage { automatic, dense, sparse };

/// E = D^{-1/2} S D^{-1/2} with its degree vector.
///
/// Stored dense or as a compressed sparse matrix; both give the same
/// coefficients. Rows and columns of zero-degree vertices are all zero.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency(Eigen::MatrixXd dense, Eigen::VectorXd degrees,
                      bool sparse)
      : degrees_(std::move(degrees)), sparse_(sparse) {
    if (sparse_) {
      sparse_values_ = dense.sparseView(0.0, 0.0);
      sparse_values_.makeCompressed();
    } else {
      dense_values_ = std::move(dense);
    }
  }

  Eigen::Index size() const noexcept { return degrees_.size(); }
  const Eigen::VectorXd& degrees() const noexcept { return degrees_; }
  bool is_sparse() const noexcept { return sparse_; }

  Eigen::MatrixXd to_dense() const {
    if (sparse_) return Eigen::MatrixXd(sparse_values_);
    return dense_values_;
  }

  // E * x
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    if (sparse_) return sparse_values_ * x;
    return dense_values_ * x;
  }

  Eigen::Index nonzeros() const {
    if (sparse_) return sparse_values_.nonZeros();
    return (dense_values_.array() != 0.0).count();
  }

 private:
  Eigen::VectorXd degrees_;
  bool sparse_;
  Eigen::MatrixXd dense_values_;
  Eigen::SparseMatrix<double> sparse_values_;
};

/// Cosine similarity between every pair of rows, zero diagonal.
///
/// A zero row has similarity 0 to every other row. Results are clamped
/// to [0, 1], which is exact for nonnegative inputs up to rounding.
template <typename Derived>
SimilarityMatrix cosine_similarity_matrix(const Eigen::MatrixBase<Derived>& v) {
  const Eigen::Index m = v.rows();
  if (m < 2) {
    throw ValidationError("cosine_similarity_matrix needs at least 2 rows");
  }
  const Eigen::MatrixXd x = v.template cast<double>();
  if (!x.allFinite()) {
    throw ValidationError("non-finite entry in feature matrix");
  }
  const Eigen::VectorXd sq_norms = x.rowwise().squaredNorm();
  const Eigen::MatrixXd gram = x * x.transpose();
  SimilarityMatrix s{Eigen::MatrixXd::Zero(m, m)};
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double denom = std::sqrt(sq_norms(i) * sq_norms(j));
      double c = denom > 0.0 ? gram(i, j) / denom : 0.0;
      c = std::clamp(c, 0.0, 1.0);
      s.values(i, j) = c;
      s.values(j, i) = c;
    }
  }
  return s;
}

namespace detail {

// Columns of the k largest off-diagonal entries in row i, ties to the
// smaller column index.
inline std::vector<Eigen::Index> top_k_columns(const Eigen::MatrixXd& s,
                                               Eigen::Index row,
                                               std::size_t k) {
  std::vector<Eigen::Index> cols;
  cols.reserve(static_cast<std::size_t>(s.cols()));
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    if (j != row) cols.push_back(j);
  }
  const std::size_t keep = std::min(k, cols.size());
  std::partial_sort(cols.begin(), cols.begin() + static_cast<std::ptrdiff_t>(keep),
                    cols.end(), [&](Eigen::Index a, Eigen::Index b) {
                      const double va = s(row, a);
                      const double vb = s(row, b);
                      return va > vb || (va == vb && a < b);
                    });
  cols.resize(keep);
  return cols;
}

}  // namespace detail

/// Zero every entry that is in neither its row's nor its column's top k.
///
/// Union rule, so the output stays symmetric. k >= m-1 returns the input.
inline SimilarityMatrix knn_sparsify(const SimilarityMatrix& s, std::size_t k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  const Eigen::Index m = s.size();
  if (k >= static_cast<std::size_t>(std::max<Eigen::Index>(m - 1, 0))) {
    return s;
  }
  SimilarityMatrix out{Eigen::MatrixXd::Zero(m, m)};
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j : detail::top_k_columns(s.values, i, k)) {
      out.values(i, j) = s.values(i, j);
      out.values(j, i) = s.values(j, i);
    }
  }
  return out;
}

/// Degrees are row sums; vertices of zero degree get a zero row and column.
inline NormalizedAdjacency symmetric_normalize(const SimilarityMatrix& s,
                                               Storage storage = Storage::automatic) {
  const Eigen::Index m = s.size();
  const Eigen::VectorXd degrees = s.values.rowwise().sum();
  Eigen::VectorXd inv_sqrt(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    inv_sqrt(i) = degrees(i) > 0.0 ? 1.0 / std::sqrt(degrees(i)) : 0.0;
  }
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      e(i, j) = s.values(i, j) * inv_sqrt(i) * inv_sqrt(j);
      e(j, i) = e(i, j);
    }
  }
  bool sparse = false;
  if (storage == Storage::sparse) {
    sparse = true;
  } else if (storage == Storage::automatic) {
    const auto nnz = (s.values.array() != 0.0).count();
    sparse = 2 * nnz < m * m;
  }
  return NormalizedAdjacency(std::move(e), degrees, sparse);
}

/// (alpha I + E)^kappa V by kappa successive products with the feature block.
template <typename Derived>
Eigen::MatrixXd propagate(const Eigen::MatrixBase<Derived>& v,
                          const NormalizedAdjacency& e,
                          const PropagationParams& params) {
  params.validate();
  if (v.rows() != e.size()) {
    throw ValidationError("propagate: feature rows (" +
                          std::to_string(v.rows()) +
                          ") do not match graph size (" +
                          std::to_string(e.size()) + ")");
  }
  Eigen::MatrixXd x = v.template cast<double>();
  for (unsigned step = 0; step < params.kappa; ++step) {
    Eigen::MatrixXd next = e.apply(x);
    next.noalias() += params.alpha * x;
    x = std::move(next);
  }
  return x;
}

struct EpisodeGraph {
  SimilarityMatrix similarity;  // after sparsification
  NormalizedAdjacency adjacency;
};

/// cosine -> knn_sparsify(min(k, m-1)) -> symmetric_normalize.
///
/// Sparse storage is used when the clamped k is below m/2.
template <typename Derived>
EpisodeGraph build_episode_graph(const Eigen::MatrixBase<Derived>& v,
                                 const PropagationParams& params) {
  params.validate();
  const Eigen::Index m = v.rows();
  if (m < 2) throw ValidationError("episode graph needs at least 2 vertices");
  const std::size_t k = std::min(params.k, static_cast<std::size_t>(m - 1));
  SimilarityMatrix s = knn_sparsify(cosine_similarity_matrix(v), k);
  const Storage storage =
      2 * k < static_cast<std::size_t>(m) ? Storage::sparse : Storage::dense;
  NormalizedAdjacency e = symmetric_normalize(s, storage);
  return EpisodeGraph{std::move(s), std::move(e)};
}

struct LaplacianEmbedding {
  Eigen::MatrixXd coordinates;  // m x dims, unit-norm columns
  Eigen::VectorXd eigenvalues;  // ascending, of L = I - E
  double max_residual = 0.0;    // max ||L x - lambda x|| over returned pairs
};

/// Eigenvectors of L = I - E for the 2nd..(dims+1)-th smallest eigenvalues.
///
/// The trivial eigenvector D^{1/2} 1 (eigenvalue 0) is deflated by shifting
/// it above the spectrum, so on a disconnected graph the first coordinate
/// contrasts components instead of returning another indicator vector.
/// Each vector's largest-magnitude entry is made positive.
inline LaplacianEmbedding laplacian_embedding(const NormalizedAdjacency& e,
                                              Eigen::Index dims,
                                              double tolerance = 1e-6) {
  const Eigen::Index m = e.size();
  if (dims < 1) throw ValidationError("embedding dims must be >= 1");
  if (m < dims + 1) {
    throw ValidationError("embedding needs at least dims + 1 vertices (have " +
                          std::to_string(m) + ", dims " + std::to_string(dims) +
                          ")");
  }
  const Eigen::MatrixXd laplacian =
      Eigen::MatrixXd::Identity(m, m) - e.to_dense();

  Eigen::VectorXd trivial = e.degrees().cwiseMax(0.0).cwiseSqrt();
  const double trivial_norm = trivial.norm();
  Eigen::MatrixXd shifted = laplacian;
  Eigen::Index skip = 0;
  if (trivial_norm > 0.0) {
    trivial /= trivial_norm;
    shifted.noalias() += 3.0 * trivial * trivial.transpose();
  } else {
    // Edgeless graph: L = I and every vector is an eigenvector.
    skip = 1;
  }
  shifted = 0.5 * (shifted + shifted.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(shifted);
  if (solver.info() != Eigen::Success) {
    throw ConvergenceError("laplacian eigensolver did not converge",
                           std::numeric_limits<double>::infinity());
  }

  LaplacianEmbedding out;
  out.coordinates.resize(m, dims);
  out.eigenvalues.resize(dims);
  for (Eigen::Index d = 0; d < dims; ++d) {
    Eigen::VectorXd x = solver.eigenvectors().col(d + skip);
    x.normalize();
    Eigen::Index arg = 0;
    x.cwiseAbs().maxCoeff(&arg);
    if (x(arg) < 0.0) x = -x;
    const double lambda = x.dot(laplacian * x);
    const double residual = (laplacian * x - lambda * x).norm();
    out.max_residual = std::max(out.max_residual, residual);
    out.coordinates.col(d) = x;
    out.eigenvalues(d) = lambda;
  }
  if (!(out.max_residual <= tolerance)) {
    std::ostringstream msg;
    msg << "laplacian embedding residual " << out.max_residual
        << " exceeds tolerance " << tolerance;
    throw ConvergenceError(msg.str(), out.max_residual);
  }
  return out;
}

// CSV rows "vertex,label,x0,...,x{dims-1}".
inline std::string embedding_csv(const Eigen::MatrixXd& coordinates,
                                 const std::vector<std::uint32_t>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != coordinates.rows()) {
    throw ValidationError("embedding_csv: one label per vertex required");
  }
  std::ostringstream os;
  os << "vertex,label";
  for (Eigen::Index d = 0; d < coordinates.cols(); ++d) os << ",x" << d;
  os << '\n';
  os.precision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < coordinates.rows(); ++i) {
    os << i << ',' << labels[static_cast<std::size_t>(i)];
    for (Eigen::Index d = 0; d < coordinates.cols(); ++d) {
      os << ',' << coordinates(i, d);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace fewshot
