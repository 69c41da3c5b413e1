#ifndef SQSOS_CONIC_HPP
#define SQSOS_CONIC_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

namespace sqsos {

struct ConeBlock {
  enum class Kind { Zero, NonNeg, Soc, Psd };
  Kind kind;
  /// For Psd, `dim` is the matrix side; the block occupies dim*(dim+1)/2
  /// rows in symmetric-vectorized (svec, sqrt(2)-scaled off-diagonal) form.
  int dim;

  int rows() const {
    return kind == Kind::Psd ? dim * (dim + 1) / 2 : dim;
  }
};

struct ConeSpec {
  std::vector<ConeBlock> blocks;

  int total_rows() const {
    int r = 0;
    for (const auto& b : blocks) r += b.rows();
    return r;
  }
};

/// Standard-form cone program
///   minimize    1/2 x'Px + q'x
///   subject to  Ax + s = b,  s in K
/// where K is the product cone described by `cones`. Zero blocks are
/// equality rows (s = 0, free dual); the remaining blocks are self-dual.
struct ConicProblem {
  Eigen::MatrixXd P;  // may be 0x0 for a linear cost
  Eigen::VectorXd q;
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b;
  ConeSpec cones;

  int num_vars() const { return static_cast<int>(q.size()); }
  bool has_quadratic_cost() const { return P.size() > 0 && P.norm() > 0; }
  void validate() const;

  /// Debug dump: (row, col, value) triplets plus the cone list.
  std::string dump() const;
};

enum class SolveStatus {
  Optimal,
  PrimalInfeasible,
  DualInfeasible,
  MaxIter,
  NumericalError,
};

std::string to_string(SolveStatus s);

struct ConicSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // dual, one entry per constraint row
  Eigen::VectorXd s;  // slack
  SolveStatus status = SolveStatus::NumericalError;
  double primal_obj = 0.0;
  double dual_obj = 0.0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  double gap = 0.0;
  int iterations = 0;
  std::string message;
};

struct ConicSettings {
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;
  int max_iter = 200;
  double step_fraction = 0.99;
  double static_reg = 1e-10;
  /// Accept the best iterate at this looser tolerance when full-precision
  /// convergence stalls (dense-LU accuracy floor on hard instances).
  double reduced_tol = 1e-6;
};

/// Solve a cone program. Quadratic costs (P != 0) use the native KKT
/// path; if that path fails the problem is re-solved through the
/// epigraph reformulation, which also yields infeasibility certificates.
ConicSolution solve(const ConicProblem& p, const ConicSolution* warm = nullptr,
                    const ConicSettings& settings = {});

/// Rewrite a quadratic cost as a linear cost plus one SOC block
/// (epigraph variable appended as the last coordinate).
ConicProblem epigraph_lift(const ConicProblem& p);

struct KktResiduals {
  double primal = 0.0;        // ||Ax + s - b||_inf
  double dual = 0.0;          // ||Px + q + A'y||_inf
  double gap = 0.0;           // |s'y|
  double cone_dist_s = 0.0;   // distance of s to K
  double cone_dist_y = 0.0;   // distance of y to K* (zero rows free)
};

KktResiduals kkt_residuals(const ConicProblem& p, const ConicSolution& sol);

/// svec index helpers shared with the SOS transcription.
int svec_dim(int side);
Eigen::VectorXd svec(const Eigen::MatrixXd& M);
Eigen::MatrixXd smat(const Eigen::VectorXd& v, int side);

/// Incremental assembly of a ConicProblem: variables, then rows grouped
/// into cone blocks in the order the blocks are opened.
class ConicBuilder {
 public:
  int add_vars(int count) {
    const int first = num_vars_;
    num_vars_ += count;
    return first;
  }
  int num_vars() const { return num_vars_; }
  int num_rows() const { return num_rows_; }

  /// Opens a block and returns its first row index.
  int begin_block(ConeBlock::Kind kind, int dim) {
    ConeBlock blk{kind, dim};
    const int first = num_rows_;
    num_rows_ += blk.rows();
    blocks_.push_back(blk);
    rhs_.resize(num_rows_, 0.0);
    return first;
  }
  void add_entry(int row, int col, double value) {
    if (value != 0.0) trips_.emplace_back(row, col, value);
  }
  void set_rhs(int row, double value) { rhs_[row] = value; }

  void set_linear_cost(int col, double value) {
    lin_.resize(std::max<size_t>(lin_.size(), col + 1), 0.0);
    lin_[col] += value;
  }
  /// Dense quadratic cost on a leading sub-block of the variables.
  void set_quadratic_cost(const Eigen::MatrixXd& P_top_left) { Ptl_ = P_top_left; }

  ConicProblem build() const {
    ConicProblem p;
    p.q = Eigen::VectorXd::Zero(num_vars_);
    for (size_t i = 0; i < lin_.size(); ++i) p.q[static_cast<int>(i)] = lin_[i];
    if (Ptl_.size() > 0) {
      p.P = Eigen::MatrixXd::Zero(num_vars_, num_vars_);
      p.P.topLeftCorner(Ptl_.rows(), Ptl_.cols()) = Ptl_;
    }
    p.A.resize(num_rows_, num_vars_);
    p.A.setFromTriplets(trips_.begin(), trips_.end());
    p.b = Eigen::Map<const Eigen::VectorXd>(rhs_.data(), num_rows_);
    p.cones.blocks = blocks_;
    return p;
  }

 private:
  int num_vars_ = 0;
  int num_rows_ = 0;
  std::vector<ConeBlock> blocks_;
  std::vector<Eigen::Triplet<double>> trips_;
  std::vector<double> rhs_;
  std::vector<double> lin_;
  Eigen::MatrixXd Ptl_;
};

}  // namespace sqsos

#endif
