#include "sqsos/conic.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>

namespace sqsos {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Eigen::MatrixXd;
using Eigen::VectorXd;

}  // namespace

int svec_dim(int side) { return side * (side + 1) / 2; }

VectorXd svec(const MatrixXd& M) {
  const int s = static_cast<int>(M.rows());
  VectorXd v(svec_dim(s));
  const double r2 = std::sqrt(2.0);
  int k = 0;
  for (int j = 0; j < s; ++j)
    for (int i = 0; i <= j; ++i)
      v[k++] = (i == j) ? M(i, j) : r2 * 0.5 * (M(i, j) + M(j, i));
  return v;
}

MatrixXd smat(const VectorXd& v, int side) {
  MatrixXd M(side, side);
  const double r2 = std::sqrt(2.0);
  int k = 0;
  for (int j = 0; j < side; ++j)
    for (int i = 0; i <= j; ++i) {
      const double x = v[k++];
      if (i == j)
        M(i, j) = x;
      else
        M(i, j) = M(j, i) = x / r2;
    }
  return M;
}

void ConicProblem::validate() const {
  const int m = cones.total_rows();
  if (A.rows() != m || static_cast<int>(b.size()) != m)
    throw std::invalid_argument("conic: A rows / b length must equal total cone dimension");
  if (A.cols() != q.size())
    throw std::invalid_argument("conic: A cols must equal cost dimension");
  if (P.size() > 0 && (P.rows() != q.size() || P.cols() != q.size()))
    throw std::invalid_argument("conic: P dimension mismatch");
  for (const auto& blk : cones.blocks)
    if (blk.dim <= 0) throw std::invalid_argument("conic: nonpositive cone block dimension");
}

std::string ConicProblem::dump() const {
  std::ostringstream os;
  os << "vars " << num_vars() << " rows " << cones.total_rows() << "\n";
  os << "cones";
  for (const auto& blk : cones.blocks) {
    const char* k = blk.kind == ConeBlock::Kind::Zero      ? "zero"
                    : blk.kind == ConeBlock::Kind::NonNeg ? "nonneg"
                    : blk.kind == ConeBlock::Kind::Soc    ? "soc"
                                                          : "psd";
    os << " " << k << ":" << blk.dim;
  }
  os << "\n";
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
      os << it.row() << " " << it.col() << " " << it.value() << "\n";
  os << "b";
  for (int i = 0; i < b.size(); ++i) os << " " << b[i];
  os << "\nq";
  for (int i = 0; i < q.size(); ++i) os << " " << q[i];
  os << "\n";
  return os.str();
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::PrimalInfeasible: return "primal-infeasible";
    case SolveStatus::DualInfeasible: return "dual-infeasible";
    case SolveStatus::MaxIter: return "max-iter";
    case SolveStatus::NumericalError: return "numerical-error";
  }
  return "unknown";
}

namespace {

// ---------------------------------------------------------------------------
// Cone kernel: layout, Jordan algebra, Nesterov-Todd scaling.
// ---------------------------------------------------------------------------

struct ConeLayout {
  std::vector<ConeBlock> blocks;  // non-zero blocks only
  std::vector<int> offs;
  int dim = 0;
  int degree = 0;
};

ConeLayout make_layout(const std::vector<ConeBlock>& blocks) {
  ConeLayout L;
  for (const auto& b : blocks) {
    if (b.kind == ConeBlock::Kind::Zero) continue;
    L.offs.push_back(L.dim);
    L.blocks.push_back(b);
    L.dim += b.rows();
    switch (b.kind) {
      case ConeBlock::Kind::NonNeg: L.degree += b.dim; break;
      case ConeBlock::Kind::Soc: L.degree += 1; break;
      case ConeBlock::Kind::Psd: L.degree += b.dim; break;
      default: break;
    }
  }
  return L;
}

VectorXd cone_identity(const ConeLayout& L) {
  VectorXd e = VectorXd::Zero(L.dim);
  for (size_t k = 0; k < L.blocks.size(); ++k) {
    const auto& b = L.blocks[k];
    const int o = L.offs[k];
    switch (b.kind) {
      case ConeBlock::Kind::NonNeg:
        e.segment(o, b.dim).setOnes();
        break;
      case ConeBlock::Kind::Soc:
        e[o] = 1.0;
        break;
      case ConeBlock::Kind::Psd: {
        int idx = o;
        for (int j = 0; j < b.dim; ++j) {
          for (int i = 0; i <= j; ++i, ++idx)
            if (i == j) e[idx] = 1.0;
        }
        break;
      }
      default: break;
    }
  }
  return e;
}

// Jordan product u o v per block.
VectorXd jordan(const ConeLayout& L, const VectorXd& u, const VectorXd& v) {
  VectorXd r(L.dim);
  for (size_t k = 0; k < L.blocks.size(); ++k) {
    const auto& b = L.blocks[k];
    const int o = L.offs[k], d = b.rows();
    switch (b.kind) {
      case ConeBlock::Kind::NonNeg:
        r.segment(o, d) = u.segment(o, d).cwiseProduct(v.segment(o, d));
        break;
      case ConeBlock::Kind::Soc: {
        const auto ub = u.segment(o, d), vb = v.segment(o, d);
        r[o] = ub.dot(vb);
        r.segment(o + 1, d - 1) =
            ub[0] * vb.segment(1, d - 1) + vb[0] * ub.segment(1, d - 1);
        break;
      }
      case ConeBlock::Kind::Psd: {
        const MatrixXd U = smat(u.segment(o, d), b.dim);
        const MatrixXd V = smat(v.segment(o, d), b.dim);
        r.segment(o, d) = svec(0.5 * (U * V + V * U));
        break;
      }
      default: break;
    }
  }
  return r;
}

// Smallest "eigenvalue" of u with respect to each block's cone.
double cone_min_eig(const ConeLayout& L, const VectorXd& u) {
  double m = kInf;
  for (size_t k = 0; k < L.blocks.size(); ++k) {
    const auto& b = L.blocks[k];
    const int o = L.offs[k], d = b.rows();
    switch (b.kind) {
      case ConeBlock::Kind::NonNeg:
        m = std::min(m, u.segment(o, d).minCoeff());
        break;
      case ConeBlock::Kind::Soc:
        m = std::min(m, u[o] - u.segment(o + 1, d - 1).norm());
        break;
      case ConeBlock::Kind::Psd: {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(smat(u.segment(o, d), b.dim),
                                                   Eigen::EigenvaluesOnly);
        m = std::min(m, es.eigenvalues().minCoeff());
        break;
      }
      default: break;
    }
  }
  return L.dim == 0 ? 0.0 : m;
}

struct ScalingBlock {
  VectorXd w;          // NonNeg: diag of W; Soc: normalized NT point wbar
  double eta = 1.0;    // Soc scale factor
  MatrixXd R, Rinv;    // Psd
  VectorXd sigma;      // Psd scaled eigenvalues
};

struct Scaling {
  std::vector<ScalingBlock> blocks;
  VectorXd lambda;  // scaled point, lambda = W z = W^{-T} s
};

enum class WMode { W, WT, Winv, WinvT };

void soc_apply(const VectorXd& wbar, double scale, const VectorXd& u, VectorXd& r);

bool compute_scaling(const ConeLayout& L, const VectorXd& s, const VectorXd& z,
                     Scaling& out) {
  out.blocks.assign(L.blocks.size(), {});
  out.lambda.resize(L.dim);
  for (size_t k = 0; k < L.blocks.size(); ++k) {
    const auto& b = L.blocks[k];
    const int o = L.offs[k], d = b.rows();
    auto& sb = out.blocks[k];
    switch (b.kind) {
      case ConeBlock::Kind::NonNeg: {
        const auto sv = s.segment(o, d), zv = z.segment(o, d);
        if (sv.minCoeff() <= 0 || zv.minCoeff() <= 0) return false;
        sb.w = (sv.array() / zv.array()).sqrt();
        out.lambda.segment(o, d) = (sv.array() * zv.array()).sqrt();
        break;
      }
      case ConeBlock::Kind::Soc: {
        const VectorXd sv = s.segment(o, d), zv = z.segment(o, d);
        const double sres = sv[0] * sv[0] - sv.segment(1, d - 1).squaredNorm();
        const double zres = zv[0] * zv[0] - zv.segment(1, d - 1).squaredNorm();
        if (sres <= 0 || zres <= 0 || sv[0] <= 0 || zv[0] <= 0) return false;
        const double snorm = std::sqrt(sres), znorm = std::sqrt(zres);
        VectorXd sbar = sv / snorm, zbar = zv / znorm;
        const double inner =
            sbar[0] * zbar[0] + sbar.segment(1, d - 1).dot(zbar.segment(1, d - 1));
        const double gamma = std::sqrt((1.0 + inner) / 2.0);
        if (!(gamma > 0)) return false;
        VectorXd wbar(d);
        wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
        wbar.segment(1, d - 1) =
            (sbar.segment(1, d - 1) - zbar.segment(1, d - 1)) / (2.0 * gamma);
        sb.w = wbar;
        sb.eta = std::pow(sres / zres, 0.25);
        VectorXd lam;
        soc_apply(wbar, sb.eta, zv, lam);
        out.lambda.segment(o, d) = lam;
        break;
      }
      case ConeBlock::Kind::Psd: {
        MatrixXd S = smat(s.segment(o, d), b.dim);
        MatrixXd Z = smat(z.segment(o, d), b.dim);
        Eigen::LLT<MatrixXd> lls(S), llz(Z);
        if (lls.info() != Eigen::Success) {
          // retry with a scale-aware jitter; iterates can graze the boundary
          S.diagonal().array() += 1e-14 * (1.0 + S.diagonal().maxCoeff());
          lls.compute(S);
        }
        if (llz.info() != Eigen::Success) {
          Z.diagonal().array() += 1e-14 * (1.0 + Z.diagonal().maxCoeff());
          llz.compute(Z);
        }
        if (lls.info() != Eigen::Success || llz.info() != Eigen::Success) return false;
        const MatrixXd Ls = lls.matrixL();
        const MatrixXd Lz = llz.matrixL();
        Eigen::JacobiSVD<MatrixXd> svd(Lz.transpose() * Ls,
                                       Eigen::ComputeFullU | Eigen::ComputeFullV);
        const VectorXd sig = svd.singularValues();
        if (sig.minCoeff() <= 0) return false;
        const VectorXd si = sig.array().sqrt().inverse();
        sb.R = Ls * svd.matrixV() * si.asDiagonal();
        // R^{-1} = diag(sqrt(sig)) V' Ls^{-1}
        MatrixXd LsInv = Ls.triangularView<Eigen::Lower>().solve(
            MatrixXd::Identity(b.dim, b.dim));
        sb.Rinv = sig.array().sqrt().matrix().asDiagonal() *
                  svd.matrixV().transpose() * LsInv;
        sb.sigma = sig;
        out.lambda.segment(o, d) = svec(MatrixXd(sig.asDiagonal()));
        break;
      }
      default: break;
    }
  }
  return true;
}

void soc_apply(const VectorXd& wbar, double scale, const VectorXd& u, VectorXd& r) {
  // r = scale * [wbar0, wbar_t'; wbar_t, I + wbar_t wbar_t'/(1+wbar0)] u
  const int d = static_cast<int>(u.size());
  const double w0 = wbar[0];
  const auto wt = wbar.segment(1, d - 1);
  const auto ut = u.segment(1, d - 1);
  const double wtu = wt.dot(ut);
  r.resize(d);
  r[0] = scale * (w0 * u[0] + wtu);
  r.segment(1, d - 1) = scale * (u[0] * wt + ut + wt * (wtu / (1.0 + w0)));
}

VectorXd w_apply(const ConeLayout& L, const Scaling& sc, const VectorXd& u, WMode mode) {
  VectorXd r(L.dim);
  for (size_t k = 0; k < L.blocks.size(); ++k) {
    const auto& b = L.blocks[k];
    const int o = L.offs[k], d = b.rows();
    const auto& sb = sc.blocks[k];
    switch (b.kind) {
      case ConeBlock::Kind::NonNeg:
        if (mode == WMode::W || mode == WMode::WT)
          r.segment(o, d) = u.segment(o, d).cwiseProduct(sb.w);
        else
          r.segment(o, d) = u.segment(o, d).cwiseQuotient(sb.w);
        break;
      case ConeBlock::Kind::Soc: {
        VectorXd rb;
        if (mode == WMode::W || mode == WMode::WT) {
          soc_apply(sb.w, sb.eta, u.segment(o, d), rb);
        } else {
          VectorXd wneg = sb.w;
          wneg.segment(1, d - 1) *= -1.0;
          soc_apply(wneg, 1.0 / sb.eta, u.segment(o, d), rb);
        }
        r.segment(o, d) = rb;
        break;
      }
      case ConeBlock::Kind::Psd: {
        const MatrixXd U = smat(u.segment(o, d), b.dim);
        MatrixXd V;
        switch (mode) {
          case WMode::W: V = sb.R.transpose() * U * sb.R; break;
          case WMode::WT: V = sb.R * U * sb.R.transpose(); break;
          case WMode::Winv: V = sb.Rinv.transpose() * U * sb.Rinv; break;
          case WMode::WinvT: V = sb.Rinv * U * sb.Rinv.transpose(); break;
        }
        r.segment(o, d) = svec(V);
        break;
      }
      default: break;
    }
  }
  return r;
}

// Solve lambda o u = d for u; valid for the scaled point (Psd lambda diagonal).
VectorXd lambda_solve(const ConeLayout& L, const Scaling& sc, const VectorXd& d) {
  VectorXd u(L.dim);
  for (size_t k = 0; k < L.blocks.size(); ++k) {
    const auto& b = L.blocks[k];
    const int o = L.offs[k], nd = b.rows();
    switch (b.kind) {
      case ConeBlock::Kind::NonNeg:
        u.segment(o, nd) =
            d.segment(o, nd).cwiseQuotient(sc.lambda.segment(o, nd));
        break;
      case ConeBlock::Kind::Soc: {
        const auto lam = sc.lambda.segment(o, nd);
        const auto db = d.segment(o, nd);
        const double l0 = lam[0];
        const auto lt = lam.segment(1, nd - 1);
        const double det = l0 * l0 - lt.squaredNorm();
        const double u0 = (l0 * db[0] - lt.dot(db.segment(1, nd - 1))) / det;
        u[o] = u0;
        u.segment(o + 1, nd - 1) = (db.segment(1, nd - 1) - u0 * lt) / l0;
        break;
      }
      case ConeBlock::Kind::Psd: {
        const VectorXd& sig = sc.blocks[k].sigma;
        int idx = o;
        for (int j = 0; j < b.dim; ++j)
          for (int i = 0; i <= j; ++i, ++idx)
            u[idx] = 2.0 * d[idx] / (sig[i] + sig[j]);
        break;
      }
      default: break;
    }
  }
  return u;
}

// Largest t with lam + t * dir in the cone (lam strictly interior).
double max_step(const ConeLayout& L, const Scaling& sc, const VectorXd& dir) {
  double amax = kInf;
  for (size_t k = 0; k < L.blocks.size(); ++k) {
    const auto& b = L.blocks[k];
    const int o = L.offs[k], nd = b.rows();
    switch (b.kind) {
      case ConeBlock::Kind::NonNeg: {
        for (int i = 0; i < nd; ++i)
          if (dir[o + i] < 0) amax = std::min(amax, -sc.lambda[o + i] / dir[o + i]);
        break;
      }
      case ConeBlock::Kind::Soc: {
        const auto lam = sc.lambda.segment(o, nd);
        const auto db = dir.segment(o, nd);
        const double a = db[0] * db[0] - db.segment(1, nd - 1).squaredNorm();
        const double bq =
            2.0 * (lam[0] * db[0] - lam.segment(1, nd - 1).dot(db.segment(1, nd - 1)));
        const double c = lam[0] * lam[0] - lam.segment(1, nd - 1).squaredNorm();
        double root = kInf;
        if (std::abs(a) < 1e-14) {
          if (bq < 0) root = -c / bq;
        } else {
          const double disc = bq * bq - 4.0 * a * c;
          if (disc >= 0) {
            const double sd = std::sqrt(disc);
            const double r1 = (-bq - sd) / (2.0 * a);
            const double r2 = (-bq + sd) / (2.0 * a);
            if (r1 > 0) root = std::min(root, r1);
            if (r2 > 0) root = std::min(root, r2);
            if (a > 0 && bq >= 0) root = kInf;  // f increasing from c > 0
          }
        }
        if (db[0] < 0) root = std::min(root, -lam[0] / db[0]);
        amax = std::min(amax, root);
        break;
      }
      case ConeBlock::Kind::Psd: {
        const VectorXd& sig = sc.blocks[k].sigma;
        MatrixXd D = smat(dir.segment(o, nd), b.dim);
        for (int j = 0; j < b.dim; ++j)
          for (int i = 0; i < b.dim; ++i)
            D(i, j) /= std::sqrt(sig[i] * sig[j]);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(D, Eigen::EigenvaluesOnly);
        const double mn = es.eigenvalues().minCoeff();
        if (mn < 0) amax = std::min(amax, -1.0 / mn);
        break;
      }
      default: break;
    }
  }
  return amax;
}

// ---------------------------------------------------------------------------
// Split into equality rows (zero cones) and proper cone rows.
// ---------------------------------------------------------------------------

struct SplitProblem {
  MatrixXd P;        // may be 0x0
  VectorXd q;
  MatrixXd Aeq;      // p x n
  VectorXd beq;
  MatrixXd G;        // m x n
  VectorXd h;
  ConeLayout layout;
  std::vector<int> eq_rows;    // original indices
  std::vector<int> cone_rows;  // original indices
  int n = 0;
};

SplitProblem split(const ConicProblem& prob) {
  SplitProblem sp;
  sp.n = prob.num_vars();
  sp.q = prob.q;
  sp.P = prob.P;
  std::vector<ConeBlock> cone_blocks;
  int row = 0;
  for (const auto& blk : prob.cones.blocks) {
    const int r = blk.rows();
    if (blk.kind == ConeBlock::Kind::Zero) {
      for (int i = 0; i < r; ++i) sp.eq_rows.push_back(row + i);
    } else {
      cone_blocks.push_back(blk);
      for (int i = 0; i < r; ++i) sp.cone_rows.push_back(row + i);
    }
    row += r;
  }
  sp.layout = make_layout(cone_blocks);
  const MatrixXd Ad = MatrixXd(prob.A);
  sp.Aeq.resize(sp.eq_rows.size(), sp.n);
  sp.beq.resize(sp.eq_rows.size());
  for (size_t i = 0; i < sp.eq_rows.size(); ++i) {
    sp.Aeq.row(i) = Ad.row(sp.eq_rows[i]);
    sp.beq[i] = prob.b[sp.eq_rows[i]];
  }
  sp.G.resize(sp.cone_rows.size(), sp.n);
  sp.h.resize(sp.cone_rows.size());
  for (size_t i = 0; i < sp.cone_rows.size(); ++i) {
    sp.G.row(i) = Ad.row(sp.cone_rows[i]);
    sp.h[i] = prob.b[sp.cone_rows[i]];
  }
  return sp;
}

void assemble_solution(const SplitProblem& sp, const VectorXd& x, const VectorXd& yeq,
                       const VectorXd& z, const VectorXd& s, ConicSolution& sol) {
  const int m_total = static_cast<int>(sp.eq_rows.size() + sp.cone_rows.size());
  sol.x = x;
  sol.y = VectorXd::Zero(m_total);
  sol.s = VectorXd::Zero(m_total);
  for (size_t i = 0; i < sp.eq_rows.size(); ++i) sol.y[sp.eq_rows[i]] = yeq[i];
  for (size_t i = 0; i < sp.cone_rows.size(); ++i) {
    sol.y[sp.cone_rows[i]] = z[i];
    sol.s[sp.cone_rows[i]] = s[i];
  }
}

// ---------------------------------------------------------------------------
// Dense KKT solver  [ Q + Gbar'Gbar , Aeq' ; Aeq , 0 ]  with Gbar = W^{-T} G.
// ---------------------------------------------------------------------------

class KktSolver {
 public:
  KktSolver(const SplitProblem& sp, double reg) : sp_(sp), reg_(reg) {}

  bool factor(const Scaling& sc) {
    const int n = sp_.n, p = static_cast<int>(sp_.Aeq.rows());
    Gbar_.resize(sp_.G.rows(), n);
    for (int j = 0; j < n; ++j)
      Gbar_.col(j) = w_apply(sp_.layout, sc, sp_.G.col(j), WMode::WinvT);
    K_.setZero(n + p, n + p);
    K_.topLeftCorner(n, n) = Gbar_.transpose() * Gbar_;
    if (sp_.P.size() > 0) K_.topLeftCorner(n, n) += sp_.P;
    K_.topLeftCorner(n, n).diagonal().array() += reg_;
    K_.topRightCorner(n, p) = sp_.Aeq.transpose();
    K_.bottomLeftCorner(p, n) = sp_.Aeq;
    K_.bottomRightCorner(p, p).diagonal().array() -= reg_;
    lu_.compute(K_);
    scaling_ = &sc;
    return lu_.rcond() > 1e-16 || true;  // LU always "succeeds"; rcond informative only
  }

  // Solve the 3x3 base system with rows
  //   [P] x + Aeq' y + G' z = bx ; Aeq x = by ; G x - W'W z = bz
  // with iterative refinement against the unreduced system; the normal-form
  // reduction loses accuracy once the scaling spread grows near convergence.
  void solve(const VectorXd& bx, const VectorXd& by, const VectorXd& bz,
             VectorXd& x, VectorXd& y, VectorXd& z) const {
    solve_once(bx, by, bz, x, y, z);
    for (int round = 0; round < 4; ++round) {
      VectorXd r1 = bx - sp_.Aeq.transpose() * y - sp_.G.transpose() * z;
      if (sp_.P.size() > 0) r1 -= sp_.P * x;
      const VectorXd r2 = by - sp_.Aeq * x;
      const VectorXd r3 =
          bz - sp_.G * x +
          w_apply(sp_.layout, *scaling_,
                  w_apply(sp_.layout, *scaling_, z, WMode::W), WMode::WT);
      VectorXd cx, cy, cz;
      solve_once(r1, r2, r3, cx, cy, cz);
      x += cx;
      y += cy;
      z += cz;
    }
  }

  void solve_once(const VectorXd& bx, const VectorXd& by, const VectorXd& bz,
                  VectorXd& x, VectorXd& y, VectorXd& z) const {
    const int n = sp_.n, p = static_cast<int>(sp_.Aeq.rows());
    const VectorXd bzbar = w_apply(sp_.layout, *scaling_, bz, WMode::WinvT);
    VectorXd rhs(n + p);
    rhs.head(n) = bx + Gbar_.transpose() * bzbar;
    rhs.tail(p) = by;
    VectorXd sol = lu_.solve(rhs);
    for (int r = 0; r < 2; ++r) {
      const VectorXd resid = rhs - K_ * sol;
      sol += lu_.solve(resid);
    }
    x = sol.head(n);
    y = sol.tail(p);
    z = w_apply(sp_.layout, *scaling_, Gbar_ * x - bzbar, WMode::Winv);
  }

 private:
  const SplitProblem& sp_;
  double reg_;
  MatrixXd Gbar_;
  MatrixXd K_;
  Eigen::PartialPivLU<MatrixXd> lu_;
  const Scaling* scaling_ = nullptr;
};

// ---------------------------------------------------------------------------
// Homogeneous self-dual interior point for linear cost problems.
// ---------------------------------------------------------------------------

ConicSolution solve_hsd(const SplitProblem& sp, const ConicSettings& st) {
  ConicSolution sol;
  const int n = sp.n, p = static_cast<int>(sp.Aeq.rows()),
            m = static_cast<int>(sp.G.rows());
  const ConeLayout& L = sp.layout;
  const VectorXd& c = sp.q;
  const VectorXd& b = sp.beq;
  const VectorXd& h = sp.h;

  if (m == 0) {
    // equality-constrained linear program: solve KKT directly
    MatrixXd K = MatrixXd::Zero(n + p, n + p);
    K.topRightCorner(n, p) = sp.Aeq.transpose();
    K.bottomLeftCorner(p, n) = sp.Aeq;
    K.topLeftCorner(n, n).diagonal().array() += st.static_reg;
    VectorXd rhs(n + p);
    rhs.head(n) = -c;
    rhs.tail(p) = b;
    VectorXd v = K.partialPivLu().solve(rhs);
    assemble_solution(sp, v.head(n), v.tail(p), VectorXd(), VectorXd(), sol);
    sol.primal_obj = sol.dual_obj = c.dot(v.head(n));
    const double pres = p > 0 ? (sp.Aeq * v.head(n) - b).lpNorm<Eigen::Infinity>() : 0.0;
    sol.primal_res = pres;
    sol.status = pres <= st.feas_tol * (1.0 + (p ? b.lpNorm<Eigen::Infinity>() : 0.0))
                     ? SolveStatus::Optimal
                     : SolveStatus::PrimalInfeasible;
    return sol;
  }

  VectorXd x = VectorXd::Zero(n), y = VectorXd::Zero(p);
  VectorXd s = cone_identity(L), z = cone_identity(L);
  double tau = 1.0, kappa = 1.0;

  const double bhn = std::max(b.size() ? b.lpNorm<Eigen::Infinity>() : 0.0,
                              h.lpNorm<Eigen::Infinity>());
  const double cn = c.size() ? c.lpNorm<Eigen::Infinity>() : 0.0;

  KktSolver kkt(sp, st.static_reg);
  Scaling sc;
  VectorXd e = cone_identity(L);

  // best iterate seen, by worst normalized optimality metric
  double best_score = kInf;
  VectorXd bx = x, by = y, bz_ = z, bs = s;
  double btau = tau;

  auto finish = [&](SolveStatus fallback, const std::string& msg) {
    assemble_solution(sp, bx / btau, by / btau, bz_ / btau, bs / btau, sol);
    if (best_score <= st.reduced_tol) {
      sol.status = SolveStatus::Optimal;
      sol.message = "reduced tolerance (" + msg + ")";
      sol.primal_obj = c.dot(bx) / btau;
      sol.dual_obj = -(b.dot(by) + h.dot(bz_)) / btau;
      sol.gap = bs.dot(bz_) / (btau * btau);
      return;
    }
    sol.status = fallback;
    sol.message = msg;
  };

  for (int iter = 0; iter < st.max_iter; ++iter) {
    const VectorXd rx = sp.Aeq.transpose() * y + sp.G.transpose() * z + c * tau;
    const VectorXd ry = sp.Aeq * x - b * tau;
    const VectorXd rz = sp.G * x + s - h * tau;
    const double rtau = c.dot(x) + b.dot(y) + h.dot(z) + kappa;
    const double gap = s.dot(z);
    const double mu = (gap + tau * kappa) / (L.degree + 1);

    // convergence checks on the de-homogenized point
    const double pobj = c.dot(x) / tau;
    const double dobj = -(b.dot(y) + h.dot(z)) / tau;
    double pres = 0.0;
    if (p > 0) pres = (sp.Aeq * x / tau - b).lpNorm<Eigen::Infinity>();
    pres = std::max(pres, ((sp.G * x + s) / tau - h).lpNorm<Eigen::Infinity>());
    const double dres =
        (sp.Aeq.transpose() * y / tau + sp.G.transpose() * z / tau + c)
            .lpNorm<Eigen::Infinity>();
    const double relgap = gap / (tau * tau) / std::max(1.0, std::abs(pobj));
    const double score = std::max({pres / (1.0 + bhn), dres / (1.0 + cn), relgap});
    if (score < best_score) {
      best_score = score;
      bx = x;
      by = y;
      bz_ = z;
      bs = s;
      btau = tau;
    }
    sol.iterations = iter;
    if (std::getenv("SQSOS_IPM_DEBUG"))
      std::fprintf(stderr,
                   "hsd it %2d pres %.2e dres %.2e gap %.2e tau %.2e kap %.2e mu %.2e\n",
                   iter, pres, dres, relgap, tau, kappa, mu);
    if (pres <= st.feas_tol * (1.0 + bhn) && dres <= st.feas_tol * (1.0 + cn) &&
        relgap <= st.gap_tol) {
      assemble_solution(sp, x / tau, y / tau, z / tau, s / tau, sol);
      sol.status = SolveStatus::Optimal;
      sol.primal_obj = pobj;
      sol.dual_obj = dobj;
      sol.primal_res = pres;
      sol.dual_res = dres;
      sol.gap = gap / (tau * tau);
      return sol;
    }
    // primal infeasibility: A'y + G'z = 0, b'y + h'z < 0, z in K*
    const double bhz = b.dot(y) + h.dot(z);
    if (bhz < -1e-12) {
      const double scale = -1.0 / bhz;
      const double cert =
          ((sp.Aeq.transpose() * y + sp.G.transpose() * z) * scale)
              .lpNorm<Eigen::Infinity>();
      if (cert <= st.feas_tol * (1.0 + cn) && tau <= 1e-6 * std::max(1.0, kappa)) {
        assemble_solution(sp, x, y * scale, z * scale, s * scale, sol);
        sol.status = SolveStatus::PrimalInfeasible;
        sol.message = "improving ray: b'y = -1, ||A'y|| = " + std::to_string(cert);
        return sol;
      }
    }
    // dual infeasibility: Ax = 0, Gx + s = 0, c'x < 0, s in K
    const double cx = c.dot(x);
    if (cx < -1e-12) {
      const double scale = -1.0 / cx;
      double cert = ((sp.G * x + s) * scale).lpNorm<Eigen::Infinity>();
      if (p > 0)
        cert = std::max(cert, (sp.Aeq * x * scale).lpNorm<Eigen::Infinity>());
      if (cert <= st.feas_tol * (1.0 + bhn) && tau <= 1e-6 * std::max(1.0, kappa)) {
        assemble_solution(sp, x * scale, y, z, s * scale, sol);
        sol.status = SolveStatus::DualInfeasible;
        sol.message = "improving ray: c'x = -1";
        return sol;
      }
    }

    if (!compute_scaling(L, s, z, sc)) {
      finish(SolveStatus::NumericalError, "scaling breakdown");
      return sol;
    }
    kkt.factor(sc);

    VectorXd vx, vy, vz;
    kkt.solve(-c, b, h, vx, vy, vz);
    const double cv = c.dot(vx) + b.dot(vy) + h.dot(vz);

    auto direction = [&](const VectorXd& bx, const VectorXd& by, const VectorXd& bz,
                         double btau, const VectorXd& ds, double dkap, VectorXd& dx,
                         VectorXd& dy, VectorXd& dz, VectorXd& dsv, double& dtau,
                         double& dkappa) {
      const VectorXd gs = lambda_solve(L, sc, ds);
      const VectorXd wgs = w_apply(L, sc, gs, WMode::WT);
      VectorXd ux, uy, uz;
      kkt.solve(bx, by, bz - wgs, ux, uy, uz);
      const double cu = c.dot(ux) + b.dot(uy) + h.dot(uz);
      dtau = (btau - dkap / tau - cu) / (cv - kappa / tau);
      dx = ux + dtau * vx;
      dy = uy + dtau * vy;
      dz = uz + dtau * vz;
      dsv = w_apply(L, sc, gs - w_apply(L, sc, dz, WMode::W), WMode::WT);
      dkappa = (dkap - kappa * dtau) / tau;
    };

    // affine (predictor) direction
    VectorXd dxa, dya, dza, dsa;
    double dtaua, dkapa;
    direction(-rx, -ry, -rz, -rtau, -jordan(L, sc.lambda, sc.lambda), -tau * kappa,
              dxa, dya, dza, dsa, dtaua, dkapa);
    const VectorXd dsa_sc = w_apply(L, sc, dsa, WMode::WinvT);
    const VectorXd dza_sc = w_apply(L, sc, dza, WMode::W);
    double amax = std::min(max_step(L, sc, dsa_sc), max_step(L, sc, dza_sc));
    if (dtaua < 0) amax = std::min(amax, -tau / dtaua);
    if (dkapa < 0) amax = std::min(amax, -kappa / dkapa);
    const double alpha_aff = std::min(1.0, amax);
    double sigma = std::pow(1.0 - alpha_aff, 3.0);
    sigma = std::min(1.0, std::max(0.0, sigma));

    // combined (corrector) direction
    VectorXd ds_comb = -jordan(L, sc.lambda, sc.lambda) -
                       jordan(L, dsa_sc, dza_sc) + sigma * mu * e;
    const double dkap_comb = -tau * kappa - dtaua * dkapa + sigma * mu;
    VectorXd dx, dy, dz, dsv;
    double dtau, dkappa;
    const double rs = 1.0 - sigma;
    direction(-rs * rx, -rs * ry, -rs * rz, -rs * rtau, ds_comb, dkap_comb, dx, dy,
              dz, dsv, dtau, dkappa);

    const VectorXd ds_sc = w_apply(L, sc, dsv, WMode::WinvT);
    const VectorXd dz_sc = w_apply(L, sc, dz, WMode::W);
    amax = std::min(max_step(L, sc, ds_sc), max_step(L, sc, dz_sc));
    if (dtau < 0) amax = std::min(amax, -tau / dtau);
    if (dkappa < 0) amax = std::min(amax, -kappa / dkappa);
    const double alpha = std::min(1.0, st.step_fraction * amax);
    if (std::getenv("SQSOS_IPM_DEBUG"))
      std::fprintf(stderr,
                   "    aff %.3e sigma %.3e amax %.3e alpha %.3e dtau %.3e dkap %.3e\n",
                   alpha_aff, sigma, amax, alpha, dtau, dkappa);
    if (!(alpha > 1e-12) || !std::isfinite(alpha)) {
      finish(SolveStatus::NumericalError, "step collapse");
      return sol;
    }
    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * dsv;
    tau += alpha * dtau;
    kappa += alpha * dkappa;
  }
  finish(SolveStatus::MaxIter, "iteration limit");
  sol.iterations = st.max_iter;
  return sol;
}

// ---------------------------------------------------------------------------
// Interior point for quadratic cost problems (no homogeneous embedding).
// ---------------------------------------------------------------------------

ConicSolution solve_qp(const SplitProblem& sp, const ConicSettings& st,
                       const ConicSolution* warm) {
  ConicSolution sol;
  const int n = sp.n, p = static_cast<int>(sp.Aeq.rows()),
            m = static_cast<int>(sp.G.rows());
  const ConeLayout& L = sp.layout;
  const VectorXd& q = sp.q;
  const VectorXd& b = sp.beq;
  const VectorXd& h = sp.h;
  const MatrixXd& P = sp.P;

  auto quad = [&](const VectorXd& v) {
    return P.size() > 0 ? 0.5 * v.dot(P * v) : 0.0;
  };

  if (m == 0) {
    MatrixXd K = MatrixXd::Zero(n + p, n + p);
    if (P.size() > 0) K.topLeftCorner(n, n) = P;
    K.topLeftCorner(n, n).diagonal().array() += st.static_reg;
    K.topRightCorner(n, p) = sp.Aeq.transpose();
    K.bottomLeftCorner(p, n) = sp.Aeq;
    VectorXd rhs(n + p);
    rhs.head(n) = -q;
    rhs.tail(p) = b;
    VectorXd v = K.partialPivLu().solve(rhs);
    assemble_solution(sp, v.head(n), v.tail(p), VectorXd(), VectorXd(), sol);
    sol.primal_obj = sol.dual_obj = quad(v.head(n)) + q.dot(v.head(n));
    sol.status = SolveStatus::Optimal;
    return sol;
  }

  KktSolver kkt(sp, st.static_reg);
  const VectorXd e = cone_identity(L);
  VectorXd x, y, s, z;

  // initial point from one KKT solve with W = I
  {
    Scaling id;
    id.blocks.assign(L.blocks.size(), {});
    id.lambda = e;
    for (size_t k = 0; k < L.blocks.size(); ++k) {
      const auto& blk = L.blocks[k];
      auto& sb = id.blocks[k];
      if (blk.kind == ConeBlock::Kind::NonNeg)
        sb.w = VectorXd::Ones(blk.dim);
      else if (blk.kind == ConeBlock::Kind::Soc) {
        sb.w = VectorXd::Zero(blk.dim);
        sb.w[0] = 1.0;
        sb.eta = 1.0;
      } else if (blk.kind == ConeBlock::Kind::Psd) {
        sb.R = MatrixXd::Identity(blk.dim, blk.dim);
        sb.Rinv = sb.R;
        sb.sigma = VectorXd::Ones(blk.dim);
      }
    }
    kkt.factor(id);
    kkt.solve(-q, b, h, x, y, z);
    s = -z;
    if (warm && warm->x.size() == n) x = warm->x;
    const double ts = cone_min_eig(L, s);
    if (ts < 1e-6) s += (1.0 - ts) * e;
    const double tz = cone_min_eig(L, z);
    if (tz < 1e-6) z += (1.0 - tz) * e;
  }

  const double bhn = std::max(p ? b.lpNorm<Eigen::Infinity>() : 0.0,
                              h.lpNorm<Eigen::Infinity>());
  const double qn = q.size() ? q.lpNorm<Eigen::Infinity>() : 0.0;

  // best iterate seen, by worst normalized optimality metric; accepted at
  // st.reduced_tol when the dense factorization cannot reach full precision
  double best_score = kInf;
  VectorXd bxv = x, byv = y, bzv = z, bsv = s;
  int since_best = 0;

  auto finish = [&](SolveStatus fallback, const std::string& msg) {
    if (best_score <= st.reduced_tol) {
      assemble_solution(sp, bxv, byv, bzv, bsv, sol);
      sol.status = SolveStatus::Optimal;
      sol.message = "reduced tolerance (" + msg + ")";
      sol.primal_obj = quad(bxv) + q.dot(bxv);
      sol.dual_obj = sol.primal_obj - bsv.dot(bzv);
      sol.gap = bsv.dot(bzv);
      return;
    }
    assemble_solution(sp, x, y, z, s, sol);
    sol.status = fallback;
    sol.message = msg;
  };

  Scaling sc;
  for (int iter = 0; iter < st.max_iter; ++iter) {
    VectorXd rx = q + sp.Aeq.transpose() * y + sp.G.transpose() * z;
    if (P.size() > 0) rx += P * x;
    const VectorXd ry = sp.Aeq * x - b;
    const VectorXd rz = sp.G * x + s - h;
    const double gap = s.dot(z);
    const double mu = gap / L.degree;

    const double pobj = quad(x) + q.dot(x);
    double pres = rz.lpNorm<Eigen::Infinity>();
    if (p > 0) pres = std::max(pres, ry.lpNorm<Eigen::Infinity>());
    const double dres = rx.lpNorm<Eigen::Infinity>();
    const double relgap = gap / std::max(1.0, std::abs(pobj));
    sol.iterations = iter;
    if (std::getenv("SQSOS_IPM_DEBUG"))
      std::fprintf(stderr, "qp it %d pres %.2e dres %.2e relgap %.2e mu %.2e\n",
                   iter, pres, dres, relgap, mu);
    const double score =
        std::max({pres / (1.0 + bhn), dres / (1.0 + qn), relgap});
    if (score < best_score) {
      best_score = score;
      bxv = x;
      byv = y;
      bzv = z;
      bsv = s;
      since_best = 0;
    } else if (++since_best > 30) {
      finish(SolveStatus::MaxIter, "progress stalled");
      return sol;
    }
    if (pres <= st.feas_tol * (1.0 + bhn) && dres <= st.feas_tol * (1.0 + qn) &&
        relgap <= st.gap_tol) {
      assemble_solution(sp, x, y, z, s, sol);
      sol.status = SolveStatus::Optimal;
      sol.primal_obj = pobj;
      sol.dual_obj = pobj - gap;
      sol.primal_res = pres;
      sol.dual_res = dres;
      sol.gap = gap;
      return sol;
    }

    if (!compute_scaling(L, s, z, sc)) {
      finish(SolveStatus::NumericalError, "scaling breakdown");
      return sol;
    }
    kkt.factor(sc);

    auto direction = [&](const VectorXd& ds, double resid_scale, VectorXd& dx,
                         VectorXd& dy, VectorXd& dz, VectorXd& dsv) {
      const VectorXd gs = lambda_solve(L, sc, ds);
      const VectorXd wgs = w_apply(L, sc, gs, WMode::WT);
      kkt.solve(-resid_scale * rx, -resid_scale * ry, -resid_scale * rz - wgs, dx,
                dy, dz);
      dsv = w_apply(L, sc, gs - w_apply(L, sc, dz, WMode::W), WMode::WT);
    };

    VectorXd dxa, dya, dza, dsa;
    direction(-jordan(L, sc.lambda, sc.lambda), 1.0, dxa, dya, dza, dsa);
    const VectorXd dsa_sc = w_apply(L, sc, dsa, WMode::WinvT);
    const VectorXd dza_sc = w_apply(L, sc, dza, WMode::W);
    double amax = std::min(max_step(L, sc, dsa_sc), max_step(L, sc, dza_sc));
    const double alpha_aff = std::min(1.0, amax);
    const double mu_aff =
        (s + alpha_aff * dsa).dot(z + alpha_aff * dza) / L.degree;
    double sigma = std::pow(std::max(0.0, mu_aff / mu), 3.0);
    sigma = std::min(1.0, sigma);

    VectorXd ds_comb = -jordan(L, sc.lambda, sc.lambda) -
                       jordan(L, dsa_sc, dza_sc) +
                       sigma * mu * cone_identity(L);
    VectorXd dx, dy, dz, dsv;
    direction(ds_comb, 1.0, dx, dy, dz, dsv);
    const VectorXd ds_sc = w_apply(L, sc, dsv, WMode::WinvT);
    const VectorXd dz_sc = w_apply(L, sc, dz, WMode::W);
    amax = std::min(max_step(L, sc, ds_sc), max_step(L, sc, dz_sc));
    const double alpha = std::min(1.0, st.step_fraction * amax);
    if (!(alpha > 1e-12) || !std::isfinite(alpha)) {
      finish(SolveStatus::NumericalError, "step collapse");
      return sol;
    }
    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * dsv;
  }
  finish(SolveStatus::MaxIter, "iteration limit");
  sol.iterations = st.max_iter;
  return sol;
}

}  // namespace

ConicProblem epigraph_lift(const ConicProblem& p) {
  if (!p.has_quadratic_cost())
    throw std::invalid_argument("epigraph_lift: quadratic cost is zero");
  const int n = p.num_vars();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(p.P);
  const VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -1e-9 * scale)
    throw std::invalid_argument("epigraph_lift: P is not positive semidefinite");
  std::vector<int> keep;
  for (int i = 0; i < n; ++i)
    if (ev[i] > 1e-12 * scale) keep.push_back(i);
  const int r = static_cast<int>(keep.size());
  MatrixXd Lt(r, n);  // L' with P = L L'
  for (int i = 0; i < r; ++i)
    Lt.row(i) = std::sqrt(ev[keep[i]]) * es.eigenvectors().col(keep[i]).transpose();

  ConicProblem out;
  out.q = VectorXd(n + 1);
  out.q.head(n) = p.q;
  out.q[n] = 1.0;
  out.b = VectorXd(p.b.size() + 2 + r);
  out.b.head(p.b.size()) = p.b;
  out.b[p.b.size()] = 1.0;
  out.b[p.b.size() + 1] = 1.0;
  out.b.tail(r).setZero();
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < p.A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(p.A, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                         it.value());
  const int m0 = static_cast<int>(p.b.size());
  // SOC block (1 + t, 1 - t, sqrt(2) L'x)
  trips.emplace_back(m0, n, -1.0);
  trips.emplace_back(m0 + 1, n, 1.0);
  const double r2 = std::sqrt(2.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < n; ++j)
      if (Lt(i, j) != 0.0) trips.emplace_back(m0 + 2 + i, j, -r2 * Lt(i, j));
  out.A.resize(m0 + 2 + r, n + 1);
  out.A.setFromTriplets(trips.begin(), trips.end());
  out.cones = p.cones;
  out.cones.blocks.push_back({ConeBlock::Kind::Soc, 2 + r});
  return out;
}

KktResiduals kkt_residuals(const ConicProblem& p, const ConicSolution& sol) {
  KktResiduals r;
  if (p.num_vars() == 0 && p.b.size() == 0) return r;
  const VectorXd pr = p.A * sol.x + sol.s - p.b;
  r.primal = pr.size() ? pr.lpNorm<Eigen::Infinity>() : 0.0;
  VectorXd d = p.q + p.A.transpose() * sol.y;
  if (p.P.size() > 0) d += p.P * sol.x;
  r.dual = d.size() ? d.lpNorm<Eigen::Infinity>() : 0.0;
  r.gap = std::abs(sol.s.dot(sol.y));
  // cone distances, zero rows excluded for y
  int row = 0;
  for (const auto& blk : p.cones.blocks) {
    const int nr = blk.rows();
    if (blk.kind != ConeBlock::Kind::Zero) {
      ConeLayout L = make_layout({blk});
      r.cone_dist_s = std::max(
          r.cone_dist_s, std::max(0.0, -cone_min_eig(L, sol.s.segment(row, nr))));
      r.cone_dist_y = std::max(
          r.cone_dist_y, std::max(0.0, -cone_min_eig(L, sol.y.segment(row, nr))));
    } else {
      r.cone_dist_s =
          std::max(r.cone_dist_s, sol.s.segment(row, nr).lpNorm<Eigen::Infinity>());
    }
    row += nr;
  }
  return r;
}

ConicSolution solve(const ConicProblem& p, const ConicSolution* warm,
                    const ConicSettings& settings) {
  p.validate();
  if (p.num_vars() == 0 && p.b.size() == 0) {
    ConicSolution sol;
    sol.status = SolveStatus::Optimal;
    sol.x = VectorXd();
    sol.y = VectorXd();
    sol.s = VectorXd();
    return sol;
  }
  SplitProblem sp = split(p);
  if (!p.has_quadratic_cost()) {
    sp.P.resize(0, 0);
    return solve_hsd(sp, settings);
  }
  ConicSolution sol = solve_qp(sp, settings, warm);
  if (sol.status == SolveStatus::Optimal) return sol;
  // Fall back to the epigraph reformulation on the homogeneous path; this
  // also classifies infeasible subproblems.
  const ConicProblem lifted = epigraph_lift(p);
  ConicSolution ls = solve_hsd(split(lifted), settings);
  ConicSolution out;
  out.status = ls.status;
  out.iterations = sol.iterations + ls.iterations;
  out.message = "epigraph fallback: " + ls.message;
  out.x = ls.x.size() ? VectorXd(ls.x.head(p.num_vars())) : VectorXd();
  out.y = ls.y.size() ? VectorXd(ls.y.head(p.b.size())) : VectorXd();
  out.s = ls.s.size() ? VectorXd(ls.s.head(p.b.size())) : VectorXd();
  if (ls.status == SolveStatus::Optimal) {
    out.primal_obj = 0.5 * out.x.dot(p.P * out.x) + p.q.dot(out.x);
    out.dual_obj = out.primal_obj - ls.gap;
    out.primal_res = ls.primal_res;
    out.dual_res = ls.dual_res;
    out.gap = ls.gap;
  }
  return out;
}

}  // namespace sqsos
