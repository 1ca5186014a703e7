#pragma once

#include "lightsq/grid.hpp"

#include <Eigen/Cholesky>

#include <numbers>
#include <optional>

namespace lightsq {

struct FitConfig {
  /// Prior probability that a voxel is covered by the current primitive (1/N~).
  double w = 0.02;
  /// Weight of the inside-voxel decay term.
  double c = 1.0;
  int max_outer_iters = 40;
  /// Inner Levenberg-Marquardt iterations per outer (reweighting) iteration.
  int max_inner_iters = 12;
  double param_tol = 1e-4;
  double neighborhood_scale = 1.3;
  /// Lower bound on sigma^2; 0 selects tau^2.
  double sigma_floor = 0.0;
  /// Consecutive rejected LM steps that end the fit.
  int max_rejects = 8;
  /// Refit from the two other axis assignments and keep the best.
  bool axis_restarts = true;
  /// Lattice stride of the coarse search stage; 1 fits on every voxel only,
  /// 0 picks 1..3 from the initial radius in voxels.
  int coarse_stride = 0;
  /// Rounds of restart search; each refits three alternatives of the best so far.
  int restart_rounds = 3;

  void validate() const {
    if (!(w > 0.0 && w < 1.0)) throw Error(ErrorCode::InvalidArgument, "fit.w must lie in (0, 1)");
    if (!(c > 0.0)) throw Error(ErrorCode::InvalidArgument, "fit.c must be positive");
    if (max_outer_iters < 1 || max_inner_iters < 1) throw Error(ErrorCode::InvalidArgument, "iteration caps must be >= 1");
    if (sigma_floor < 0.0) throw Error(ErrorCode::InvalidArgument, "fit.sigma_floor must be >= 0");
  }
};

struct FitResult {
  Superquadric sq;
  /// Weighted squared error on the final neighborhood and weights.
  double final_residual = 0.0;
  int iters = 0;
  bool converged = false;
};

/// Number of free parameters: eps1, eps2, three scales, three rotation
/// increments, three translations.
inline constexpr int kParamCount = 11;
using ParamVec = Eigen::Matrix<double, kParamCount, 1>;

namespace detail {

inline bool is_angle_param(int p) { return p >= 5 && p < 8; }

/// Applies an additive parameter increment; rotation increments are composed
/// onto the quaternion in the local frame. Exponents and scales are projected
/// back into their admissible boxes.
inline Superquadric perturb(const Superquadric& sq, const ParamVec& d, double min_scale, double max_scale) {
  Superquadric out = sq;
  out.eps1 = std::clamp(sq.eps1 + d[0], kEpsMin, kEpsMax);
  out.eps2 = std::clamp(sq.eps2 + d[1], kEpsMin, kEpsMax);
  for (int a = 0; a < 3; ++a) out.scale[a] = std::clamp(sq.scale[a] + d[2 + a], min_scale, max_scale);
  const Vec3 w(d[5], d[6], d[7]);
  const double angle = w.norm();
  if (angle > 0.0) out.rotation = (sq.rotation * Quat(Eigen::AngleAxisd(angle, w / angle))).normalized();
  for (int a = 0; a < 3; ++a) out.translation[a] = sq.translation[a] + d[8 + a];
  return out;
}

inline double step_for(int p) { return is_angle_param(p) ? 1e-4 : 1e-5; }

/// Parameter-space distance between two primitives (rotation as angle).
inline double param_distance(const Superquadric& a, const Superquadric& b) {
  ParamVec d;
  d[0] = a.eps1 - b.eps1;
  d[1] = a.eps2 - b.eps2;
  for (int i = 0; i < 3; ++i) d[2 + i] = a.scale[i] - b.scale[i];
  const double ang = a.rotation.angularDistance(b.rotation);
  d[5] = ang;
  d[6] = 0.0;
  d[7] = 0.0;
  for (int i = 0; i < 3; ++i) d[8 + i] = a.translation[i] - b.translation[i];
  return d.norm();
}

}  // namespace detail

/// Central-difference gradient of the truncated SRDF with respect to the 11
/// parameters (steps 1e-5, 1e-4 for the rotation increments). Components are
/// zero where the clamp saturates.
inline ParamVec clamped_jacobian_probe(const Superquadric& sq, const Vec3& x, double tau, double step_scale = 1.0) {
  ParamVec g;
  for (int p = 0; p < kParamCount; ++p) {
    const double h = detail::step_for(p) * step_scale;
    ParamVec d = ParamVec::Zero();
    d[p] = h;
    const Superquadric plus = detail::perturb(sq, d, 1e-12, 1e12);
    d[p] = -h;
    const Superquadric minus = detail::perturb(sq, d, 1e-12, 1e12);
    g[p] = (srdf_truncated(plus, x, tau) - srdf_truncated(minus, x, tau)) / (2.0 * h);
  }
  return g;
}

/// Gaussian matching kernel exp(-(phi - pred)^2 / (2 sigma^2)), in (0, 1].
inline double matching_term(double target, double predicted, double sigma2) {
  const double d = target - predicted;
  return std::exp(-d * d / (2.0 * sigma2));
}

/// Per-voxel weight: kernel / (1[inside] * C (1 - w) / w + kernel).
inline double lambda_weight(double target, double predicted, double sigma2, const FitConfig& cfg) {
  const double p = matching_term(target, predicted, sigma2);
  const double decay = target < 0.0 ? cfg.c * (1.0 - cfg.w) / cfg.w : 0.0;
  if (decay == 0.0) return 1.0;
  return p / (decay + p);
}

inline std::vector<double> lambda_weights(const TsdfGrid& grid, const Superquadric& sq, const FitConfig& cfg,
                                          std::span<const std::size_t> voxels, double sigma2) {
  std::vector<double> out(voxels.size());
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    const double target = grid.values[voxels[i]];
    out[i] = lambda_weight(target, srdf_truncated(sq, grid.center(voxels[i]), grid.tau), sigma2, cfg);
  }
  return out;
}

/// Weighted mean squared residual, floored at tau^2.
inline double update_sigma(std::span<const double> residuals, std::span<const double> weights, double tau) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    num += weights[i] * residuals[i] * residuals[i];
    den += weights[i];
  }
  if (!(den > 0.0)) throw Error(ErrorCode::DegenerateWeights, "sum of weights is zero");
  return std::max(num / den, tau * tau);
}

namespace detail {

/// Dense voxel sub-box of the grid used as the fitting neighborhood, with the
/// frozen per-voxel weights of one reweighting round. Coordinates are kept as
/// structure-of-arrays so rows can be evaluated in vectorized batches.
class Neighborhood {
 public:
  /// stride > 1 keeps every stride-th voxel along each axis.
  Neighborhood(const TsdfGrid& grid, const Aabb& box, const std::vector<bool>* ignore, int stride = 1)
      : grid_(&grid), tau_(grid.tau), stride_(stride) {
    std::array<int, 3> hi{};
    std::tie(lo_, hi) = grid.index_range(box);
    for (int a = 0; a < 3; ++a) dims_[a] = hi[a] < lo_[a] ? 0 : (hi[a] - lo_[a]) / stride_ + 1;
    const std::size_t n = count();
    xs_.resize(n);
    ys_.resize(n);
    zs_.resize(n);
    xf_.resize(n);
    yf_.resize(n);
    zf_.resize(n);
    target_.resize(n);
    active_.assign(n, 1.0);
    weights_.assign(n, 0.0);
    pred_.assign(n, tau_);
    for (int tk = 0; tk < dims_[2]; ++tk)
      for (int tj = 0; tj < dims_[1]; ++tj)
        for (int ti = 0; ti < dims_[0]; ++ti) {
          const std::size_t l = local(ti, tj, tk);
          const int i = lo_[0] + ti * stride_, j = lo_[1] + tj * stride_, k = lo_[2] + tk * stride_;
          const std::size_t g = grid.index(i, j, k);
          const Vec3 c = grid.center(i, j, k);
          xs_[l] = c.x();
          ys_[l] = c.y();
          zs_[l] = c.z();
          xf_[l] = static_cast<float>(c.x());
          yf_[l] = static_cast<float>(c.y());
          zf_[l] = static_cast<float>(c.z());
          target_[l] = grid.values[g];
          if (ignore && (*ignore)[g]) active_[l] = 0.0;
        }
  }

  std::size_t count() const { return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]; }

  bool has_interior() const {
    for (std::size_t l = 0; l < count(); ++l)
      if (active_[l] > 0.0 && target_[l] < 0.0) return true;
    return false;
  }

  std::size_t local(int ti, int tj, int tk) const {
    return static_cast<std::size_t>(ti) + dims_[0] * (static_cast<std::size_t>(tj) + dims_[1] * static_cast<std::size_t>(tk));
  }

  /// Truncated predictions of sq over the whole box into pred_.
  void predict_all(const Superquadric& sq) {
    if (has_pred_ && pred_of_ == sq) return;
    predict_into(sq, pred_, nullptr);
    pred_of_ = sq;
    has_pred_ = true;
  }

  /// Freezes the weights at sq. Voxels whose prediction is +tau contribute
  /// the constant part of the cost.
  void reweight(const Superquadric& sq, double sigma2, const FitConfig& cfg) {
    predict_all(sq);
    saturated_cost_ = 0.0;
    for (std::size_t l = 0; l < count(); ++l) {
      weights_[l] = active_[l] * lambda_weight(target_[l], pred_[l], sigma2, cfg);
      saturated_cost_ += weights_[l] * (tau_ - target_[l]) * (tau_ - target_[l]);
    }
  }

  /// Unweighted mean squared residual at sq (first-round sigma^2).
  double mean_sq_residual(const Superquadric& sq) {
    predict_all(sq);
    double num = 0.0, n = 0.0;
    for (std::size_t l = 0; l < count(); ++l) {
      num += active_[l] * (pred_[l] - target_[l]) * (pred_[l] - target_[l]);
      n += active_[l];
    }
    return n > 0.0 ? num / n : 0.0;
  }

  /// sum(lambda r^2) / sum(lambda) with weights recomputed at sq.
  std::pair<double, double> sigma_terms(const Superquadric& sq, double sigma2, const FitConfig& cfg) {
    predict_all(sq);
    double num = 0.0, den = 0.0;
    for (std::size_t l = 0; l < count(); ++l) {
      const double lam = active_[l] * lambda_weight(target_[l], pred_[l], sigma2, cfg);
      num += lam * (pred_[l] - target_[l]) * (pred_[l] - target_[l]);
      den += lam;
    }
    return {num, den};
  }

  /// Weighted SSE of sq under the frozen weights. Voxels outside the
  /// tau-grown box of sq predict exactly +tau and are folded into a constant.
  /// Predictions are written into scratch.
  double cost(const Superquadric& sq, std::vector<float>& scratch) const {
    double c = saturated_cost_;
    predict_into(sq, scratch, &c);
    return std::max(0.0, c);
  }

  /// Adopts predictions computed by cost() for the accepted primitive.
  void accept(const Superquadric& sq, std::vector<float>& scratch) {
    pred_.swap(scratch);
    pred_of_ = sq;
    has_pred_ = true;
  }

  /// Gauss-Newton normal equations J^T W J and J^T W r at the primitive whose
  /// predictions are cached. Forward differences; rows are only formed for
  /// voxels whose prediction is not saturated.
  void normal_equations(Eigen::Matrix<double, kParamCount, kParamCount>& jtj, ParamVec& jtr) {
    jtj.setZero();
    jtr.setZero();
    const float band = static_cast<float>(tau_) * (1.0f - 1e-6f);
    band_.clear();
    for (std::size_t l = 0; l < count(); ++l)
      if (weights_[l] > 0.0 && std::abs(pred_[l]) < band) band_.push_back(l);
    const std::size_t m = band_.size();
    if (m == 0) return;
    bx_.resize(m);
    by_.resize(m);
    bz_.resize(m);
    for (std::size_t b = 0; b < m; ++b) {
      bx_[b] = xs_[band_[b]];
      by_[b] = ys_[band_[b]];
      bz_[b] = zs_[band_[b]];
    }
    jac_.resize(static_cast<Eigen::Index>(m), kParamCount);
    probe_.resize(m);
    base_.resize(m);
    SrdfEvaluator(pred_of_).truncated_batch(bx_.data(), by_.data(), bz_.data(), m, tau_, base_.data());
    for (int p = 0; p < kParamCount; ++p) {
      ParamVec d = ParamVec::Zero();
      d[p] = step_for(p);
      const SrdfEvaluator eval(perturb(pred_of_, d, 1e-12, 1e12));
      eval.truncated_batch(bx_.data(), by_.data(), bz_.data(), m, 1e300, probe_.data());
      for (std::size_t b = 0; b < m; ++b) {
        const double plus = std::clamp(probe_[b], -tau_, tau_);
        jac_(static_cast<Eigen::Index>(b), p) = (plus - base_[b]) / step_for(p);
      }
    }
    Eigen::VectorXd wr(static_cast<Eigen::Index>(m)), w(static_cast<Eigen::Index>(m));
    for (std::size_t b = 0; b < m; ++b) {
      w[b] = weights_[band_[b]];
      wr[b] = w[b] * (base_[b] - target_[band_[b]]);
    }
    jtj = jac_.transpose() * w.asDiagonal() * jac_;
    jtr = jac_.transpose() * wr;
  }

 private:
  // Fills out with truncated predictions; only the tau-grown box of sq is
  // evaluated. When cost is given, adds the weighted change against the
  // all-saturated baseline.
  void predict_into(const Superquadric& sq, std::vector<float>& out, double* cost) const {
    const auto tau = static_cast<float>(tau_);
    out.assign(count(), tau);
    const auto [lo, hi] = grid_->index_range(world_aabb(sq, tau_));
    std::array<int, 3> tlo{}, thi{};
    for (int a = 0; a < 3; ++a) {
      tlo[a] = std::max(0, (lo[a] - lo_[a] + stride_ - 1) / stride_);
      thi[a] = std::min(dims_[a] - 1, hi[a] < lo_[a] ? -1 : (hi[a] - lo_[a]) / stride_);
    }
    if (tlo[0] > thi[0] || tlo[1] > thi[1] || tlo[2] > thi[2]) return;
    const SrdfEvaluator eval(sq);
    const std::size_t run = static_cast<std::size_t>(thi[0] - tlo[0] + 1);
    for (int tk = tlo[2]; tk <= thi[2]; ++tk)
      for (int tj = tlo[1]; tj <= thi[1]; ++tj) {
        const std::size_t l0 = local(tlo[0], tj, tk);
        eval.truncated_batch(&xf_[l0], &yf_[l0], &zf_[l0], run, tau, &out[l0]);
        if (!cost) continue;
        for (std::size_t l = l0; l < l0 + run; ++l) {
          const double t = target_[l];
          *cost += weights_[l] * ((out[l] - t) * (out[l] - t) - (tau_ - t) * (tau_ - t));
        }
      }
  }

  const TsdfGrid* grid_;
  double tau_;
  int stride_;
  std::array<int, 3> lo_{}, dims_{};
  std::vector<double> xs_, ys_, zs_, target_, active_, weights_;
  std::vector<float> xf_, yf_, zf_, pred_;
  Superquadric pred_of_;
  bool has_pred_ = false;
  double saturated_cost_ = 0.0;
  std::vector<std::size_t> band_;
  std::vector<double> bx_, by_, bz_, probe_, base_;
  Eigen::Matrix<double, Eigen::Dynamic, kParamCount> jac_;
};

inline Aabb neighborhood_box(const Superquadric& sq, double scale, double tau) {
  const Aabb box = world_aabb(sq, 0.0);
  const Vec3 c = box.center();
  const Vec3 half = 0.5 * scale * box.extent() + Vec3::Constant(tau);
  return {c - half, c + half};
}

}  // namespace detail

namespace detail {

// One local fit from init. baseline also competes in the final selection.
inline FitResult fit_local(const TsdfGrid& grid, const Superquadric& init, const Superquadric& baseline,
                           const FitConfig& cfg, const std::vector<bool>* ignore, int stride) {
  const double tau = grid.tau;
  const double sigma_floor = cfg.sigma_floor > 0.0 ? cfg.sigma_floor : tau * tau;
  const double min_scale = 0.25 * grid.voxel_size;
  const double max_scale = grid.resolution * grid.voxel_size;

  Superquadric cur = init;
  cur.eps1 = std::clamp(cur.eps1, kEpsMin, kEpsMax);
  cur.eps2 = std::clamp(cur.eps2, kEpsMin, kEpsMax);
  cur.scale = cur.scale.cwiseMax(min_scale);

  {
    const Neighborhood first(grid, neighborhood_box(cur, cfg.neighborhood_scale, tau), ignore, stride);
    if (first.count() == 0 || !first.has_interior())
      throw Error(ErrorCode::EmptyNeighborhood, "no interior voxels near the initial primitive");
  }

  std::vector<Superquadric> iterates{baseline, cur};
  double sigma2 = -1.0;
  double mu = 1e-3;
  int rejects = 0;
  bool converged = false;
  bool stalled = false;
  int outer = 0;
  std::optional<Neighborhood> hood;

  for (; outer < cfg.max_outer_iters; ++outer) {
    hood.emplace(grid, neighborhood_box(cur, cfg.neighborhood_scale, tau), ignore, stride);
    if (sigma2 < 0.0) sigma2 = std::max(hood->mean_sq_residual(cur), sigma_floor);
    hood->reweight(cur, sigma2, cfg);

    const Superquadric round_start = cur;
    std::vector<float> scratch;
    double cost = hood->cost(cur, scratch);
    hood->accept(cur, scratch);
    for (int inner = 0; inner < cfg.max_inner_iters; ++inner) {
      Eigen::Matrix<double, kParamCount, kParamCount> jtj;
      ParamVec jtr;
      hood->normal_equations(jtj, jtr);
      if (jtr.norm() == 0.0) break;
      const double reg = 1e-9 * std::max(jtj.diagonal().maxCoeff(), 1e-300);
      bool accepted = false;
      while (!accepted) {
        Eigen::Matrix<double, kParamCount, kParamCount> a = jtj;
        for (int p = 0; p < kParamCount; ++p) a(p, p) += mu * (jtj(p, p) + reg);
        const ParamVec step = a.ldlt().solve(-jtr);
        if (!step.allFinite()) {
          mu *= 10.0;
          if (++rejects >= cfg.max_rejects) break;
          continue;
        }
        const Superquadric trial = perturb(cur, step, min_scale, max_scale);
        const double trial_cost = hood->cost(trial, scratch);
        if (trial_cost < cost) {
          hood->accept(trial, scratch);
          accepted = true;
          rejects = 0;
          mu = std::max(mu * 0.1, 1e-12);
          cur = trial;
          cost = trial_cost;
          if (step.norm() < cfg.param_tol) break;
        } else {
          if (step.norm() < cfg.param_tol) break;  // at a minimum, not a stall
          mu *= 10.0;
          if (++rejects >= cfg.max_rejects) break;
        }
      }
      if (!accepted || rejects >= cfg.max_rejects) break;
    }
    if (rejects >= cfg.max_rejects) {
      stalled = true;
      iterates.push_back(cur);
      ++outer;
      break;
    }

    // Sigma update with the weights of this round.
    {
      const auto [num, den] = hood->sigma_terms(cur, sigma2, cfg);
      if (den > 0.0) sigma2 = std::max(num / den, sigma_floor);
    }
    iterates.push_back(cur);
    if (param_distance(cur, round_start) < cfg.param_tol) {
      converged = true;
      ++outer;
      break;
    }
  }

  FitResult result;
  result.iters = outer;
  result.converged = converged && !stalled;
  // Final objective: last neighborhood, weights frozen at the last iterate.
  hood.emplace(grid, neighborhood_box(cur, cfg.neighborhood_scale, tau), ignore, stride);
  hood->reweight(cur, sigma2, cfg);
  double best = std::numeric_limits<double>::infinity();
  std::vector<float> scratch;
  for (const auto& it : iterates) {
    const double c = hood->cost(it, scratch);
    if (c < best) {
      best = c;
      result.sq = it;
    }
  }
  result.final_residual = best;
  return result;
}


// Same primitive with the local z axis moved onto local axis `axis` (cyclic
// relabeling of the frame). The exponents swap roles, which is exact only
// when they are equal.
inline Superquadric relabel_axes(const Superquadric& sq, int axis) {
  Superquadric out = sq;
  Mat3 perm = Mat3::Zero();
  for (int c = 0; c < 3; ++c) perm((c + axis + 1) % 3, c) = 1.0;
  for (int c = 0; c < 3; ++c) out.scale[c] = sq.scale[(c + axis + 1) % 3];
  out.rotation = Quat(sq.rotation.toRotationMatrix() * perm).normalized();
  out.eps1 = sq.eps2;
  out.eps2 = sq.eps1;
  return out;
}

// Quarter turn of the cross-section: rotates 45 degrees about local z and
// mirrors eps2 about 1, so square-like sections become diamond-like and back.
inline Superquadric twist_section(const Superquadric& sq) {
  Superquadric out = sq;
  out.rotation = (sq.rotation * Quat(Eigen::AngleAxisd(std::numbers::pi / 4, Vec3::UnitZ()))).normalized();
  out.eps2 = std::clamp(2.0 - sq.eps2, kEpsMin, kEpsMax);
  const double r = 0.5 * (sq.scale.x() + sq.scale.y()) * (sq.eps2 < 1.0 ? std::numbers::sqrt2 : 1.0 / std::numbers::sqrt2);
  out.scale.x() = r;
  out.scale.y() = r;
  return out;
}

// Unweighted truncated squared error on a strided lattice over a fixed box,
// used to rank fits that ended in different neighborhoods.
inline double plain_sse(const TsdfGrid& grid, const Superquadric& sq, const Aabb& box, const std::vector<bool>* ignore,
                        int stride) {
  const SrdfEvaluator eval(sq);
  const auto [lo, hi] = grid.index_range(box);
  double sse = 0.0;
  for (int k = lo[2]; k <= hi[2]; k += stride)
    for (int j = lo[1]; j <= hi[1]; j += stride)
      for (int i = lo[0]; i <= hi[0]; i += stride) {
        const std::size_t g = grid.index(i, j, k);
        if (ignore && (*ignore)[g]) continue;
        const double r = eval.truncated(grid.center(g), grid.tau) - grid.values[g];
        sse += r * r;
      }
  return sse;
}

// Index of the candidate with the lowest plain_sse over the union of the
// candidates' neighborhoods.
inline std::size_t pick_candidate(const TsdfGrid& grid, const std::vector<FitResult>& candidates, const FitConfig& cfg,
                                  const std::vector<bool>* ignore, int stride) {
  Aabb box = neighborhood_box(candidates[0].sq, cfg.neighborhood_scale, grid.tau);
  for (const auto& c : candidates) {
    const Aabb b = neighborhood_box(c.sq, cfg.neighborhood_scale, grid.tau);
    box.lo = box.lo.cwiseMin(b.lo);
    box.hi = box.hi.cwiseMax(b.hi);
  }
  std::size_t best = 0;
  double best_sse = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double sse = plain_sse(grid, candidates[i].sq, box, ignore, stride);
    if (sse < best_sse) {
      best_sse = sse;
      best = i;
    }
  }
  return best;
}

}  // namespace detail

/// Fits one superquadric to the TSDF around init. Each outer round gathers the
/// neighborhood box of the current primitive, freezes the per-voxel weights and
/// runs damped Gauss-Newton on the weighted truncated-SRDF residuals, then
/// updates sigma^2. Returns the iterate with the lowest cost under the final
/// round's neighborhood and weights.
///
/// The search first runs on every coarse_stride-th voxel. There, with
/// axis_restarts, the converged primitive is refit with its z axis moved onto
/// each other local axis and with its cross-section twisted, keeping the
/// candidate with the lowest unweighted truncated error. The winner is then
/// polished on the full lattice.
inline FitResult fit_one(const TsdfGrid& grid, const Superquadric& init, const FitConfig& cfg,
                         const std::vector<bool>* ignore = nullptr) {
  cfg.validate();
  Superquadric start = init;
  start.eps1 = std::clamp(start.eps1, kEpsMin, kEpsMax);
  start.eps2 = std::clamp(start.eps2, kEpsMin, kEpsMax);
  start.scale = start.scale.cwiseMax(0.25 * grid.voxel_size);

  int stride = cfg.coarse_stride;
  if (stride <= 0) stride = std::clamp(static_cast<int>(start.scale.minCoeff() / grid.voxel_size / 6.0), 1, 3);
  std::optional<FitResult> coarse;
  if (stride > 1) {
    try {
      coarse = detail::fit_local(grid, start, start, cfg, ignore, stride);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyNeighborhood) throw;
      stride = 1;
    }
  }
  if (!coarse) coarse = detail::fit_local(grid, start, start, cfg, ignore, 1);

  if (cfg.axis_restarts) {
    // Best-first search over axis assignments and cross-section twists.
    FitResult winner = *coarse;
    for (int round = 0; round < cfg.restart_rounds; ++round) {
      std::vector<FitResult> candidates{winner};
      const Superquadric seeds[3] = {detail::relabel_axes(winner.sq, 0), detail::relabel_axes(winner.sq, 1),
                                     detail::twist_section(winner.sq)};
      for (const auto& seed : seeds) {
        try {
          candidates.push_back(detail::fit_local(grid, seed, start, cfg, ignore, stride));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::EmptyNeighborhood) throw;
        }
      }
      const std::size_t pick = detail::pick_candidate(grid, candidates, cfg, ignore, stride);
      if (pick == 0) break;
      winner = candidates[pick];
    }
    coarse = winner;
  }
  if (stride == 1) return *coarse;
  return detail::fit_local(grid, coarse->sq, start, cfg, ignore, 1);
}

}  // namespace lightsq
