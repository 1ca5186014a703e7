#pragma once

#include "lightsq/isosurface.hpp"
#include "lightsq/serialization.hpp"

#include <atomic>
#include <deque>
#include <mutex>
#include <shared_mutex>

namespace lightsq {

/// Thrown when a mutation is requested while another one is running.
struct SessionBusy : std::runtime_error {
  SessionBusy() : std::runtime_error("a refinement is already in flight") {}
};

/// Loaded grid plus a bounded undo stack of abstractions whose top is the
/// current state. Reads take snapshots; at most one mutation runs at a time.
class Session {
 public:
  static constexpr std::size_t kUndoDepth = 32;

  Session(TsdfGrid grid, Abstraction abs, MetricConfig metrics = {}) : grid_(std::move(grid)), metric_cfg_(metrics) {
    stack_.push_back(std::move(abs));
  }

  const TsdfGrid& grid() const { return grid_; }
  const MetricConfig& metric_config() const { return metric_cfg_; }

  Abstraction current() const {
    std::shared_lock lock(mu_);
    return stack_.back();
  }

  std::size_t depth() const {
    std::shared_lock lock(mu_);
    return stack_.size();
  }

  /// Runs multiscale refinement on the current state and pushes the result.
  Abstraction refine(int id, int splits) {
    Guard guard(busy_);
    const Abstraction base = current();
    RefineResult r = multiscale_refine(base, grid_, id, splits);
    std::unique_lock lock(mu_);
    stack_.push_back(std::move(r.abstraction));
    while (stack_.size() > kUndoDepth) stack_.pop_front();
    return stack_.back();
  }

  /// Pops the current state; false when only the initial state is left.
  bool undo() {
    Guard guard(busy_);
    std::unique_lock lock(mu_);
    if (stack_.size() <= 1) return false;
    stack_.pop_back();
    return true;
  }

  TriangleMesh mesh(int id, int subdivisions = 24) const {
    const Abstraction abs = current();
    const auto* p = abs.find(id);
    if (!p) throw Error(ErrorCode::UnknownPrimitive, "no primitive with id " + std::to_string(id));
    return tessellate(p->sq, subdivisions);
  }

  const TriangleMesh& reference_mesh() const {
    std::call_once(iso_once_, [&] { iso_ = isosurface(grid_); });
    return iso_;
  }

  MetricReport metrics() const { return evaluate(grid_, current(), metric_cfg_); }

 private:
  struct Guard {
    explicit Guard(std::atomic<bool>& flag) : flag_(flag) {
      if (flag_.exchange(true)) throw SessionBusy();
    }
    ~Guard() { flag_.store(false); }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;
    std::atomic<bool>& flag_;
  };

  TsdfGrid grid_;
  MetricConfig metric_cfg_;
  std::deque<Abstraction> stack_;
  mutable std::shared_mutex mu_;
  std::atomic<bool> busy_{false};
  mutable std::once_flag iso_once_;
  mutable TriangleMesh iso_;
};

}  // namespace lightsq
