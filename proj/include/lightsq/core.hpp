#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace lightsq {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Error categories surfaced by the library. The CLI maps some of them to
/// process exit codes.
enum class ErrorCode {
  EmptyMesh,
  NonWatertightMesh,
  MalformedFile,
  ResolutionMismatch,
  Io,
  EmptyNeighborhood,
  DegenerateWeights,
  NotAdjacent,
  UnknownPrimitive,
  DegenerateRegion,
  InvalidArgument,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::NonWatertightMesh: return "NonWatertightMesh";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::ResolutionMismatch: return "ResolutionMismatch";
    case ErrorCode::Io: return "Io";
    case ErrorCode::EmptyNeighborhood: return "EmptyNeighborhood";
    case ErrorCode::DegenerateWeights: return "DegenerateWeights";
    case ErrorCode::NotAdjacent: return "NotAdjacent";
    case ErrorCode::UnknownPrimitive: return "UnknownPrimitive";
    case ErrorCode::DegenerateRegion: return "DegenerateRegion";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Axis-aligned box in world coordinates.
struct Aabb {
  Vec3 lo = Vec3::Constant(0.0);
  Vec3 hi = Vec3::Constant(0.0);

  bool contains(const Vec3& p, double eps = 0.0) const {
    return (p.array() >= lo.array() - eps).all() && (p.array() <= hi.array() + eps).all();
  }
  Vec3 extent() const { return hi - lo; }
  Vec3 center() const { return 0.5 * (lo + hi); }
};

/// Worker count, capped by the LIGHTSQ_THREADS environment variable.
inline unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LIGHTSQ_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

/// Runs body(begin, end) over fixed-size chunks of [0, count). Chunk
/// boundaries depend only on count and chunk, never on the worker count, so
/// callers that reduce per-chunk partials in chunk order stay bit-reproducible.
template <typename Body>
void parallel_chunks(std::size_t count, std::size_t chunk, Body&& body) {
  if (count == 0) return;
  chunk = std::max<std::size_t>(1, chunk);
  const std::size_t n_chunks = (count + chunk - 1) / chunk;
  const unsigned workers = std::min<std::size_t>(worker_count(), n_chunks);
  auto run_chunk = [&](std::size_t c) {
    const std::size_t b = c * chunk;
    body(c, b, std::min(count, b + chunk));
  };
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < n_chunks; c += workers) run_chunk(c);
    });
  }
}

}  // namespace lightsq
