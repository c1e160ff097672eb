// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "isac/common.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace isac {

class ScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Rectangular room with one corner at the origin, x along the width, y along the depth.
struct RoomGeometry {
  double width = 5.0;
  double depth = 7.0;
  Point2 ap_position{0.1, 3.5};
  double ap_boresight = 0.0;       // radians, world frame
  double wall_reflectivity = 0.4;  // amplitude factor

  bool contains(Point2 p) const { return p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= depth; }
  bool strictly_contains(Point2 p) const { return p.x > 0.0 && p.x < width && p.y > 0.0 && p.y < depth; }
  double diagonal() const { return std::hypot(width, depth); }

  /// Arrival azimuth at the AP of a wave coming from point p, relative to boresight.
  double angle_from_ap(Point2 p) const;

  void validate() const;

  friend bool operator==(const RoomGeometry&, const RoomGeometry&) = default;
};

struct Target {
  Point2 position;
  double rcs = 1.0;           // m^2
  bool is_ue = false;
  double random_phase = 0.0;  // radians, Tx/Rx circuitry and Doppler phase of the echo

  friend bool operator==(const Target&, const Target&) = default;
};

/// Radio parameters the path tracer needs besides geometry.
struct PropagationConfig {
  double carrier_freq = 60e9;
  int n_antennas = 8;
  double rician_k_db = 4.0;
  bool los_blocked = false;

  double wavelength() const { return kSpeedOfLight / carrier_freq; }

  friend bool operator==(const PropagationConfig&, const PropagationConfig&) = default;
};

struct Scene {
  RoomGeometry geometry;
  std::vector<Target> targets;
  PropagationConfig propagation;
  std::uint64_t seed = 0;

  const Target& ue() const;
  std::size_t ue_index() const;

  friend bool operator==(const Scene&, const Scene&) = default;
};

enum class PathKind { los, nlos_single_bounce };

/// What produced a path; wall indices are 0:x=0, 1:x=width, 2:y=0, 3:y=depth.
enum class PathOrigin { direct, target, wall };

struct Path {
  Complex gain;
  double angle = 0.0;  // radians relative to boresight
  double delay = 0.0;  // seconds
  PathKind kind = PathKind::los;
  PathOrigin origin = PathOrigin::direct;
  int source = -1;  // target or wall index

  friend bool operator==(const Path&, const Path&) = default;
};

struct PathSet {
  std::vector<Path> paths;

  std::size_t size() const { return paths.size(); }
  bool empty() const { return paths.empty(); }
  /// Number of non-LoS paths scattered by a target (the ones mismatch is injected on).
  std::size_t target_nlos_count() const;

  friend bool operator==(const PathSet&, const PathSet&) = default;
};

struct ModeOffset {
  double delta_theta = 0.0;  // radians
  double delta_tau = 0.0;    // seconds
};

/// Ground-truth C&S mismatch, one entry per NLoS target path in path order.
struct MismatchTruth {
  std::vector<ModeOffset> offsets;

  static MismatchTruth zeros(std::size_t count) { return {std::vector<ModeOffset>(count)}; }
  static MismatchTruth draw(std::size_t count, double max_theta, double max_tau, Rng& rng);
};

Scene build_scene(const RoomGeometry& geometry, const std::vector<Target>& targets, std::uint64_t seed,
                  const PropagationConfig& propagation = {});

/// Image-method reflection of `from` -> wall -> `to`. Returns false when the specular point misses the wall.
bool wall_reflection_point(const RoomGeometry& room, int wall, Point2 from, Point2 to, Point2& reflection);

/// Bistatic AP -> UE paths: LoS plus one bounce off every non-UE target and every visible wall.
/// Gains are scaled so that E[|h[k]|^2] = N for the assembled channel.
PathSet trace_comm_paths(const Scene& scene);

/// Monostatic AP -> target -> AP echoes, one per target, radar-equation amplitudes.
PathSet trace_sensing_paths(const Scene& scene);

/// Shifts the angle/delay of every target-scattered NLoS path by the matching truth entry.
PathSet inject_mismatch(const PathSet& paths, const MismatchTruth& truth);

}  // namespace isac
