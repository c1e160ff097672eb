// SPDX-License-Identifier: Apache-2.0
#include "isac/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace isac {

namespace {

constexpr std::uint64_t kCommStream = 1;

bool in_front(double angle) { return std::abs(angle) < kPi / 2.0; }

Point2 mirror(const RoomGeometry& room, int wall, Point2 p) {
  switch (wall) {
    case 0: return {-p.x, p.y};
    case 1: return {2.0 * room.width - p.x, p.y};
    case 2: return {p.x, -p.y};
    default: return {p.x, 2.0 * room.depth - p.y};
  }
}

}  // namespace

double RoomGeometry::angle_from_ap(Point2 p) const {
  return wrap_angle(std::atan2(p.y - ap_position.y, p.x - ap_position.x) - ap_boresight);
}

void RoomGeometry::validate() const {
  if (!(width > 0.0) || !(depth > 0.0)) throw ScenarioError("room dimensions must be positive");
  if (!strictly_contains(ap_position)) throw ScenarioError("AP must lie strictly inside the room");
  if (!(wall_reflectivity >= 0.0 && wall_reflectivity <= 1.0))
    throw ScenarioError("wall reflectivity must be in [0, 1]");
}

const Target& Scene::ue() const { return targets[ue_index()]; }

std::size_t Scene::ue_index() const {
  auto it = std::find_if(targets.begin(), targets.end(), [](const Target& t) { return t.is_ue; });
  if (it == targets.end()) throw ScenarioError("scene has no UE");
  return static_cast<std::size_t>(it - targets.begin());
}

std::size_t PathSet::target_nlos_count() const {
  return static_cast<std::size_t>(std::count_if(paths.begin(), paths.end(), [](const Path& p) {
    return p.kind == PathKind::nlos_single_bounce && p.origin == PathOrigin::target;
  }));
}

MismatchTruth MismatchTruth::draw(std::size_t count, double max_theta, double max_tau, Rng& rng) {
  MismatchTruth truth;
  truth.offsets.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ModeOffset o;
    o.delta_theta = max_theta > 0.0 ? rng.uniform(-max_theta, max_theta) : 0.0;
    o.delta_tau = max_tau > 0.0 ? rng.uniform(-max_tau, max_tau) : 0.0;
    truth.offsets.push_back(o);
  }
  return truth;
}

Scene build_scene(const RoomGeometry& geometry, const std::vector<Target>& targets, std::uint64_t seed,
                  const PropagationConfig& propagation) {
  geometry.validate();
  if (targets.empty()) throw ScenarioError("scene needs at least one target");
  const auto ues = std::count_if(targets.begin(), targets.end(), [](const Target& t) { return t.is_ue; });
  if (ues != 1) throw ScenarioError("scene needs exactly one UE, got " + std::to_string(ues));
  for (const auto& t : targets) {
    if (!geometry.contains(t.position)) throw ScenarioError("target outside the room");
    if (t.position == geometry.ap_position) throw ScenarioError("target coincides with the AP");
    if (!(t.rcs > 0.0)) throw ScenarioError("target RCS must be positive");
  }
  if (propagation.n_antennas < 1 || !(propagation.carrier_freq > 0.0))
    throw ScenarioError("invalid propagation config");
  return Scene{geometry, targets, propagation, seed};
}

bool wall_reflection_point(const RoomGeometry& room, int wall, Point2 from, Point2 to, Point2& reflection) {
  const Point2 image = mirror(room, wall, to);
  // Parametrise from -> image and intersect with the wall line.
  double t = 0.0;
  if (wall < 2) {
    const double wx = wall == 0 ? 0.0 : room.width;
    const double dx = image.x - from.x;
    if (dx == 0.0) return false;
    t = (wx - from.x) / dx;
  } else {
    const double wy = wall == 2 ? 0.0 : room.depth;
    const double dy = image.y - from.y;
    if (dy == 0.0) return false;
    t = (wy - from.y) / dy;
  }
  if (!(t > 0.0 && t < 1.0)) return false;
  reflection = {from.x + t * (image.x - from.x), from.y + t * (image.y - from.y)};
  if (wall < 2) return reflection.y >= 0.0 && reflection.y <= room.depth;
  return reflection.x >= 0.0 && reflection.x <= room.width;
}

PathSet trace_comm_paths(const Scene& scene) {
  const auto& room = scene.geometry;
  const double lambda = scene.propagation.wavelength();
  const Point2 ap = room.ap_position;
  const Target& ue = scene.ue();
  Rng rng(mix_seed(scene.seed, kCommStream));

  PathSet set;
  std::vector<double> large_scale;

  if (!scene.propagation.los_blocked) {
    const double d0 = distance(ap, ue.position);
    const double k = std::pow(10.0, scene.propagation.rician_k_db / 10.0);
    const Complex specular = std::polar(std::sqrt(k / (k + 1.0)), -2.0 * kPi * d0 / lambda);
    const Complex diffuse = std::sqrt(1.0 / (k + 1.0)) * rng.complex_normal(1.0);
    const double amp = lambda / (4.0 * kPi * d0);
    const double angle = room.angle_from_ap(ue.position);
    if (in_front(angle)) {
      set.paths.push_back({amp * (specular + diffuse), angle, d0 / kSpeedOfLight, PathKind::los, PathOrigin::direct, -1});
      large_scale.push_back(amp);
    }
  }

  for (std::size_t i = 0; i < scene.targets.size(); ++i) {
    const Target& t = scene.targets[i];
    if (t.is_ue) continue;
    const double d1 = distance(ap, t.position);
    const double d2 = distance(t.position, ue.position);
    const double angle = room.angle_from_ap(t.position);
    const double phase = rng.phase();
    if (!in_front(angle) || d2 == 0.0) continue;
    // Bistatic radar equation, amplitude form.
    const double amp = std::sqrt(t.rcs * lambda * lambda / (std::pow(4.0 * kPi, 3) * d1 * d1 * d2 * d2));
    set.paths.push_back({std::polar(amp, phase), angle, (d1 + d2) / kSpeedOfLight, PathKind::nlos_single_bounce,
                         PathOrigin::target, static_cast<int>(i)});
    large_scale.push_back(amp);
  }

  for (int wall = 0; wall < 4; ++wall) {
    Point2 hit;
    const double phase = rng.phase();
    if (!wall_reflection_point(room, wall, ap, ue.position, hit)) continue;
    const double angle = room.angle_from_ap(hit);
    if (!in_front(angle)) continue;
    const double length = distance(ap, hit) + distance(hit, ue.position);
    const double amp = room.wall_reflectivity * lambda / (4.0 * kPi * length);
    set.paths.push_back({std::polar(amp, phase), angle, length / kSpeedOfLight, PathKind::nlos_single_bounce,
                         PathOrigin::wall, wall});
    large_scale.push_back(amp);
  }

  // E|alpha_p|^2 = A_p^2, so sum_p A_p^2 = P/N gives E|h[k]|^2 = N with unit-modulus steering vectors.
  double energy = 0.0;
  for (double a : large_scale) energy += a * a;
  if (energy > 0.0) {
    const double p = static_cast<double>(set.size());
    const double scale = std::sqrt(p / scene.propagation.n_antennas / energy);
    for (auto& path : set.paths) path.gain *= scale;
  }
  return set;
}

PathSet trace_sensing_paths(const Scene& scene) {
  const auto& room = scene.geometry;
  const double lambda = scene.propagation.wavelength();
  const double n = scene.propagation.n_antennas;
  PathSet set;
  for (std::size_t i = 0; i < scene.targets.size(); ++i) {
    const Target& t = scene.targets[i];
    const double angle = room.angle_from_ap(t.position);
    if (!in_front(angle)) continue;
    const double d = distance(room.ap_position, t.position);
    const double amp = std::sqrt(lambda * lambda * n * n / std::pow(4.0 * kPi * d, 4) * t.rcs);
    set.paths.push_back({std::polar(amp, t.random_phase), angle, 2.0 * d / kSpeedOfLight,
                         t.is_ue ? PathKind::los : PathKind::nlos_single_bounce, PathOrigin::target,
                         static_cast<int>(i)});
  }
  return set;
}

PathSet inject_mismatch(const PathSet& paths, const MismatchTruth& truth) {
  if (truth.offsets.size() != paths.target_nlos_count())
    throw ScenarioError("mismatch truth covers " + std::to_string(truth.offsets.size()) + " paths, expected " +
                        std::to_string(paths.target_nlos_count()));
  PathSet out = paths;
  std::size_t next = 0;
  for (auto& p : out.paths) {
    if (p.kind != PathKind::nlos_single_bounce || p.origin != PathOrigin::target) continue;
    const ModeOffset& o = truth.offsets[next++];
    if (!std::isfinite(o.delta_theta) || !std::isfinite(o.delta_tau)) throw ScenarioError("non-finite mismatch");
    p.angle += o.delta_theta;
    p.delay += o.delta_tau;
  }
  return out;
}

}  // namespace isac
