#include "maskprobe/types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "maskprobe/errors.hpp"

namespace maskprobe {

namespace {

bool finite(const Vec3& v) { return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z); }

}  // namespace

PointCloud::PointCloud(std::vector<Point> points) : points_(std::move(points)) {
  for (std::size_t j = 0; j < points_.size(); ++j) {
    const Point& p = points_[j];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw InvalidArgument(fmt::format("point {} has a non-finite coordinate", j));
    }
    if (!(p.intensity >= 0.0f && p.intensity <= 1.0f)) {
      throw InvalidArgument(fmt::format("point {} intensity {} outside [0, 1]", j, p.intensity));
    }
  }
}

PointCloud make_trusted_cloud(std::vector<Point> points) {
  return PointCloud(PointCloud::Trusted{}, std::move(points));
}

double normalize_yaw(double angle) {
  if (!std::isfinite(angle)) {
    throw InvalidArgument("yaw angle must be finite");
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(angle + std::numbers::pi, two_pi);
  if (wrapped < 0.0) {
    wrapped += two_pi;
  }
  wrapped -= std::numbers::pi;
  // fmod can land exactly on +pi after the shift for inputs just below -pi.
  if (wrapped >= std::numbers::pi) {
    wrapped -= two_pi;
  }
  return wrapped;
}

Box3D::Box3D(Vec3 center, Vec3 dims, double yaw) : center_(center), dims_(dims) {
  if (!finite(center) || !finite(dims)) {
    throw InvalidArgument("box center and dims must be finite");
  }
  if (!(dims.x > 0.0 && dims.y > 0.0 && dims.z > 0.0)) {
    throw InvalidArgument(fmt::format("box dims must be positive, got ({}, {}, {})", dims.x, dims.y, dims.z));
  }
  yaw_ = normalize_yaw(yaw);
}

Vec3 Box3D::to_local(const Vec3& p) const noexcept {
  const double c = std::cos(yaw_);
  const double s = std::sin(yaw_);
  const double dx = p.x - center_.x;
  const double dy = p.y - center_.y;
  return {c * dx + s * dy, -s * dx + c * dy, p.z - center_.z};
}

Vec3 Box3D::to_world(const Vec3& local) const noexcept {
  const double c = std::cos(yaw_);
  const double s = std::sin(yaw_);
  return {center_.x + c * local.x - s * local.y, center_.y + s * local.x + c * local.y, center_.z + local.z};
}

bool Box3D::contains(const Vec3& p, double tolerance) const noexcept {
  const Vec3 l = to_local(p);
  return std::abs(l.x) <= 0.5 * dims_.x + tolerance && std::abs(l.y) <= 0.5 * dims_.y + tolerance &&
         std::abs(l.z) <= 0.5 * dims_.z + tolerance;
}

Box3D Box3D::scaled(double factor) const {
  return Box3D(center_, {dims_.x * factor, dims_.y * factor, dims_.z * factor}, yaw_);
}

Detection::Detection(Label label, double confidence, Box3D box)
    : label_(std::move(label)), confidence_(confidence), box_(box) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw InvalidArgument(fmt::format("detection confidence {} outside [0, 1]", confidence));
  }
}

SamplingMask::SamplingMask(std::vector<std::uint8_t> keep) : keep_(std::move(keep)) {
  for (auto& b : keep_) {
    if (b > 1) {
      throw InvalidArgument("mask entries must be 0 or 1");
    }
  }
}

SamplingMask::SamplingMask(std::size_t size, bool value) : keep_(size, value ? 1 : 0) {}

std::size_t SamplingMask::kept_count() const noexcept {
  return static_cast<std::size_t>(std::count(keep_.begin(), keep_.end(), std::uint8_t{1}));
}

AttributionMap::AttributionMap(Detection target, std::vector<double> scores,
                               std::vector<std::uint32_t> visible_counts, std::uint32_t iterations)
    : target_(std::move(target)),
      scores_(std::move(scores)),
      visible_counts_(std::move(visible_counts)),
      iterations_(iterations) {
  if (iterations_ == 0) {
    throw InvalidArgument("attribution map needs at least one iteration");
  }
  if (scores_.size() != visible_counts_.size()) {
    throw InvalidArgument(
        fmt::format("scores ({}) and visible counts ({}) differ in length", scores_.size(), visible_counts_.size()));
  }
  for (std::size_t j = 0; j < scores_.size(); ++j) {
    const double s = scores_[j];
    if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
      throw InvalidArgument(fmt::format("score {} at point {} outside [0, 1]", s, j));
    }
    if (visible_counts_[j] > iterations_) {
      throw InvalidArgument(fmt::format("point {} visible {} times in {} iterations", j, visible_counts_[j], iterations_));
    }
    if (visible_counts_[j] == 0 && s != 0.0) {
      throw InvalidArgument(fmt::format("unobserved point {} has non-zero score", j));
    }
  }
}

}  // namespace maskprobe
