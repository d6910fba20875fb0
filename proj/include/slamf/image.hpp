#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "slamf/core.hpp"

namespace slamf {

// Row-major grid of intensities addressed as (u, v) = (column, row).
struct ImageRaster {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  ImageRaster() = default;
  ImageRaster(int w, int h, double fill = 0.0) : width(w), height(h) {
    if (w < 2 || h < 2) throw std::invalid_argument("ImageRaster: dimensions must be >= 2");
    data.assign(static_cast<std::size_t>(w) * h, fill);
  }

  double& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  double at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
};

// Standard four-neighbor bilinear interpolation; empty outside
// [0, w-1] x [0, h-1]. No clamping: out-of-bounds samples must invalidate
// the whole evaluation rather than silently corrupt it.
inline std::optional<double> bilinear_sample(const ImageRaster& img, const Vec2& p) {
  const double u = p.x(), v = p.y();
  if (!(u >= 0.0 && u <= img.width - 1.0 && v >= 0.0 && v <= img.height - 1.0)) {
    return std::nullopt;
  }
  int u0 = static_cast<int>(std::floor(u));
  int v0 = static_cast<int>(std::floor(v));
  u0 = std::min(u0, img.width - 2);
  v0 = std::min(v0, img.height - 2);
  const double fu = u - u0, fv = v - v0;
  const double i00 = img.at(u0, v0), i10 = img.at(u0 + 1, v0);
  const double i01 = img.at(u0, v0 + 1), i11 = img.at(u0 + 1, v0 + 1);
  return (1 - fu) * (1 - fv) * i00 + fu * (1 - fv) * i10 + (1 - fu) * fv * i01 + fu * fv * i11;
}

inline constexpr double kGradientStep = 0.5;  // half-pixel central difference

// Central differences of the bilinear interpolant; empty within one pixel of
// the border.
inline std::optional<Vec2> image_gradient(const ImageRaster& img, const Vec2& p) {
  const double u = p.x(), v = p.y();
  if (!(u >= 1.0 && u <= img.width - 2.0 && v >= 1.0 && v <= img.height - 2.0)) {
    return std::nullopt;
  }
  const auto up = bilinear_sample(img, Vec2(u + kGradientStep, v));
  const auto um = bilinear_sample(img, Vec2(u - kGradientStep, v));
  const auto vp = bilinear_sample(img, Vec2(u, v + kGradientStep));
  const auto vm = bilinear_sample(img, Vec2(u, v - kGradientStep));
  if (!up || !um || !vp || !vm) return std::nullopt;
  return Vec2((*up - *um) / (2.0 * kGradientStep), (*vp - *vm) / (2.0 * kGradientStep));
}

// Intensity lookup abstraction so factors can run on either a sampled raster
// or an analytic field with exact derivatives.
class IntensitySource {
 public:
  virtual ~IntensitySource() = default;
  virtual std::optional<double> value(const Vec2& p) const = 0;
  virtual std::optional<Vec2> gradient(const Vec2& p) const = 0;
};

class RasterSource final : public IntensitySource {
 public:
  explicit RasterSource(ImageRaster raster) : raster_(std::move(raster)) {}
  std::optional<double> value(const Vec2& p) const override {
    return bilinear_sample(raster_, p);
  }
  std::optional<Vec2> gradient(const Vec2& p) const override {
    return image_gradient(raster_, p);
  }
  const ImageRaster& raster() const { return raster_; }

 private:
  ImageRaster raster_;
};

struct GaussianBlob {
  Vec2 center = Vec2::Zero();
  double sigma = 1.0;
  double amplitude = 1.0;
};

// Smooth field as a sum of isotropic Gaussians with closed-form gradient;
// defined on the whole plane.
class GaussianFieldSource final : public IntensitySource {
 public:
  explicit GaussianFieldSource(std::vector<GaussianBlob> blobs) : blobs_(std::move(blobs)) {}

  std::optional<double> value(const Vec2& p) const override {
    double sum = 0.0;
    for (const auto& b : blobs_) {
      sum += b.amplitude * std::exp(-(p - b.center).squaredNorm() / (2.0 * b.sigma * b.sigma));
    }
    return sum;
  }

  std::optional<Vec2> gradient(const Vec2& p) const override {
    Vec2 grad = Vec2::Zero();
    for (const auto& b : blobs_) {
      const Vec2 d = p - b.center;
      const double g =
          b.amplitude * std::exp(-d.squaredNorm() / (2.0 * b.sigma * b.sigma));
      grad += -g / (b.sigma * b.sigma) * d;
    }
    return grad;
  }

  const std::vector<GaussianBlob>& blobs() const { return blobs_; }

 private:
  std::vector<GaussianBlob> blobs_;
};

// Everywhere-defined constant intensity with zero gradient. Useful as the
// host-frame side of a direct-alignment residual when only the single sampled
// intensity of the host pixel matters.
class ConstantSource final : public IntensitySource {
 public:
  explicit ConstantSource(double value) : value_(value) {}

  std::optional<double> value(const Vec2&) const override { return value_; }
  std::optional<Vec2> gradient(const Vec2&) const override { return Vec2::Zero(); }

 private:
  double value_;
};

}  // namespace slamf
