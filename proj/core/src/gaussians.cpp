// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/gaussians.hpp"

#include <cmath>
#include <sstream>

#include "tokensplat/autodiff/ops.hpp"
#include "tokensplat/errors.hpp"

namespace tokensplat {

namespace {

constexpr double kQuaternionFloor = 1e-8;

template <typename Real>
ad::Tensor<Real> constant_rows(std::span<const double> rows, std::size_t count, std::size_t column,
                               std::size_t width) {
  std::vector<Real> values(count * width);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t k = 0; k < width; ++k) values[i * width + k] = static_cast<Real>(rows[i * kGaussianColumns + column + k]);
  return ad::Tensor<Real>::from_values({count, width}, std::move(values));
}

}  // namespace

template <typename Real>
GaussianSet<Real> GaussianSet<Real>::empty() {
  return from_rows({}, {});
}

template <typename Real>
GaussianSet<Real> GaussianSet<Real>::from_rows(std::span<const double> rows, std::vector<std::int32_t> token_id) {
  if (rows.size() % kGaussianColumns != 0) throw ConfigError("GaussianSet: row data is not a multiple of 14");
  const std::size_t m = rows.size() / kGaussianColumns;
  if (!token_id.empty() && token_id.size() != m) throw ConfigError("GaussianSet: token_id length mismatch");
  GaussianSet g;
  g.means = constant_rows<Real>(rows, m, kColX, 3);
  g.colors = constant_rows<Real>(rows, m, kColR, 3);
  g.scales = constant_rows<Real>(rows, m, kColScale, 3);
  g.opacities = constant_rows<Real>(rows, m, kColOpacity, 1);
  g.rotations = constant_rows<Real>(rows, m, kColQuat, 4);
  g.token_id = std::move(token_id);
  return g;
}

template <typename Real>
std::vector<double> GaussianSet<Real>::to_rows() const {
  const std::size_t m = size();
  std::vector<double> rows(m * kGaussianColumns);
  auto put = [&](const ad::Tensor<Real>& t, std::size_t column, std::size_t width) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < width; ++k) rows[i * kGaussianColumns + column + k] = static_cast<double>(t[i * width + k]);
  };
  if (m) {
    put(means, kColX, 3);
    put(colors, kColR, 3);
    put(scales, kColScale, 3);
    put(opacities, kColOpacity, 1);
    put(rotations, kColQuat, 4);
  }
  return rows;
}

template <typename Real>
GaussianSet<Real> GaussianSet<Real>::detach() const {
  GaussianSet g;
  g.means = means.detach();
  g.colors = colors.detach();
  g.scales = scales.detach();
  g.opacities = opacities.detach();
  g.rotations = rotations.detach();
  g.token_id = token_id;
  return g;
}

template <typename Real>
void GaussianSet<Real>::validate(const ActivationConfig& config, double tolerance) const {
  const auto rows = to_rows();
  for (std::size_t i = 0; i < size(); ++i) {
    const double* r = rows.data() + i * kGaussianColumns;
    auto fail = [&](const char* what) {
      std::ostringstream msg;
      msg << "GaussianSet: row " << i << ' ' << what;
      throw NumericError(msg.str());
    };
    for (std::size_t k = 0; k < kGaussianColumns; ++k) {
      if (!std::isfinite(r[k])) fail("has a non-finite value");
    }
    for (std::size_t k = 0; k < 3; ++k) {
      if (r[kColR + k] < -tolerance || r[kColR + k] > 1 + tolerance) fail("colour outside [0,1]");
      const double s = r[kColScale + k];
      if (s < config.scale_min * (1 - tolerance) || s > config.scale_max * (1 + tolerance)) fail("scale out of bounds");
    }
    if (r[kColOpacity] < -tolerance || r[kColOpacity] > 1 + tolerance) fail("opacity outside [0,1]");
    double qn = 0;
    for (std::size_t k = 0; k < 4; ++k) qn += r[kColQuat + k] * r[kColQuat + k];
    if (std::abs(std::sqrt(qn) - 1) > tolerance) fail("quaternion is not unit length");
  }
}

template <typename Real>
ad::Tensor<Real> normalize_quaternions(const ad::Tensor<Real>& q) {
  if (q.rank() != 2 || q.shape()[1] != 4) throw ShapeError("normalize_quaternions: expected (M,4), got " + ad::shape_string(q.shape()));
  const std::size_t m = q.shape()[0];
  auto norms = std::make_shared<std::vector<Real>>(m);
  std::vector<Real> values(m * 4);
  for (std::size_t i = 0; i < m; ++i) {
    const Real* r = q.values().data() + i * 4;
    Real n = 0;
    for (int k = 0; k < 4; ++k) n += r[k] * r[k];
    n = std::sqrt(n);
    (*norms)[i] = n;
    if (n < Real(kQuaternionFloor)) {
      values[i * 4] = 1;
    } else {
      for (int k = 0; k < 4; ++k) values[i * 4 + k] = r[k] / n;
    }
  }
  return ad::make_result<Real>("normalize_quaternions", {m, 4}, std::move(values), {q}, [norms, m](ad::Node<Real>& self) {
    auto gx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const Real n = (*norms)[i];
      if (n < Real(kQuaternionFloor)) continue;
      const Real* y = self.value.data() + i * 4;
      const Real* g = self.grad.data() + i * 4;
      Real dot = 0;
      for (int k = 0; k < 4; ++k) dot += y[k] * g[k];
      for (int k = 0; k < 4; ++k) gx[i * 4 + k] += (g[k] - y[k] * dot) / n;
    }
  });
}

template <typename Real>
GaussianSet<Real> activate(const ad::Tensor<Real>& raw, const ActivationConfig& config,
                           std::vector<std::int32_t> token_id) {
  if (raw.rank() != 2 || raw.shape()[1] != kGaussianColumns) {
    throw ShapeError("activate: expected (M,14) raw Gaussians, got " + ad::shape_string(raw.shape()));
  }
  const std::size_t m = raw.shape()[0];
  for (std::size_t i = 0; i < raw.numel(); ++i) {
    if (!std::isfinite(static_cast<double>(raw[i]))) {
      std::ostringstream msg;
      msg << "activate: non-finite raw value at row " << i / kGaussianColumns << ", column " << i % kGaussianColumns;
      throw NumericError(msg.str());
    }
  }
  if (!token_id.empty() && token_id.size() != m) throw ConfigError("activate: token_id length mismatch");

  using ad::Tensor;
  const Tensor<Real> xyz = ad::slice(raw, 1, kColX, kColX + 3);
  const Tensor<Real> offset =
      Tensor<Real>::from_values({1, 3}, {Real(0), Real(0), static_cast<Real>(config.z_offset)});
  // Odd and monotone: sign(x) (exp|x| - 1).
  const Tensor<Real> magnitude = ad::add_scalar(ad::exp(ad::abs(xyz)), Real(-1));

  GaussianSet<Real> g;
  g.means = ad::add(ad::mul(ad::sign(xyz), magnitude), offset);
  auto squash = [](const Tensor<Real>& x) { return ad::mul_scalar(ad::add_scalar(ad::tanh(x), Real(1)), Real(0.5)); };
  g.colors = squash(ad::slice(raw, 1, kColR, kColR + 3));
  g.opacities = squash(ad::slice(raw, 1, kColOpacity, kColOpacity + 1));
  auto log_scale = ad::slice(raw, 1, kColScale, kColScale + 3);
  if (config.log_scale_offset != 0) log_scale = ad::add_scalar(log_scale, static_cast<Real>(config.log_scale_offset));
  g.scales = ad::exp(ad::clamp(log_scale, static_cast<Real>(std::log(config.scale_min)),
                               static_cast<Real>(std::log(config.scale_max))));
  g.rotations = normalize_quaternions(ad::slice(raw, 1, kColQuat, kColQuat + 4));
  g.token_id = std::move(token_id);
  return g;
}

Eigen::Matrix3d quaternion_to_rotation(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Eigen::Matrix3d covariance(const Eigen::Vector4d& q, const Eigen::Vector3d& s) {
  const Eigen::Matrix3d m = quaternion_to_rotation(q) * s.asDiagonal();
  return m * m.transpose();
}

template struct GaussianSet<float>;
template struct GaussianSet<double>;
template GaussianSet<float> activate(const ad::Tensor<float>&, const ActivationConfig&, std::vector<std::int32_t>);
template GaussianSet<double> activate(const ad::Tensor<double>&, const ActivationConfig&, std::vector<std::int32_t>);
template ad::Tensor<float> normalize_quaternions(const ad::Tensor<float>&);
template ad::Tensor<double> normalize_quaternions(const ad::Tensor<double>&);

}  // namespace tokensplat
