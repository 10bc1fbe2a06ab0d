// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/io/flow.hpp"

#include <map>
#include <ostream>

#include "tokensplat/errors.hpp"
#include "tokensplat/io/config.hpp"

namespace tokensplat::io {

template <typename Real>
std::vector<FlowRow> export_flow(const net::Model<Real>& model, std::span<const ad::Tensor<Real>> images,
                                 std::span<const Camera> cameras, const std::vector<double>& timestamps) {
  if (model.bank.n_dynamic() == 0) throw ConfigError("export_flow: the model has no dynamic tokens");
  if (timestamps.size() < 2) throw ConfigError("export_flow: needs at least two timestamps");
  ad::NoGradGuard guard;
  const auto encoding = model.encode_views(images, cameras);
  std::vector<FlowRow> rows;
  for (double t : timestamps) {
    const auto g = model.gaussians_from(encoding, t);
    const auto means = g.means.values();
    const auto opacity = g.opacities.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      rows.push_back({i, g.token_id[i], t, static_cast<double>(means[i * 3]), static_cast<double>(means[i * 3 + 1]),
                      static_cast<double>(means[i * 3 + 2]), static_cast<double>(opacity[i])});
    }
  }
  return rows;
}

void write_flow_csv(std::ostream& out, const std::vector<FlowRow>& rows) {
  out << "gaussian_index,token_id,t,x,y,z,opacity\n";
  for (const auto& r : rows) {
    out << r.gaussian_index << ',' << r.token_id << ',' << format_double(r.t) << ',' << format_double(r.x) << ','
        << format_double(r.y) << ',' << format_double(r.z) << ',' << format_double(r.opacity) << '\n';
  }
}

FlowSummary summarize_flow(const std::vector<FlowRow>& rows, std::size_t n_static, const Eigen::Vector3d& reference,
                           double min_opacity) {
  FlowSummary s;
  if (rows.empty()) return s;
  double t0 = rows.front().t, t1 = rows.front().t;
  for (const auto& r : rows) {
    t0 = std::min(t0, r.t);
    t1 = std::max(t1, r.t);
  }
  std::map<std::size_t, const FlowRow*> first, last;
  for (const auto& r : rows) {
    if (r.t == t0 && !first.count(r.gaussian_index)) first[r.gaussian_index] = &r;
    if (r.t == t1) last[r.gaussian_index] = &r;
  }
  for (const auto& [i, a] : first) {
    if (a->token_id < static_cast<std::int32_t>(n_static) || a->opacity <= min_opacity) continue;
    const auto it = last.find(i);
    if (it == last.end()) continue;
    const auto* b = it->second;
    s.mean_displacement += Eigen::Vector3d(b->x - a->x, b->y - a->y, b->z - a->z);
    ++s.count;
  }
  if (s.count == 0) return s;
  s.mean_displacement /= static_cast<double>(s.count);
  const double denom = s.mean_displacement.norm() * reference.norm();
  s.cosine = denom > 0 ? s.mean_displacement.dot(reference) / denom : 0.0;
  return s;
}

template std::vector<FlowRow> export_flow(const net::Model<float>&, std::span<const ad::Tensor<float>>,
                                          std::span<const Camera>, const std::vector<double>&);
template std::vector<FlowRow> export_flow(const net::Model<double>&, std::span<const ad::Tensor<double>>,
                                          std::span<const Camera>, const std::vector<double>&);

}  // namespace tokensplat::io
