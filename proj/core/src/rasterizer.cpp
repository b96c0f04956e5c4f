#include "langsurf/rasterizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "langsurf/error.hpp"
#include "langsurf/parallel.hpp"

namespace langsurf {

namespace detail {

struct RenderState {
  int width = 0;
  int height = 0;
  int tiles_x = 0;
  int tiles_y = 0;
  Channels channels = Channels::Color;
  Projection projection;
  /// Per tile: indices into projection.visible, front to back.
  std::vector<std::vector<std::uint32_t>> tile_lists;
  /// Per pixel: one past the last tile-list entry the forward pass examined.
  std::vector<std::uint32_t> list_end;
};

}  // namespace detail

namespace {

using RC = RasterConstants;

bool wants_lang(Channels c) { return c == Channels::Lang || c == Channels::All; }
bool wants_ins(Channels c) { return c == Channels::Ins || c == Channels::All; }

struct CameraFrame {
  Mat3 w;
  Vec3 t;
  double fx, fy, cx, cy;
};

CameraFrame frame_of(const Camera& cam) {
  return {cam.rotation(), cam.translation(), cam.fx, cam.fy, cam.cx, cam.cy};
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraFrame& f, const Vec3& t) {
  const double iz = 1.0 / t.z();
  Eigen::Matrix<double, 2, 3> j;
  j << f.fx * iz, 0, -f.fx * t.x() * iz * iz, 0, f.fy * iz, -f.fy * t.y() * iz * iz;
  return j;
}

// Per-entry gradient slots accumulated during the per-pixel backward walk.
enum Slot : int {
  kMeanX = 0,
  kMeanY,
  kConic00,
  kConic01,
  kConic11,
  kOpacity,
  kColor,  // 3
  kLang = kColor + 3,
  kIns = kLang + 3,
  kDepth = kIns + 3,
  kNormal,  // 3
  kSlotCount = kNormal + 3,
};

struct Contribution {
  std::uint32_t entry;  // position in the tile list
  double alpha;
  double transmittance;  // before this Gaussian
  double gauss;
  bool capped;
  double dx, dy;
};

}  // namespace

Projection project(const GaussianScene& scene, const Camera& camera) {
  camera.validate();
  const CameraFrame f = frame_of(camera);
  Projection out;
  out.visible_mask.assign(scene.size(), 0);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Vec3 t = f.w * scene.pos(i) + f.t;
    if (!(t.z() >= RC::kNearPlane)) continue;

    ProjectedGaussian p;
    p.index = i;
    p.depth = t.z();
    p.mean2d = {f.fx * t.x() / t.z() + f.cx, f.fy * t.y() / t.z() + f.cy};
    const Vec4 q = scene.quat(i);
    const Vec3 ls = scene.scale_log(i);
    const Mat3 sigma = covariance(q, ls);
    const auto j = projection_jacobian(f, t);
    p.cov2d = j * (f.w * sigma * f.w.transpose()) * j.transpose();
    p.cov2d(0, 0) += RC::kDilation;
    p.cov2d(1, 1) += RC::kDilation;
    const double det = p.cov2d.determinant();
    if (!(det > 0)) continue;
    p.conic << p.cov2d(1, 1) / det, -p.cov2d(0, 1) / det, -p.cov2d(1, 0) / det, p.cov2d(0, 0) / det;

    // 3-sigma image test.
    const double ex = 3.0 * std::sqrt(p.cov2d(0, 0));
    const double ey = 3.0 * std::sqrt(p.cov2d(1, 1));
    if (p.mean2d.x() + ex < 0 || p.mean2d.x() - ex > camera.width - 1 || p.mean2d.y() + ey < 0 ||
        p.mean2d.y() - ey > camera.height - 1) {
      continue;
    }

    p.opacity = scene.opacity(i);
    if (!(255.0 * p.opacity > 1.0)) continue;
    // Pixels outside the ellipse d^T conic d <= 2 ln(255 opacity) fall below
    // the 1/255 alpha threshold; its bounding box is exact.
    const double c = 2.0 * std::log(255.0 * p.opacity);
    const double rx = std::sqrt(c * p.cov2d(0, 0));
    const double ry = std::sqrt(c * p.cov2d(1, 1));
    p.x0 = std::max(0, static_cast<int>(std::ceil(p.mean2d.x() - rx)));
    p.x1 = std::min(camera.width - 1, static_cast<int>(std::floor(p.mean2d.x() + rx)));
    p.y0 = std::max(0, static_cast<int>(std::ceil(p.mean2d.y() - ry)));
    p.y1 = std::min(camera.height - 1, static_cast<int>(std::floor(p.mean2d.y() + ry)));
    if (p.x0 > p.x1 || p.y0 > p.y1) continue;

    p.normal_axis = min_scale_axis(ls);
    const Vec3 n_view = f.w * quat_to_matrix(q).col(p.normal_axis);
    p.normal_sign = n_view.dot(t) > 0 ? -1.0 : 1.0;
    p.view_normal = p.normal_sign * n_view;

    out.visible_mask[i] = 1;
    out.visible.push_back(p);
  }
  return out;
}

RenderOutput render(const GaussianScene& scene, const Camera& camera, Channels channels) {
  auto state = std::make_shared<detail::RenderState>();
  state->width = camera.width;
  state->height = camera.height;
  state->channels = channels;
  state->projection = project(scene, camera);
  state->tiles_x = (camera.width + RC::kTileSize - 1) / RC::kTileSize;
  state->tiles_y = (camera.height + RC::kTileSize - 1) / RC::kTileSize;
  state->tile_lists.resize(static_cast<std::size_t>(state->tiles_x) * state->tiles_y);
  state->list_end.assign(static_cast<std::size_t>(camera.width) * camera.height, 0);

  const auto& vis = state->projection.visible;
  // Global front-to-back order (depth, then scene index), then bin.
  std::vector<std::uint32_t> order(vis.size());
  for (std::uint32_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (vis[a].depth != vis[b].depth) return vis[a].depth < vis[b].depth;
    return vis[a].index < vis[b].index;
  });
  for (auto k : order) {
    const auto& p = vis[k];
    for (int ty = p.y0 / RC::kTileSize; ty <= p.y1 / RC::kTileSize; ++ty)
      for (int tx = p.x0 / RC::kTileSize; tx <= p.x1 / RC::kTileSize; ++tx)
        state->tile_lists[static_cast<std::size_t>(ty * state->tiles_x + tx)].push_back(k);
  }

  RenderOutput out;
  out.channels = channels;
  const int h = camera.height, w = camera.width;
  out.color = FloatImage(h, w, 3);
  out.depth = FloatImage(h, w, 1);
  out.normal = FloatImage(h, w, 3);
  out.alpha = FloatImage(h, w, 1);
  out.weight_plus_transmittance = FloatImage(h, w, 1);
  out.top_index = LabelImage(h, w, 1, -1);
  const bool do_lang = wants_lang(channels);
  const bool do_ins = wants_ins(channels);
  if (do_lang) out.lang = FloatImage(h, w, 3);
  if (do_ins) out.ins = FloatImage(h, w, 3);

  parallel_for(state->tile_lists.size(), [&](std::size_t tile) {
    const auto& list = state->tile_lists[tile];
    const int tx = static_cast<int>(tile) % state->tiles_x;
    const int ty = static_cast<int>(tile) / state->tiles_x;
    for (int y = ty * RC::kTileSize; y < std::min(h, (ty + 1) * RC::kTileSize); ++y) {
      for (int x = tx * RC::kTileSize; x < std::min(w, (tx + 1) * RC::kTileSize); ++x) {
        const std::size_t pix = static_cast<std::size_t>(y) * w + x;
        double T = 1.0;
        double weight_sum = 0.0;
        double best_weight = 0.0;
        std::int32_t best = -1;
        std::array<double, 3> col{}, lan{}, ins{}, nor{};
        double dep = 0.0;
        std::uint32_t end = 0;
        for (std::uint32_t e = 0; e < list.size(); ++e) {
          const auto& p = vis[list[e]];
          if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) continue;
          const double dx = x - p.mean2d.x();
          const double dy = y - p.mean2d.y();
          const double power = -0.5 * (p.conic(0, 0) * dx * dx + (p.conic(0, 1) + p.conic(1, 0)) * dx * dy +
                                       p.conic(1, 1) * dy * dy);
          const double a = std::min(RC::kAlphaCap, p.opacity * std::exp(power));
          if (a < RC::kAlphaMin) continue;
          const double wgt = a * T;
          const std::size_t gi = p.index;
          for (int c = 0; c < 3; ++c) {
            col[c] += wgt * scene.color[3 * gi + c];
            nor[c] += wgt * p.view_normal[c];
            if (do_lang) lan[c] += wgt * scene.f_lang[3 * gi + c];
            if (do_ins) ins[c] += wgt * scene.f_ins[3 * gi + c];
          }
          dep += wgt * p.depth;
          weight_sum += wgt;
          if (wgt > best_weight) {
            best_weight = wgt;
            best = static_cast<std::int32_t>(gi);
          }
          T *= 1.0 - a;
          end = e + 1;
          if (T < RC::kTransmittanceMin) break;
        }
        state->list_end[pix] = end;
        for (int c = 0; c < 3; ++c) {
          out.color.data[3 * pix + c] = col[c];
          out.normal.data[3 * pix + c] = nor[c];
          if (do_lang) out.lang.data[3 * pix + c] = lan[c];
          if (do_ins) out.ins.data[3 * pix + c] = ins[c];
        }
        out.depth.data[pix] = dep;
        out.alpha.data[pix] = weight_sum;
        out.weight_plus_transmittance.data[pix] = weight_sum + T;
        out.top_index.data[pix] = best;
      }
    }
  });

  out.state = std::move(state);
  return out;
}

SceneGradient zero_gradient(const GaussianScene& scene) {
  SceneGradient g;
  g.resize(scene.size());
  return g;
}

SceneGradient render_backward(const GaussianScene& scene, const Camera& camera,
                              const RenderOutput& forward, const GradMaps& grad_maps) {
  if (!forward.state) throw InvalidParameter("render_backward: missing forward bookkeeping");
  const auto& st = *forward.state;
  const int h = st.height, w = st.width;
  if (camera.width != w || camera.height != h) {
    throw ShapeError("render_backward: camera does not match the forward render");
  }
  if (st.projection.visible_mask.size() != scene.size()) {
    throw ShapeError("render_backward: scene size differs from the forward render");
  }
  auto check = [&](const FloatImage& g, int channels, const char* name) {
    if (g.empty()) return false;
    if (g.height != h || g.width != w || g.channels != channels) {
      throw ShapeError(std::string("render_backward: grad map '") + name + "' is " +
                       std::to_string(g.height) + "x" + std::to_string(g.width) + "x" +
                       std::to_string(g.channels) + ", expected " + std::to_string(h) + "x" +
                       std::to_string(w) + "x" + std::to_string(channels));
    }
    return true;
  };
  const bool g_col = check(grad_maps.color, 3, "color");
  const bool g_lang = check(grad_maps.lang, 3, "lang");
  const bool g_ins = check(grad_maps.ins, 3, "ins");
  const bool g_dep = check(grad_maps.depth, 1, "depth");
  const bool g_nor = check(grad_maps.normal, 3, "normal");
  const bool g_alp = check(grad_maps.alpha, 1, "alpha");
  if (g_lang && !wants_lang(st.channels)) {
    throw ShapeError("render_backward: lang gradient supplied but lang was not rendered");
  }
  if (g_ins && !wants_ins(st.channels)) {
    throw ShapeError("render_backward: ins gradient supplied but ins was not rendered");
  }

  const auto& vis = st.projection.visible;
  std::vector<std::vector<double>> tile_grads(st.tile_lists.size());

  parallel_for(st.tile_lists.size(), [&](std::size_t tile) {
    const auto& list = st.tile_lists[tile];
    auto& acc = tile_grads[tile];
    acc.assign(list.size() * kSlotCount, 0.0);
    const int tx = static_cast<int>(tile) % st.tiles_x;
    const int ty = static_cast<int>(tile) / st.tiles_x;
    std::vector<Contribution> contribs;
    for (int y = ty * RC::kTileSize; y < std::min(h, (ty + 1) * RC::kTileSize); ++y) {
      for (int x = tx * RC::kTileSize; x < std::min(w, (tx + 1) * RC::kTileSize); ++x) {
        const std::size_t pix = static_cast<std::size_t>(y) * w + x;
        // Replay the forward walk for this pixel.
        contribs.clear();
        double T = 1.0;
        for (std::uint32_t e = 0; e < st.list_end[pix]; ++e) {
          const auto& p = vis[list[e]];
          if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) continue;
          const double dx = x - p.mean2d.x();
          const double dy = y - p.mean2d.y();
          const double power = -0.5 * (p.conic(0, 0) * dx * dx + (p.conic(0, 1) + p.conic(1, 0)) * dx * dy +
                                       p.conic(1, 1) * dy * dy);
          const double g = std::exp(power);
          const double raw = p.opacity * g;
          const double a = std::min(RC::kAlphaCap, raw);
          if (a < RC::kAlphaMin) continue;
          contribs.push_back({e, a, T, g, raw > RC::kAlphaCap, dx, dy});
          T *= 1.0 - a;
        }
        if (contribs.empty()) continue;

        std::array<double, 3> gc{}, gl{}, gi{}, gn{};
        double gd = 0, ga = 0;
        for (int c = 0; c < 3; ++c) {
          if (g_col) gc[c] = grad_maps.color.data[3 * pix + c];
          if (g_lang) gl[c] = grad_maps.lang.data[3 * pix + c];
          if (g_ins) gi[c] = grad_maps.ins.data[3 * pix + c];
          if (g_nor) gn[c] = grad_maps.normal.data[3 * pix + c];
        }
        if (g_dep) gd = grad_maps.depth.data[pix];
        if (g_alp) ga = grad_maps.alpha.data[pix];

        // Suffix sums of weight * value over Gaussians behind the current one.
        std::array<double, 3> sc{}, sl{}, si{}, sn{};
        double sd = 0, sa = 0;
        for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
          const auto& p = vis[list[it->entry]];
          const std::size_t gidx = p.index;
          const double a = it->alpha;
          const double Ti = it->transmittance;
          const double wgt = a * Ti;
          const double inv = 1.0 / (1.0 - a);
          double* slot = acc.data() + static_cast<std::size_t>(it->entry) * kSlotCount;

          double d_alpha = 0.0;
          for (int c = 0; c < 3; ++c) {
            const double vc = scene.color[3 * gidx + c];
            d_alpha += gc[c] * (Ti * vc - sc[c] * inv);
            slot[kColor + c] += gc[c] * wgt;
            sc[c] += wgt * vc;

            const double vn = p.view_normal[c];
            d_alpha += gn[c] * (Ti * vn - sn[c] * inv);
            slot[kNormal + c] += gn[c] * wgt;
            sn[c] += wgt * vn;

            if (g_lang) {
              const double vl = scene.f_lang[3 * gidx + c];
              d_alpha += gl[c] * (Ti * vl - sl[c] * inv);
              slot[kLang + c] += gl[c] * wgt;
              sl[c] += wgt * vl;
            }
            if (g_ins) {
              const double vi = scene.f_ins[3 * gidx + c];
              d_alpha += gi[c] * (Ti * vi - si[c] * inv);
              slot[kIns + c] += gi[c] * wgt;
              si[c] += wgt * vi;
            }
          }
          d_alpha += gd * (Ti * p.depth - sd * inv);
          slot[kDepth] += gd * wgt;
          sd += wgt * p.depth;
          d_alpha += ga * (Ti - sa * inv);
          sa += wgt;

          if (it->capped) continue;  // alpha pinned at the cap
          slot[kOpacity] += d_alpha * it->gauss;
          const double d_power = d_alpha * a;
          const double dx = it->dx, dy = it->dy;
          // power = -1/2 d^T M d with d = pixel - mean.
          slot[kConic00] += -0.5 * d_power * dx * dx;
          slot[kConic01] += -0.5 * d_power * dx * dy;
          slot[kConic11] += -0.5 * d_power * dy * dy;
          const Vec2 md = p.conic * Vec2(dx, dy);
          slot[kMeanX] += d_power * md.x();
          slot[kMeanY] += d_power * md.y();
        }
      }
    }
  });

  // Deterministic reduction: tiles in index order, entries in list order.
  std::vector<double> per_visible(vis.size() * kSlotCount, 0.0);
  for (std::size_t tile = 0; tile < st.tile_lists.size(); ++tile) {
    const auto& list = st.tile_lists[tile];
    const auto& acc = tile_grads[tile];
    for (std::size_t e = 0; e < list.size(); ++e) {
      double* dst = per_visible.data() + static_cast<std::size_t>(list[e]) * kSlotCount;
      const double* src = acc.data() + e * kSlotCount;
      for (int s = 0; s < kSlotCount; ++s) dst[s] += src[s];
    }
  }

  SceneGradient grad = zero_gradient(scene);
  const CameraFrame f = frame_of(camera);
  parallel_for(vis.size(), [&](std::size_t k) {
    const auto& p = vis[k];
    const double* s = per_visible.data() + k * kSlotCount;
    const std::size_t i = p.index;

    for (int c = 0; c < 3; ++c) {
      grad.color[3 * i + c] = s[kColor + c];
      grad.f_lang[3 * i + c] = s[kLang + c];
      grad.f_ins[3 * i + c] = s[kIns + c];
    }
    grad.opacity_logit[i] = s[kOpacity] * p.opacity * (1.0 - p.opacity);

    const Vec3 t = f.w * scene.pos(i) + f.t;
    const double iz = 1.0 / t.z();
    const Vec4 q_raw = scene.quat(i);
    const double q_norm = q_raw.norm();
    const Vec4 q = q_raw / q_norm;
    const Mat3 R = quat_to_matrix(q);
    const Vec3 scale = scene.scale_log(i).array().exp();
    const Mat3 N = R * scale.asDiagonal();
    const Mat3 V = f.w * (N * N.transpose()) * f.w.transpose();
    const auto J = projection_jacobian(f, t);

    // conic = cov2d^-1  =>  dL/dcov2d = -conic^T G conic^T.
    Mat2 g_conic;
    g_conic << s[kConic00], s[kConic01], s[kConic01], s[kConic11];
    const Mat2 g_cov2d = -p.conic.transpose() * g_conic * p.conic.transpose();
    // cov2d = J V J^T + dilation.
    const Mat3 g_V = J.transpose() * g_cov2d * J;
    const Eigen::Matrix<double, 2, 3> g_J = g_cov2d * J * V.transpose() + g_cov2d.transpose() * J * V;
    // V = W Sigma W^T, Sigma = N N^T, N = R S.
    const Mat3 g_sigma = f.w.transpose() * g_V * f.w;
    const Mat3 g_N = (g_sigma + g_sigma.transpose()) * N;
    Mat3 g_R = g_N * scale.asDiagonal();
    for (int c = 0; c < 3; ++c) {
      grad.log_scale[3 * i + c] = g_N.col(c).dot(R.col(c)) * scale[c];
    }
    // view normal = sign * W * R[:, axis].
    const Vec3 g_nview(s[kNormal], s[kNormal + 1], s[kNormal + 2]);
    g_R.col(p.normal_axis) += p.normal_sign * (f.w.transpose() * g_nview);

    const double qw = q[0], qx = q[1], qy = q[2], qz = q[3];
    Vec4 g_q;
    g_q[0] = 2 * (-qz * g_R(0, 1) + qy * g_R(0, 2) + qz * g_R(1, 0) - qx * g_R(1, 2) - qy * g_R(2, 0) +
                  qx * g_R(2, 1));
    g_q[1] = 2 * (qy * g_R(0, 1) + qz * g_R(0, 2) + qy * g_R(1, 0) - 2 * qx * g_R(1, 1) - qw * g_R(1, 2) +
                  qz * g_R(2, 0) + qw * g_R(2, 1) - 2 * qx * g_R(2, 2));
    g_q[2] = 2 * (-2 * qy * g_R(0, 0) + qx * g_R(0, 1) + qw * g_R(0, 2) + qx * g_R(1, 0) + qz * g_R(1, 2) -
                  qw * g_R(2, 0) + qz * g_R(2, 1) - 2 * qy * g_R(2, 2));
    g_q[3] = 2 * (-2 * qz * g_R(0, 0) - qw * g_R(0, 1) + qx * g_R(0, 2) + qw * g_R(1, 0) -
                  2 * qz * g_R(1, 1) + qy * g_R(1, 2) + qx * g_R(2, 0) + qy * g_R(2, 1));
    // Through q / |q|.
    const Vec4 g_qraw = (g_q - q * q.dot(g_q)) / q_norm;
    for (int c = 0; c < 4; ++c) grad.rotation[4 * i + c] = g_qraw[c];

    // Camera-space position: mean2d, depth, and the Jacobian.
    Vec3 g_t = Vec3::Zero();
    const double gmx = s[kMeanX], gmy = s[kMeanY];
    g_t.x() += gmx * f.fx * iz;
    g_t.y() += gmy * f.fy * iz;
    g_t.z() += -gmx * f.fx * t.x() * iz * iz - gmy * f.fy * t.y() * iz * iz;
    g_t.z() += s[kDepth];
    g_t.x() += g_J(0, 2) * (-f.fx * iz * iz);
    g_t.y() += g_J(1, 2) * (-f.fy * iz * iz);
    g_t.z() += g_J(0, 0) * (-f.fx * iz * iz) + g_J(0, 2) * (2 * f.fx * t.x() * iz * iz * iz) +
               g_J(1, 1) * (-f.fy * iz * iz) + g_J(1, 2) * (2 * f.fy * t.y() * iz * iz * iz);
    const Vec3 g_pos = f.w.transpose() * g_t;
    for (int c = 0; c < 3; ++c) grad.position[3 * i + c] = g_pos[c];
  });
  return grad;
}

}  // namespace langsurf
