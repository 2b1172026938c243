#include "sdh/ctprep.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sdh::ctprep {

namespace {

void require_f32(const Volume& v, const char* who) {
  if (v.header.dtype != dataio::Dtype::f32)
    throw std::runtime_error(std::string(who) + ": expected float volume");
}

void require_mask(const Volume& v, const char* who) {
  if (v.header.dtype != dataio::Dtype::u8)
    throw std::runtime_error(std::string(who) + ": expected uint8 mask");
}

// relabel components so label 1 is the largest, and return sizes descending
ComponentLabels finalize_labels(std::vector<int32_t> labels,
                                std::vector<int64_t> sizes) {
  ComponentLabels out;
  int32_t k = static_cast<int32_t>(sizes.size());
  std::vector<int32_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int32_t a, int32_t b) { return sizes[a] > sizes[b]; });
  std::vector<int32_t> remap(k + 1, 0);
  out.sizes.resize(k);
  for (int32_t rank = 0; rank < k; ++rank) {
    remap[order[rank] + 1] = rank + 1;
    out.sizes[rank] = sizes[order[rank]];
  }
  for (auto& l : labels)
    if (l > 0) l = remap[l];
  out.labels = std::move(labels);
  out.count = k;
  return out;
}

}  // namespace

Volume rescale_to_hu(const Volume& raw, const RescaleSpec& spec) {
  require_f32(raw, "rescale_to_hu");
  if (spec.slope == 0.0) throw std::runtime_error("rescale_to_hu: slope must be nonzero");
  Volume out = raw;
  const float s = static_cast<float>(spec.slope);
  const float b = static_cast<float>(spec.intercept);
  float* p = out.f32.data();
  const int64_t n = out.voxel_count();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) p[i] = s * p[i] + b;
  return out;
}

Volume window_normalize(const Volume& hu, const WindowSpec& w) {
  require_f32(hu, "window_normalize");
  if (w.high_hu <= w.low_hu)
    throw std::runtime_error("window_normalize: high must exceed low");
  Volume out = hu;
  const float lo = static_cast<float>(w.low_hu);
  const float inv = static_cast<float>(1.0 / (w.high_hu - w.low_hu));
  float* p = out.f32.data();
  const int64_t n = out.voxel_count();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    float v = (p[i] - lo) * inv;
    p[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  }
  return out;
}

ComponentLabels connected_components_3d(const Volume& mask, int connectivity) {
  require_mask(mask, "connected_components_3d");
  if (connectivity != 6 && connectivity != 26)
    throw std::runtime_error("connected_components_3d: connectivity must be 6 or 26");
  const int64_t D = mask.depth(), H = mask.height(), W = mask.width();
  const uint8_t* m = mask.u8.data();
  std::vector<int32_t> labels(static_cast<size_t>(D * H * W), 0);
  std::vector<int64_t> sizes;
  std::vector<int64_t> stack;

  auto idx = [&](int64_t z, int64_t y, int64_t x) { return (z * H + y) * W + x; };

  int32_t next = 0;
  for (int64_t z = 0; z < D; ++z)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        int64_t i = idx(z, y, x);
        if (!m[i] || labels[i]) continue;
        ++next;
        int64_t count = 0;
        stack.clear();
        stack.push_back(i);
        labels[i] = next;
        while (!stack.empty()) {
          int64_t cur = stack.back();
          stack.pop_back();
          ++count;
          int64_t cz = cur / (H * W), cy = (cur / W) % H, cx = cur % W;
          for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                if (dz == 0 && dy == 0 && dx == 0) continue;
                if (connectivity == 6 &&
                    std::abs(dz) + std::abs(dy) + std::abs(dx) != 1)
                  continue;
                int64_t nz = cz + dz, ny = cy + dy, nx = cx + dx;
                if (nz < 0 || nz >= D || ny < 0 || ny >= H || nx < 0 || nx >= W)
                  continue;
                int64_t ni = idx(nz, ny, nx);
                if (m[ni] && !labels[ni]) {
                  labels[ni] = next;
                  stack.push_back(ni);
                }
              }
        }
        sizes.push_back(count);
      }
  return finalize_labels(std::move(labels), std::move(sizes));
}

ComponentLabels connected_components_2d(const uint8_t* slice, int64_t h, int64_t w,
                                        int connectivity) {
  if (connectivity != 4 && connectivity != 8)
    throw std::runtime_error("connected_components_2d: connectivity must be 4 or 8");
  std::vector<int32_t> labels(static_cast<size_t>(h * w), 0);
  std::vector<int64_t> sizes;
  std::vector<int64_t> stack;
  int32_t next = 0;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      int64_t i = y * w + x;
      if (!slice[i] || labels[i]) continue;
      ++next;
      int64_t count = 0;
      stack.clear();
      stack.push_back(i);
      labels[i] = next;
      while (!stack.empty()) {
        int64_t cur = stack.back();
        stack.pop_back();
        ++count;
        int64_t cy = cur / w, cx = cur % w;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            if (connectivity == 4 && std::abs(dy) + std::abs(dx) != 1) continue;
            int64_t ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            int64_t ni = ny * w + nx;
            if (slice[ni] && !labels[ni]) {
              labels[ni] = next;
              stack.push_back(ni);
            }
          }
      }
      sizes.push_back(count);
    }
  return finalize_labels(std::move(labels), std::move(sizes));
}

Volume skull_mask(const Volume& hu, double bone_threshold_hu, int connectivity) {
  require_f32(hu, "skull_mask");
  const int64_t n = hu.voxel_count();
  Volume thresh = Volume::make_u8(hu.depth(), hu.height(), hu.width());
  const float t = static_cast<float>(bone_threshold_hu);
  int64_t fg = 0;
#pragma omp parallel for schedule(static) reduction(+ : fg)
  for (int64_t i = 0; i < n; ++i) {
    uint8_t v = hu.f32[i] >= t ? 1 : 0;
    thresh.u8[i] = v;
    fg += v;
  }
  if (fg == 0)
    throw std::runtime_error("skull_mask: no voxel reaches the bone threshold");
  ComponentLabels cc = connected_components_3d(thresh, connectivity);
  Volume out = Volume::make_u8(hu.depth(), hu.height(), hu.width());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) out.u8[i] = cc.labels[i] == 1 ? 1 : 0;
  return out;
}

Volume intracranial_mask(const Volume& hu, const Volume& skull, int connectivity) {
  require_f32(hu, "intracranial_mask");
  require_mask(skull, "intracranial_mask");
  if (hu.depth() != skull.depth() || hu.height() != skull.height() ||
      hu.width() != skull.width())
    throw std::runtime_error("intracranial_mask: dims mismatch");
  const int64_t D = hu.depth(), H = hu.height(), W = hu.width();
  Volume out = Volume::make_u8(D, H, W);
#pragma omp parallel for schedule(dynamic)
  for (int64_t z = 0; z < D; ++z) {
    std::vector<uint8_t> comp(static_cast<size_t>(H * W));
    const uint8_t* sk = skull.u8.data() + z * H * W;
    for (int64_t i = 0; i < H * W; ++i) comp[i] = sk[i] ? 0 : 1;
    ComponentLabels cc = connected_components_2d(comp.data(), H, W, connectivity);
    uint8_t* o = out.u8.data() + z * H * W;
    if (cc.count < 2) continue;  // no interior on this slice
    for (int64_t i = 0; i < H * W; ++i) o[i] = cc.labels[i] == 2 ? 1 : 0;
  }
  return out;
}

std::vector<int64_t> standardize_slice_indices(int64_t n, int64_t target) {
  if (n < 1) throw std::runtime_error("standardize_slices: empty volume");
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(target));
  if (n == target) {
    for (int64_t i = 0; i < n; ++i) out.push_back(i);
    return out;
  }
  if (n > target) {
    for (int64_t i = 0; i < target; ++i) {
      double pos = static_cast<double>(i) * static_cast<double>(n - 1) /
                   static_cast<double>(target - 1);
      out.push_back(static_cast<int64_t>(std::llround(pos)));
    }
    return out;
  }
  // n < target: duplicate central slices c, c-1, c+1, c-2, c+2, ...,
  // cycling through that order again when the deficit exceeds n
  int64_t deficit = target - n;
  int64_t c = n / 2;
  std::vector<int64_t> order;
  order.push_back(c);
  for (int64_t step = 1; static_cast<int64_t>(order.size()) < n; ++step) {
    if (c - step >= 0) order.push_back(c - step);
    if (static_cast<int64_t>(order.size()) < n && c + step < n)
      order.push_back(c + step);
  }
  std::vector<int64_t> extra;
  for (int64_t i = 0; i < deficit; ++i)
    extra.push_back(order[static_cast<size_t>(i % n)]);
  for (int64_t i = 0; i < n; ++i) out.push_back(i);
  out.insert(out.end(), extra.begin(), extra.end());
  std::sort(out.begin(), out.end());
  return out;
}

Volume standardize_slices(const Volume& vol, int64_t target) {
  const auto indices = standardize_slice_indices(vol.depth(), target);
  const int64_t H = vol.height(), W = vol.width();
  Volume out;
  out.header = vol.header;
  out.header.depth = target;
  const int64_t plane = H * W;
  if (vol.header.dtype == dataio::Dtype::f32) {
    out.f32.resize(static_cast<size_t>(target * plane));
    for (int64_t i = 0; i < target; ++i)
      std::copy_n(vol.f32.data() + indices[i] * plane, plane,
                  out.f32.data() + i * plane);
  } else {
    out.u8.resize(static_cast<size_t>(target * plane));
    for (int64_t i = 0; i < target; ++i)
      std::copy_n(vol.u8.data() + indices[i] * plane, plane,
                  out.u8.data() + i * plane);
  }
  return out;
}

Volume downsample_axial(const Volume& vol, int64_t out_hw) {
  require_f32(vol, "downsample_axial");
  const int64_t D = vol.depth(), H = vol.height(), W = vol.width();
  if (H != W) throw std::runtime_error("downsample_axial: slices must be square");
  if (H < out_hw)
    throw std::runtime_error("downsample_axial: input side smaller than target");
  if (H == out_hw) return vol;

  Volume out = Volume::make_f32(D, out_hw, out_hw);
  const double scale = out_hw > 1
                           ? static_cast<double>(H - 1) / static_cast<double>(out_hw - 1)
                           : 0.0;
#pragma omp parallel for schedule(static)
  for (int64_t z = 0; z < D; ++z) {
    const float* src = vol.f32.data() + z * H * W;
    float* dst = out.f32.data() + z * out_hw * out_hw;
    for (int64_t oy = 0; oy < out_hw; ++oy) {
      double fy = oy * scale;
      int64_t y0 = static_cast<int64_t>(fy);
      int64_t y1 = std::min<int64_t>(y0 + 1, H - 1);
      double wy = fy - static_cast<double>(y0);
      for (int64_t ox = 0; ox < out_hw; ++ox) {
        double fx = ox * scale;
        int64_t x0 = static_cast<int64_t>(fx);
        int64_t x1 = std::min<int64_t>(x0 + 1, W - 1);
        double wx = fx - static_cast<double>(x0);
        double v00 = src[y0 * W + x0], v01 = src[y0 * W + x1];
        double v10 = src[y1 * W + x0], v11 = src[y1 * W + x1];
        double top = v00 + (v01 - v00) * wx;
        double bot = v10 + (v11 - v10) * wx;
        dst[oy * out_hw + ox] = static_cast<float>(top + (bot - top) * wy);
      }
    }
  }
  return out;
}

Volume transform_mask_like(const Volume& mask, int64_t target_slices,
                           int64_t out_hw) {
  require_mask(mask, "transform_mask_like");
  Volume std_slices = standardize_slices(mask, target_slices);
  const int64_t D = std_slices.depth(), H = std_slices.height(), W = std_slices.width();
  if (H != W) throw std::runtime_error("transform_mask_like: slices must be square");
  if (H == out_hw) return std_slices;
  Volume out = Volume::make_u8(D, out_hw, out_hw);
  const double scale = out_hw > 1
                           ? static_cast<double>(H - 1) / static_cast<double>(out_hw - 1)
                           : 0.0;
#pragma omp parallel for schedule(static)
  for (int64_t z = 0; z < D; ++z) {
    const uint8_t* src = std_slices.u8.data() + z * H * W;
    uint8_t* dst = out.u8.data() + z * out_hw * out_hw;
    for (int64_t oy = 0; oy < out_hw; ++oy) {
      int64_t sy = static_cast<int64_t>(std::llround(oy * scale));
      for (int64_t ox = 0; ox < out_hw; ++ox) {
        int64_t sx = static_cast<int64_t>(std::llround(ox * scale));
        dst[oy * out_hw + ox] = src[sy * W + sx];
      }
    }
  }
  return out;
}

PreprocessResult preprocess_volume(const Volume& raw, const PreprocessParams& p) {
  Volume hu = rescale_to_hu(raw, p.rescale);
  Volume skull = skull_mask(hu, p.bone_threshold_hu);
  Volume brain = intracranial_mask(hu, skull);
  Volume windowed = window_normalize(hu, p.window);

  const int64_t n = hu.voxel_count();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    if (!brain.u8[i]) {
      windowed.f32[i] = 0.0f;
      hu.f32[i] = 0.0f;
    }
  }

  PreprocessResult r;
  r.windowed = downsample_axial(standardize_slices(windowed, p.target_slices), p.out_hw);
  r.masked_hu = downsample_axial(standardize_slices(hu, p.target_slices), p.out_hw);
  r.brain_mask = transform_mask_like(brain, p.target_slices, p.out_hw);
  return r;
}

}  // namespace sdh::ctprep
