#pragma once

#include <cstdint>
#include <vector>

#include "sdh/dataio.hpp"

namespace sdh::ctprep {

using dataio::Volume;

// Soft-tissue display window. Defaults follow the 0-130 HU range centered
// at 65 HU used for subdural contrast.
struct WindowSpec {
  double low_hu = 0.0;
  double high_hu = 130.0;
  double center_hu = 65.0;
};

struct RescaleSpec {
  double slope = 1.0;
  double intercept = -1024.0;  // HU = slope * raw + intercept
};

// out = slope * raw + intercept, elementwise
Volume rescale_to_hu(const Volume& raw, const RescaleSpec& spec);

// out = clamp((hu - low) / (high - low), 0, 1)
Volume window_normalize(const Volume& hu, const WindowSpec& w);

struct ComponentLabels {
  std::vector<int32_t> labels;       // 0 = background, 1..K ordered by size desc
  std::vector<int64_t> sizes;        // sizes[k-1] = voxel count of label k
  int32_t count = 0;
};

// 3D connected components over a uint8 {0,1} mask. connectivity 6 or 26.
ComponentLabels connected_components_3d(const Volume& mask, int connectivity = 26);

// 2D connected components of one slice of a mask volume. connectivity 4 or 8.
ComponentLabels connected_components_2d(const uint8_t* slice, int64_t h, int64_t w,
                                        int connectivity = 8);

// Largest 3D component of {hu >= bone_threshold_hu}. Throws if nothing
// exceeds the threshold.
Volume skull_mask(const Volume& hu, double bone_threshold_hu = 300.0,
                  int connectivity = 26);

// Complement of the skull refined per axial slice: the second-largest 2D
// component of the complement is kept (the largest is exterior background).
// Slices with fewer than two complement components come back empty.
Volume intracranial_mask(const Volume& hu, const Volume& skull,
                         int connectivity = 8);

// Resample to exactly `target` slices. n > target: uniform index selection
// round(i*(n-1)/(target-1)); n < target: duplicate central slices at
// c, c-1, c+1, c-2, c+2, ... (c = n/2) until the deficit is covered.
Volume standardize_slices(const Volume& vol, int64_t target = 15);
std::vector<int64_t> standardize_slice_indices(int64_t n, int64_t target = 15);

// Per-slice bilinear resample of square slices to out_hw x out_hw.
// Align-corners convention: corner voxel centers map onto corner voxel centers.
Volume downsample_axial(const Volume& vol, int64_t out_hw = 256);

// Full chain on a raw volume: HU rescale, skull + intracranial masks,
// window, zero extracranial voxels, 15 slices, axial downsample.
struct PreprocessParams {
  RescaleSpec rescale;
  WindowSpec window;
  double bone_threshold_hu = 300.0;
  int64_t target_slices = 15;
  int64_t out_hw = 256;
};

struct PreprocessResult {
  Volume windowed;   // float32, [0,1], extracranial zeroed, 15 x hw x hw
  Volume masked_hu;  // float32, HU with extracranial zeroed, same dims
  Volume brain_mask; // uint8 downsampled intracranial mask, same dims
};

PreprocessResult preprocess_volume(const Volume& raw, const PreprocessParams& p);

// Carry a binary mask volume through the same slice standardization and
// axial downsampling (nearest neighbor) as the imaging volume.
Volume transform_mask_like(const Volume& mask, int64_t target_slices,
                           int64_t out_hw);

}  // namespace sdh::ctprep
