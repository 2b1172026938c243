#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sdh::dataio {

// HVL1 volume container. Little-endian, fixed 36-byte header, raw payload.
// Layout: magic[4] "HVL1", version u32, depth u32, height u32, width u32,
// dtype u8, spacing 3*f32 (dz,dy,dx), 3 pad bytes.

enum class Dtype : uint8_t { f32 = 1, u8 = 2 };

inline size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 1; }

struct VolumeHeader {
  uint32_t version = 1;
  int64_t depth = 0, height = 0, width = 0;
  Dtype dtype = Dtype::f32;
  std::array<float, 3> spacing_mm = {1.0f, 1.0f, 1.0f};

  int64_t voxel_count() const { return depth * height * width; }
};

struct Volume {
  VolumeHeader header;
  std::vector<float> f32;  // populated when dtype == f32
  std::vector<uint8_t> u8;  // populated when dtype == u8

  int64_t depth() const { return header.depth; }
  int64_t height() const { return header.height; }
  int64_t width() const { return header.width; }
  int64_t voxel_count() const { return header.voxel_count(); }

  // slice-major flat index
  int64_t index(int64_t z, int64_t y, int64_t x) const {
    return (z * header.height + y) * header.width + x;
  }

  float at(int64_t z, int64_t y, int64_t x) const {
    int64_t i = index(z, y, x);
    return header.dtype == Dtype::f32 ? f32[i] : static_cast<float>(u8[i]);
  }

  static Volume make_f32(int64_t d, int64_t h, int64_t w, float fill = 0.0f);
  static Volume make_u8(int64_t d, int64_t h, int64_t w, uint8_t fill = 0);

  void validate() const;  // throws on header/payload mismatch
  bool bitwise_equal(const Volume& other) const;
};

void write_volume(const Volume& vol, const std::string& path);
Volume read_volume(const std::string& path);

// ---------------------------------------------------------------------------
// Cohort manifests

enum class Split { train, val, test };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct StudyRecord {
  std::string study_id;
  std::string patient_id;
  int label = 0;  // SDH presence, 0/1
  Split split = Split::train;
  std::string volume_path;
  std::string mask_path;  // empty if absent
  std::vector<double> features;  // ordered per manifest feature columns
};

struct CohortManifest {
  int schema_version = 1;
  std::vector<std::string> feature_names;  // column names after mask_path
  std::vector<StudyRecord> records;

  void validate() const;  // unique ids, labels, patient/split consistency
  std::vector<std::string> unique_patients() const;
};

CohortManifest read_manifest(const std::string& path);
void write_manifest(const CohortManifest& m, const std::string& path);

// Seeded patient-level split: every study of one patient lands in one split;
// per-split patient counts within +-1 of fraction * n_patients.
CohortManifest patient_level_split(const std::vector<StudyRecord>& records,
                                   const std::array<double, 3>& fractions,
                                   uint64_t seed);

inline CohortManifest patient_level_split(const std::vector<StudyRecord>& records,
                                          uint64_t seed) {
  return patient_level_split(records, {0.64, 0.16, 0.20}, seed);
}

// same, but preserves the manifest's feature column names
CohortManifest patient_level_split(const CohortManifest& manifest,
                                   const std::array<double, 3>& fractions,
                                   uint64_t seed);

}  // namespace sdh::dataio
