#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "sdh/dataio.hpp"
#include "sdh/rng.hpp"

using namespace sdh;
using namespace sdh::dataio;

namespace {
std::string tmp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "sdh_dataio_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}
}  // namespace

TEST_CASE("volume round trip is bit exact") {
  Volume v = Volume::make_f32(2, 2, 2, 0.0f);
  std::string p = tmp_path("zeros.hvl");
  write_volume(v, p);

  // header 36 bytes + 8 * 4 payload bytes
  CHECK(std::filesystem::file_size(p) == 36 + 8 * 4);
  Volume r = read_volume(p);
  CHECK(r.bitwise_equal(v));
}

TEST_CASE("volume round trip: random payloads, both dtypes") {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    int64_t d = 1 + static_cast<int64_t>(rng.uniform_int(4));
    int64_t h = 1 + static_cast<int64_t>(rng.uniform_int(16));
    int64_t w = 1 + static_cast<int64_t>(rng.uniform_int(16));
    if (trial % 2 == 0) {
      Volume v = Volume::make_f32(d, h, w);
      for (auto& x : v.f32) x = static_cast<float>(rng.normal(0, 100));
      v.header.spacing_mm = {0.5f, 0.7f, 0.7f};
      std::string p = tmp_path("rand_f32.hvl");
      write_volume(v, p);
      CHECK(read_volume(p).bitwise_equal(v));
    } else {
      Volume v = Volume::make_u8(d, h, w);
      for (auto& x : v.u8) x = static_cast<uint8_t>(rng.uniform_int(2));
      std::string p = tmp_path("rand_u8.hvl");
      write_volume(v, p);
      Volume r = read_volume(p);
      CHECK(r.bitwise_equal(v));
      CHECK(r.header.dtype == Dtype::u8);
    }
  }
}

TEST_CASE("volume payload size for (15,256,256) float") {
  Volume v = Volume::make_f32(15, 256, 256);
  std::string p = tmp_path("payload.hvl");
  write_volume(v, p);
  CHECK(std::filesystem::file_size(p) == 36u + 3932160u);
}

TEST_CASE("read_volume rejects bad magic, truncation, bad dtype") {
  Volume v = Volume::make_f32(2, 2, 2);
  std::string p = tmp_path("bad.hvl");
  write_volume(v, p);

  {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_WITH_AS(read_volume(p), doctest::Contains("bad magic"),
                       std::runtime_error);

  write_volume(v, p);
  std::filesystem::resize_file(p, std::filesystem::file_size(p) - 1);
  CHECK_THROWS_WITH_AS(read_volume(p), doctest::Contains("truncated"),
                       std::runtime_error);

  write_volume(v, p);
  {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(20);
    char dt = 9;
    f.write(&dt, 1);
  }
  CHECK_THROWS_AS(read_volume(p), std::runtime_error);
}

TEST_CASE("manifest round trip and validation") {
  std::string p = tmp_path("manifest.csv");
  {
    std::ofstream f(p);
    f << "study_id,patient_id,split,label,volume_path,mask_path,age,sex\n";
    f << "s1,p1,train,0,vols/s1.hvl,,55,1\n";
    f << "s2,p1,train,1,vols/s2.hvl,masks/s2.hvl,55,1\n";
    f << "s3,p2,test,0,vols/s3.hvl,,nan,0\n";
  }
  CohortManifest m = read_manifest(p);
  CHECK(m.records.size() == 3);
  CHECK(m.feature_names == std::vector<std::string>{"age", "sex"});
  CHECK(m.records[1].label == 1);
  CHECK(m.records[1].mask_path == "masks/s2.hvl");
  CHECK(std::isnan(m.records[2].features[0]));

  std::string p2 = tmp_path("manifest2.csv");
  write_manifest(m, p2);
  CohortManifest m2 = read_manifest(p2);
  CHECK(m2.records.size() == 3);
  CHECK(m2.records[2].study_id == "s3");
}

TEST_CASE("manifest rejects duplicates, bad labels, cross-split patients") {
  auto write_and_read = [](const std::string& body) {
    std::string p = tmp_path("reject.csv");
    std::ofstream f(p);
    f << "study_id,patient_id,split,label,volume_path,mask_path\n" << body;
    f.close();
    return read_manifest(p);
  };
  CHECK_THROWS_WITH_AS(write_and_read("s1,p1,train,0,a,\ns1,p2,train,0,b,\n"),
                       doctest::Contains("duplicate study_id"), std::runtime_error);
  CHECK_THROWS_AS(write_and_read("s1,p1,train,2,a,\n"), std::runtime_error);
  CHECK_THROWS_WITH_AS(write_and_read("s1,p1,train,0,a,\ns2,p1,val,0,b,\n"),
                       doctest::Contains("more than one split"), std::runtime_error);
  CHECK_THROWS_AS(write_and_read("s1,p1,nowhere,0,a,\n"), std::runtime_error);
}

TEST_CASE("patient level split keeps one patient together") {
  std::vector<StudyRecord> records;
  for (int i = 0; i < 5; ++i) {
    StudyRecord r;
    r.study_id = "s" + std::to_string(i);
    r.patient_id = "p0";
    r.volume_path = "x";
    records.push_back(r);
  }
  CohortManifest m = patient_level_split(records, 17);
  Split s = m.records[0].split;
  for (const auto& r : m.records) CHECK(r.split == s);
}

TEST_CASE("patient level split fractions and determinism") {
  std::vector<StudyRecord> records;
  Rng rng(3);
  for (int p = 0; p < 100; ++p) {
    int studies = 1 + static_cast<int>(rng.uniform_int(3));
    for (int s = 0; s < studies; ++s) {
      StudyRecord r;
      r.study_id = "p" + std::to_string(p) + "_s" + std::to_string(s);
      r.patient_id = "p" + std::to_string(p);
      records.push_back(r);
    }
  }
  CohortManifest a = patient_level_split(records, 7);
  CohortManifest b = patient_level_split(records, 7);
  std::map<std::string, Split> pa;
  std::set<std::string> train_p, val_p, test_p;
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].split == b.records[i].split);  // determinism
    auto [it, fresh] = pa.emplace(a.records[i].patient_id, a.records[i].split);
    if (!fresh) CHECK(it->second == a.records[i].split);  // no leakage
    switch (a.records[i].split) {
      case Split::train: train_p.insert(a.records[i].patient_id); break;
      case Split::val: val_p.insert(a.records[i].patient_id); break;
      case Split::test: test_p.insert(a.records[i].patient_id); break;
    }
  }
  // 100 patients at (0.64, 0.16, 0.20)
  CHECK(train_p.size() == 64);
  CHECK(val_p.size() == 16);
  CHECK(test_p.size() == 20);
}

TEST_CASE("split sizes stay within one patient of the fractions") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform_int(97));
    std::vector<StudyRecord> records;
    for (int p = 0; p < n; ++p) {
      StudyRecord r;
      r.study_id = "s" + std::to_string(p);
      r.patient_id = "p" + std::to_string(p);
      records.push_back(r);
    }
    CohortManifest m = patient_level_split(records, trial);
    std::array<int, 3> counts = {0, 0, 0};
    for (const auto& r : m.records) counts[static_cast<int>(r.split)]++;
    const std::array<double, 3> fr = {0.64, 0.16, 0.20};
    for (int i = 0; i < 3; ++i)
      CHECK(std::abs(counts[i] - fr[i] * n) <= 1.0 + 1e-12);
  }
}

TEST_CASE("patient_level_split rejects empty input and bad fractions") {
  CHECK_THROWS_AS(patient_level_split({}, 1), std::runtime_error);
  StudyRecord r;
  r.study_id = "s";
  r.patient_id = "p";
  CHECK_THROWS_AS(patient_level_split({r}, {0.5, 0.2, 0.2}, 1), std::runtime_error);
}
