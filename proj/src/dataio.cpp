#include "sdh/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sdh/rng.hpp"

namespace sdh::dataio {

namespace {

constexpr char kMagic[4] = {'H', 'V', 'L', '1'};
constexpr size_t kHeaderBytes = 36;

void put_u32(uint8_t* p, uint32_t v) {
  p[0] = v & 0xff;
  p[1] = (v >> 8) & 0xff;
  p[2] = (v >> 16) & 0xff;
  p[3] = (v >> 24) & 0xff;
}

uint32_t get_u32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}

void put_f32(uint8_t* p, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(p, bits);
}

float get_f32(const uint8_t* p) {
  uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

Volume Volume::make_f32(int64_t d, int64_t h, int64_t w, float fill) {
  Volume v;
  v.header.depth = d;
  v.header.height = h;
  v.header.width = w;
  v.header.dtype = Dtype::f32;
  v.f32.assign(static_cast<size_t>(d * h * w), fill);
  return v;
}

Volume Volume::make_u8(int64_t d, int64_t h, int64_t w, uint8_t fill) {
  Volume v;
  v.header.depth = d;
  v.header.height = h;
  v.header.width = w;
  v.header.dtype = Dtype::u8;
  v.u8.assign(static_cast<size_t>(d * h * w), fill);
  return v;
}

void Volume::validate() const {
  if (header.depth < 1 || header.height < 1 || header.width < 1)
    throw std::runtime_error("volume: dims must all be >= 1");
  size_t n = static_cast<size_t>(voxel_count());
  if (header.dtype == Dtype::f32) {
    if (f32.size() != n) throw std::runtime_error("volume: payload length mismatch");
  } else if (header.dtype == Dtype::u8) {
    if (u8.size() != n) throw std::runtime_error("volume: payload length mismatch");
  } else {
    throw std::runtime_error("volume: unknown dtype");
  }
}

bool Volume::bitwise_equal(const Volume& o) const {
  if (header.depth != o.header.depth || header.height != o.header.height ||
      header.width != o.header.width || header.dtype != o.header.dtype ||
      header.version != o.header.version || header.spacing_mm != o.header.spacing_mm)
    return false;
  if (header.dtype == Dtype::f32)
    return std::memcmp(f32.data(), o.f32.data(), f32.size() * 4) == 0;
  return u8 == o.u8;
}

void write_volume(const Volume& vol, const std::string& path) {
  vol.validate();
  uint8_t hdr[kHeaderBytes] = {};
  std::memcpy(hdr, kMagic, 4);
  put_u32(hdr + 4, vol.header.version);
  put_u32(hdr + 8, static_cast<uint32_t>(vol.header.depth));
  put_u32(hdr + 12, static_cast<uint32_t>(vol.header.height));
  put_u32(hdr + 16, static_cast<uint32_t>(vol.header.width));
  hdr[20] = static_cast<uint8_t>(vol.header.dtype);
  put_f32(hdr + 21, vol.header.spacing_mm[0]);
  put_f32(hdr + 25, vol.header.spacing_mm[1]);
  put_f32(hdr + 29, vol.header.spacing_mm[2]);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(hdr), kHeaderBytes);
  if (vol.header.dtype == Dtype::f32)
    out.write(reinterpret_cast<const char*>(vol.f32.data()),
              static_cast<std::streamsize>(vol.f32.size() * 4));
  else
    out.write(reinterpret_cast<const char*>(vol.u8.data()),
              static_cast<std::streamsize>(vol.u8.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Volume read_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  uint8_t hdr[kHeaderBytes];
  in.read(reinterpret_cast<char*>(hdr), kHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kHeaderBytes))
    throw std::runtime_error("truncated header: " + path);
  if (std::memcmp(hdr, kMagic, 4) != 0)
    throw std::runtime_error("bad magic (not an HVL1 volume): " + path);

  Volume vol;
  vol.header.version = get_u32(hdr + 4);
  if (vol.header.version != 1)
    throw std::runtime_error("unsupported HVL1 version: " + path);
  vol.header.depth = get_u32(hdr + 8);
  vol.header.height = get_u32(hdr + 12);
  vol.header.width = get_u32(hdr + 16);
  uint8_t dt = hdr[20];
  if (dt != 1 && dt != 2) throw std::runtime_error("unknown dtype code: " + path);
  vol.header.dtype = static_cast<Dtype>(dt);
  vol.header.spacing_mm = {get_f32(hdr + 21), get_f32(hdr + 25), get_f32(hdr + 29)};

  size_t n = static_cast<size_t>(vol.voxel_count());
  size_t payload = n * dtype_size(vol.header.dtype);
  if (vol.header.dtype == Dtype::f32) {
    vol.f32.resize(n);
    in.read(reinterpret_cast<char*>(vol.f32.data()),
            static_cast<std::streamsize>(payload));
  } else {
    vol.u8.resize(n);
    in.read(reinterpret_cast<char*>(vol.u8.data()),
            static_cast<std::streamsize>(payload));
  }
  if (in.gcount() != static_cast<std::streamsize>(payload))
    throw std::runtime_error("truncated payload: " + path);
  vol.validate();
  return vol;
}

// ---------------------------------------------------------------------------

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::runtime_error("unknown split value: '" + s + "'");
}

namespace {

// minimal CSV with double-quote escaping
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const std::vector<std::string> kFixedColumns = {
    "study_id", "patient_id", "split", "label", "volume_path", "mask_path"};

}  // namespace

void CohortManifest::validate() const {
  std::set<std::string> ids;
  std::map<std::string, Split> patient_split;
  for (const auto& r : records) {
    if (!ids.insert(r.study_id).second)
      throw std::runtime_error("duplicate study_id: " + r.study_id);
    if (r.label != 0 && r.label != 1)
      throw std::runtime_error("label outside {0,1} for study " + r.study_id);
    auto [it, inserted] = patient_split.emplace(r.patient_id, r.split);
    if (!inserted && it->second != r.split)
      throw std::runtime_error("patient " + r.patient_id +
                               " appears in more than one split");
    if (r.features.size() != feature_names.size())
      throw std::runtime_error("feature count mismatch for study " + r.study_id);
  }
}

std::vector<std::string> CohortManifest::unique_patients() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.patient_id).second) out.push_back(r.patient_id);
  return out;
}

CohortManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty manifest: " + path);
  auto header = split_csv_line(line);
  if (header.size() < kFixedColumns.size())
    throw std::runtime_error("manifest missing required columns");
  for (size_t i = 0; i < kFixedColumns.size(); ++i)
    if (header[i] != kFixedColumns[i])
      throw std::runtime_error("manifest column " + std::to_string(i) +
                               " must be '" + kFixedColumns[i] + "', got '" +
                               header[i] + "'");

  CohortManifest m;
  m.feature_names.assign(header.begin() + kFixedColumns.size(), header.end());

  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("manifest row " + std::to_string(line_no) +
                               ": expected " + std::to_string(header.size()) +
                               " cells, got " + std::to_string(cells.size()));
    StudyRecord r;
    r.study_id = cells[0];
    r.patient_id = cells[1];
    r.split = parse_split(cells[2]);
    try {
      size_t pos = 0;
      r.label = std::stoi(cells[3], &pos);
      if (pos != cells[3].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::runtime_error("manifest row " + std::to_string(line_no) +
                               ": bad label '" + cells[3] + "'");
    }
    if (r.label != 0 && r.label != 1)
      throw std::runtime_error("manifest row " + std::to_string(line_no) +
                               ": label outside {0,1}");
    r.volume_path = cells[4];
    r.mask_path = cells[5];
    r.features.reserve(m.feature_names.size());
    for (size_t i = kFixedColumns.size(); i < cells.size(); ++i) {
      const std::string& c = cells[i];
      if (c.empty() || c == "nan" || c == "NaN")
        r.features.push_back(std::nan(""));
      else
        r.features.push_back(std::stod(c));
    }
    m.records.push_back(std::move(r));
  }
  m.validate();
  return m;
}

void write_manifest(const CohortManifest& m, const std::string& path) {
  m.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (size_t i = 0; i < kFixedColumns.size(); ++i)
    out << (i ? "," : "") << kFixedColumns[i];
  for (const auto& f : m.feature_names) out << ',' << csv_escape(f);
  out << '\n';
  for (const auto& r : m.records) {
    out << csv_escape(r.study_id) << ',' << csv_escape(r.patient_id) << ','
        << split_name(r.split) << ',' << r.label << ','
        << csv_escape(r.volume_path) << ',' << csv_escape(r.mask_path);
    for (double f : r.features) out << ',' << format_double(f);
    out << '\n';
  }
  if (!out) throw std::runtime_error("manifest write failed: " + path);
}

CohortManifest patient_level_split(const std::vector<StudyRecord>& records,
                                   const std::array<double, 3>& fractions,
                                   uint64_t seed) {
  if (records.empty()) throw std::runtime_error("patient_level_split: no records");
  double fsum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(fsum - 1.0) > 1e-9)
    throw std::runtime_error("patient_level_split: fractions must sum to 1");

  std::vector<std::string> patients;
  {
    std::set<std::string> seen;
    for (const auto& r : records)
      if (seen.insert(r.patient_id).second) patients.push_back(r.patient_id);
  }
  Rng rng(seed);
  rng.shuffle(patients);

  // largest-remainder apportionment keeps every split within +-1 patient
  size_t n = patients.size();
  std::array<size_t, 3> counts;
  std::array<double, 3> rem;
  size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = fractions[i] * static_cast<double>(n);
    counts[i] = static_cast<size_t>(std::floor(exact));
    rem[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[i] > rem[best]) best = i;
    counts[best]++;
    rem[best] = -1.0;
    ++assigned;
  }

  std::map<std::string, Split> assignment;
  size_t idx = 0;
  for (int s = 0; s < 3; ++s)
    for (size_t i = 0; i < counts[s]; ++i)
      assignment[patients[idx++]] = static_cast<Split>(s);

  CohortManifest out;
  out.records = records;
  for (auto& r : out.records) r.split = assignment.at(r.patient_id);
  if (!out.records.empty()) {
    // records alone carry no column names; synthesize stable placeholders
    size_t nf = out.records.front().features.size();
    out.feature_names.resize(nf);
    for (size_t i = 0; i < nf; ++i) out.feature_names[i] = "f" + std::to_string(i);
  }
  out.validate();
  return out;
}

CohortManifest patient_level_split(const CohortManifest& manifest,
                                   const std::array<double, 3>& fractions,
                                   uint64_t seed) {
  CohortManifest out = patient_level_split(manifest.records, fractions, seed);
  out.feature_names = manifest.feature_names;
  out.schema_version = manifest.schema_version;
  return out;
}

}  // namespace sdh::dataio
