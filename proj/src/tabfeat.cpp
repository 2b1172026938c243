#include "sdh/tabfeat.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace sdh::tabfeat {

using nlohmann::json;

void LabSeries::validate() const {
  double prev = -1.0;
  for (const auto& [days, value] : observations) {
    (void)value;
    if (days < 0.0)
      throw std::runtime_error("lab series '" + lab_name + "': negative offset");
    if (days < prev)
      throw std::runtime_error("lab series '" + lab_name + "': not sorted");
    prev = days;
  }
}

const std::array<ConditionInfo, kNumConditions>& condition_table() {
  static const std::array<ConditionInfo, kNumConditions> table = {{
      {"cci_myocardial_infarction", 1},
      {"cci_congestive_heart_failure", 1},
      {"cci_peripheral_vascular_disease", 1},
      {"cci_cerebrovascular_disease", 1},
      {"cci_chronic_pulmonary_disease", 1},
      {"cci_diabetes", 1},
      {"cci_diabetes_complicated", 2},
      {"cci_mild_liver_disease", 1},
      {"cci_moderate_severe_liver_disease", 3},
      {"cci_renal_disease", 2},
      {"cci_malignancy", 2},
      {"cci_metastatic_solid_tumor", 6},
      {"cci_leukemia_lymphoma", 2},
      {"cci_dementia", 1},
      {"cci_hemiplegia", 2},
      {"cci_aids_hiv", 6},
      {"cci_rheumatologic_disease", 1},
  }};
  return table;
}

const std::array<const char*, kNumMedications>& medication_names() {
  static const std::array<const char*, kNumMedications> names = {
      "med_heparin",   "med_aspirin",    "med_apixaban", "med_clopidogrel",
      "med_warfarin",  "med_ticagrelor", "med_dabigatran", "med_rivaroxaban"};
  return names;
}

const std::array<const char*, kNumLabs>& lab_names() {
  static const std::array<const char*, kNumLabs> names = {
      "platelets", "inr", "pt", "aptt", "anti_xa"};
  return names;
}

std::optional<double> most_recent_lab(const LabSeries& series, double lookback_days) {
  series.validate();
  for (const auto& [days, value] : series.observations)
    if (days <= lookback_days) return value;  // sorted ascending: first is newest
  return std::nullopt;
}

std::optional<double> ewa_lab(const LabSeries& series, double half_life_days,
                              double lookback_days) {
  series.validate();
  if (half_life_days <= 0.0)
    throw std::runtime_error("ewa_lab: half-life must be positive");
  double d_min = std::numeric_limits<double>::infinity();
  for (const auto& [days, value] : series.observations) {
    (void)value;
    if (days <= lookback_days) d_min = std::min(d_min, days);
  }
  if (!std::isfinite(d_min)) return std::nullopt;
  // weights shifted by the newest offset: identical EWA, no underflow at the
  // short-half-life limit
  double num = 0.0, den = 0.0;
  for (const auto& [days, value] : series.observations) {
    if (days > lookback_days) continue;
    double w = std::exp2(-(days - d_min) / half_life_days);
    num += w * value;
    den += w;
  }
  return num / den;
}

int acci_age_points(double age_years) {
  if (age_years < 0.0) throw std::runtime_error("acci_age_points: negative age");
  if (age_years < 50.0) return 0;
  if (age_years < 60.0) return 1;
  if (age_years < 70.0) return 2;
  if (age_years < 80.0) return 3;
  if (age_years < 90.0) return 4;
  return 5;
}

std::vector<double> cci_component_features(const ComorbidityProfile& p) {
  const auto& table = condition_table();
  bool flags[kNumConditions] = {
      p.myocardial_infarction,
      p.congestive_heart_failure,
      p.peripheral_vascular_disease,
      p.cerebrovascular_disease,
      p.chronic_pulmonary_disease,
      p.diabetes && !p.diabetes_complicated,  // mutually exclusive in scoring
      p.diabetes_complicated,
      p.mild_liver_disease,
      p.moderate_severe_liver_disease,
      p.renal_disease,
      p.malignancy,
      p.metastatic_solid_tumor,
      p.leukemia_lymphoma,
      p.dementia,
      p.hemiplegia,
      p.aids_hiv,
      p.rheumatologic_disease,
  };
  std::vector<double> out(kNumConditions + 1, 0.0);
  for (int i = 0; i < kNumConditions; ++i)
    out[i] = flags[i] ? static_cast<double>(table[i].weight) : 0.0;
  out[kNumConditions] = static_cast<double>(acci_age_points(p.age_years));
  return out;
}

FeatureSchema default_schema() {
  FeatureSchema s;
  for (const char* m : medication_names()) s.names.emplace_back(m);
  for (const char* l : lab_names()) {
    s.names.push_back(std::string("lab_") + l + "_recent");
    s.names.push_back(std::string("lab_") + l + "_weighted");
  }
  for (const auto& c : condition_table()) s.names.emplace_back(c.name);
  s.names.emplace_back("acci_age_points");
  s.names.emplace_back("sex");
  return s;
}

int FeatureSchema::index_of(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

void write_schema(const FeatureSchema& s, const std::string& path) {
  json j;
  j["schema_version"] = 1;
  j["features"] = s.names;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write schema: " + path);
  out << j.dump(2) << '\n';
}

FeatureSchema read_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open schema: " + path);
  json j = json::parse(in);
  FeatureSchema s;
  s.names = j.at("features").get<std::vector<std::string>>();
  return s;
}

std::vector<double> assemble_features(const StudyTabularInputs& in,
                                      const FeatureConfig& cfg) {
  const double nan = std::nan("");
  std::vector<double> out;
  out.reserve(default_schema().names.size());
  for (int flag : in.med_flags) {
    if (flag != 0 && flag != 1)
      throw std::runtime_error("assemble_features: medication flags must be 0/1");
    out.push_back(static_cast<double>(flag));
  }
  for (int i = 0; i < kNumLabs; ++i) {
    auto recent = most_recent_lab(in.labs[i], cfg.lookback_days);
    auto weighted = ewa_lab(in.labs[i], cfg.half_life_days, cfg.lookback_days);
    out.push_back(recent ? *recent : nan);
    out.push_back(weighted ? *weighted : nan);
  }
  for (double f : cci_component_features(in.comorbidities)) out.push_back(f);
  if (in.sex != 0 && in.sex != 1)
    throw std::runtime_error("assemble_features: sex must be 0/1");
  out.push_back(static_cast<double>(in.sex));
  return out;
}

}  // namespace sdh::tabfeat
