#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace sdh::tabfeat {

// Laboratory observations, ascending in days before the imaging study.
struct LabSeries {
  std::string lab_name;
  std::vector<std::pair<double, double>> observations;  // (days_before, value)

  void validate() const;  // sorted, non-negative offsets
};

// The 17 weighted Charlson conditions plus age.
struct ComorbidityProfile {
  bool myocardial_infarction = false;
  bool congestive_heart_failure = false;
  bool peripheral_vascular_disease = false;
  bool cerebrovascular_disease = false;
  bool chronic_pulmonary_disease = false;
  bool diabetes = false;                  // without chronic complications
  bool diabetes_complicated = false;      // takes precedence over `diabetes`
  bool mild_liver_disease = false;
  bool moderate_severe_liver_disease = false;
  bool renal_disease = false;
  bool malignancy = false;                // any, excluding metastasis
  bool metastatic_solid_tumor = false;
  bool leukemia_lymphoma = false;
  bool dementia = false;
  bool hemiplegia = false;
  bool aids_hiv = false;
  bool rheumatologic_disease = false;
  double age_years = 0.0;
};

inline constexpr int kNumConditions = 17;

struct ConditionInfo {
  const char* name;
  int weight;
};

// Charlson weights; order fixed and mirrored in the feature schema.
const std::array<ConditionInfo, kNumConditions>& condition_table();

inline constexpr int kNumMedications = 8;
const std::array<const char*, kNumMedications>& medication_names();

inline constexpr int kNumLabs = 5;
const std::array<const char*, kNumLabs>& lab_names();

// Most recent observation within the lookback horizon; nullopt if none.
std::optional<double> most_recent_lab(const LabSeries& series,
                                      double lookback_days = 730.0);

// Exponentially weighted average with half-life decay over the lookback
// horizon; weights 0.5^(days/half_life), normalized. nullopt if no
// observation falls inside the horizon.
std::optional<double> ewa_lab(const LabSeries& series, double half_life_days = 180.0,
                              double lookback_days = 730.0);

// ACCI age adjustment: one point per decade over 40, starting at 50, capped
// at 5 for age >= 90.
int acci_age_points(double age_years);

// One weighted feature per condition (weight if present, else 0) followed by
// the age-points feature. Complicated diabetes suppresses the uncomplicated
// feature.
std::vector<double> cci_component_features(const ComorbidityProfile& profile);

struct FeatureSchema {
  std::vector<std::string> names;
  int index_of(const std::string& name) const;  // -1 if absent
};

FeatureSchema default_schema();
void write_schema(const FeatureSchema& s, const std::string& path);
FeatureSchema read_schema(const std::string& path);

struct StudyTabularInputs {
  std::array<int, kNumMedications> med_flags = {};
  std::array<LabSeries, kNumLabs> labs;  // order matches lab_names()
  ComorbidityProfile comorbidities;
  int sex = 0;  // 0 = male, 1 = female
};

struct FeatureConfig {
  double half_life_days = 180.0;
  double lookback_days = 730.0;
};

// Full vector in schema order: medication flags, (most_recent, weighted)
// lab pairs, weighted CCI components, age points, sex. Missing labs are
// NaN sentinels.
std::vector<double> assemble_features(const StudyTabularInputs& in,
                                      const FeatureConfig& cfg = {});

}  // namespace sdh::tabfeat
