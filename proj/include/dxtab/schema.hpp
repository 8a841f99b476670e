#pragma once

// Canonical column vocabulary for the cohort CSVs. Engineered column names
// are fixed strings so exported reports line up with the clinical feature
// vocabulary used throughout.

#include <array>
#include <string_view>
#include <vector>

namespace dxtab::schema {

// Meta columns required in every cohort CSV, in order.
inline constexpr std::array<std::string_view, 4> kMetaColumns = {"subject_id", "sex", "age",
                                                                 "visit"};

inline constexpr std::array<std::string_view, 6> kClinicalFeatures = {
    "HbA1c", "Fasting_Glucose", "LDL", "HDL", "Self_Reported_T2DM", "Antidiabetic_Medication"};

inline constexpr std::array<std::string_view, 24> kDxaFeatures = {
    "Android_Fat_Mass", "Gynoid_Fat_Mass", "VAT_Mass",     "VAT_Volume",   "Total_Fat_Mass",
    "Total_Lean_Mass",  "Trunk_Fat_Mass",  "Arms_Fat_Mass", "Legs_Fat_Mass",
    "Total_Fat_Free_Mass", "Total_Area",   "L1_BMD",       "L2_BMD",       "L3_BMD",
    "L4_BMD",           "Neck_BMD",        "Ward_BMD",     "Troch_BMD",    "Spine_TScore",
    "Femur_TScore",     "Ward_TScore",     "Troch_TScore", "Spine_ZScore", "Femur_ZScore"};

// Diabetic labeling criteria fields.
inline constexpr std::string_view kHba1c = "HbA1c";
inline constexpr std::string_view kFastingGlucose = "Fasting_Glucose";
inline constexpr std::string_view kSelfReported = "Self_Reported_T2DM";
inline constexpr std::string_view kMedication = "Antidiabetic_Medication";

// Inputs to the engineered features.
inline constexpr std::array<std::string_view, 4> kSpineBmdSites = {"L1_BMD", "L2_BMD", "L3_BMD",
                                                                   "L4_BMD"};
inline constexpr std::array<std::string_view, 7> kAllBmdSites = {
    "L1_BMD", "L2_BMD", "L3_BMD", "L4_BMD", "Neck_BMD", "Ward_BMD", "Troch_BMD"};
inline constexpr std::array<std::string_view, 4> kTScoreSites = {"Spine_TScore", "Femur_TScore",
                                                                 "Ward_TScore", "Troch_TScore"};

inline constexpr std::array<std::string_view, 10> kEngineeredFeatures = {
    "Central_Obesity_Ratio", "Visceral_Adiposity_Index", "Muscle_Fat_Ratio",
    "Trunk_Fat_Percentage",  "FFM_Index",                "Spine_BMD_Mean",
    "Bone_Health_Composite", "Osteoporosis_Risk",        "Peripheral_Fat_Ratio",
    "BMD_Coefficient_Variation"};

// Columns the labeled feature matrix gains from record metadata.
inline constexpr std::string_view kAgeColumn = "Age";
inline constexpr std::string_view kSexColumn = "Sex";  // 0 = male, 1 = female

// Masses and areas must be non-negative when present; BMD strictly positive.
bool is_mass_or_area(std::string_view feature);
bool is_bmd(std::string_view feature);
bool is_flag(std::string_view feature);

// Unit string for prompt formatting ("" when unitless).
std::string_view unit_of(std::string_view feature);

std::vector<std::string> default_feature_names();

}  // namespace dxtab::schema
