#include "dxtab/schema.hpp"

#include <algorithm>

namespace dxtab::schema {

bool is_mass_or_area(std::string_view feature) {
    return feature.ends_with("_Mass") || feature == "Total_Area" ||
           feature == "Total_Fat_Free_Mass";
}

bool is_bmd(std::string_view feature) { return feature.ends_with("_BMD"); }

bool is_flag(std::string_view feature) {
    return feature == kSelfReported || feature == kMedication;
}

std::string_view unit_of(std::string_view feature) {
    if (feature == kHba1c) return "%";
    if (feature == kFastingGlucose || feature == "LDL" || feature == "HDL") return "mg/dL";
    if (feature == "VAT_Volume") return "cm^3";
    if (feature == "Total_Area") return "cm^2";
    if (is_bmd(feature)) return "g/cm^2";
    if (is_mass_or_area(feature)) return "g";
    if (feature == "Trunk_Fat_Percentage") return "%";
    if (feature == kAgeColumn) return "years";
    return "";
}

std::vector<std::string> default_feature_names() {
    std::vector<std::string> names;
    names.reserve(kClinicalFeatures.size() + kDxaFeatures.size());
    for (auto f : kClinicalFeatures) names.emplace_back(f);
    for (auto f : kDxaFeatures) names.emplace_back(f);
    return names;
}

}  // namespace dxtab::schema
