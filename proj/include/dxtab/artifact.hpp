#pragma once

// Model persistence convention: a versioned JSON manifest next to a flat
// little-endian value blob. The manifest records parameter names, shapes,
// offsets and the blob dtype (f32 for compact network weights, f64 where
// exact values are load-bearing, e.g. tree thresholds).

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace dxtab::artifact {

inline constexpr const char* kFormatVersion = "1";

enum class Dtype { f32, f64 };
std::string to_string(Dtype d);
Dtype dtype_from_string(const std::string& s);

struct BlobWriter {
    std::vector<double> values;
    nlohmann::json params = nlohmann::json::array();

    void add(const std::string& name, const std::vector<std::int64_t>& shape,
             const double* data, std::size_t count);
    void add(const std::string& name, const std::vector<double>& data);
};

void write_blob(const std::string& path, const std::vector<double>& values, Dtype dtype);
std::vector<double> read_blob(const std::string& path, Dtype dtype);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

struct BlobReader {
    std::vector<double> values;
    nlohmann::json params;

    BlobReader(const std::string& blob_path, const nlohmann::json& manifest_params, Dtype dtype);
    // Fetches the named tensor; throws when missing or mis-sized.
    std::vector<double> get(const std::string& name) const;
    std::vector<std::int64_t> shape(const std::string& name) const;
};

}  // namespace dxtab::artifact
