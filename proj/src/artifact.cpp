#include "dxtab/artifact.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dxtab::artifact {

std::string to_string(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

Dtype dtype_from_string(const std::string& s) {
    if (s == "f32") return Dtype::f32;
    if (s == "f64") return Dtype::f64;
    throw std::runtime_error("artifact: unknown dtype \"" + s + "\"");
}

void BlobWriter::add(const std::string& name, const std::vector<std::int64_t>& shape,
                     const double* data, std::size_t count) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = shape;
    entry["offset"] = values.size();
    entry["count"] = count;
    params.push_back(entry);
    values.insert(values.end(), data, data + count);
}

void BlobWriter::add(const std::string& name, const std::vector<double>& data) {
    add(name, {static_cast<std::int64_t>(data.size())}, data.data(), data.size());
}

namespace {

template <typename T>
void append_le(std::string& out, T v) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(T));
    for (std::size_t b = 0; b < sizeof(T); ++b)
        out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

template <typename T>
T read_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b)
        bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    T v;
    std::memcpy(&v, &bits, sizeof(T));
    return v;
}

}  // namespace

void write_blob(const std::string& path, const std::vector<double>& values, Dtype dtype) {
    std::string bytes;
    bytes.reserve(values.size() * (dtype == Dtype::f32 ? 4 : 8));
    for (double v : values) {
        if (dtype == Dtype::f32)
            append_le(bytes, static_cast<float>(v));
        else
            append_le(bytes, v);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("artifact: cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("artifact: write failed: " + path);
}

std::vector<double> read_blob(const std::string& path, Dtype dtype) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("artifact: cannot read " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    const std::size_t width = dtype == Dtype::f32 ? 4 : 8;
    if (bytes.size() % width != 0)
        throw std::runtime_error("artifact: truncated blob: " + path);
    std::vector<double> out(bytes.size() / width);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (dtype == Dtype::f32)
            out[i] = read_le<float>(bytes.data() + i * 4);
        else
            out[i] = read_le<double>(bytes.data() + i * 8);
    }
    return out;
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("artifact: cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("artifact: write failed: " + path);
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("artifact: cannot read " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

BlobReader::BlobReader(const std::string& blob_path, const nlohmann::json& manifest_params,
                       Dtype dtype)
    : values(read_blob(blob_path, dtype)), params(manifest_params) {}

std::vector<double> BlobReader::get(const std::string& name) const {
    for (const auto& entry : params) {
        if (entry.at("name") != name) continue;
        const auto offset = entry.at("offset").get<std::size_t>();
        const auto count = entry.at("count").get<std::size_t>();
        if (offset + count > values.size())
            throw std::runtime_error("artifact: blob too short for " + name);
        return std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(offset),
                                   values.begin() + static_cast<std::ptrdiff_t>(offset + count));
    }
    throw std::runtime_error("artifact: parameter not found: " + name);
}

std::vector<std::int64_t> BlobReader::shape(const std::string& name) const {
    for (const auto& entry : params)
        if (entry.at("name") == name) return entry.at("shape").get<std::vector<std::int64_t>>();
    throw std::runtime_error("artifact: parameter not found: " + name);
}

}  // namespace dxtab::artifact
