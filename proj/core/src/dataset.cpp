#include "curvepose/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "curvepose/errors.hpp"
#include "json.hpp"

namespace curvepose {

using nlohmann::json;

namespace {

std::string index_name(std::size_t i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%05zu%s", i, ext);
    return buf;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& text, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << text;
}

json vec3_json(const Vec3& v) {
    return json::array({v.x(), v.y(), v.z()});
}

Vec3 vec3_from(const json& j) {
    if (!j.is_array() || j.size() != 3) {
        throw std::invalid_argument("expected a 3-element array");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

std::string truth_to_json(const GroundTruth& t) {
    json j;
    j["schema_version"] = kTruthSchemaVersion;
    j["target_id"] = t.target_id;
    j["relative_position"] = vec3_json(t.relative_position);
    j["relative_rotation_euler"] = vec3_json(t.relative_rotation_euler);
    j["diameter"] = t.diameter;
    j["label_width"] = t.label_width;
    j["label_height"] = t.label_height;
    j["intrinsics"] = {{"fx", t.intrinsics.fx}, {"fy", t.intrinsics.fy},    {"s", t.intrinsics.s},
                       {"cx", t.intrinsics.cx}, {"cy", t.intrinsics.cy},    {"width", t.intrinsics.width},
                       {"height", t.intrinsics.height}};
    j["bbox"] = {{"x", t.bbox.x}, {"y", t.bbox.y}, {"w", t.bbox.w}, {"h", t.bbox.h}};
    return j.dump(2);
}

GroundTruth truth_from_json(const std::string& text, const std::string& source) {
    try {
        const json j = json::parse(text);
        const int version = j.at("schema_version").get<int>();
        if (version != kTruthSchemaVersion) {
            throw IoError(source + ": unsupported schema_version " + std::to_string(version));
        }
        GroundTruth t;
        t.target_id = j.at("target_id").get<int>();
        t.relative_position = vec3_from(j.at("relative_position"));
        t.relative_rotation_euler = vec3_from(j.at("relative_rotation_euler"));
        t.diameter = j.at("diameter").get<double>();
        t.label_width = j.at("label_width").get<double>();
        t.label_height = j.at("label_height").get<double>();
        const auto& k = j.at("intrinsics");
        t.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("s").get<double>(),
                        k.at("cx").get<double>(), k.at("cy").get<double>(), k.at("width").get<int>(),
                        k.at("height").get<int>()};
        const auto& b = j.at("bbox");
        t.bbox = {b.at("x").get<double>(), b.at("y").get<double>(), b.at("w").get<double>(), b.at("h").get<double>()};
        return t;
    } catch (const IoError&) {
        throw;
    } catch (const std::exception& e) {
        throw IoError(source + ": invalid ground truth: " + e.what());
    }
}

GroundTruth read_truth(const std::filesystem::path& path) {
    return truth_from_json(read_text(path), path.string());
}

void write_truth(const GroundTruth& truth, const std::filesystem::path& path) {
    write_text(truth_to_json(truth), path);
}

DatasetWriter::DatasetWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_ / "images");
    std::filesystem::create_directories(dir_ / "truth");
}

void DatasetWriter::add(const SceneSample& sample) {
    const std::string image = "images/" + index_name(entries_.size(), ".png");
    const std::string truth = "truth/" + index_name(entries_.size(), ".json");
    write_png(sample.image, dir_ / image);
    write_truth(sample.truth, dir_ / truth);
    entries_.emplace_back(image, truth);
}

void DatasetWriter::finish() {
    json manifest;
    manifest["schema_version"] = kTruthSchemaVersion;
    manifest["count"] = entries_.size();
    json entries = json::array();
    for (const auto& [image, truth] : entries_) {
        entries.push_back({{"image", image}, {"truth", truth}});
    }
    manifest["entries"] = std::move(entries);
    write_text(manifest.dump(2), dir_ / "manifest.json");
}

void write_dataset(const std::vector<SceneSample>& samples, const std::filesystem::path& dir) {
    DatasetWriter writer(dir);
    for (const auto& s : samples) {
        writer.add(s);
    }
    writer.finish();
}

DatasetReader::DatasetReader(std::filesystem::path dir) : dir_(std::move(dir)) {
    const auto path = dir_ / "manifest.json";
    if (!std::filesystem::exists(path)) {
        throw IoError("missing manifest " + path.string());
    }
    try {
        const json m = json::parse(read_text(path));
        for (const auto& e : m.at("entries")) {
            entries_.push_back({dir_ / e.at("image").get<std::string>(), dir_ / e.at("truth").get<std::string>()});
        }
    } catch (const IoError&) {
        throw;
    } catch (const std::exception& e) {
        throw IoError(path.string() + ": invalid manifest: " + e.what());
    }
}

GroundTruth DatasetReader::load_truth(std::size_t i) const {
    const auto& e = entries_.at(i);
    if (!std::filesystem::exists(e.truth)) {
        throw IoError("missing ground-truth sidecar " + e.truth.string());
    }
    return read_truth(e.truth);
}

SceneSample DatasetReader::load(std::size_t i) const {
    SceneSample s;
    s.truth = load_truth(i);
    s.image = read_png(entries_.at(i).image);
    return s;
}

std::vector<SceneSample> read_dataset(const std::filesystem::path& dir) {
    const DatasetReader reader(dir);
    std::vector<SceneSample> out;
    out.reserve(reader.size());
    for (std::size_t i = 0; i < reader.size(); ++i) {
        out.push_back(reader.load(i));
    }
    return out;
}

std::size_t train_split_size(std::size_t n) {
    if (n < 10) {
        throw ConfigError("split_dataset: need at least 10 samples, got " + std::to_string(n));
    }
    return (n * 9) / 10;
}

}  // namespace curvepose
