#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "curvepose/synth.hpp"

namespace curvepose {

inline constexpr int kTruthSchemaVersion = 1;

/// Ground truth as a JSON document (keys documented in the README).
std::string truth_to_json(const GroundTruth& truth);
/// Throws IoError mentioning `source` when keys are missing or of the wrong type.
GroundTruth truth_from_json(const std::string& text, const std::string& source = "<memory>");

GroundTruth read_truth(const std::filesystem::path& path);
void write_truth(const GroundTruth& truth, const std::filesystem::path& path);

/// Writes samples one at a time; the manifest is written by finish().
class DatasetWriter {
public:
    explicit DatasetWriter(std::filesystem::path dir);
    void add(const SceneSample& sample);
    void finish();
    std::size_t size() const { return entries_.size(); }

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> entries_;
};

/// Layout: dir/images/NNNNN.png, dir/truth/NNNNN.json, dir/manifest.json.
void write_dataset(const std::vector<SceneSample>& samples, const std::filesystem::path& dir);
std::vector<SceneSample> read_dataset(const std::filesystem::path& dir);

/// Lazy view over a dataset directory; entries follow manifest order.
class DatasetReader {
public:
    struct Entry {
        std::filesystem::path image;
        std::filesystem::path truth;
    };

    explicit DatasetReader(std::filesystem::path dir);

    std::size_t size() const { return entries_.size(); }
    const Entry& entry(std::size_t i) const { return entries_.at(i); }
    SceneSample load(std::size_t i) const;
    GroundTruth load_truth(std::size_t i) const;

private:
    std::filesystem::path dir_;
    std::vector<Entry> entries_;
};

/// First floor(0.9 n) items in order train, the rest validate. n >= 10.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_dataset(const std::vector<T>& items);

/// Number of training items produced by split_dataset for n items.
std::size_t train_split_size(std::size_t n);

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_dataset(const std::vector<T>& items) {
    const std::size_t n_train = train_split_size(items.size());
    return {std::vector<T>(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_train)),
            std::vector<T>(items.begin() + static_cast<std::ptrdiff_t>(n_train), items.end())};
}

}  // namespace curvepose
