#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gzslkit/matrix.hpp"
#include "gzslkit/rng.hpp"

namespace gzsl::data {

// Sorted distinct class ids with O(log n) id -> position lookup.
struct ClassIndex {
    std::vector<int> ids;

    static ClassIndex from_labels(std::span<const int> labels);
    static ClassIndex from_ids(std::vector<int> ids);

    std::size_t size() const { return ids.size(); }
    std::size_t index_of(int id) const;  // throws UnknownClassError
    bool contains(int id) const;

    bool operator==(const ClassIndex&) const = default;
};

struct FeatureDataset {
    num::Matrix features;                     // N x d
    std::vector<int> labels;                  // N class ids
    std::map<int, std::string> class_names;   // optional
    std::optional<num::Matrix> attributes;    // optional, row index = class id

    std::size_t rows() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    void check_consistent() const;
};

enum class FileFormat { csv, fvec1 };
FileFormat format_from_string(const std::string& s);
std::string to_string(FileFormat f);

// CSV: header "label,f0,...,f{d-1}", one sample per line.
// FVEC1: magic "FVEC1", little-endian u32 rows, u32 cols, f32 row-major
// features, then i32 labels.
FeatureDataset load_features(const std::string& path, FileFormat format);
void save_features(const FeatureDataset& data, const std::string& path, FileFormat format);

// Disjoint seen/unseen class sets plus the per-class train/test split of
// the seen samples (unseen samples stay whole: they are clustered
// unlabeled and tested on, the transductive setting).
struct SplitSpec {
    std::vector<int> seen_classes;
    std::vector<int> unseen_classes;
    double train_frac = 0.8;
    double test_frac = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const SplitSpec&) const = default;
};

struct SeenSplit {
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
};
// Per-class stratified split of the rows whose label is a seen class.
SeenSplit stratified_split(std::span<const int> labels, const SplitSpec& split);

FeatureDataset subset(const FeatureDataset& data, std::span<const std::size_t> rows);

struct BenchmarkSpec {
    std::size_t classes = 5;
    std::size_t seen = 3;  // class ids 0..seen-1 are seen
    std::size_t dim = 32;
    double sep_cos_max = 0.3;
    std::size_t per_class = 300;
    double noise_std = 0.1;
    // > 0 pins the last (unseen) class mean at this cosine to the class-0
    // mean, overriding the separation cap for that pair.
    double overlap_cos = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Benchmark {
    FeatureDataset data;
    SplitSpec split;
};

// Class means are rejection-sampled on the unit sphere until every
// pairwise cosine is <= sep_cos_max; samples are normalized mean +
// isotropic Gaussian noise draws.
Benchmark make_synthetic_benchmark(const BenchmarkSpec& spec);

}  // namespace gzsl::data
