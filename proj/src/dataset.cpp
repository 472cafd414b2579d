#include "gzslkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "gzslkit/error.hpp"
#include "gzslkit/kernels.hpp"

namespace gzsl::data {

ClassIndex ClassIndex::from_labels(std::span<const int> labels) {
    std::set<int> distinct(labels.begin(), labels.end());
    return {std::vector<int>(distinct.begin(), distinct.end())};
}

ClassIndex ClassIndex::from_ids(std::vector<int> in) {
    std::sort(in.begin(), in.end());
    in.erase(std::unique(in.begin(), in.end()), in.end());
    return {std::move(in)};
}

std::size_t ClassIndex::index_of(int id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id)
        throw UnknownClassError("class id " + std::to_string(id) + " not in index");
    return static_cast<std::size_t>(it - ids.begin());
}

bool ClassIndex::contains(int id) const {
    return std::binary_search(ids.begin(), ids.end(), id);
}

void FeatureDataset::check_consistent() const {
    if (labels.size() != features.rows())
        throw DimensionMismatchError("FeatureDataset: label count != feature rows");
    if (!features.all_finite()) throw NonFiniteError("FeatureDataset: non-finite feature value");
    if (attributes) {
        const ClassIndex idx = ClassIndex::from_labels(labels);
        for (int id : idx.ids)
            if (id < 0 || static_cast<std::size_t>(id) >= attributes->rows())
                throw DimensionMismatchError("FeatureDataset: attribute table misses a class row");
    }
}

FileFormat format_from_string(const std::string& s) {
    if (s == "csv") return FileFormat::csv;
    if (s == "fvec1") return FileFormat::fvec1;
    throw InvalidConfigError("unknown feature format: " + s + " (expected csv or fvec1)");
}

std::string to_string(FileFormat f) {
    return f == FileFormat::csv ? "csv" : "fvec1";
}

namespace {

constexpr char kMagic[5] = {'F', 'V', 'E', 'C', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw TruncatedFileError("fvec1: truncated while reading a u32");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

float read_f32(std::istream& in) {
    const std::uint32_t bits = read_u32(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

FeatureDataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_features: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw TruncatedFileError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t dim = 0;
    {
        std::stringstream header(line);
        std::string field;
        if (!std::getline(header, field, ',') || field != "label")
            throw ParseError(path + ":1: header must start with 'label'");
        while (std::getline(header, field, ',')) {
            if (field != "f" + std::to_string(dim))
                throw ParseError(path + ":1: expected column f" + std::to_string(dim));
            ++dim;
        }
        if (dim == 0) throw ParseError(path + ":1: no feature columns");
    }
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<double> row;
        row.reserve(dim);
        std::size_t col = 0;
        while (std::getline(ss, field, ',')) {
            try {
                if (col == 0) {
                    labels.push_back(std::stoi(field));
                } else {
                    row.push_back(std::stod(field));
                }
            } catch (const std::exception&) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": bad value '" + field +
                                 "' in column " + std::to_string(col));
            }
            ++col;
        }
        if (col != dim + 1)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(dim + 1) + " fields, got " + std::to_string(col));
        rows.push_back(std::move(row));
    }
    FeatureDataset out;
    out.features = num::Matrix::from_rows(rows);
    if (rows.empty()) out.features = num::Matrix(0, dim);
    out.labels = std::move(labels);
    out.check_consistent();
    return out;
}

FeatureDataset load_fvec1(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_features: cannot open " + path);
    char magic[5];
    if (!in.read(magic, 5)) throw TruncatedFileError(path + ": missing magic");
    if (std::memcmp(magic, kMagic, 5) != 0)
        throw MagicMismatchError(path + ": magic is not FVEC1");
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    FeatureDataset out;
    out.features = num::Matrix(rows, cols);
    for (double& v : out.features.data()) v = static_cast<double>(read_f32(in));
    out.labels.resize(rows);
    for (int& l : out.labels) l = static_cast<int>(read_u32(in));
    char extra;
    if (in.read(&extra, 1))
        throw ParseError(path + ": trailing bytes after label block");
    out.check_consistent();
    return out;
}

}  // namespace

FeatureDataset load_features(const std::string& path, FileFormat format) {
    return format == FileFormat::csv ? load_csv(path) : load_fvec1(path);
}

void save_features(const FeatureDataset& data, const std::string& path, FileFormat format) {
    data.check_consistent();
    if (format == FileFormat::csv) {
        std::ofstream out(path);
        if (!out) throw DataError("save_features: cannot open " + path);
        out << "label";
        for (std::size_t j = 0; j < data.dim(); ++j) out << ",f" << j;
        out << "\n";
        out.precision(17);
        for (std::size_t i = 0; i < data.rows(); ++i) {
            out << data.labels[i];
            for (double v : data.features.row(i)) out << ',' << v;
            out << "\n";
        }
    } else {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("save_features: cannot open " + path);
        out.write(kMagic, 5);
        write_u32(out, static_cast<std::uint32_t>(data.rows()));
        write_u32(out, static_cast<std::uint32_t>(data.dim()));
        for (double v : data.features.data()) write_f32(out, static_cast<float>(v));
        for (int l : data.labels) write_u32(out, static_cast<std::uint32_t>(l));
    }
}

void SplitSpec::validate() const {
    if (seen_classes.empty() || unseen_classes.empty())
        throw InvalidConfigError("SplitSpec: both class sets must be nonempty");
    std::set<int> seen(seen_classes.begin(), seen_classes.end());
    for (int u : unseen_classes)
        if (seen.count(u)) throw InvalidConfigError("SplitSpec: class sets must be disjoint");
    if (train_frac <= 0.0 || test_frac <= 0.0 || train_frac + test_frac > 1.0 + 1e-12)
        throw InvalidConfigError("SplitSpec: train/test fractions must be positive, sum <= 1");
}

SeenSplit stratified_split(std::span<const int> labels, const SplitSpec& split) {
    split.validate();
    SeenSplit out;
    num::RngState rng(split.seed);
    for (int cls : split.seen_classes) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) rows.push_back(i);
        if (rows.empty())
            throw EmptyClassError("stratified_split: seen class " + std::to_string(cls) +
                                  " has no samples");
        rng.shuffle(rows);
        std::size_t n_train = static_cast<std::size_t>(
            std::llround(split.train_frac * static_cast<double>(rows.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, rows.size() - 1);
        out.train_rows.insert(out.train_rows.end(), rows.begin(), rows.begin() + static_cast<long>(n_train));
        out.test_rows.insert(out.test_rows.end(), rows.begin() + static_cast<long>(n_train), rows.end());
    }
    std::sort(out.train_rows.begin(), out.train_rows.end());
    std::sort(out.test_rows.begin(), out.test_rows.end());
    return out;
}

FeatureDataset subset(const FeatureDataset& data, std::span<const std::size_t> rows) {
    FeatureDataset out;
    out.features = num::Matrix(rows.size(), data.dim());
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = data.features.row(rows[i]);
        std::copy(src.begin(), src.end(), out.features.row(i).begin());
        out.labels.push_back(data.labels[rows[i]]);
    }
    out.class_names = data.class_names;
    out.attributes = data.attributes;
    return out;
}

void BenchmarkSpec::validate() const {
    if (classes < 2) throw InvalidConfigError("benchmark: need at least 2 classes");
    if (seen == 0 || seen >= classes)
        throw InvalidConfigError("benchmark: need 0 < seen < classes");
    if (sep_cos_max <= 0.0 || sep_cos_max >= 1.0)
        throw InvalidConfigError("benchmark: sep_cos_max must be in (0,1)");
    if (per_class == 0) throw InvalidConfigError("benchmark: per_class must be >= 1");
    if (noise_std < 0.0) throw InvalidConfigError("benchmark: noise_std must be >= 0");
    if (overlap_cos < 0.0 || overlap_cos >= 1.0)
        throw InvalidConfigError("benchmark: overlap_cos must be in [0,1)");
    if (dim < 2) throw InvalidConfigError("benchmark: dim must be >= 2");
}

Benchmark make_synthetic_benchmark(const BenchmarkSpec& spec) {
    spec.validate();
    num::RngState rng(spec.seed);

    num::Matrix means(spec.classes, spec.dim);
    const std::size_t n_sampled = spec.overlap_cos > 0.0 ? spec.classes - 1 : spec.classes;
    for (std::size_t c = 0; c < n_sampled; ++c) {
        bool placed = false;
        for (int attempt = 0; attempt < 20000; ++attempt) {
            std::vector<double> cand = num::sample_gaussian(rng, spec.dim);
            num::l2_normalize_inplace(std::span<double>(cand));
            bool ok = true;
            for (std::size_t p = 0; p < c && ok; ++p)
                ok = num::cosine_sim(cand, means.row(p)) <= spec.sep_cos_max;
            if (ok) {
                std::copy(cand.begin(), cand.end(), means.row(c).begin());
                placed = true;
                break;
            }
        }
        if (!placed)
            throw RejectionTimeoutError("benchmark: could not separate class means at "
                                        "sep_cos_max, raise the cap or the dimension");
    }
    if (spec.overlap_cos > 0.0) {
        // Last class mean sits at the requested cosine to the class-0 mean:
        // m = cos * m0 + sqrt(1 - cos^2) * w with w a unit vector orthogonal
        // to m0.
        auto m0 = means.row(0);
        std::vector<double> w;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            w = num::sample_gaussian(rng, spec.dim);
            const double proj = num::dot(w, m0);
            for (std::size_t j = 0; j < spec.dim; ++j) w[j] -= proj * m0[j];
            if (num::norm2(w) > 1e-6) break;
        }
        num::l2_normalize_inplace(std::span<double>(w));
        auto last = means.row(spec.classes - 1);
        const double ortho = std::sqrt(1.0 - spec.overlap_cos * spec.overlap_cos);
        for (std::size_t j = 0; j < spec.dim; ++j)
            last[j] = spec.overlap_cos * m0[j] + ortho * w[j];
    }

    Benchmark bench;
    bench.data.features = num::Matrix(spec.classes * spec.per_class, spec.dim);
    bench.data.labels.resize(spec.classes * spec.per_class);
    std::size_t row = 0;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t i = 0; i < spec.per_class; ++i, ++row) {
            auto dst = bench.data.features.row(row);
            auto mean = means.row(c);
            for (std::size_t j = 0; j < spec.dim; ++j)
                dst[j] = mean[j] + spec.noise_std * rng.normal();
            num::l2_normalize_inplace(dst);
            bench.data.labels[row] = static_cast<int>(c);
        }
    }
    for (std::size_t c = 0; c < spec.classes; ++c) {
        if (c < spec.seen)
            bench.split.seen_classes.push_back(static_cast<int>(c));
        else
            bench.split.unseen_classes.push_back(static_cast<int>(c));
    }
    bench.split.seed = spec.seed;
    return bench;
}

}  // namespace gzsl::data
