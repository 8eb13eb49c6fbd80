#include "gwa/harness/dataset.hpp"

#include "gwa/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace gwa::harness {

const char* to_string(DatasetKind kind) noexcept
{
    switch (kind) {
    case DatasetKind::GaussianBlobs: return "blobs";
    case DatasetKind::TwoMoons: return "moons";
    case DatasetKind::Csv: return "csv";
    case DatasetKind::Idx: return "idx";
    }
    return "unknown";
}

DatasetKind dataset_kind_from_string(const std::string& name)
{
    if (name == "blobs" || name == "gaussian_blobs") return DatasetKind::GaussianBlobs;
    if (name == "moons" || name == "two_moons") return DatasetKind::TwoMoons;
    if (name == "csv") return DatasetKind::Csv;
    if (name == "idx") return DatasetKind::Idx;
    throw Error(ErrorCode::ConfigError, "unknown dataset '" + name + "'");
}

BlobSource::BlobSource(std::size_t classes, std::size_t dim, double separation, double noise,
                       std::mt19937_64& rng)
    : classes_(classes), dim_(dim), noise_(noise), centres_(classes * dim)
{
    if (classes < 2 || dim == 0) {
        throw Error(ErrorCode::InvalidArgument, "blobs need >= 2 classes and dim > 0");
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t c = 0; c < classes; ++c) {
        double norm_sq = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            centres_[c * dim + d] = normal(rng);
            norm_sq += centres_[c * dim + d] * centres_[c * dim + d];
        }
        const double scale = separation / std::sqrt(norm_sq);
        for (std::size_t d = 0; d < dim; ++d) {
            centres_[c * dim + d] *= scale;
        }
    }
}

Dataset BlobSource::sample(std::size_t n, std::mt19937_64& rng) const
{
    Dataset out;
    out.dim = dim_;
    out.classes = classes_;
    out.features.resize(n * dim_);
    out.labels.resize(n);
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(classes_ - 1));
    std::normal_distribution<double> normal(0.0, noise_);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t c = pick(rng);
        out.labels[i] = c;
        for (std::size_t d = 0; d < dim_; ++d) {
            out.features[i * dim_ + d] = static_cast<float>(centres_[c * dim_ + d] + normal(rng));
        }
    }
    return out;
}

BlobSource BlobSource::shifted(double shift, std::mt19937_64& rng) const
{
    BlobSource out = *this;
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> offset(dim_);
    for (std::size_t c = 0; c < classes_; ++c) {
        double norm_sq = 0.0;
        for (double& v : offset) {
            v = normal(rng);
            norm_sq += v * v;
        }
        const double scale = shift / std::sqrt(norm_sq);
        for (std::size_t d = 0; d < dim_; ++d) {
            out.centres_[c * dim_ + d] += offset[d] * scale;
        }
    }
    return out;
}

Dataset make_two_moons(std::size_t n, double noise, std::mt19937_64& rng)
{
    Dataset out;
    out.dim = 2;
    out.classes = 2;
    out.features.resize(n * 2);
    out.labels.resize(n);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> jitter(0.0, noise);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = angle(rng);
        const bool upper = coin(rng);
        double x = upper ? std::cos(t) : 1.0 - std::cos(t);
        double y = upper ? std::sin(t) : 0.5 - std::sin(t);
        out.features[2 * i] = static_cast<float>(x + jitter(rng));
        out.features[2 * i + 1] = static_cast<float>(y + jitter(rng));
        out.labels[i] = upper ? 0 : 1;
    }
    return out;
}

Dataset load_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::DatasetLoad, "cannot open CSV '" + path + "'");
    }
    Dataset out;
    std::string line;
    std::size_t line_no = 0;
    std::uint32_t max_label = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::vector<double> values;
        std::stringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (line_no == 1) {
                continue;
            }
            throw Error(ErrorCode::DatasetLoad,
                        path + ":" + std::to_string(line_no) + ": non-numeric cell");
        }
        if (values.size() < 2) {
            throw Error(ErrorCode::DatasetLoad,
                        path + ":" + std::to_string(line_no) + ": need features and a label");
        }
        const std::size_t dim = values.size() - 1;
        if (out.dim == 0) {
            out.dim = dim;
        } else if (out.dim != dim) {
            throw Error(ErrorCode::DatasetLoad,
                        path + ":" + std::to_string(line_no) + ": inconsistent column count");
        }
        const double label = values.back();
        if (label < 0 || label != std::floor(label)) {
            throw Error(ErrorCode::DatasetLoad,
                        path + ":" + std::to_string(line_no) + ": label must be a class index");
        }
        for (std::size_t d = 0; d < dim; ++d) {
            out.features.push_back(static_cast<float>(values[d]));
        }
        out.labels.push_back(static_cast<std::uint32_t>(label));
        max_label = std::max(max_label, out.labels.back());
    }
    if (out.labels.empty()) {
        throw Error(ErrorCode::DatasetLoad, "CSV '" + path + "' has no rows");
    }
    out.classes = static_cast<std::size_t>(max_label) + 1;
    return out;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path)
{
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (!in) {
        throw Error(ErrorCode::DatasetLoad, "truncated IDX header in '" + path + "'");
    }
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
           (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t subsample, std::mt19937_64& rng)
{
    std::ifstream images(images_path, std::ios::binary);
    std::ifstream labels(labels_path, std::ios::binary);
    if (!images) {
        throw Error(ErrorCode::DatasetLoad, "cannot open IDX images '" + images_path + "'");
    }
    if (!labels) {
        throw Error(ErrorCode::DatasetLoad, "cannot open IDX labels '" + labels_path + "'");
    }
    if (read_be32(images, images_path) != 0x00000803) {
        throw Error(ErrorCode::DatasetLoad, "'" + images_path + "' is not an IDX3 u8 file");
    }
    const std::uint32_t count = read_be32(images, images_path);
    const std::uint32_t rows = read_be32(images, images_path);
    const std::uint32_t cols = read_be32(images, images_path);
    if (read_be32(labels, labels_path) != 0x00000801) {
        throw Error(ErrorCode::DatasetLoad, "'" + labels_path + "' is not an IDX1 u8 file");
    }
    if (read_be32(labels, labels_path) != count) {
        throw Error(ErrorCode::DatasetLoad, "IDX image and label counts differ");
    }
    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> pixels(static_cast<std::size_t>(count) * dim);
    std::vector<unsigned char> raw_labels(count);
    images.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    labels.read(reinterpret_cast<char*>(raw_labels.data()), count);
    if (!images || !labels) {
        throw Error(ErrorCode::DatasetLoad, "truncated IDX payload");
    }

    std::vector<std::size_t> keep(count);
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    if (subsample > 0 && subsample < count) {
        std::shuffle(keep.begin(), keep.end(), rng);
        keep.resize(subsample);
        std::sort(keep.begin(), keep.end());
    }
    Dataset out;
    out.dim = dim;
    out.features.reserve(keep.size() * dim);
    std::uint32_t max_label = 0;
    for (std::size_t i : keep) {
        for (std::size_t d = 0; d < dim; ++d) {
            out.features.push_back(static_cast<float>(pixels[i * dim + d]) / 255.0f);
        }
        out.labels.push_back(raw_labels[i]);
        max_label = std::max<std::uint32_t>(max_label, raw_labels[i]);
    }
    out.classes = static_cast<std::size_t>(max_label) + 1;
    return out;
}

namespace {

Dataset take(const Dataset& src, std::span<const std::size_t> idx)
{
    Dataset out;
    out.dim = src.dim;
    out.classes = src.classes;
    out.features.reserve(idx.size() * src.dim);
    out.labels.reserve(idx.size());
    for (std::size_t i : idx) {
        const auto r = src.row(i);
        out.features.insert(out.features.end(), r.begin(), r.end());
        out.labels.push_back(src.labels[i]);
    }
    return out;
}

void split_pool(const Dataset& pool, double val_fraction, std::mt19937_64& rng, DataSplits& out)
{
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::round(val_fraction * static_cast<double>(pool.size())));
    out.val = take(pool, std::span<const std::size_t>(order).first(n_val));
    out.train = take(pool, std::span<const std::size_t>(order).subspan(n_val));
}

void corrupt(DataSplits& s, const CorruptionConfig& corruption, std::mt19937_64& rng)
{
    s.clean_train_labels = s.train.labels;
    s.flipped.assign(s.train.size(), 0);
    const auto classes = static_cast<std::uint32_t>(s.train.classes);
    if (corruption.random_labels) {
        std::uniform_int_distribution<std::uint32_t> pick(0, classes - 1);
        for (std::size_t i = 0; i < s.train.size(); ++i) {
            s.train.labels[i] = pick(rng);
            s.flipped[i] = s.train.labels[i] != s.clean_train_labels[i] ? 1 : 0;
        }
        return;
    }
    if (corruption.label_noise <= 0.0) {
        return;
    }
    std::vector<std::size_t> order(s.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_flip = static_cast<std::size_t>(
        std::round(corruption.label_noise * static_cast<double>(s.train.size())));
    std::uniform_int_distribution<std::uint32_t> other(1, classes - 1);
    for (std::size_t k = 0; k < n_flip; ++k) {
        const std::size_t i = order[k];
        s.train.labels[i] = (s.train.labels[i] + other(rng)) % classes;
        s.flipped[i] = 1;
    }
}

} // namespace

DataSplits make_splits(const DatasetConfig& config, double val_fraction,
                       const CorruptionConfig& corruption, std::uint64_t seed,
                       std::size_t pretrain_size)
{
    if (corruption.random_labels && corruption.label_noise > 0.0) {
        throw Error(ErrorCode::ConfigError, "label_noise and random_labels are mutually exclusive");
    }
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
        throw Error(ErrorCode::ConfigError, "val_fraction must lie in [0, 1)");
    }
    std::mt19937_64 rng(seed);
    DataSplits out;
    switch (config.kind) {
    case DatasetKind::GaussianBlobs: {
        BlobSource base(config.classes, config.dim, config.separation, config.noise, rng);
        if (pretrain_size > 0) {
            out.pretrain = base.sample(pretrain_size, rng);
        }
        const BlobSource target = config.shift > 0.0 ? base.shifted(config.shift, rng) : base;
        split_pool(target.sample(config.train_size, rng), val_fraction, rng, out);
        out.test = target.sample(config.test_size, rng);
        break;
    }
    case DatasetKind::TwoMoons: {
        if (pretrain_size > 0) {
            out.pretrain = make_two_moons(pretrain_size, config.noise, rng);
        }
        split_pool(make_two_moons(config.train_size, config.noise, rng), val_fraction, rng, out);
        out.test = make_two_moons(config.test_size, config.noise, rng);
        break;
    }
    case DatasetKind::Csv:
    case DatasetKind::Idx: {
        Dataset all = config.kind == DatasetKind::Csv
                          ? load_csv(config.path)
                          : load_idx(config.path, config.labels_path, config.subsample, rng);
        std::vector<std::size_t> order(all.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        const auto n_test = static_cast<std::size_t>(
            std::round(config.test_fraction * static_cast<double>(all.size())));
        out.test = take(all, std::span<const std::size_t>(order).first(n_test));
        split_pool(take(all, std::span<const std::size_t>(order).subspan(n_test)), val_fraction,
                   rng, out);
        break;
    }
    }
    if (out.train.size() == 0) {
        throw Error(ErrorCode::DatasetLoad, "training split is empty");
    }
    corrupt(out, corruption, rng);
    return out;
}

} // namespace gwa::harness
