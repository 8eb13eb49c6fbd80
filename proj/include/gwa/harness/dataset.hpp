#pragma once

// Desk-scale datasets for the reference trainer: synthetic blobs and moons,
// CSV tables, and IDX image files.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gwa::harness {

struct Dataset {
    std::size_t dim = 0;
    std::size_t classes = 0;
    std::vector<float> features; // size() x dim
    std::vector<std::uint32_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const float> row(std::size_t i) const
    {
        return {features.data() + i * dim, dim};
    }
};

enum class DatasetKind { GaussianBlobs, TwoMoons, Csv, Idx };

const char* to_string(DatasetKind kind) noexcept;
DatasetKind dataset_kind_from_string(const std::string& name);

struct DatasetConfig {
    DatasetKind kind = DatasetKind::GaussianBlobs;
    std::size_t classes = 4;
    std::size_t dim = 16;
    double separation = 3.0;
    /// Moons: Gaussian jitter; blobs: per-coordinate noise std.
    double noise = 1.0;
    /// Samples generated for the training pool (train + val) and the test set.
    std::size_t train_size = 1000;
    std::size_t test_size = 2000;
    /// CSV/IDX: fraction of the file held out as test set.
    double test_fraction = 0.2;
    std::string path;        // CSV file, or IDX images
    std::string labels_path; // IDX labels
    std::size_t subsample = 0; // IDX: keep at most this many images (0 = all)
    /// Fine-tune target: blob centres moved by a random offset of this norm.
    double shift = 0.0;
};

struct DataSplits {
    Dataset train; // labels possibly corrupted
    Dataset val;   // clean
    Dataset test;  // clean
    std::vector<std::uint32_t> clean_train_labels;
    std::vector<std::uint8_t> flipped; // per training sample
    /// Clean samples from the unshifted distribution (fine-tune pre-fit).
    Dataset pretrain;
};

struct CorruptionConfig {
    double label_noise = 0.0;
    bool random_labels = false;
};

/// Generates (or loads) the data and applies label corruption to the
/// training split only. Throws DatasetLoad for unreadable files.
DataSplits make_splits(const DatasetConfig& config, double val_fraction,
                       const CorruptionConfig& corruption, std::uint64_t seed,
                       std::size_t pretrain_size = 0);

/// Blob sampler with fixed centres, so train/test share one distribution.
class BlobSource {
public:
    BlobSource(std::size_t classes, std::size_t dim, double separation, double noise,
               std::mt19937_64& rng);

    Dataset sample(std::size_t n, std::mt19937_64& rng) const;
    /// Moves each centre by an independent random offset of norm `shift`.
    BlobSource shifted(double shift, std::mt19937_64& rng) const;

private:
    BlobSource() = default;

    std::size_t classes_ = 0;
    std::size_t dim_ = 0;
    double noise_ = 1.0;
    std::vector<double> centres_;
};

Dataset make_two_moons(std::size_t n, double noise, std::mt19937_64& rng);

/// Numeric CSV; the last column is the integer class label. A non-numeric
/// first line is treated as a header.
Dataset load_csv(const std::string& path);

/// IDX3 images (u8 pixels scaled to [0,1]) with IDX1 labels.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t subsample, std::mt19937_64& rng);

} // namespace gwa::harness
