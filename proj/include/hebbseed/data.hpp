#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hebbseed/rng.hpp"
#include "hebbseed/tensor.hpp"

namespace hebbseed {

struct Dataset {
    std::string name;
    std::size_t num_classes = 0;
    Tensor images;           // N x 3 x H x W, pixel values scaled to [0,1]
    std::vector<int> labels; // N

    std::size_t size() const { return labels.size(); }
    void validate() const;
    // Keeps the first n images of every split-agnostic prefix (desk scale).
    Dataset head(std::size_t n) const;
};

// CIFAR binary format: each record is one label byte (CIFAR-100: coarse +
// fine label bytes) followed by 3072 channel-major R,G,B pixel bytes.
Dataset load_cifar10(const std::string& dir);
Dataset load_cifar10_test(const std::string& dir);
Dataset load_cifar100(const std::string& dir);
Dataset load_cifar100_test(const std::string& dir);

std::uint64_t dataset_fingerprint(const Dataset& ds);

// Index partition for one r%-regime. The labeled subset is class-stratified
// and, for a fixed seed, nested across increasing r.
struct RegimeSplit {
    std::vector<std::size_t> labeled_idx;
    std::vector<std::size_t> unlabeled_idx;
    std::vector<std::size_t> val_idx;
    double r_percent = 100.0;
    std::uint64_t seed = 0;

    std::vector<std::size_t> train_pool() const; // labeled + unlabeled, sorted
};

RegimeSplit make_split(const Dataset& ds, double val_fraction, double r_percent,
                       std::uint64_t seed);
RegimeSplit make_split_from_labels(const std::vector<int>& labels, std::size_t num_classes,
                                   std::uint64_t fingerprint, double val_fraction,
                                   double r_percent, std::uint64_t seed);

// Zero-mean Gaussian stream with covariance Q diag(eigvals) Q^T for a seeded
// random orthogonal Q. The planted basis and spectrum stay inspectable so
// oracles can compare against them.
struct GaussianStream {
    std::size_t dim = 0;
    std::vector<double> eigvals;
    Tensor basis; // dim x dim, column i scaled by 1 (orthonormal)
    Rng rng;

    Tensor next_batch(std::size_t n); // n x dim
};

GaussianStream synth_gaussian_stream(std::size_t dim, std::vector<double> eigvals,
                                     std::uint64_t seed);

// Ten-class 32x32 image set built from oriented gratings with per-sample
// phase, amplitude, color jitter and pixel noise. Used for desk-scale runs
// when the real CIFAR binaries are not on disk.
Dataset make_synthetic_images(std::size_t n, std::size_t num_classes, std::uint64_t seed);

std::string sha256_file(const std::string& path); // lowercase hex digest

// Ensures the extracted dataset exists under dir: verifies the archive's
// SHA-256 (when expected_sha256 is non-empty), downloading it first via curl
// if a URL is given, then extracts with tar. Returns the extracted subdir.
std::string fetch_dataset(const std::string& dataset, const std::string& dir,
                          const std::string& url, const std::string& expected_sha256);

} // namespace hebbseed
