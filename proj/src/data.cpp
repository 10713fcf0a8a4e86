#include "hebbseed/data.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "hebbseed/error.hpp"

namespace hebbseed {

namespace fs = std::filesystem;

void Dataset::validate() const {
    if (labels.empty()) throw FormatError("dataset '" + name + "' is empty");
    if (images.dim(0) != labels.size())
        throw FormatError("dataset '" + name + "': image/label count mismatch");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
            throw FormatError("dataset '" + name + "': label out of range");
}

Dataset Dataset::head(std::size_t n) const {
    if (n == 0 || n >= size()) return *this;
    Dataset out;
    out.name = name;
    out.num_classes = num_classes;
    out.labels.assign(labels.begin(), labels.begin() + n);
    std::size_t per = images.size() / size();
    std::vector<std::size_t> shape = images.shape();
    shape[0] = n;
    out.images = Tensor(shape, std::vector<double>(images.data(), images.data() + n * per));
    return out;
}

namespace {

// One CIFAR file: n_records of [label bytes..., 3072 pixels].
void read_cifar_file(const std::string& path, std::size_t n_records, std::size_t label_bytes,
                     std::size_t label_offset, double* images, int* labels) {
    const std::size_t record = label_bytes + 3072;
    const std::size_t expected = n_records * record;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("missing dataset file: " + path);
    std::vector<unsigned char> buf(expected);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected));
    if (static_cast<std::size_t>(is.gcount()) != expected || is.peek() != EOF)
        throw FormatError("truncated or oversized dataset file: " + path + " (expected exactly " +
                          std::to_string(expected) + " bytes)");
    for (std::size_t r = 0; r < n_records; ++r) {
        const unsigned char* rec = buf.data() + r * record;
        labels[r] = rec[label_offset];
        double* img = images + r * 3072;
        for (std::size_t i = 0; i < 3072; ++i) img[i] = rec[label_bytes + i] / 255.0;
    }
}

Dataset load_cifar(const std::string& name, std::size_t num_classes,
                   const std::vector<std::pair<std::string, std::size_t>>& files,
                   std::size_t label_bytes, std::size_t label_offset) {
    std::size_t total = 0;
    for (const auto& [_, n] : files) total += n;
    Dataset ds;
    ds.name = name;
    ds.num_classes = num_classes;
    ds.images = Tensor({total, 3, 32, 32});
    ds.labels.resize(total);
    std::size_t off = 0;
    for (const auto& [path, n] : files) {
        read_cifar_file(path, n, label_bytes, label_offset, ds.images.data() + off * 3072,
                        ds.labels.data() + off);
        off += n;
    }
    ds.validate();
    return ds;
}

std::string join(const std::string& dir, const std::string& file) {
    return (fs::path(dir) / file).string();
}

} // namespace

Dataset load_cifar10(const std::string& dir) {
    std::vector<std::pair<std::string, std::size_t>> files;
    for (int i = 1; i <= 5; ++i)
        files.emplace_back(join(dir, "data_batch_" + std::to_string(i) + ".bin"), 10000);
    return load_cifar("cifar10", 10, files, 1, 0);
}

Dataset load_cifar10_test(const std::string& dir) {
    return load_cifar("cifar10-test", 10, {{join(dir, "test_batch.bin"), 10000}}, 1, 0);
}

Dataset load_cifar100(const std::string& dir) {
    return load_cifar("cifar100", 100, {{join(dir, "train.bin"), 50000}}, 2, 1);
}

Dataset load_cifar100_test(const std::string& dir) {
    return load_cifar("cifar100-test", 100, {{join(dir, "test.bin"), 10000}}, 2, 1);
}

// Deliberately label-free: the validation/pool permutation is seeded from
// this value, and the unsupervised phase must be invariant to deleting the
// labels.
std::uint64_t dataset_fingerprint(const Dataset& ds) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 0x100000001b3ULL;
    };
    for (char c : ds.name) mix(static_cast<unsigned char>(c));
    mix(ds.size());
    mix(ds.num_classes);
    for (std::size_t d : ds.images.shape()) mix(d);
    return h;
}

std::vector<std::size_t> RegimeSplit::train_pool() const {
    std::vector<std::size_t> pool = labeled_idx;
    pool.insert(pool.end(), unlabeled_idx.begin(), unlabeled_idx.end());
    std::sort(pool.begin(), pool.end());
    return pool;
}

RegimeSplit make_split_from_labels(const std::vector<int>& labels, std::size_t num_classes,
                                   std::uint64_t fingerprint, double val_fraction,
                                   double r_percent, std::uint64_t seed) {
    if (r_percent <= 0.0 || r_percent > 100.0)
        throw ArgumentError("make_split: r must be in (0,100], got " + std::to_string(r_percent));
    const std::size_t n = labels.size();
    const std::size_t val_count = static_cast<std::size_t>(std::llround(val_fraction * n));

    Rng rng = Rng(seed).derive(fingerprint).derive("split");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);

    RegimeSplit split;
    split.r_percent = r_percent;
    split.seed = seed;
    split.val_idx.assign(perm.begin(), perm.begin() + val_count);
    std::vector<std::size_t> pool(perm.begin() + val_count, perm.end());

    const std::size_t L = static_cast<std::size_t>(std::llround(r_percent / 100.0 * pool.size()));
    if (L == 0)
        throw ArgumentError("make_split: r=" + std::to_string(r_percent) +
                            " yields zero labeled samples");

    // per-class quota; remainder goes to the lowest class indices
    std::vector<std::size_t> quota(num_classes, L / num_classes);
    for (std::size_t c = 0; c < L % num_classes; ++c) ++quota[c];

    std::vector<std::size_t> taken(num_classes, 0);
    std::vector<char> is_labeled(n, 0);
    std::size_t assigned = 0;
    // pool order is the seeded permutation and does not depend on r, so the
    // labeled sets for increasing r are nested
    for (std::size_t idx : pool) {
        std::size_t c = static_cast<std::size_t>(labels[idx]);
        if (taken[c] < quota[c]) {
            ++taken[c];
            is_labeled[idx] = 1;
            ++assigned;
        }
    }
    // quota shortfall (a class ran out of samples): fill from pool order
    if (assigned < L) {
        for (std::size_t idx : pool) {
            if (assigned == L) break;
            if (!is_labeled[idx]) {
                is_labeled[idx] = 1;
                ++assigned;
            }
        }
    }
    for (std::size_t idx : pool)
        (is_labeled[idx] ? split.labeled_idx : split.unlabeled_idx).push_back(idx);

    std::sort(split.labeled_idx.begin(), split.labeled_idx.end());
    std::sort(split.unlabeled_idx.begin(), split.unlabeled_idx.end());
    std::sort(split.val_idx.begin(), split.val_idx.end());
    return split;
}

RegimeSplit make_split(const Dataset& ds, double val_fraction, double r_percent,
                       std::uint64_t seed) {
    return make_split_from_labels(ds.labels, ds.num_classes, dataset_fingerprint(ds), val_fraction,
                                  r_percent, seed);
}

GaussianStream synth_gaussian_stream(std::size_t dim, std::vector<double> eigvals,
                                     std::uint64_t seed) {
    if (eigvals.size() != dim) throw ArgumentError("synth_gaussian_stream: need dim eigenvalues");
    for (double e : eigvals)
        if (e <= 0.0) throw ArgumentError("synth_gaussian_stream: eigenvalues must be positive");

    GaussianStream s;
    s.dim = dim;
    s.eigvals = std::move(eigvals);
    s.rng = Rng(seed).derive("gaussian-stream");

    // random orthogonal basis by Gram-Schmidt on gaussian columns
    Rng qrng = Rng(seed).derive("gaussian-basis");
    s.basis = Tensor({dim, dim});
    for (std::size_t col = 0; col < dim; ++col) {
        std::vector<double> v(dim);
        for (;;) {
            for (std::size_t i = 0; i < dim; ++i) v[i] = qrng.normal();
            for (std::size_t prev = 0; prev < col; ++prev) {
                double dot = 0.0;
                for (std::size_t i = 0; i < dim; ++i) dot += v[i] * s.basis[i * dim + prev];
                for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * s.basis[i * dim + prev];
            }
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 1e-8) {
                for (std::size_t i = 0; i < dim; ++i) s.basis[i * dim + col] = v[i] / norm;
                break;
            }
        }
    }
    return s;
}

Tensor GaussianStream::next_batch(std::size_t n) {
    Tensor batch({n, dim});
    std::vector<double> z(dim);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t i = 0; i < dim; ++i) z[i] = std::sqrt(eigvals[i]) * rng.normal();
        for (std::size_t i = 0; i < dim; ++i) {
            double x = 0.0;
            for (std::size_t j = 0; j < dim; ++j) x += basis[i * dim + j] * z[j];
            batch[s * dim + i] = x;
        }
    }
    return batch;
}

Dataset make_synthetic_images(std::size_t n, std::size_t num_classes, std::uint64_t seed) {
    const std::size_t S = 32;
    Dataset ds;
    ds.name = "synth" + std::to_string(num_classes);
    ds.num_classes = num_classes;
    ds.images = Tensor({n, 3, S, S});
    ds.labels.resize(n);

    // fixed per-class color mixers
    Rng crng = Rng(seed).derive("synth-colors");
    std::vector<std::array<double, 3>> color(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c)
        for (int ch = 0; ch < 3; ++ch) color[c][ch] = crng.uniform(0.25, 1.0);

    Rng rng = Rng(seed).derive("synth-images");
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % num_classes;
        ds.labels[i] = static_cast<int>(c);
        const double theta = pi * static_cast<double>(c) / static_cast<double>(num_classes);
        const double freq = 2.0 + static_cast<double>(c % 3);
        const double amp = rng.uniform(0.3, 0.65);
        const double phase = rng.uniform(0.0, 2.0 * pi);
        const double brightness = rng.uniform(-0.08, 0.08);
        const double ct = std::cos(theta), st = std::sin(theta);
        double* img = ds.images.data() + i * 3 * S * S;
        for (std::size_t y = 0; y < S; ++y)
            for (std::size_t x = 0; x < S; ++x) {
                const double u = (static_cast<double>(x) * ct + static_cast<double>(y) * st) /
                                 static_cast<double>(S);
                const double g = std::sin(2.0 * pi * freq * u + phase);
                for (int ch = 0; ch < 3; ++ch) {
                    double v = 0.5 + brightness + color[c][ch] * amp * g + 0.18 * rng.normal();
                    img[(ch * S + y) * S + x] = std::clamp(v, 0.0, 1.0);
                }
            }
    }
    return ds;
}

std::string sha256_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open file for hashing: " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while (is) {
        is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        std::streamsize got = is.gcount();
        if (got > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(got));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex(len * 2, '0');
    static const char* alphabet = "0123456789abcdef";
    for (unsigned int i = 0; i < len; ++i) {
        hex[2 * i] = alphabet[digest[i] >> 4];
        hex[2 * i + 1] = alphabet[digest[i] & 0xf];
    }
    return hex;
}

std::string fetch_dataset(const std::string& dataset, const std::string& dir,
                          const std::string& url, const std::string& expected_sha256) {
    std::string archive, subdir;
    if (dataset == "cifar10") {
        archive = "cifar-10-binary.tar.gz";
        subdir = "cifar-10-batches-bin";
    } else if (dataset == "cifar100") {
        archive = "cifar-100-binary.tar.gz";
        subdir = "cifar-100-binary";
    } else {
        throw ArgumentError("fetch: unknown dataset '" + dataset + "'");
    }
    fs::create_directories(dir);
    const std::string extracted = join(dir, subdir);
    if (fs::exists(extracted)) return extracted;

    const std::string archive_path = join(dir, archive);
    if (!fs::exists(archive_path)) {
        if (url.empty())
            throw FormatError("fetch: archive " + archive_path +
                              " not found and no --url given to download it");
        std::string cmd = "curl -fsSL -o '" + archive_path + "' '" + url + "'";
        if (std::system(cmd.c_str()) != 0)
            throw FormatError("fetch: download failed: " + url);
    }
    if (!expected_sha256.empty()) {
        std::string got = sha256_file(archive_path);
        if (got != expected_sha256)
            throw FormatError("fetch: SHA-256 mismatch for " + archive_path + ": expected " +
                              expected_sha256 + ", got " + got);
    }
    std::string cmd = "tar -xzf '" + archive_path + "' -C '" + dir + "'";
    if (std::system(cmd.c_str()) != 0) throw FormatError("fetch: extraction failed: " + archive_path);
    if (!fs::exists(extracted))
        throw FormatError("fetch: archive did not contain expected directory " + subdir);
    return extracted;
}

} // namespace hebbseed
