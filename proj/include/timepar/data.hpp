#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "timepar/common.hpp"

namespace timepar {

struct Dataset {
    Matrix inputs;            // n x input_dim
    std::vector<int> labels;  // values in [0, n_classes)
    int n_classes = 2;
    std::string name;
    // standardization record, applied as (x - shift) / scale per feature
    Vector shift;
    Vector scale;

    Eigen::Index size() const { return inputs.rows(); }
    Eigen::Index dim() const { return inputs.cols(); }

    void validate() const {
        require(inputs.rows() >= 1, "Dataset: empty");
        require(Eigen::Index(labels.size()) == inputs.rows(), "Dataset: label count mismatch");
        require_finite(inputs, "Dataset inputs");
        for (int y : labels)
            require(y >= 0 && y < n_classes, "Dataset: label out of range");
    }

    Matrix gather_inputs(const std::vector<int>& idx) const {
        Matrix out(idx.size(), inputs.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = inputs.row(idx[i]);
        return out;
    }

    std::vector<int> gather_labels(const std::vector<int>& idx) const {
        std::vector<int> out(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
        return out;
    }
};

namespace detail {

// Deterministic helpers independent of libstdc++ distribution internals.
inline double uniform01(std::mt19937_64& rng) {
    return double(rng() >> 11) * 0x1.0p-53;
}

inline double gaussian(std::mt19937_64& rng) {
    // Box-Muller; discards the second variate for simplicity.
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline void standardize(Dataset& ds) {
    const Eigen::Index d = ds.inputs.cols();
    ds.shift = ds.inputs.colwise().mean();
    Vector var = (ds.inputs.rowwise() - ds.shift.transpose()).array().square().colwise().mean();
    ds.scale = var.array().sqrt().max(1e-12);
    for (Eigen::Index j = 0; j < d; ++j)
        ds.inputs.col(j) = (ds.inputs.col(j).array() - ds.shift(j)) / ds.scale(j);
}

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw FormatError("truncated IDX file: " + path);
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace detail

// Two co-centric noisy ellipse bands, 2 classes, standardized features.
inline Dataset gen_ellipse(int n_per_class, std::uint64_t seed, double sigma = 0.02) {
    require(n_per_class >= 1, "gen_ellipse: n_per_class must be >= 1");
    std::mt19937_64 rng(seed);
    const int n = 2 * n_per_class;
    Dataset ds;
    ds.name = "ellipse";
    ds.n_classes = 2;
    ds.inputs.resize(n, 2);
    ds.labels.resize(n);
    const double a = 1.0, b = 0.5;
    for (int c = 0; c < 2; ++c) {
        const double r_lo = (c == 0) ? 0.3 : 1.2;
        const double r_hi = (c == 0) ? 0.8 : 1.8;
        for (int i = 0; i < n_per_class; ++i) {
            const int row = c * n_per_class + i;
            double theta = 2.0 * M_PI * detail::uniform01(rng);
            double r = r_lo + (r_hi - r_lo) * detail::uniform01(rng);
            ds.inputs(row, 0) = r * a * std::cos(theta) + sigma * detail::gaussian(rng);
            ds.inputs(row, 1) = r * b * std::sin(theta) + sigma * detail::gaussian(rng);
            ds.labels[row] = c;
        }
    }
    detail::standardize(ds);
    return ds;
}

// Two intertwined spirals offset by pi, standardized.
inline Dataset gen_swissroll(int n_per_class, std::uint64_t seed, double sigma = 0.01) {
    require(n_per_class >= 1, "gen_swissroll: n_per_class must be >= 1");
    std::mt19937_64 rng(seed);
    const int n = 2 * n_per_class;
    Dataset ds;
    ds.name = "swissroll";
    ds.n_classes = 2;
    ds.inputs.resize(n, 2);
    ds.labels.resize(n);
    const double norm = 1.0 + 3.0 * M_PI;
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < n_per_class; ++i) {
            const int row = c * n_per_class + i;
            double t = 3.0 * M_PI * detail::uniform01(rng);
            double phase = t + c * M_PI;
            ds.inputs(row, 0) = (1.0 + t) * std::cos(phase) / norm + sigma * detail::gaussian(rng);
            ds.inputs(row, 1) = (1.0 + t) * std::sin(phase) / norm + sigma * detail::gaussian(rng);
            ds.labels[row] = c;
        }
    }
    detail::standardize(ds);
    return ds;
}

// IDX ingestion (big-endian headers, raw unsigned bytes), pixels scaled to [0,1].
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("cannot open images file: " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("cannot open labels file: " + labels_path);

    const std::uint32_t img_magic = detail::read_be32(img, images_path);
    if (img_magic != 2051)
        throw FormatError("bad images magic (expected 2051) in " + images_path);
    const std::uint32_t n_img = detail::read_be32(img, images_path);
    const std::uint32_t rows = detail::read_be32(img, images_path);
    const std::uint32_t cols = detail::read_be32(img, images_path);

    const std::uint32_t lab_magic = detail::read_be32(lab, labels_path);
    if (lab_magic != 2049)
        throw FormatError("bad labels magic (expected 2049) in " + labels_path);
    const std::uint32_t n_lab = detail::read_be32(lab, labels_path);
    if (n_img != n_lab)
        throw FormatError("image/label count mismatch: " + images_path + " vs " + labels_path);

    const std::size_t npix = std::size_t(rows) * cols;
    Dataset ds;
    ds.name = "mnist";
    ds.n_classes = 10;
    ds.inputs.resize(n_img, npix);
    ds.labels.resize(n_img);
    std::vector<unsigned char> buf(npix);
    for (std::uint32_t i = 0; i < n_img; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), std::streamsize(npix));
        if (!img) throw FormatError("truncated IDX file: " + images_path);
        for (std::size_t p = 0; p < npix; ++p)
            ds.inputs(i, Eigen::Index(p)) = double(buf[p]) / 255.0;
        int y = lab.get();
        if (y == EOF) throw FormatError("truncated IDX file: " + labels_path);
        ds.labels[i] = y;
    }
    ds.shift = Vector::Zero(ds.inputs.cols());
    ds.scale = Vector::Ones(ds.inputs.cols());
    return ds;
}

// Shuffled partition of [0, n) into batches; the last batch may be short.
inline std::vector<std::vector<int>> batches(Eigen::Index n, int batch_size,
                                             std::uint64_t seed, int epoch) {
    require(batch_size >= 1, "batches: batch_size must be >= 1");
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + std::uint64_t(epoch) + 1);
    // Fisher-Yates with our own uniform so the schedule is stable across stdlibs.
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::size_t j = std::size_t(detail::uniform01(rng) * double(i));
        if (j >= i) j = i - 1;
        std::swap(idx[i - 1], idx[j]);
    }
    std::vector<std::vector<int>> out;
    for (std::size_t s = 0; s < idx.size(); s += std::size_t(batch_size)) {
        std::size_t e = std::min(idx.size(), s + std::size_t(batch_size));
        out.emplace_back(idx.begin() + s, idx.begin() + e);
    }
    return out;
}

// Deterministic mini-batch schedule: global iteration -> sample indices.
class BatchStream {
public:
    BatchStream(Eigen::Index n, int batch_size, std::uint64_t seed)
        : n_(n), batch_size_(batch_size), seed_(seed),
          per_epoch_(int((n + batch_size - 1) / batch_size)) {}

    // Pure function of the iteration index; safe to call from any worker.
    std::vector<int> at(long iter) const {
        const int epoch = int(iter / per_epoch_);
        const int pos = int(iter % per_epoch_);
        return batches(n_, batch_size_, seed_, epoch)[std::size_t(pos)];
    }

    int batches_per_epoch() const { return per_epoch_; }

private:
    Eigen::Index n_;
    int batch_size_;
    std::uint64_t seed_;
    int per_epoch_;
};

// CSV export for the synthetic 2-D sets: header x0,x1,label.
inline void write_csv(const Dataset& ds, std::ostream& out) {
    require(ds.inputs.cols() == 2, "write_csv: expects 2-D features");
    out << "x0,x1,label\n";
    for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i)
        out << ds.inputs(i, 0) << ',' << ds.inputs(i, 1) << ',' << ds.labels[std::size_t(i)] << '\n';
}

}  // namespace timepar
