#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "timepar/common.hpp"

namespace timepar {

enum class Scheme { Euler, Verlet };

inline const char* scheme_name(Scheme s) {
    return s == Scheme::Euler ? "euler" : "verlet";
}

// Architecture plus time discretization. The step is always derived from
// horizon / n_layers so the two can never drift apart.
struct ModelSpec {
    Scheme scheme = Scheme::Euler;
    int width = 4;        // feature dimension inside the dynamics
    int input_dim = 2;
    int n_classes = 2;
    double horizon = 1.0; // total integration time T
    int n_layers = 8;     // number of time steps / residual layers
    double weight_decay = 0.0;

    double step() const { return horizon / n_layers; }

    void validate() const {
        require(width >= 2, "ModelSpec: width must be >= 2");
        require(n_layers >= 1, "ModelSpec: n_layers must be >= 1");
        require(input_dim >= 1, "ModelSpec: input_dim must be >= 1");
        require(n_classes >= 2, "ModelSpec: n_classes must be >= 2");
        require(horizon > 0.0, "ModelSpec: horizon must be positive");
        require(weight_decay >= 0.0, "ModelSpec: weight_decay must be >= 0");
        if (scheme == Scheme::Verlet)
            require(width % 2 == 0, "ModelSpec: Verlet requires even width");
    }
};

// Parameters of one residual layer. Euler uses W (d x d) and b (d).
// Verlet splits the state into two halves and uses K = W, Kt = W2
// (both (d/2) x (d/2)) with biases b and b2.
struct LayerBlock {
    Matrix W;
    Vector b;
    Matrix W2;  // Verlet only
    Vector b2;  // Verlet only

    static LayerBlock zeros(const ModelSpec& spec) {
        LayerBlock blk;
        if (spec.scheme == Scheme::Euler) {
            blk.W = Matrix::Zero(spec.width, spec.width);
            blk.b = Vector::Zero(spec.width);
        } else {
            const int h = spec.width / 2;
            blk.W = Matrix::Zero(h, h);
            blk.b = Vector::Zero(h);
            blk.W2 = Matrix::Zero(h, h);
            blk.b2 = Vector::Zero(h);
        }
        return blk;
    }

    bool same_shape(const LayerBlock& o) const {
        return W.rows() == o.W.rows() && W.cols() == o.W.cols() &&
               b.size() == o.b.size() && W2.rows() == o.W2.rows() &&
               W2.cols() == o.W2.cols() && b2.size() == o.b2.size();
    }

    void axpy(double a, const LayerBlock& o) {
        W += a * o.W;
        b += a * o.b;
        if (W2.size() > 0) W2 += a * o.W2;
        if (b2.size() > 0) b2 += a * o.b2;
    }

    void scale(double a) {
        W *= a;
        b *= a;
        W2 *= a;
        b2 *= a;
    }

    double squared_norm() const {
        return W.squaredNorm() + b.squaredNorm() + W2.squaredNorm() + b2.squaredNorm();
    }
};

// Per-layer gradients share the block layout of the parameters.
using LayerGradient = LayerBlock;

struct AffineMap {
    Matrix W;  // in x out
    Vector b;  // out

    static AffineMap zeros(int in, int out) {
        return AffineMap{Matrix::Zero(in, out), Vector::Zero(out)};
    }

    Matrix apply(const Matrix& X) const {
        require(X.cols() == W.rows(), "AffineMap: input dimension mismatch");
        return (X * W).rowwise() + b.transpose();
    }

    void axpy(double a, const AffineMap& o) {
        W += a * o.W;
        b += a * o.b;
    }

    void scale(double a) {
        W *= a;
        b *= a;
    }

    double squared_norm() const { return W.squaredNorm() + b.squaredNorm(); }
};

// The full optimization variable: per-layer blocks, opening map, classifier head.
struct Controls {
    std::vector<LayerBlock> layers;
    AffineMap opening;  // input_dim -> d
    AffineMap head;     // d -> n_classes

    static Controls zeros(const ModelSpec& spec) {
        Controls c;
        c.layers.assign(spec.n_layers, LayerBlock::zeros(spec));
        c.opening = AffineMap::zeros(spec.input_dim, spec.width);
        c.head = AffineMap::zeros(spec.width, spec.n_classes);
        return c;
    }

    // Small random init; opening starts as scaled Gaussian, layers near zero.
    static Controls random_init(const ModelSpec& spec, std::uint64_t seed,
                                double layer_scale = 0.1) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        auto fill = [&](Matrix& m, double s) {
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = s * gauss(rng);
        };
        Controls c = zeros(spec);
        for (auto& blk : c.layers) {
            fill(blk.W, layer_scale);
            if (blk.W2.size() > 0) fill(blk.W2, layer_scale);
        }
        fill(c.opening.W, 1.0 / std::sqrt(double(spec.input_dim)));
        fill(c.head.W, 1.0 / std::sqrt(double(spec.width)));
        return c;
    }

    void validate(const ModelSpec& spec) const {
        require(int(layers.size()) == spec.n_layers, "Controls: layer count mismatch");
        const LayerBlock ref = LayerBlock::zeros(spec);
        for (const auto& blk : layers) {
            require(blk.same_shape(ref), "Controls: layer block shape mismatch");
            require_finite(blk.W, "layer W");
            require_finite(blk.b, "layer b");
            if (blk.W2.size() > 0) require_finite(blk.W2, "layer W2");
            if (blk.b2.size() > 0) require_finite(blk.b2, "layer b2");
        }
        require(opening.W.rows() == spec.input_dim && opening.W.cols() == spec.width,
                "Controls: opening shape mismatch");
        require(head.W.rows() == spec.width && head.W.cols() == spec.n_classes,
                "Controls: head shape mismatch");
    }

    void axpy(double a, const Controls& o) {
        require(layers.size() == o.layers.size(), "Controls::axpy: layer count mismatch");
        for (std::size_t j = 0; j < layers.size(); ++j) layers[j].axpy(a, o.layers[j]);
        opening.axpy(a, o.opening);
        head.axpy(a, o.head);
    }

    double squared_norm() const {
        double s = opening.squared_norm() + head.squared_norm();
        for (const auto& blk : layers) s += blk.squared_norm();
        return s;
    }
};

// A full gradient is shape-congruent with the controls.
using ControlsGradient = Controls;

}  // namespace timepar
