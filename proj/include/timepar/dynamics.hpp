#pragma once

#include <cmath>
#include <vector>

#include "timepar/model.hpp"

namespace timepar {

// Layer transition maps f_j and their analytic transpose-Jacobian products.
//
// Euler:   X' = X + step * tanh(X W + b)
// Verlet:  with X = (Y, Z) split into halves,
//          Y' = Y + step * tanh(Z W^T  + b)
//          Z' = Z - step * tanh(Y' W2^T + b2)
//
// Batch convention: states are batch x d, one sample per row.

namespace detail {

inline Matrix tanh_prime_of(const Matrix& t) {
    // t holds tanh(pre-activation); derivative is 1 - tanh^2.
    return (1.0 - t.array().square()).matrix();
}

inline void check_state(const ModelSpec& spec, const Matrix& X, const char* what) {
    require(X.cols() == spec.width, std::string(what) + ": state width mismatch");
    require_finite(X, what);
}

}  // namespace detail

inline Matrix layer_forward(const ModelSpec& spec, const Matrix& X,
                            const LayerBlock& U, int j) {
    detail::check_state(spec, X, "layer_forward");
    require(j >= 0 && j < spec.n_layers, "layer_forward: layer index out of range");
    const double d = spec.step();
    if (spec.scheme == Scheme::Euler) {
        require(U.W.rows() == spec.width && U.W.cols() == spec.width,
                "layer_forward: W shape mismatch");
        Matrix t = ((X * U.W).rowwise() + U.b.transpose()).array().tanh();
        return X + d * t;
    }
    const int h = spec.width / 2;
    require(U.W.rows() == h && U.W2.rows() == h, "layer_forward: Verlet block mismatch");
    Matrix Y = X.leftCols(h);
    Matrix Z = X.rightCols(h);
    Matrix Yn = Y + d * ((Z * U.W.transpose()).rowwise() + U.b.transpose()).array().tanh().matrix();
    Matrix Zn = Z - d * ((Yn * U.W2.transpose()).rowwise() + U.b2.transpose()).array().tanh().matrix();
    Matrix out(X.rows(), spec.width);
    out << Yn, Zn;
    return out;
}

// (df_j/dX)^T P, with P the co-state at the layer output and X the layer input.
inline Matrix vjp_state(const ModelSpec& spec, const Matrix& X, const LayerBlock& U,
                        const Matrix& P_next, int j) {
    detail::check_state(spec, X, "vjp_state");
    require(P_next.rows() == X.rows() && P_next.cols() == X.cols(),
            "vjp_state: co-state shape mismatch");
    require_finite(P_next, "vjp_state co-state");
    const double d = spec.step();
    if (spec.scheme == Scheme::Euler) {
        Matrix t = ((X * U.W).rowwise() + U.b.transpose()).array().tanh();
        Matrix D = detail::tanh_prime_of(t);
        return P_next + d * (D.cwiseProduct(P_next)) * U.W.transpose();
    }
    const int h = spec.width / 2;
    Matrix Y = X.leftCols(h);
    Matrix Z = X.rightCols(h);
    Matrix t1 = ((Z * U.W.transpose()).rowwise() + U.b.transpose()).array().tanh();
    Matrix Yn = Y + d * t1;
    Matrix t2 = ((Yn * U.W2.transpose()).rowwise() + U.b2.transpose()).array().tanh();
    Matrix D1 = detail::tanh_prime_of(t1);
    Matrix D2 = detail::tanh_prime_of(t2);
    Matrix PY = P_next.leftCols(h);
    Matrix PZ = P_next.rightCols(h);
    // sensitivity to Yn includes the path through Zn
    Matrix QY = PY - d * D2.cwiseProduct(PZ) * U.W2;
    Matrix gY = QY;
    Matrix gZ = PZ + d * D1.cwiseProduct(QY) * U.W;
    Matrix out(X.rows(), spec.width);
    out << gY, gZ;
    return out;
}

// Gradient of <f_j(X, U), P> with respect to the layer block, summed over the batch.
inline LayerGradient vjp_control(const ModelSpec& spec, const Matrix& X,
                                 const LayerBlock& U, const Matrix& P_next, int j) {
    detail::check_state(spec, X, "vjp_control");
    require(P_next.rows() == X.rows() && P_next.cols() == X.cols(),
            "vjp_control: co-state shape mismatch");
    const double d = spec.step();
    LayerGradient g = LayerBlock::zeros(spec);
    if (spec.scheme == Scheme::Euler) {
        Matrix t = ((X * U.W).rowwise() + U.b.transpose()).array().tanh();
        Matrix DP = detail::tanh_prime_of(t).cwiseProduct(P_next);
        g.W = d * X.transpose() * DP;
        g.b = d * DP.colwise().sum().transpose();
        return g;
    }
    const int h = spec.width / 2;
    Matrix Y = X.leftCols(h);
    Matrix Z = X.rightCols(h);
    Matrix t1 = ((Z * U.W.transpose()).rowwise() + U.b.transpose()).array().tanh();
    Matrix Yn = Y + d * t1;
    Matrix t2 = ((Yn * U.W2.transpose()).rowwise() + U.b2.transpose()).array().tanh();
    Matrix D1 = detail::tanh_prime_of(t1);
    Matrix D2 = detail::tanh_prime_of(t2);
    Matrix PY = P_next.leftCols(h);
    Matrix PZ = P_next.rightCols(h);
    Matrix QY = PY - d * D2.cwiseProduct(PZ) * U.W2;
    Matrix D1Q = D1.cwiseProduct(QY);
    Matrix D2P = D2.cwiseProduct(PZ);
    g.W = d * D1Q.transpose() * Z;
    g.b = d * D1Q.colwise().sum().transpose();
    g.W2 = -d * D2P.transpose() * Yn;
    g.b2 = -d * D2P.colwise().sum().transpose();
    return g;
}

struct TerminalLoss {
    double value = 0.0;  // mean softmax cross-entropy over the batch
    Matrix dX;           // gradient w.r.t. the final state
    AffineMap dHead;     // gradient w.r.t. the head parameters
};

inline TerminalLoss terminal_loss(const AffineMap& head, const Matrix& X_T,
                                  const std::vector<int>& labels) {
    require(Eigen::Index(labels.size()) == X_T.rows(),
            "terminal_loss: label count mismatch");
    const int n_classes = int(head.W.cols());
    for (int y : labels)
        require(y >= 0 && y < n_classes, "terminal_loss: label out of range");
    const Eigen::Index n = X_T.rows();
    Matrix logits = head.apply(X_T);
    // row-wise log-sum-exp with max shift
    Vector row_max = logits.rowwise().maxCoeff();
    Matrix shifted = logits.colwise() - row_max;
    Matrix expv = shifted.array().exp();
    Vector denom = expv.rowwise().sum();
    Matrix probs = expv.array().colwise() / denom.array();

    TerminalLoss out;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        total -= shifted(i, labels[i]) - std::log(denom(i));
    out.value = total / double(n);

    Matrix dlogits = probs;
    for (Eigen::Index i = 0; i < n; ++i) dlogits(i, labels[i]) -= 1.0;
    dlogits /= double(n);
    out.dX = dlogits * head.W.transpose();
    out.dHead.W = X_T.transpose() * dlogits;
    out.dHead.b = dlogits.colwise().sum().transpose();
    return out;
}

struct RegValue {
    double value = 0.0;
    LayerGradient grad;
};

// R_j(U) = step * (lambda/2) * ||U_j||^2 over every entry of the block.
inline RegValue regularizer(const ModelSpec& spec, const LayerBlock& U) {
    const double coef = spec.step() * spec.weight_decay;
    RegValue r;
    r.value = 0.5 * coef * U.squared_norm();
    r.grad = U;
    r.grad.scale(coef);
    return r;
}

inline Matrix opening_forward(const AffineMap& opening, const Matrix& inputs) {
    require_finite(inputs, "opening_forward inputs");
    return opening.apply(inputs);
}

inline AffineMap opening_vjp(const AffineMap& opening, const Matrix& inputs,
                             const Matrix& P_0) {
    require(inputs.rows() == P_0.rows(), "opening_vjp: batch mismatch");
    require(P_0.cols() == opening.W.cols(), "opening_vjp: co-state width mismatch");
    AffineMap g;
    g.W = inputs.transpose() * P_0;
    g.b = P_0.colwise().sum().transpose();
    return g;
}

}  // namespace timepar
