#pragma once

#include <deque>
#include <optional>
#include <utility>

#include "timepar/common.hpp"

namespace timepar {

// Windowed history of (state, co-state) observations at one split time.
// Oldest pairs are evicted first once the capacity is reached.
class InfoSet {
public:
    InfoSet() = default;
    InfoSet(int split_layer, std::size_t capacity = 2048)
        : split_layer_(split_layer), capacity_(capacity) {
        require(capacity >= 1, "InfoSet: capacity must be >= 1");
    }

    void observe(const Matrix& states, const Matrix& costates) {
        require(states.rows() == costates.rows() && states.cols() == costates.cols(),
                "InfoSet::observe: shape mismatch");
        if (dim_ == 0) dim_ = int(states.cols());
        require(states.cols() == dim_, "InfoSet::observe: dimension mismatch");
        for (Eigen::Index i = 0; i < states.rows(); ++i) {
            pairs_.emplace_back(states.row(i).transpose(), costates.row(i).transpose());
            if (pairs_.size() > capacity_) pairs_.pop_front();
        }
    }

    std::size_t size() const { return pairs_.size(); }
    bool empty() const { return pairs_.empty(); }
    int split_layer() const { return split_layer_; }
    const std::pair<Vector, Vector>& pair(std::size_t i) const { return pairs_[i]; }

private:
    int split_layer_ = -1;
    std::size_t capacity_ = 2048;
    int dim_ = 0;
    std::deque<std::pair<Vector, Vector>> pairs_;
};

// Affine model p ~ A x + B fitted by ridge-regularized least squares.
struct AffinePredictor {
    Matrix A;
    Vector B;
    double fit_mse = 0.0;
    std::size_t n_fit = 0;

    static AffinePredictor zero(int dim) {
        return {Matrix::Zero(dim, dim), Vector::Zero(dim), 0.0, 0};
    }

    Matrix predict(const Matrix& states) const {
        require(states.cols() == A.cols(), "AffinePredictor: dimension mismatch");
        return (states * A.transpose()).rowwise() + B.transpose();
    }
};

// Normal equations on the augmented design [x, 1]. With ridge > 0 the system
// is always solvable; at ridge == 0 rank deficiency is reported as an error.
inline AffinePredictor fit(const InfoSet& info, double ridge) {
    require(!info.empty(), "fit: empty information set");
    require(ridge >= 0.0, "fit: ridge must be >= 0");
    const int d = int(info.pair(0).first.size());
    const int m = d + 1;
    const std::size_t n = info.size();

    Matrix G = Matrix::Zero(m, m);   // design^T design
    Matrix rhs = Matrix::Zero(m, d); // design^T targets
    Vector aug(m);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& [x, p] = info.pair(i);
        aug.head(d) = x;
        aug(d) = 1.0;
        G.noalias() += aug * aug.transpose();
        rhs.noalias() += aug * p.transpose();
    }
    G.diagonal().array() += ridge;

    Matrix coef;  // m x d, columns are output components
    if (ridge == 0.0) {
        Eigen::FullPivLU<Matrix> lu(G);
        if (!lu.isInvertible())
            throw NumericError("fit: rank-deficient normal matrix (ridge = 0)");
        coef = lu.solve(rhs);
    } else {
        coef = Eigen::LDLT<Matrix>(G).solve(rhs);
    }

    AffinePredictor pred;
    pred.A = coef.topRows(d).transpose();
    pred.B = coef.row(d).transpose();
    pred.n_fit = n;
    require_finite(pred.A, "fitted A");
    require_finite(pred.B, "fitted B");

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& [x, p] = info.pair(i);
        total += (pred.A * x + pred.B - p).squaredNorm();
    }
    pred.fit_mse = total / double(n);
    return pred;
}

inline Matrix predict(const AffinePredictor& pred, const Matrix& states) {
    return pred.predict(states);
}

// Relative co-state prediction error ||Phat - P|| / (eta ||Phat||), Frobenius
// norms over the batch. Undefined (nullopt) when Phat vanishes.
inline std::optional<double> epsilon_diagnostic(const Matrix& P_hat, const Matrix& P_true,
                                                double eta) {
    require(eta > 0.0, "epsilon_diagnostic: eta must be positive");
    require(P_hat.rows() == P_true.rows() && P_hat.cols() == P_true.cols(),
            "epsilon_diagnostic: shape mismatch");
    const double denom = P_hat.norm();
    if (denom == 0.0) return std::nullopt;
    return (P_hat - P_true).norm() / (eta * denom);
}

}  // namespace timepar
