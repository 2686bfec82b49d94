#pragma once

// Closed-form algebra on 2x2 symmetric tensors: eigendecomposition,
// matrix logarithm/exponential and log-Euclidean weighted means.
//
// Every function here is pure. Matrix functions f(T) are evaluated as
//   f(T) = m_f I + (d_f / r) [[(a-c)/2, b], [b, -(a-c)/2]]
// with m_f = (f(l1)+f(l2))/2, d_f = (f(l1)-f(l2))/2 and r = (l1-l2)/2, using
// a stable divided difference so isotropic inputs need no special casing.

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <span>

#include "fibrefield/error.hpp"

namespace fibrefield {

/// Undirected planar orientation, always stored in [0, pi).
template <typename Scalar>
class BasicOrientation {
public:
    BasicOrientation() = default;
    explicit BasicOrientation(Scalar theta) : theta_(normalize(theta)) {}

    Scalar value() const { return theta_; }

    static Scalar normalize(Scalar theta) {
        const Scalar pi = std::numbers::pi_v<Scalar>;
        Scalar t = std::fmod(theta, pi);
        if (t < 0) t += pi;
        if (t >= pi) t = 0;
        return t;
    }

private:
    Scalar theta_ = 0;
};

/// Symmetric tensor [[a, b], [b, c]].
template <typename Scalar>
struct BasicSymTensor2 {
    Scalar a = 0;
    Scalar b = 0;
    Scalar c = 0;

    static BasicSymTensor2 identity() { return {1, 0, 1}; }
    static BasicSymTensor2 zero() { return {0, 0, 0}; }
    static BasicSymTensor2 diagonal(Scalar d1, Scalar d2) { return {d1, 0, d2}; }

    /// Outer product v v^T.
    static BasicSymTensor2 outer(const Eigen::Matrix<Scalar, 2, 1>& v) {
        return {v.x() * v.x(), v.x() * v.y(), v.y() * v.y()};
    }

    static BasicSymTensor2 from_matrix(const Eigen::Matrix<Scalar, 2, 2>& m) {
        return {m(0, 0), Scalar(0.5) * (m(0, 1) + m(1, 0)), m(1, 1)};
    }

    Eigen::Matrix<Scalar, 2, 2> matrix() const {
        Eigen::Matrix<Scalar, 2, 2> m;
        m << a, b, b, c;
        return m;
    }

    Scalar trace() const { return a + c; }
    Scalar det() const { return a * c - b * b; }

    /// Nonnegative definite.
    bool is_valid_anisotropy() const { return a >= 0 && c >= 0 && det() >= 0; }

    BasicSymTensor2& operator+=(const BasicSymTensor2& o) {
        a += o.a;
        b += o.b;
        c += o.c;
        return *this;
    }
    friend BasicSymTensor2 operator+(BasicSymTensor2 x, const BasicSymTensor2& y) { return x += y; }
    friend BasicSymTensor2 operator*(Scalar s, const BasicSymTensor2& t) {
        return {s * t.a, s * t.b, s * t.c};
    }
    friend bool operator==(const BasicSymTensor2&, const BasicSymTensor2&) = default;
};

template <typename Scalar>
struct BasicEigenPair2 {
    Scalar lambda1 = 0;  // larger
    Scalar lambda2 = 0;  // smaller
    BasicOrientation<Scalar> theta1;
    bool indeterminate = false;  // lambda1 == lambda2 within tol_eig
};

using Orientation = BasicOrientation<double>;
using SymTensor2 = BasicSymTensor2<double>;
using EigenPair2 = BasicEigenPair2<double>;

namespace detail {

/// Relative tolerance for eigenvalue equality (singularity detection).
inline constexpr double kEigTolerance = 1e-9;
/// Eigenvalues below this fraction of the trace count as zero.
inline constexpr double kEigFloor = 1e-12;

template <typename Scalar>
struct SpectralParts {
    Scalar mean;   // (l1 + l2) / 2
    Scalar half_diff;  // (a - c) / 2
    Scalar radius;  // (l1 - l2) / 2
};

template <typename Scalar>
SpectralParts<Scalar> spectral_parts(const BasicSymTensor2<Scalar>& t) {
    const Scalar half_diff = Scalar(0.5) * (t.a - t.c);
    return {Scalar(0.5) * (t.a + t.c), half_diff, std::hypot(half_diff, t.b)};
}

/// Assembles m I + g [[h, b], [b, -h]].
template <typename Scalar>
BasicSymTensor2<Scalar> assemble(Scalar m, Scalar g, const SpectralParts<Scalar>& p, Scalar b) {
    return {m + g * p.half_diff, g * b, m - g * p.half_diff};
}

} // namespace detail

template <typename Scalar>
BasicEigenPair2<Scalar> eigendecompose(const BasicSymTensor2<Scalar>& t) {
    const auto p = detail::spectral_parts(t);
    BasicEigenPair2<Scalar> e;
    e.lambda1 = p.mean + p.radius;
    e.lambda2 = p.mean - p.radius;
    e.theta1 = BasicOrientation<Scalar>(Scalar(0.5) * std::atan2(t.b, p.half_diff));
    const Scalar scale = std::abs(e.lambda1) + std::abs(e.lambda2);
    e.indeterminate = (e.lambda1 - e.lambda2) <= Scalar(detail::kEigTolerance) * scale;
    return e;
}

/// True when every eigenvalue exceeds the relative floor.
template <typename Scalar>
bool is_positive_definite(const BasicSymTensor2<Scalar>& t) {
    const auto e = eigendecompose(t);
    const Scalar tr = t.trace();
    return tr > 0 && e.lambda2 > Scalar(detail::kEigFloor) * tr;
}

template <typename Scalar>
BasicSymTensor2<Scalar> tensor_log(const BasicSymTensor2<Scalar>& t) {
    if (!is_positive_definite(t))
        throw Error(ErrorKind::NonPositiveDefinite, "tensor_log: tensor is not positive definite");
    const auto p = detail::spectral_parts(t);
    const Scalar l1 = p.mean + p.radius;
    const Scalar l2 = p.mean - p.radius;
    const Scalar m = Scalar(0.5) * (std::log(l1) + std::log(l2));
    // (log l1 - log l2) / (l1 - l2), written so that r -> 0 is exact.
    const Scalar x = 2 * p.radius / l2;
    const Scalar g = x == 0 ? 1 / l2 : std::log1p(x) / (2 * p.radius);
    return detail::assemble(m, g, p, t.b);
}

template <typename Scalar>
BasicSymTensor2<Scalar> tensor_exp(const BasicSymTensor2<Scalar>& s) {
    const auto p = detail::spectral_parts(s);
    const Scalar em = std::exp(p.mean);
    const Scalar m = em * std::cosh(p.radius);
    // (exp l1 - exp l2) / (l1 - l2) = exp(mean) sinh(r) / r
    const Scalar g = p.radius == 0 ? em : em * std::sinh(p.radius) / p.radius;
    return detail::assemble(m, g, p, s.b);
}

/// exp( sum w_i log T_i / sum w_i ). Throws DegenerateWeights when the weights
/// carry no mass; callers substitute an isotropic result in that case.
template <typename Scalar>
BasicSymTensor2<Scalar> log_euclidean_mean(std::span<const BasicSymTensor2<Scalar>> tensors,
                                           std::span<const Scalar> weights,
                                           Scalar weight_floor = Scalar(1e-300)) {
    if (tensors.size() != weights.size())
        throw Error(ErrorKind::InvalidArgument, "log_euclidean_mean: size mismatch");
    BasicSymTensor2<Scalar> acc = BasicSymTensor2<Scalar>::zero();
    Scalar total = 0;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (weights[i] < 0)
            throw Error(ErrorKind::InvalidArgument, "log_euclidean_mean: negative weight");
        if (weights[i] == 0) continue;
        acc += weights[i] * tensor_log(tensors[i]);
        total += weights[i];
    }
    if (!(total > weight_floor))
        throw Error(ErrorKind::DegenerateWeights, "log_euclidean_mean: weights sum to zero");
    return tensor_exp((Scalar(1) / total) * acc);
}

} // namespace fibrefield
