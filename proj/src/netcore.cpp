#include "igsc/netcore.hpp"

#include <algorithm>
#include <cmath>

#include "igsc/error.hpp"

namespace igsc {

namespace {

std::string vec_shape(std::size_t n) { return "[" + std::to_string(n) + "]"; }

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix " + shape_string() + " given " + std::to_string(data_.size()) +
                         " values");
    }
}

std::string Matrix::shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::relu: return "relu";
    }
    return "?";
}

Activation activation_from_string(const std::string& name) {
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "relu") return Activation::relu;
    throw UsageError("unknown activation '" + name + "'");
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("dot of " + vec_shape(a.size()) + " and " + vec_shape(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

Vector affine(std::span<const double> x, const Matrix& Wm, std::span<const double> b) {
    if (Wm.cols() != x.size() || Wm.rows() != b.size()) {
        throw ShapeError("affine: W " + Wm.shape_string() + ", x " + vec_shape(x.size()) + ", b " +
                         vec_shape(b.size()));
    }
    Vector out(Wm.rows());
    for (std::size_t i = 0; i < Wm.rows(); ++i) {
        const auto w = Wm.row(i);
        double acc = b[i];
        for (std::size_t j = 0; j < w.size(); ++j) acc += w[j] * x[j];
        out[i] = acc;
    }
    return out;
}

void affine_backward(std::span<const double> x, const Matrix& Wm, std::span<const double> dout,
                     Matrix& grad_W, std::span<double> grad_b, std::span<double> grad_x) {
    if (Wm.cols() != x.size() || Wm.rows() != dout.size() || grad_W.rows() != Wm.rows() ||
        grad_W.cols() != Wm.cols() || grad_b.size() != Wm.rows() ||
        (!grad_x.empty() && grad_x.size() != x.size())) {
        throw ShapeError("affine_backward: W " + Wm.shape_string() + ", x " + vec_shape(x.size()) +
                         ", dout " + vec_shape(dout.size()));
    }
    for (std::size_t i = 0; i < Wm.rows(); ++i) {
        const double g = dout[i];
        grad_b[i] += g;
        if (g == 0.0) continue;
        auto gw = grad_W.row(i);
        for (std::size_t j = 0; j < x.size(); ++j) gw[j] += g * x[j];
        if (!grad_x.empty()) {
            const auto w = Wm.row(i);
            for (std::size_t j = 0; j < x.size(); ++j) grad_x[j] += g * w[j];
        }
    }
}

Vector softmax(std::span<const double> s) {
    if (s.empty()) throw ShapeError("softmax of empty vector");
    const double top = *std::max_element(s.begin(), s.end());
    Vector out(s.size());
    double total = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        out[k] = std::exp(s[k] - top);
        total += out[k];
    }
    for (double& v : out) v /= total;
    return out;
}

Vector softmax_backward(std::span<const double> p, std::span<const double> dp) {
    if (p.size() != dp.size()) {
        throw ShapeError("softmax_backward: p " + vec_shape(p.size()) + ", dp " + vec_shape(dp.size()));
    }
    const double inner = dot(p, dp);
    Vector ds(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) ds[k] = p[k] * (dp[k] - inner);
    return ds;
}

double activate(double x, Activation kind) {
    switch (kind) {
        case Activation::tanh: return std::tanh(x);
        case Activation::sigmoid:
            // Split by sign so exp never overflows.
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            else {
                const double e = std::exp(x);
                return e / (1.0 + e);
            }
        case Activation::relu: return x > 0.0 ? x : 0.0;
    }
    return x;
}

Vector activation(std::span<const double> v, Activation kind) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = activate(v[i], kind);
    return out;
}

double activation_derivative(double x, double y, Activation kind) {
    switch (kind) {
        case Activation::tanh: return 1.0 - y * y;
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    }
    return 0.0;
}

Vector finite_diff_gradient(const std::function<double(std::span<const double>)>& f,
                            std::span<const double> params, double eps) {
    if (!(eps > 0.0)) throw UsageError("finite_diff_gradient: eps must be positive");
    Vector probe(params.begin(), params.end());
    Vector grad(params.size());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + eps;
        const double up = f(probe);
        probe[i] = saved - eps;
        const double down = f(probe);
        probe[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("finite_diff_gradient: non-finite objective at coordinate " +
                               std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

void require_finite(std::span<const double> values, const std::string& what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NumericError("non-finite value in " + what + " at index " + std::to_string(i));
        }
    }
}

}  // namespace igsc
