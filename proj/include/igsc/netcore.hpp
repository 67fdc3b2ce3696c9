#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace igsc {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    /// Takes ownership of row-major `data`; throws ShapeError unless data.size() == rows * cols.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }

    std::string shape_string() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

enum class Activation { tanh, sigmoid, relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// out = Wm * x + b.
Vector affine(std::span<const double> x, const Matrix& Wm, std::span<const double> b);

/// Accumulating reverse rules for affine: grad_W += dout * x^T, grad_b += dout,
/// and (when grad_x is non-empty) grad_x += Wm^T * dout.
void affine_backward(std::span<const double> x, const Matrix& Wm, std::span<const double> dout,
                     Matrix& grad_W, std::span<double> grad_b, std::span<double> grad_x);

/// Max-shifted softmax. Throws ShapeError on empty input.
Vector softmax(std::span<const double> s);

/// Vector-Jacobian product of softmax given its output p: ds_k = p_k (dp_k - sum_j p_j dp_j).
Vector softmax_backward(std::span<const double> p, std::span<const double> dp);

double activate(double x, Activation kind);
Vector activation(std::span<const double> v, Activation kind);

/// Derivative of the activation written in terms of its input `x` and output `y`.
double activation_derivative(double x, double y, Activation kind);

/// Central-difference gradient of `f` at `params`. Throws NumericError if f is non-finite.
Vector finite_diff_gradient(const std::function<double(std::span<const double>)>& f,
                            std::span<const double> params, double eps);

/// Throws NumericError naming `what` if any value is NaN or infinite.
void require_finite(std::span<const double> values, const std::string& what);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace igsc
