#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace egat {

using real = double;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite value produced by a numeric op; aborts the current step.
struct NumericError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Dense row-major tensor. Values are immutable once handed to an engine;
// mutation is limited to construction and optimizer updates.
struct Tensor {
    std::vector<int> shape;
    std::vector<real> data;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<real> d, bool rg = false)
        : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
        if (numel(shape) != data.size()) throw Error("tensor: shape/data size mismatch");
    }

    static std::size_t numel(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int e : s) {
            if (e <= 0) throw Error("tensor: nonpositive extent");
            n *= static_cast<std::size_t>(e);
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s, bool rg = false) {
        std::size_t n = numel(s);
        return Tensor(std::move(s), std::vector<real>(n, 0.0), rg);
    }
    static Tensor full(std::vector<int> s, real v, bool rg = false) {
        std::size_t n = numel(s);
        return Tensor(std::move(s), std::vector<real>(n, v), rg);
    }
    static Tensor scalar(real v, bool rg = false) { return Tensor({1, 1}, {v}, rg); }
    static Tensor row(std::vector<real> v, bool rg = false) {
        int n = static_cast<int>(v.size());
        return Tensor({1, n}, std::move(v), rg);
    }

    std::size_t size() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }

    // 2-D accessors; rank-1 tensors are treated as a single row.
    int rows() const {
        if (rank() == 1) return 1;
        if (rank() == 2) return shape[0];
        throw Error("tensor: rows() on rank " + std::to_string(rank()));
    }
    int cols() const {
        if (rank() == 1) return shape[0];
        if (rank() == 2) return shape[1];
        throw Error("tensor: cols() on rank " + std::to_string(rank()));
    }

    real& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    real at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }
    real item() const {
        if (size() != 1) throw Error("tensor: item() on non-scalar");
        return data[0];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

}  // namespace egat
