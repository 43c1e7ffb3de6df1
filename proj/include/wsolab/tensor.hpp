#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace wsolab {

// Dense N x C x H x W tensor of doubles, row-major.
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}

    std::size_t size() const { return v.size(); }

    std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }

    double* plane(int i, int j) {
        return v.data() + (static_cast<std::size_t>(i) * c + j) * plane_size();
    }
    const double* plane(int i, int j) const {
        return v.data() + (static_cast<std::size_t>(i) * c + j) * plane_size();
    }

    double& at(int i, int j, int y, int x) { return plane(i, j)[static_cast<std::size_t>(y) * w + x]; }
    double at(int i, int j, int y, int x) const { return plane(i, j)[static_cast<std::size_t>(y) * w + x]; }

    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

inline void require_shape(const Tensor4& t, int n, int c, int h, int w, const char* what) {
    if (t.n != n || t.c != c || t.h != h || t.w != w)
        throw std::invalid_argument(std::string("tensor shape mismatch in ") + what);
}

}  // namespace wsolab
