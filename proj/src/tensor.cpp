#include "convctc/tensor.hpp"

#include <sstream>

namespace convctc {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

constexpr std::size_t kColBlock = 512;
constexpr std::size_t kDepthBlock = 128;

}  // namespace

template <typename T>
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const T* a,
                     const T* b, T* c) {
  // Blocks over columns and depth keep four C rows plus a strip of B in
  // cache. Depth blocks are visited in ascending order, which preserves the
  // per-element summation order.
  for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::size_t jn = std::min(n, j0 + kColBlock) - j0;
    for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
      const std::size_t pend = std::min(k, p0 + kDepthBlock);
      std::size_t i = 0;
      for (; i + 4 <= m; i += 4) {
        T* c0 = c + (i + 0) * n + j0;
        T* c1 = c + (i + 1) * n + j0;
        T* c2 = c + (i + 2) * n + j0;
        T* c3 = c + (i + 3) * n + j0;
        for (std::size_t p = p0; p < pend; ++p) {
          const T a0 = a[(i + 0) * k + p];
          const T a1 = a[(i + 1) * k + p];
          const T a2 = a[(i + 2) * k + p];
          const T a3 = a[(i + 3) * k + p];
          const T* bp = b + p * n + j0;
          for (std::size_t j = 0; j < jn; ++j) {
            const T bv = bp[j];
            c0[j] += a0 * bv;
            c1[j] += a1 * bv;
            c2[j] += a2 * bv;
            c3[j] += a3 * bv;
          }
        }
      }
      for (; i < m; ++i) {
        T* ci = c + i * n + j0;
        for (std::size_t p = p0; p < pend; ++p) {
          const T av = a[i * k + p];
          const T* bp = b + p * n + j0;
          for (std::size_t j = 0; j < jn; ++j) ci[j] += av * bp[j];
        }
      }
    }
  }
}

template <typename T>
void transpose_into(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t cc = c0; cc < c1; ++cc)
          dst[cc * rows + r] = src[r * cols + cc];
    }
  }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 operands, got " +
                     shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  if (a.extent(1) != b.extent(0)) {
    throw ShapeError("matmul inner extents differ: " +
                     shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  Tensor<T> c({a.extent(0), b.extent(1)});
  gemm_accumulate(a.extent(0), b.extent(1), a.extent(1), a.raw(), b.raw(),
                  c.raw());
  return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) {
    throw ShapeError("transpose expects rank 2, got " +
                     shape_string(a.shape()));
  }
  Tensor<T> out({a.extent(1), a.extent(0)});
  transpose_into(a.extent(0), a.extent(1), a.raw(), out.raw());
  return out;
}

template <typename T>
Tensor<T> take_frames(const Tensor<T>& x, std::size_t frames) {
  const std::size_t f = x.shape().back();
  if (frames == 0 || frames > f) {
    throw ShapeError("cannot take " + std::to_string(frames) +
                     " frames from " + shape_string(x.shape()));
  }
  Shape shape = x.shape();
  shape.back() = frames;
  Tensor<T> out(shape);
  const std::size_t rows = x.size() / f;
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.raw() + r * f, frames, out.raw() + r * frames);
  }
  return out;
}

template <typename T>
void zero_frames_from(Tensor<T>& x, std::size_t frames) {
  const std::size_t f = x.shape().back();
  if (frames >= f) return;
  const std::size_t rows = x.size() / f;
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(x.raw() + r * f + frames, x.raw() + (r + 1) * f, T(0));
  }
}

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& x) {
  if (acc.shape() != x.shape()) {
    throw ShapeError("cannot accumulate " + shape_string(x.shape()) +
                     " into " + shape_string(acc.shape()));
  }
  T* dst = acc.raw();
  const T* src = x.raw();
  for (std::size_t i = 0; i < acc.size(); ++i) dst[i] += src[i];
}

template <typename T>
void scale_inplace(Tensor<T>& x, T factor) {
  for (auto& v : x.data()) v *= factor;
}

#define CONVCTC_INSTANTIATE(T)                                              \
  template void gemm_accumulate<T>(std::size_t, std::size_t, std::size_t, \
                                   const T*, const T*, T*);               \
  template void transpose_into<T>(std::size_t, std::size_t, const T*, T*); \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> transpose<T>(const Tensor<T>&);                      \
  template Tensor<T> take_frames<T>(const Tensor<T>&, std::size_t);       \
  template void zero_frames_from<T>(Tensor<T>&, std::size_t);             \
  template void add_inplace<T>(Tensor<T>&, const Tensor<T>&);             \
  template void scale_inplace<T>(Tensor<T>&, T);

CONVCTC_INSTANTIATE(float)
CONVCTC_INSTANTIATE(double)

#undef CONVCTC_INSTANTIATE

}  // namespace convctc
