#pragma once

// Internal dense kernels shared by the convolution ops.

#include <algorithm>
#include <cstddef>

namespace repsnet::detail {

/// C(MxN) += A(MxK) * B(KxN), all row-major with explicit leading dimensions.
/// Fixed blocking and loop order, so results do not depend on anything but the inputs.
template <class T>
void gemm_nn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc) {
  constexpr int kColBlock = 512;
  constexpr int kDepthBlock = 128;
  for (int j0 = 0; j0 < N; j0 += kColBlock) {
    const int jn = std::min(kColBlock, N - j0);
    for (int k0 = 0; k0 < K; k0 += kDepthBlock) {
      const int kn = std::min(kDepthBlock, K - k0);
      int i = 0;
      for (; i + 4 <= M; i += 4) {
        T* __restrict c0 = C + static_cast<std::ptrdiff_t>(i) * ldc + j0;
        T* __restrict c1 = c0 + ldc;
        T* __restrict c2 = c1 + ldc;
        T* __restrict c3 = c2 + ldc;
        for (int k = k0; k < k0 + kn; ++k) {
          const T a0 = A[static_cast<std::ptrdiff_t>(i) * lda + k];
          const T a1 = A[static_cast<std::ptrdiff_t>(i + 1) * lda + k];
          const T a2 = A[static_cast<std::ptrdiff_t>(i + 2) * lda + k];
          const T a3 = A[static_cast<std::ptrdiff_t>(i + 3) * lda + k];
          const T* __restrict b = B + static_cast<std::ptrdiff_t>(k) * ldb + j0;
          for (int j = 0; j < jn; ++j) {
            const T bj = b[j];
            c0[j] += a0 * bj;
            c1[j] += a1 * bj;
            c2[j] += a2 * bj;
            c3[j] += a3 * bj;
          }
        }
      }
      for (; i < M; ++i) {
        T* __restrict c0 = C + static_cast<std::ptrdiff_t>(i) * ldc + j0;
        for (int k = k0; k < k0 + kn; ++k) {
          const T a0 = A[static_cast<std::ptrdiff_t>(i) * lda + k];
          const T* __restrict b = B + static_cast<std::ptrdiff_t>(k) * ldb + j0;
          for (int j = 0; j < jn; ++j) c0[j] += a0 * b[j];
        }
      }
    }
  }
}

/// dst(cols x rows) = transpose of src(rows x cols).
template <class T>
void transpose(int rows, int cols, const T* src, T* dst) {
  constexpr int kTile = 32;
  for (int r0 = 0; r0 < rows; r0 += kTile) {
    for (int c0 = 0; c0 < cols; c0 += kTile) {
      const int rn = std::min(rows, r0 + kTile);
      const int cn = std::min(cols, c0 + kTile);
      for (int r = r0; r < rn; ++r) {
        for (int c = c0; c < cn; ++c) {
          dst[static_cast<std::ptrdiff_t>(c) * rows + r] = src[static_cast<std::ptrdiff_t>(r) * cols + c];
        }
      }
    }
  }
}

/// Relation between an image of (channels, height, width) and a sampling grid
/// of (grid_h, grid_w): grid cell (gy, gx) with tap (ky, kx) reads image pixel
/// (gy*stride - padding + ky, gx*stride - padding + kx).
struct PatchGeometry {
  int channels = 0;
  int height = 0;
  int width = 0;
  int k = 1;
  int stride = 1;
  int padding = 0;
  int grid_h = 0;
  int grid_w = 0;

  int rows() const { return channels * k * k; }
  int cols() const { return grid_h * grid_w; }
};

/// col[(c*k+ky)*k+kx][gy*grid_w+gx] = image value, zero outside the image.
template <class T>
void im2col(const T* img, const PatchGeometry& g, T* col) {
  const int cols = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    const T* plane = img + static_cast<std::ptrdiff_t>(c) * g.height * g.width;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* dst = col + static_cast<std::ptrdiff_t>((c * g.k + ky) * g.k + kx) * cols;
        for (int gy = 0; gy < g.grid_h; ++gy) {
          const int y = gy * g.stride - g.padding + ky;
          T* row = dst + static_cast<std::ptrdiff_t>(gy) * g.grid_w;
          if (y < 0 || y >= g.height) {
            std::fill(row, row + g.grid_w, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::ptrdiff_t>(y) * g.width;
          for (int gx = 0; gx < g.grid_w; ++gx) {
            const int x = gx * g.stride - g.padding + kx;
            row[gx] = (x >= 0 && x < g.width) ? src[x] : T{0};
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters col entries back onto the image (accumulating).
template <class T>
void col2im(const T* col, const PatchGeometry& g, T* img) {
  const int cols = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    T* plane = img + static_cast<std::ptrdiff_t>(c) * g.height * g.width;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* src = col + static_cast<std::ptrdiff_t>((c * g.k + ky) * g.k + kx) * cols;
        for (int gy = 0; gy < g.grid_h; ++gy) {
          const int y = gy * g.stride - g.padding + ky;
          if (y < 0 || y >= g.height) continue;
          T* dst = plane + static_cast<std::ptrdiff_t>(y) * g.width;
          const T* row = src + static_cast<std::ptrdiff_t>(gy) * g.grid_w;
          for (int gx = 0; gx < g.grid_w; ++gx) {
            const int x = gx * g.stride - g.padding + kx;
            if (x >= 0 && x < g.width) dst[x] += row[gx];
          }
        }
      }
    }
  }
}

}  // namespace repsnet::detail
