#pragma once

// Spatial operators over [c,h,w] tensors: convolution, pooling, upsampling,
// sliding-block extraction and bilinear sampling. All differentiable unless
// noted; masks are plain tensors outside the tape.

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "poseflow/tensor.hpp"

namespace poseflow {

// 2D convolution, zero padding. x: [ci,h,w], w: [co,ci,kh,kw], bias: [co] or null.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Dim stride, Dim pad) {
    if (x.rank() != 3) throw ShapeError("conv2d: input must be [c,h,w], got " + shape_str(x.shape()));
    if (w.rank() != 4) throw ShapeError("conv2d: weight must be [co,ci,kh,kw], got " + shape_str(w.shape()));
    if (x.size(0) != w.size(1))
        throw ShapeError("conv2d: channel mismatch at input axis 0 vs weight axis 1 (" +
                         std::to_string(x.size(0)) + " vs " + std::to_string(w.size(1)) + ")");
    if (bias.defined() && (bias.rank() != 1 || bias.size(0) != w.size(0)))
        throw ShapeError("conv2d: bias must be [co]");
    if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1");
    if (pad < 0) throw ArgumentError("conv2d: pad must be >= 0");

    const Dim ci = x.size(0), h = x.size(1), wd = x.size(2);
    const Dim co = w.size(0), kh = w.size(2), kw = w.size(3);
    const Dim ho = (h + 2 * pad - kh) / stride + 1;
    const Dim wo = (wd + 2 * pad - kw) / stride + 1;
    if (ho < 1 || wo < 1) throw ShapeError("conv2d: kernel larger than padded input");

    std::vector<T> out(static_cast<std::size_t>(co * ho * wo), T(0));
    const T* xv = x.data();
    const T* wv = w.data();
    for (Dim oc = 0; oc < co; ++oc) {
        T* oplane = out.data() + oc * ho * wo;
        if (bias.defined()) {
            const T b = bias.data()[oc];
            for (Dim i = 0; i < ho * wo; ++i) oplane[i] = b;
        }
        for (Dim ic = 0; ic < ci; ++ic) {
            const T* iplane = xv + ic * h * wd;
            for (Dim ky = 0; ky < kh; ++ky)
                for (Dim kx = 0; kx < kw; ++kx) {
                    const T wgt = wv[((oc * ci + ic) * kh + ky) * kw + kx];
                    if (wgt == T(0)) continue;
                    for (Dim oy = 0; oy < ho; ++oy) {
                        const Dim iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const T* irow = iplane + iy * wd;
                        T* orow = oplane + oy * wo;
                        // valid ox range: 0 <= ox*stride + kx - pad < wd
                        Dim ox0 = 0;
                        while (ox0 < wo && ox0 * stride + kx - pad < 0) ++ox0;
                        Dim ox1 = wo;
                        while (ox1 > ox0 && (ox1 - 1) * stride + kx - pad >= wd) --ox1;
                        const Dim base = kx - pad;
                        for (Dim ox = ox0; ox < ox1; ++ox) orow[ox] += wgt * irow[ox * stride + base];
                    }
                }
        }
    }

    auto px = x.node();
    auto pw = w.node();
    auto pb = bias.defined() ? bias.node() : nullptr;
    std::vector<Tensor<T>> parents = bias.defined() ? std::vector<Tensor<T>>{x, w, bias}
                                                    : std::vector<Tensor<T>>{x, w};
    auto bw = [px, pw, pb, ci, h, wd, co, kh, kw, ho, wo, stride, pad](typename Tensor<T>::Node& self) {
        const T* g = self.grad.data();
        if (pb && pb->requires_grad) {
            T* gb = pb->grad.data();
            for (Dim oc = 0; oc < co; ++oc) {
                T acc = T(0);
                const T* gplane = g + oc * ho * wo;
                for (Dim i = 0; i < ho * wo; ++i) acc += gplane[i];
                gb[oc] += acc;
            }
        }
        if (pw->requires_grad) {
            T* gw = pw->grad.data();
            const T* xv2 = px->value.data();
            for (Dim oc = 0; oc < co; ++oc)
                for (Dim ic = 0; ic < ci; ++ic) {
                    const T* iplane = xv2 + ic * h * wd;
                    const T* gplane = g + oc * ho * wo;
                    for (Dim ky = 0; ky < kh; ++ky)
                        for (Dim kx = 0; kx < kw; ++kx) {
                            T acc = T(0);
                            for (Dim oy = 0; oy < ho; ++oy) {
                                const Dim iy = oy * stride + ky - pad;
                                if (iy < 0 || iy >= h) continue;
                                const T* irow = iplane + iy * wd;
                                const T* grow = gplane + oy * wo;
                                Dim ox0 = 0;
                                while (ox0 < wo && ox0 * stride + kx - pad < 0) ++ox0;
                                Dim ox1 = wo;
                                while (ox1 > ox0 && (ox1 - 1) * stride + kx - pad >= wd) --ox1;
                                const Dim base = kx - pad;
                                for (Dim ox = ox0; ox < ox1; ++ox) acc += grow[ox] * irow[ox * stride + base];
                            }
                            gw[((oc * ci + ic) * kh + ky) * kw + kx] += acc;
                        }
                }
        }
        if (px->requires_grad) {
            T* gx = px->grad.data();
            const T* wv2 = pw->value.data();
            for (Dim oc = 0; oc < co; ++oc) {
                const T* gplane = g + oc * ho * wo;
                for (Dim ic = 0; ic < ci; ++ic) {
                    T* iplane = gx + ic * h * wd;
                    for (Dim ky = 0; ky < kh; ++ky)
                        for (Dim kx = 0; kx < kw; ++kx) {
                            const T wgt = wv2[((oc * ci + ic) * kh + ky) * kw + kx];
                            if (wgt == T(0)) continue;
                            for (Dim oy = 0; oy < ho; ++oy) {
                                const Dim iy = oy * stride + ky - pad;
                                if (iy < 0 || iy >= h) continue;
                                T* irow = iplane + iy * wd;
                                const T* grow = gplane + oy * wo;
                                Dim ox0 = 0;
                                while (ox0 < wo && ox0 * stride + kx - pad < 0) ++ox0;
                                Dim ox1 = wo;
                                while (ox1 > ox0 && (ox1 - 1) * stride + kx - pad >= wd) --ox1;
                                const Dim base = kx - pad;
                                for (Dim ox = ox0; ox < ox1; ++ox) irow[ox * stride + base] += wgt * grow[ox];
                            }
                        }
                }
            }
        }
    };
    return make_op<T>(Shape{co, ho, wo}, std::move(out), std::move(parents), std::move(bw));
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, Dim stride, Dim pad) {
    return conv2d(x, w, Tensor<T>(), stride, pad);
}

// 2x2 average pooling over the trailing two axes of a [c,h,w] or [h,w] tensor.
template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
    if (x.rank() != 2 && x.rank() != 3) throw ShapeError("avg_pool2: expects [h,w] or [c,h,w]");
    const bool flat = x.rank() == 2;
    const Dim c = flat ? 1 : x.size(0);
    const Dim h = x.size(flat ? 0 : 1), w = x.size(flat ? 1 : 2);
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeError("avg_pool2: spatial extents must be even, got " + shape_str(x.shape()));
    const Dim ho = h / 2, wo = w / 2;
    std::vector<T> out(static_cast<std::size_t>(c * ho * wo));
    const T* xv = x.data();
    for (Dim ic = 0; ic < c; ++ic)
        for (Dim oy = 0; oy < ho; ++oy)
            for (Dim ox = 0; ox < wo; ++ox) {
                const T* p = xv + (ic * h + 2 * oy) * w + 2 * ox;
                out[(ic * ho + oy) * wo + ox] = (p[0] + p[1] + p[w] + p[w + 1]) * T(0.25);
            }
    Shape out_shape = flat ? Shape{ho, wo} : Shape{c, ho, wo};
    auto px = x.node();
    return make_op<T>(std::move(out_shape), std::move(out), {x},
                      [px, c, h, w, ho, wo](typename Tensor<T>::Node& self) {
                          if (!px->requires_grad) return;
                          const T* g = self.grad.data();
                          T* gx = px->grad.data();
                          for (Dim ic = 0; ic < c; ++ic)
                              for (Dim oy = 0; oy < ho; ++oy)
                                  for (Dim ox = 0; ox < wo; ++ox) {
                                      const T gv = g[(ic * ho + oy) * wo + ox] * T(0.25);
                                      T* p = gx + (ic * h + 2 * oy) * w + 2 * ox;
                                      p[0] += gv;
                                      p[1] += gv;
                                      p[w] += gv;
                                      p[w + 1] += gv;
                                  }
                      });
}

// 3x3 box filter per channel, stride 1, zero padding, fixed 1/9 normalization.
template <typename T>
Tensor<T> box_filter3(const Tensor<T>& x) {
    if (x.rank() != 3) throw ShapeError("box_filter3: expects [c,h,w]");
    const Dim c = x.size(0), h = x.size(1), w = x.size(2);
    std::vector<T> out(static_cast<std::size_t>(c * h * w), T(0));
    const T* xv = x.data();
    const T inv9 = T(1) / T(9);
    for (Dim ic = 0; ic < c; ++ic)
        for (Dim y = 0; y < h; ++y)
            for (Dim x0 = 0; x0 < w; ++x0) {
                T acc = T(0);
                for (Dim dy = -1; dy <= 1; ++dy) {
                    const Dim yy = y + dy;
                    if (yy < 0 || yy >= h) continue;
                    for (Dim dx = -1; dx <= 1; ++dx) {
                        const Dim xx = x0 + dx;
                        if (xx < 0 || xx >= w) continue;
                        acc += xv[(ic * h + yy) * w + xx];
                    }
                }
                out[(ic * h + y) * w + x0] = acc * inv9;
            }
    auto px = x.node();
    return make_op<T>(x.shape(), std::move(out), {x}, [px, c, h, w, inv9](typename Tensor<T>::Node& self) {
        if (!px->requires_grad) return;
        const T* g = self.grad.data();
        T* gx = px->grad.data();
        for (Dim ic = 0; ic < c; ++ic)
            for (Dim y = 0; y < h; ++y)
                for (Dim x0 = 0; x0 < w; ++x0) {
                    const T gv = g[(ic * h + y) * w + x0] * inv9;
                    for (Dim dy = -1; dy <= 1; ++dy) {
                        const Dim yy = y + dy;
                        if (yy < 0 || yy >= h) continue;
                        for (Dim dx = -1; dx <= 1; ++dx) {
                            const Dim xx = x0 + dx;
                            if (xx < 0 || xx >= w) continue;
                            gx[(ic * h + yy) * w + xx] += gv;
                        }
                    }
                }
    });
}

// Nearest-neighbor 2x upsampling of [c,h,w].
template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
    if (x.rank() != 3) throw ShapeError("upsample_nearest2: expects [c,h,w]");
    const Dim c = x.size(0), h = x.size(1), w = x.size(2);
    std::vector<T> out(static_cast<std::size_t>(c * 4 * h * w));
    const T* xv = x.data();
    for (Dim ic = 0; ic < c; ++ic)
        for (Dim y = 0; y < 2 * h; ++y)
            for (Dim x0 = 0; x0 < 2 * w; ++x0)
                out[(ic * 2 * h + y) * 2 * w + x0] = xv[(ic * h + y / 2) * w + x0 / 2];
    auto px = x.node();
    return make_op<T>(Shape{c, 2 * h, 2 * w}, std::move(out), {x},
                      [px, c, h, w](typename Tensor<T>::Node& self) {
                          if (!px->requires_grad) return;
                          const T* g = self.grad.data();
                          T* gx = px->grad.data();
                          for (Dim ic = 0; ic < c; ++ic)
                              for (Dim y = 0; y < 2 * h; ++y)
                                  for (Dim x0 = 0; x0 < 2 * w; ++x0)
                                      gx[(ic * h + y / 2) * w + x0 / 2] += g[(ic * 2 * h + y) * 2 * w + x0];
                      });
}

// Bilinear 2x upsampling of [c,h,w]; output pixel centers sit at half-integer
// source positions, edges clamped.
template <typename T>
Tensor<T> upsample_bilinear2(const Tensor<T>& x) {
    if (x.rank() != 3) throw ShapeError("upsample_bilinear2: expects [c,h,w]");
    const Dim c = x.size(0), h = x.size(1), w = x.size(2);
    const Dim ho = 2 * h, wo = 2 * w;

    // Precompute 1D interpolation taps, shared across channels and rows/cols.
    auto taps = [](Dim out_n, Dim in_n) {
        std::vector<std::tuple<Dim, Dim, double>> t(static_cast<std::size_t>(out_n));  // (i0, i1, frac)
        for (Dim o = 0; o < out_n; ++o) {
            double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
            if (src < 0) src = 0;
            if (src > static_cast<double>(in_n - 1)) src = static_cast<double>(in_n - 1);
            const Dim i0 = static_cast<Dim>(std::floor(src));
            const Dim i1 = std::min(i0 + 1, in_n - 1);
            t[static_cast<std::size_t>(o)] = {i0, i1, src - static_cast<double>(i0)};
        }
        return t;
    };
    auto ty = std::make_shared<std::vector<std::tuple<Dim, Dim, double>>>(taps(ho, h));
    auto tx = std::make_shared<std::vector<std::tuple<Dim, Dim, double>>>(taps(wo, w));

    std::vector<T> out(static_cast<std::size_t>(c * ho * wo));
    const T* xv = x.data();
    for (Dim ic = 0; ic < c; ++ic)
        for (Dim y = 0; y < ho; ++y) {
            const auto [y0, y1, fy] = (*ty)[static_cast<std::size_t>(y)];
            for (Dim x0 = 0; x0 < wo; ++x0) {
                const auto [x0i, x1i, fx] = (*tx)[static_cast<std::size_t>(x0)];
                const T v00 = xv[(ic * h + y0) * w + x0i];
                const T v01 = xv[(ic * h + y0) * w + x1i];
                const T v10 = xv[(ic * h + y1) * w + x0i];
                const T v11 = xv[(ic * h + y1) * w + x1i];
                const T top = v00 + static_cast<T>(fx) * (v01 - v00);
                const T bot = v10 + static_cast<T>(fx) * (v11 - v10);
                out[(ic * ho + y) * wo + x0] = top + static_cast<T>(fy) * (bot - top);
            }
        }
    auto px = x.node();
    return make_op<T>(Shape{c, ho, wo}, std::move(out), {x},
                      [px, c, h, w, ho, wo, ty, tx](typename Tensor<T>::Node& self) {
                          if (!px->requires_grad) return;
                          const T* g = self.grad.data();
                          T* gx = px->grad.data();
                          for (Dim ic = 0; ic < c; ++ic)
                              for (Dim y = 0; y < ho; ++y) {
                                  const auto [y0, y1, fy] = (*ty)[static_cast<std::size_t>(y)];
                                  for (Dim x0 = 0; x0 < wo; ++x0) {
                                      const auto [x0i, x1i, fx] = (*tx)[static_cast<std::size_t>(x0)];
                                      const T gv = g[(ic * ho + y) * wo + x0];
                                      const T wy0 = static_cast<T>(1.0 - fy), wy1 = static_cast<T>(fy);
                                      const T wx0 = static_cast<T>(1.0 - fx), wx1 = static_cast<T>(fx);
                                      gx[(ic * h + y0) * w + x0i] += gv * wy0 * wx0;
                                      gx[(ic * h + y0) * w + x1i] += gv * wy0 * wx1;
                                      gx[(ic * h + y1) * w + x0i] += gv * wy1 * wx0;
                                      gx[(ic * h + y1) * w + x1i] += gv * wy1 * wx1;
                                  }
                              }
                      });
}

// Sliding local blocks with zero padding of width (d-1)/2. Entry
// (y,x,ch,j*d+i) = features(ch, y+j-(d-1)/2, x+i-(d-1)/2).
template <typename T>
Tensor<T> unfold(const Tensor<T>& features, Dim d) {
    if (features.rank() != 3) throw ShapeError("unfold: expects [c,h,w]");
    if (d < 1 || d % 2 == 0)
        throw ArgumentError("unfold: window must be a positive odd integer, got " + std::to_string(d));
    const Dim c = features.size(0), h = features.size(1), w = features.size(2);
    const Dim r = (d - 1) / 2;
    std::vector<T> out(static_cast<std::size_t>(h * w * c * d * d), T(0));
    const T* fv = features.data();
    for (Dim y = 0; y < h; ++y)
        for (Dim x = 0; x < w; ++x)
            for (Dim ch = 0; ch < c; ++ch)
                for (Dim j = 0; j < d; ++j) {
                    const Dim yy = y + j - r;
                    if (yy < 0 || yy >= h) continue;
                    for (Dim i = 0; i < d; ++i) {
                        const Dim xx = x + i - r;
                        if (xx < 0 || xx >= w) continue;
                        out[((y * w + x) * c + ch) * d * d + j * d + i] = fv[(ch * h + yy) * w + xx];
                    }
                }
    auto pf = features.node();
    return make_op<T>(Shape{h, w, c, d * d}, std::move(out), {features},
                      [pf, c, h, w, d, r](typename Tensor<T>::Node& self) {
                          if (!pf->requires_grad) return;
                          const T* g = self.grad.data();
                          T* gf = pf->grad.data();
                          for (Dim y = 0; y < h; ++y)
                              for (Dim x = 0; x < w; ++x)
                                  for (Dim ch = 0; ch < c; ++ch)
                                      for (Dim j = 0; j < d; ++j) {
                                          const Dim yy = y + j - r;
                                          if (yy < 0 || yy >= h) continue;
                                          for (Dim i = 0; i < d; ++i) {
                                              const Dim xx = x + i - r;
                                              if (xx < 0 || xx >= w) continue;
                                              gf[(ch * h + yy) * w + xx] +=
                                                  g[((y * w + x) * c + ch) * d * d + j * d + i];
                                          }
                                      }
                      });
}

// Bilinear sampling of image [c,h,w] at pixel coordinates coords [h,w,2]
// ((x,y) order). Returns the sampled image and a {0,1} validity mask; samples
// whose four neighbors are not all inside the image are 0 with mask 0. The
// mask does not participate in gradients.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> grid_sample(const Tensor<T>& image, const Tensor<T>& coords) {
    if (image.rank() != 3) throw ShapeError("grid_sample: image must be [c,h,w]");
    if (coords.rank() != 3 || coords.size(2) != 2)
        throw ShapeError("grid_sample: coords must be [h,w,2], got " + shape_str(coords.shape()));
    const Dim c = image.size(0), h = image.size(1), w = image.size(2);
    const Dim oh = coords.size(0), ow = coords.size(1);

    std::vector<T> out(static_cast<std::size_t>(c * oh * ow), T(0));
    std::vector<T> mask(static_cast<std::size_t>(oh * ow), T(0));
    const T* iv = image.data();
    const T* cv = coords.data();
    for (Dim y = 0; y < oh; ++y)
        for (Dim x = 0; x < ow; ++x) {
            const T sx = cv[(y * ow + x) * 2 + 0];
            const T sy = cv[(y * ow + x) * 2 + 1];
            if (!(sx >= T(0) && sx <= T(w - 1) && sy >= T(0) && sy <= T(h - 1))) continue;
            mask[y * ow + x] = T(1);
            // Exact hits on the far edge use the last full cell (frac = 1).
            const Dim x0 = std::min(static_cast<Dim>(std::floor(static_cast<double>(sx))), w - 2);
            const Dim y0 = std::min(static_cast<Dim>(std::floor(static_cast<double>(sy))), h - 2);
            const T fx = sx - static_cast<T>(x0);
            const T fy = sy - static_cast<T>(y0);
            for (Dim ch = 0; ch < c; ++ch) {
                const T* p = iv + (ch * h + y0) * w + x0;
                const T top = p[0] + fx * (p[1] - p[0]);
                const T bot = p[w] + fx * (p[w + 1] - p[w]);
                out[(ch * oh + y) * ow + x] = top + fy * (bot - top);
            }
        }
    auto pi = image.node();
    auto pc = coords.node();
    Tensor<T> sampled = make_op<T>(
        Shape{c, oh, ow}, std::move(out), {image, coords},
        [pi, pc, c, h, w, oh, ow](typename Tensor<T>::Node& self) {
            const T* g = self.grad.data();
            const T* iv2 = pi->value.data();
            const T* cv2 = pc->value.data();
            for (Dim y = 0; y < oh; ++y)
                for (Dim x = 0; x < ow; ++x) {
                    const T sx = cv2[(y * ow + x) * 2 + 0];
                    const T sy = cv2[(y * ow + x) * 2 + 1];
                    if (!(sx >= T(0) && sx <= T(w - 1) && sy >= T(0) && sy <= T(h - 1))) continue;
                    const Dim x0 = std::min(static_cast<Dim>(std::floor(static_cast<double>(sx))), w - 2);
                    const Dim y0 = std::min(static_cast<Dim>(std::floor(static_cast<double>(sy))), h - 2);
                    const T fx = sx - static_cast<T>(x0);
                    const T fy = sy - static_cast<T>(y0);
                    T dx_acc = T(0), dy_acc = T(0);
                    for (Dim ch = 0; ch < c; ++ch) {
                        const T gv = g[(ch * oh + y) * ow + x];
                        const T* p = iv2 + (ch * h + y0) * w + x0;
                        if (pi->requires_grad) {
                            T* q = pi->grad.data() + (ch * h + y0) * w + x0;
                            q[0] += gv * (T(1) - fx) * (T(1) - fy);
                            q[1] += gv * fx * (T(1) - fy);
                            q[w] += gv * (T(1) - fx) * fy;
                            q[w + 1] += gv * fx * fy;
                        }
                        if (pc->requires_grad) {
                            dx_acc += gv * ((p[1] - p[0]) * (T(1) - fy) + (p[w + 1] - p[w]) * fy);
                            dy_acc += gv * ((p[w] - p[0]) * (T(1) - fx) + (p[w + 1] - p[1]) * fx);
                        }
                    }
                    if (pc->requires_grad) {
                        pc->grad[(y * ow + x) * 2 + 0] += dx_acc;
                        pc->grad[(y * ow + x) * 2 + 1] += dy_acc;
                    }
                }
        });
    return {sampled, Tensor<T>(Shape{oh, ow}, std::move(mask), false)};
}

// Multiply every channel of x [c,h,w] by the spatial map m [h,w].
template <typename T>
Tensor<T> mul_spatial(const Tensor<T>& x, const Tensor<T>& m) {
    if (x.rank() != 3 || m.rank() != 2) throw ShapeError("mul_spatial: expects [c,h,w] and [h,w]");
    if (x.size(1) != m.size(0) || x.size(2) != m.size(1))
        throw ShapeError("mul_spatial: spatial mismatch (" + shape_str(x.shape()) + " vs " +
                         shape_str(m.shape()) + ")");
    const Dim c = x.size(0);
    const std::size_t hw = static_cast<std::size_t>(m.numel());
    std::vector<T> out(static_cast<std::size_t>(x.numel()));
    const T* xv = x.data();
    const T* mv = m.data();
    for (Dim ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = xv[ch * hw + i] * mv[i];
    auto px = x.node();
    auto pm = m.node();
    return make_op<T>(x.shape(), std::move(out), {x, m}, [px, pm, c, hw](typename Tensor<T>::Node& self) {
        const T* g = self.grad.data();
        if (px->requires_grad) {
            const T* mv2 = pm->value.data();
            T* gx = px->grad.data();
            for (Dim ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < hw; ++i) gx[ch * hw + i] += g[ch * hw + i] * mv2[i];
        }
        if (pm->requires_grad) {
            const T* xv2 = px->value.data();
            T* gm = pm->grad.data();
            for (Dim ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < hw; ++i) gm[i] += g[ch * hw + i] * xv2[ch * hw + i];
        }
    });
}

// Per-channel min-max normalization of [c,h,w] to [0,1]; constant channels
// map to zero (and pass no gradient, the map being flat there).
template <typename T>
Tensor<T> minmax_normalize_channels(const Tensor<T>& x) {
    if (x.rank() != 3) throw ShapeError("minmax_normalize_channels: expects [c,h,w]");
    const Dim c = x.size(0);
    const std::size_t hw = static_cast<std::size_t>(x.size(1) * x.size(2));
    std::vector<T> out(static_cast<std::size_t>(x.numel()));
    auto lo_idx = std::make_shared<std::vector<std::size_t>>(static_cast<std::size_t>(c));
    auto hi_idx = std::make_shared<std::vector<std::size_t>>(static_cast<std::size_t>(c));
    const T* xv = x.data();
    constexpr T kFlat = T(1e-12);
    for (Dim ch = 0; ch < c; ++ch) {
        const T* p = xv + ch * hw;
        std::size_t a = 0, b = 0;
        for (std::size_t i = 1; i < hw; ++i) {
            if (p[i] < p[a]) a = i;
            if (p[i] > p[b]) b = i;
        }
        (*lo_idx)[static_cast<std::size_t>(ch)] = a;
        (*hi_idx)[static_cast<std::size_t>(ch)] = b;
        const T range = p[b] - p[a];
        T* q = out.data() + ch * hw;
        if (range <= kFlat) {
            for (std::size_t i = 0; i < hw; ++i) q[i] = T(0);
        } else {
            const T inv = T(1) / range;
            for (std::size_t i = 0; i < hw; ++i) q[i] = (p[i] - p[a]) * inv;
        }
    }
    auto px = x.node();
    return make_op<T>(x.shape(), std::move(out), {x},
                      [px, c, hw, lo_idx, hi_idx](typename Tensor<T>::Node& self) {
                          if (!px->requires_grad) return;
                          const T* g = self.grad.data();
                          const T* y = self.value.data();
                          const T* xv2 = px->value.data();
                          T* gx = px->grad.data();
                          for (Dim ch = 0; ch < c; ++ch) {
                              const std::size_t a = (*lo_idx)[static_cast<std::size_t>(ch)];
                              const std::size_t b = (*hi_idx)[static_cast<std::size_t>(ch)];
                              const T range = xv2[ch * hw + b] - xv2[ch * hw + a];
                              if (range <= kFlat) continue;
                              const T inv = T(1) / range;
                              T gsum = T(0), gysum = T(0);
                              for (std::size_t i = 0; i < hw; ++i) {
                                  gsum += g[ch * hw + i];
                                  gysum += g[ch * hw + i] * y[ch * hw + i];
                              }
                              for (std::size_t i = 0; i < hw; ++i) gx[ch * hw + i] += g[ch * hw + i] * inv;
                              gx[ch * hw + b] += -gysum * inv;
                              gx[ch * hw + a] += (gysum - gsum) * inv;
                          }
                      });
}

}  // namespace poseflow
