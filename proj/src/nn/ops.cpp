#include "ensr/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "ensr/error.hpp"

namespace ensr::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

void require_rank4(const Var& x, const char* op) {
  if (x.shape().size() != 4)
    throw DimensionError(std::string(op) + ": expected (N, C, H, W), got " + shape_str(x.shape()));
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
  return out;
}

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = f(a.data[i]);
  return out;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_op(map_binary(a.value(), b.value(), [](double x, double y) { return x + y; }), {a, b},
                 [](const Var& g, const Node&) { return std::vector<Var>{g, g}; }, "add");
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_op(map_binary(a.value(), b.value(), [](double x, double y) { return x - y; }), {a, b},
                 [](const Var& g, const Node&) { return std::vector<Var>{g, scale(g, -1.0)}; }, "sub");
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make_op(map_binary(a.value(), b.value(), [](double x, double y) { return x * y; }), {a, b},
                 [](const Var& g, const Node& self) {
                   return std::vector<Var>{mul(g, self.inputs[1]), mul(g, self.inputs[0])};
                 },
                 "mul");
}

Var scale(const Var& a, double s) {
  return make_op(map_unary(a.value(), [s](double x) { return x * s; }), {a},
                 [s](const Var& g, const Node&) { return std::vector<Var>{scale(g, s)}; }, "scale");
}

Var add_scalar(const Var& a, double s) {
  return make_op(map_unary(a.value(), [s](double x) { return x + s; }), {a},
                 [](const Var& g, const Node&) { return std::vector<Var>{g}; }, "add_scalar");
}

Var pow_scalar(const Var& a, double p) {
  return make_op(map_unary(a.value(), [p](double x) { return std::pow(x, p); }), {a},
                 [p](const Var& g, const Node& self) {
                   return std::vector<Var>{mul(g, scale(pow_scalar(self.inputs[0], p - 1.0), p))};
                 },
                 "pow");
}

Var gate(const Var& g, const Var& x, double slope) {
  require_same_shape(g, x, "gate");
  return make_op(map_binary(g.value(), x.value(),
                            [slope](double gv, double xv) { return xv > 0.0 ? gv : gv * slope; }),
                 {g, x},
                 [slope](const Var& up, const Node& self) {
                   return std::vector<Var>{gate(up, self.inputs[1], slope), Var{}};
                 },
                 "gate");
}

Var relu(const Var& x) { return gate(x, x, 0.0); }
Var leaky_relu(const Var& x, double slope) { return gate(x, x, slope); }
Var abs(const Var& x) { return gate(x, x, -1.0); }

Var sum_all(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data) s += v;
  Shape shape = x.shape();
  return make_op(Tensor({1}, {s}), {x},
                 [shape](const Var& g, const Node&) { return std::vector<Var>{expand_all(g, shape)}; },
                 "sum_all");
}

Var expand_all(const Var& s, const Shape& shape) {
  if (s.size() != 1) throw DimensionError("expand_all: input must hold one value");
  return make_op(Tensor(shape, s.value().data[0]), {s},
                 [](const Var& g, const Node&) { return std::vector<Var>{sum_all(g)}; }, "expand_all");
}

Var mean_all(const Var& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.size())); }

Var sum_sample(const Var& x) {
  const std::size_t n = x.dim(0);
  const std::size_t per = x.size() / n;
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < per; ++j) s += x.value().data[i * per + j];
    out.data[i] = s;
  }
  Shape shape = x.shape();
  return make_op(std::move(out), {x},
                 [shape](const Var& g, const Node&) { return std::vector<Var>{expand_sample(g, shape)}; },
                 "sum_sample");
}

Var expand_sample(const Var& s, const Shape& shape) {
  const std::size_t n = shape.at(0);
  if (s.size() != n) throw DimensionError("expand_sample: length does not match batch");
  const std::size_t per = shape_size(shape) / n;
  Tensor out(shape);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < per; ++j) out.data[i * per + j] = s.value().data[i];
  return make_op(std::move(out), {s},
                 [](const Var& g, const Node&) { return std::vector<Var>{sum_sample(g)}; },
                 "expand_sample");
}

Var sum_channel(const Var& x) {
  require_rank4(x, "sum_channel");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out({c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t j = 0; j < hw; ++j) out.data[k] += x.value().data[(i * c + k) * hw + j];
  Shape shape = x.shape();
  return make_op(std::move(out), {x},
                 [shape](const Var& g, const Node&) { return std::vector<Var>{expand_channel(g, shape)}; },
                 "sum_channel");
}

Var expand_channel(const Var& cvec, const Shape& shape) {
  if (shape.size() != 4 || cvec.size() != shape[1])
    throw DimensionError("expand_channel: channel vector does not match " + shape_str(shape));
  const std::size_t n = shape[0], c = shape[1], hw = shape[2] * shape[3];
  Tensor out(shape);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t j = 0; j < hw; ++j) out.data[(i * c + k) * hw + j] = cvec.value().data[k];
  return make_op(std::move(out), {cvec},
                 [](const Var& g, const Node&) { return std::vector<Var>{sum_channel(g)}; },
                 "expand_channel");
}

Var sum_hw(const Var& x) {
  require_rank4(x, "sum_hw");
  const std::size_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out({x.dim(0), x.dim(1)});
  for (std::size_t i = 0; i < nc; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < hw; ++j) s += x.value().data[i * hw + j];
    out.data[i] = s;
  }
  Shape shape = x.shape();
  return make_op(std::move(out), {x},
                 [shape](const Var& g, const Node&) { return std::vector<Var>{expand_hw(g, shape)}; },
                 "sum_hw");
}

Var expand_hw(const Var& s, const Shape& shape) {
  if (shape.size() != 4 || s.size() != shape[0] * shape[1])
    throw DimensionError("expand_hw: input does not match " + shape_str(shape));
  const std::size_t nc = shape[0] * shape[1], hw = shape[2] * shape[3];
  Tensor out(shape);
  for (std::size_t i = 0; i < nc; ++i)
    for (std::size_t j = 0; j < hw; ++j) out.data[i * hw + j] = s.value().data[i];
  return make_op(std::move(out), {s},
                 [](const Var& g, const Node&) { return std::vector<Var>{sum_hw(g)}; }, "expand_hw");
}

Var concat_channels(const Var& a, const Var& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw DimensionError("concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.value().data.begin() + static_cast<std::ptrdiff_t>(i * ca * hw), ca * hw,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * (ca + cb) * hw));
    std::copy_n(b.value().data.begin() + static_cast<std::ptrdiff_t>(i * cb * hw), cb * hw,
                out.data.begin() + static_cast<std::ptrdiff_t>((i * (ca + cb) + ca) * hw));
  }
  return make_op(std::move(out), {a, b},
                 [ca, cb](const Var& g, const Node&) {
                   return std::vector<Var>{slice_channels(g, 0, ca), slice_channels(g, ca, cb)};
                 },
                 "concat");
}

Var slice_channels(const Var& x, std::size_t begin, std::size_t count) {
  require_rank4(x, "slice_channels");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (begin + count > c) throw DimensionError("slice_channels: range exceeds channel count");
  Tensor out({n, count, x.dim(2), x.dim(3)});
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.value().data.begin() + static_cast<std::ptrdiff_t>((i * c + begin) * hw), count * hw,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * count * hw));
  return make_op(std::move(out), {x},
                 [c, begin](const Var& g, const Node&) {
                   return std::vector<Var>{embed_channels(g, c, begin)};
                 },
                 "slice");
}

Var embed_channels(const Var& x, std::size_t total, std::size_t begin) {
  require_rank4(x, "embed_channels");
  const std::size_t n = x.dim(0), count = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (begin + count > total) throw DimensionError("embed_channels: range exceeds channel count");
  Tensor out({n, total, x.dim(2), x.dim(3)});
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.value().data.begin() + static_cast<std::ptrdiff_t>(i * count * hw), count * hw,
                out.data.begin() + static_cast<std::ptrdiff_t>((i * total + begin) * hw));
  return make_op(std::move(out), {x},
                 [begin, count](const Var& g, const Node&) {
                   return std::vector<Var>{slice_channels(g, begin, count)};
                 },
                 "embed");
}

Var diff_x(const Var& x) {
  require_rank4(x, "diff_x");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (w < 2) throw DimensionError("diff_x: width must be >= 2");
  Tensor out({x.dim(0), x.dim(1), h, w - 1});
  const auto& in = x.value().data;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c + 1 < w; ++c)
        out.data[(p * h + r) * (w - 1) + c] = in[(p * h + r) * w + c + 1] - in[(p * h + r) * w + c];
  return make_op(std::move(out), {x},
                 [w](const Var& g, const Node&) { return std::vector<Var>{diff_x_adjoint(g, w)}; },
                 "diff_x");
}

Var diff_x_adjoint(const Var& g, std::size_t w) {
  require_rank4(g, "diff_x_adjoint");
  const std::size_t planes = g.dim(0) * g.dim(1), h = g.dim(2);
  if (g.dim(3) + 1 != w) throw DimensionError("diff_x_adjoint: width mismatch");
  Tensor out({g.dim(0), g.dim(1), h, w});
  const auto& gd = g.value().data;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c + 1 < w; ++c) {
        const double v = gd[(p * h + r) * (w - 1) + c];
        out.data[(p * h + r) * w + c + 1] += v;
        out.data[(p * h + r) * w + c] -= v;
      }
  return make_op(std::move(out), {g},
                 [](const Var& up, const Node&) { return std::vector<Var>{diff_x(up)}; },
                 "diff_x_adjoint");
}

Var diff_y(const Var& x) {
  require_rank4(x, "diff_y");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2) throw DimensionError("diff_y: height must be >= 2");
  Tensor out({x.dim(0), x.dim(1), h - 1, w});
  const auto& in = x.value().data;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r + 1 < h; ++r)
      for (std::size_t c = 0; c < w; ++c)
        out.data[(p * (h - 1) + r) * w + c] = in[(p * h + r + 1) * w + c] - in[(p * h + r) * w + c];
  return make_op(std::move(out), {x},
                 [h](const Var& g, const Node&) { return std::vector<Var>{diff_y_adjoint(g, h)}; },
                 "diff_y");
}

Var diff_y_adjoint(const Var& g, std::size_t h) {
  require_rank4(g, "diff_y_adjoint");
  const std::size_t planes = g.dim(0) * g.dim(1), w = g.dim(3);
  if (g.dim(2) + 1 != h) throw DimensionError("diff_y_adjoint: height mismatch");
  Tensor out({g.dim(0), g.dim(1), h, w});
  const auto& gd = g.value().data;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r + 1 < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const double v = gd[(p * (h - 1) + r) * w + c];
        out.data[(p * h + r + 1) * w + c] += v;
        out.data[(p * h + r) * w + c] -= v;
      }
  return make_op(std::move(out), {g},
                 [](const Var& up, const Node&) { return std::vector<Var>{diff_y(up)}; },
                 "diff_y_adjoint");
}

namespace {

struct ConvDims {
  std::size_t n, cin, h, w, cout, k, ho, wo;
  std::size_t patch() const { return cin * k * k; }
  std::size_t out_hw() const { return ho * wo; }
};

ConvDims conv_dims(const Shape& x, const Shape& w, ConvGeometry geo, const char* op) {
  if (x.size() != 4 || w.size() != 4)
    throw DimensionError(std::string(op) + ": expected rank-4 input and weights");
  if (w[1] != x[1])
    throw DimensionError(std::string(op) + ": input has " + std::to_string(x[1]) +
                         " channels, weights expect " + std::to_string(w[1]));
  if (w[2] != w[3] || w[2] % 2 == 0) throw DimensionError(std::string(op) + ": kernel must be square and odd");
  if (geo.stride < 1 || geo.stride > 2) throw DimensionError(std::string(op) + ": stride must be 1 or 2");
  const std::size_t k = w[2];
  if (x[2] + 2 * geo.padding < k || x[3] + 2 * geo.padding < k)
    throw DimensionError(std::string(op) + ": input smaller than kernel");
  ConvDims d{x[0], x[1], x[2], x[3], w[0], k, 0, 0};
  d.ho = (d.h + 2 * geo.padding - k) / geo.stride + 1;
  d.wo = (d.w + 2 * geo.padding - k) / geo.stride + 1;
  return d;
}

// Unrolls sample `n` of x into a (cin*k*k) x (ho*wo) row-major matrix.
void im2col(const double* x, const ConvDims& d, ConvGeometry geo, RowMat& col) {
  col.resize(static_cast<Eigen::Index>(d.patch()), static_cast<Eigen::Index>(d.out_hw()));
  const long pad = static_cast<long>(geo.padding);
  const long s = static_cast<long>(geo.stride);
  for (std::size_t c = 0; c < d.cin; ++c) {
    const double* plane = x + c * d.h * d.w;
    for (std::size_t ki = 0; ki < d.k; ++ki) {
      for (std::size_t kj = 0; kj < d.k; ++kj) {
        double* row = col.data() + ((c * d.k + ki) * d.k + kj) * d.out_hw();
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const long iy = static_cast<long>(oy) * s - pad + static_cast<long>(ki);
          double* dst = row + oy * d.wo;
          if (iy < 0 || iy >= static_cast<long>(d.h)) {
            std::fill_n(dst, d.wo, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * d.w;
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const long ix = static_cast<long>(ox) * s - pad + static_cast<long>(kj);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(d.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const RowMat& col, const ConvDims& d, ConvGeometry geo, double* x) {
  const long pad = static_cast<long>(geo.padding);
  const long s = static_cast<long>(geo.stride);
  for (std::size_t c = 0; c < d.cin; ++c) {
    double* plane = x + c * d.h * d.w;
    for (std::size_t ki = 0; ki < d.k; ++ki) {
      for (std::size_t kj = 0; kj < d.k; ++kj) {
        const double* row = col.data() + ((c * d.k + ki) * d.k + kj) * d.out_hw();
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const long iy = static_cast<long>(oy) * s - pad + static_cast<long>(ki);
          if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * d.w;
          const double* src = row + oy * d.wo;
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const long ix = static_cast<long>(ox) * s - pad + static_cast<long>(kj);
            if (ix >= 0 && ix < static_cast<long>(d.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, ConvGeometry geo) {
  const ConvDims d = conv_dims(x.shape(), w.shape(), geo, "conv2d");
  Tensor out({d.n, d.cout, d.ho, d.wo});
  const ConstMapMat wm(w.value().data.data(), static_cast<Eigen::Index>(d.cout),
                       static_cast<Eigen::Index>(d.patch()));
  RowMat col;
  for (std::size_t i = 0; i < d.n; ++i) {
    im2col(x.value().data.data() + i * d.cin * d.h * d.w, d, geo, col);
    MapMat o(out.data.data() + i * d.cout * d.out_hw(), static_cast<Eigen::Index>(d.cout),
             static_cast<Eigen::Index>(d.out_hw()));
    o.noalias() = wm * col;
  }
  Shape xs = x.shape();
  Shape ws = w.shape();
  return make_op(std::move(out), {x, w},
                 [xs, ws, geo](const Var& g, const Node& self) {
                   const Var& xin = self.inputs[0];
                   const Var& win = self.inputs[1];
                   return std::vector<Var>{
                       xin.requires_grad() ? conv2d_input_grad(g, win, xs, geo) : Var{},
                       win.requires_grad() ? conv2d_weight_grad(xin, g, ws, geo) : Var{}};
                 },
                 "conv2d");
}

Var conv2d_input_grad(const Var& g, const Var& w, const Shape& input_shape, ConvGeometry geo) {
  const ConvDims d = conv_dims(input_shape, w.shape(), geo, "conv2d_input_grad");
  if (g.shape() != Shape{d.n, d.cout, d.ho, d.wo})
    throw DimensionError("conv2d_input_grad: gradient shape " + shape_str(g.shape()) +
                         " does not match conv output");
  Tensor out(input_shape);
  const ConstMapMat wm(w.value().data.data(), static_cast<Eigen::Index>(d.cout),
                       static_cast<Eigen::Index>(d.patch()));
  RowMat col(static_cast<Eigen::Index>(d.patch()), static_cast<Eigen::Index>(d.out_hw()));
  for (std::size_t i = 0; i < d.n; ++i) {
    const ConstMapMat gm(g.value().data.data() + i * d.cout * d.out_hw(),
                         static_cast<Eigen::Index>(d.cout), static_cast<Eigen::Index>(d.out_hw()));
    col.noalias() = wm.transpose() * gm;
    col2im(col, d, geo, out.data.data() + i * d.cin * d.h * d.w);
  }
  Shape ws = w.shape();
  return make_op(std::move(out), {g, w},
                 [ws, geo](const Var& up, const Node& self) {
                   const Var& gin = self.inputs[0];
                   const Var& win = self.inputs[1];
                   return std::vector<Var>{
                       gin.requires_grad() ? conv2d(up, win, geo) : Var{},
                       win.requires_grad() ? conv2d_weight_grad(up, gin, ws, geo) : Var{}};
                 },
                 "conv2d_input_grad");
}

Var conv2d_weight_grad(const Var& x, const Var& g, const Shape& weight_shape, ConvGeometry geo) {
  const ConvDims d = conv_dims(x.shape(), weight_shape, geo, "conv2d_weight_grad");
  if (g.shape() != Shape{d.n, d.cout, d.ho, d.wo})
    throw DimensionError("conv2d_weight_grad: gradient shape " + shape_str(g.shape()) +
                         " does not match conv output");
  Tensor out(weight_shape);
  MapMat om(out.data.data(), static_cast<Eigen::Index>(d.cout), static_cast<Eigen::Index>(d.patch()));
  RowMat col;
  for (std::size_t i = 0; i < d.n; ++i) {
    im2col(x.value().data.data() + i * d.cin * d.h * d.w, d, geo, col);
    const ConstMapMat gm(g.value().data.data() + i * d.cout * d.out_hw(),
                         static_cast<Eigen::Index>(d.cout), static_cast<Eigen::Index>(d.out_hw()));
    om.noalias() += gm * col.transpose();
  }
  Shape xs = x.shape();
  return make_op(std::move(out), {x, g},
                 [xs, geo](const Var& up, const Node& self) {
                   const Var& xin = self.inputs[0];
                   const Var& gin = self.inputs[1];
                   return std::vector<Var>{
                       xin.requires_grad() ? conv2d_input_grad(gin, up, xs, geo) : Var{},
                       gin.requires_grad() ? conv2d(xin, up, geo) : Var{}};
                 },
                 "conv2d_weight_grad");
}

Var add_channel_bias(const Var& x, const Var& b) { return add(x, expand_channel(b, x.shape())); }

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_rank4(x, "layer_norm");
  const double count = static_cast<double>(x.size() / x.dim(0));
  if (count < 2) throw DimensionError("layer_norm: need at least two normalized elements");
  const Shape& shape = x.shape();
  const Var mu = scale(sum_sample(x), 1.0 / count);
  const Var centered = sub(x, expand_sample(mu, shape));
  const Var var = scale(sum_sample(mul(centered, centered)), 1.0 / count);
  const Var inv_std = pow_scalar(add_scalar(var, eps), -0.5);
  const Var normalized = mul(centered, expand_sample(inv_std, shape));
  return add(mul(normalized, expand_channel(gamma, shape)), expand_channel(beta, shape));
}

Var global_avg_pool(const Var& x) {
  require_rank4(x, "global_avg_pool");
  return scale(sum_hw(x), 1.0 / static_cast<double>(x.dim(2) * x.dim(3)));
}

Var mean_squared_error(const Var& a, const Var& b) {
  const Var d = sub(a, b);
  return mean_all(mul(d, d));
}

Var mean_absolute_error(const Var& a, const Var& b) { return mean_all(abs(sub(a, b))); }

}  // namespace ensr::nn
