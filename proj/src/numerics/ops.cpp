#include "medfocus/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "medfocus/error.hpp"

namespace medfocus {

namespace {

using detail::Node;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::ShapeMismatch, what);
}

void require_matrix(const Tensor& t, const char* op) {
  require(t.rank() == 2, std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
}

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

Node& parent(Node& out, std::size_t i) { return *out.parents[i]; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
  require(b.dim(0) == q, "matmul: inner extents differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(p * r, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < p; ++i) {
    double* o = &out[i * r];
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = A[i * q + k];
      if (aik == 0.0) continue;
      const double* brow = B + k * r;
      for (std::size_t j = 0; j < r; ++j) o[j] += aik * brow[j];
    }
  }
  return Tensor::make_result({p, r}, std::move(out), {a, b}, [p, q, r](Node& o) {
    Node& na = parent(o, 0);
    Node& nb = parent(o, 1);
    const double* G = o.grad.data();
    if (na.requires_grad) {
      double* GA = na.grad.data();
      const double* B = nb.data.data();
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t k = 0; k < q; ++k) {
          double acc = 0.0;
          for (std::size_t j = 0; j < r; ++j) acc += G[i * r + j] * B[k * r + j];
          GA[i * q + k] += acc;
        }
      }
    }
    if (nb.requires_grad) {
      double* GB = nb.grad.data();
      const double* A = na.data.data();
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t k = 0; k < q; ++k) {
          const double aik = A[i * q + k];
          if (aik == 0.0) continue;
          for (std::size_t j = 0; j < r; ++j) GB[k * r + j] += aik * G[i * r + j];
        }
      }
    }
  }, "matmul");
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto A = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return Tensor::make_result({n, m}, std::move(out), {a}, [m, n](Node& o) {
    Node& na = parent(o, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) na.grad[i * n + j] += o.grad[j * m + i];
  }, "transpose");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  auto out = to_vec(a.data());
  auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& n = parent(o, k);
      if (!n.requires_grad) continue;
      for (std::size_t i = 0; i < o.grad.size(); ++i) n.grad[i] += o.grad[i];
    }
  }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  auto out = to_vec(a.data());
  auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    Node& na = parent(o, 0);
    Node& nb = parent(o, 1);
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      if (na.requires_grad) na.grad[i] += o.grad[i];
      if (nb.requires_grad) nb.grad[i] -= o.grad[i];
    }
  }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  auto out = to_vec(a.data());
  auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    Node& na = parent(o, 0);
    Node& nb = parent(o, 1);
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      if (na.requires_grad) na.grad[i] += o.grad[i] * nb.data[i];
      if (nb.requires_grad) nb.grad[i] += o.grad[i] * na.data[i];
    }
  }, "mul");
}

Tensor scale(const Tensor& a, double factor) {
  auto out = to_vec(a.data());
  for (double& v : out) v *= factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](Node& o) {
    Node& na = parent(o, 0);
    for (std::size_t i = 0; i < o.grad.size(); ++i) na.grad[i] += o.grad[i] * factor;
  }, "scale");
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  require(s.numel() == 1, "scale_by: factor must hold one value, got " + shape_str(s.shape()));
  const double f = s.data()[0];
  auto out = to_vec(a.data());
  for (double& v : out) v *= f;
  return Tensor::make_result(a.shape(), std::move(out), {a, s}, [f](Node& o) {
    Node& na = parent(o, 0);
    Node& ns = parent(o, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      if (na.requires_grad) na.grad[i] += o.grad[i] * f;
      acc += o.grad[i] * na.data[i];
    }
    if (ns.requires_grad) ns.grad[0] += acc;
  }, "scale_by");
}

Tensor add_rows(const Tensor& x, const Tensor& v) {
  require_matrix(x, "add_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  require(v.numel() == d && v.rank() == 1,
          "add_rows: vector " + shape_str(v.shape()) + " does not match rows of " + shape_str(x.shape()));
  auto out = to_vec(x.data());
  auto V = v.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += V[j];
  return Tensor::make_result(x.shape(), std::move(out), {x, v}, [n, d](Node& o) {
    Node& nx = parent(o, 0);
    Node& nv = parent(o, 1);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double g = o.grad[i * d + j];
        if (nx.requires_grad) nx.grad[i * d + j] += g;
        if (nv.requires_grad) nv.grad[j] += g;
      }
    }
  }, "add_rows");
}

Tensor gelu(const Tensor& x) {
  constexpr double kAlpha = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kBeta = 0.044715;
  auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double v = X[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kAlpha * (v + kBeta * v * v * v)));
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [](Node& o) {
    Node& nx = parent(o, 0);
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double v = nx.data[i];
      const double u = kAlpha * (v + kBeta * v * v * v);
      const double t = std::tanh(u);
      const double du = kAlpha * (1.0 + 3.0 * kBeta * v * v);
      nx.grad[i] += o.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
    }
  }, "gelu");
}

Tensor exp(const Tensor& x) {
  auto out = to_vec(x.data());
  for (double& v : out) v = std::exp(v);
  return Tensor::make_result(x.shape(), out, {x}, [](Node& o) {
    Node& nx = parent(o, 0);
    for (std::size_t i = 0; i < o.grad.size(); ++i) nx.grad[i] += o.grad[i] * o.data[i];
  }, "exp");
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  auto out = to_vec(x.data());
  for (double& v : out) v = std::clamp(v, lo, hi);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [lo, hi](Node& o) {
    Node& nx = parent(o, 0);
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double v = nx.data[i];
      if (v >= lo && v <= hi) nx.grad[i] += o.grad[i];
    }
  }, "clamp");
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require(axis < x.rank(), "softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  const auto& sh = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= sh[i];
  for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
  const std::size_t len = sh[axis];
  auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = X[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, X[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(X[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  }
  return Tensor::make_result(sh, std::move(out), {x}, [outer, inner, len](Node& o) {
    Node& nx = parent(o, 0);
    for (std::size_t ou = 0; ou < outer; ++ou) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = ou * len * inner + in;
        double dotp = 0.0;
        for (std::size_t k = 0; k < len; ++k) dotp += o.grad[base + k * inner] * o.data[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t idx = base + k * inner;
          nx.grad[idx] += o.data[idx] * (o.grad[idx] - dotp);
        }
      }
    }
  }, "softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require(x.rank() >= 1, "layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  require(gain.rank() == 1 && gain.numel() == d && bias.rank() == 1 && bias.numel() == d,
          "layer_norm: gain/bias must be [" + std::to_string(d) + "]");
  const std::size_t rows = x.numel() / d;
  auto X = x.data();
  auto G = gain.data();
  auto B = bias.data();
  std::vector<double> out(X.size());
  // normalized values and inverse std are kept for the backward pass
  std::vector<double> xhat(X.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &X[r * d];
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = h * G[j] + B[j];
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x, gain, bias},
                             [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& o) {
    Node& nx = parent(o, 0);
    Node& ng = parent(o, 1);
    Node& nb = parent(o, 2);
    const double dd = static_cast<double>(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = &o.grad[r * d];
      const double* h = &xhat[r * d];
      double sum_dh = 0.0, sum_dh_h = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double dh = g[j] * ng.data[j];
        sum_dh += dh;
        sum_dh_h += dh * h[j];
        if (ng.requires_grad) ng.grad[j] += g[j] * h[j];
        if (nb.requires_grad) nb.grad[j] += g[j];
      }
      if (nx.requires_grad) {
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = g[j] * ng.data[j];
          nx.grad[r * d + j] += inv_std[r] / dd * (dd * dh - sum_dh - h[j] * sum_dh_h);
        }
      }
    }
  }, "layer_norm");
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return Tensor::make_result({}, {total}, {x}, [](Node& o) {
    Node& nx = parent(o, 0);
    for (double& g : nx.grad) g += o.grad[0];
  }, "sum");
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_rows(const Tensor& x) {
  require_matrix(x, "mean_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  auto X = x.data();
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += X[i * d + j];
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= inv;
  return Tensor::make_result({d}, std::move(out), {x}, [n, d, inv](Node& o) {
    Node& nx = parent(o, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) nx.grad[i * d + j] += o.grad[j] * inv;
  }, "mean_rows");
}

Tensor row(const Tensor& x, std::size_t i) {
  require_matrix(x, "row");
  require(i < x.dim(0), "row: index " + std::to_string(i) + " out of range for " + shape_str(x.shape()));
  const std::size_t d = x.dim(1);
  auto X = x.data();
  std::vector<double> out(X.begin() + static_cast<std::ptrdiff_t>(i * d),
                          X.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  return Tensor::make_result({d}, std::move(out), {x}, [i, d](Node& o) {
    Node& nx = parent(o, 0);
    for (std::size_t j = 0; j < d; ++j) nx.grad[i * d + j] += o.grad[j];
  }, "row");
}

Tensor stack_rows(std::span<const Tensor> rows) {
  require(!rows.empty(), "stack_rows: nothing to stack");
  const std::size_t d = rows[0].numel();
  std::vector<double> out;
  out.reserve(rows.size() * d);
  for (const auto& r : rows) {
    require(r.numel() == d, "stack_rows: rows have different lengths");
    out.insert(out.end(), r.data().begin(), r.data().end());
  }
  std::vector<Tensor> parents(rows.begin(), rows.end());
  return Tensor::make_result({rows.size(), d}, std::move(out), std::move(parents), [d](Node& o) {
    for (std::size_t k = 0; k < o.parents.size(); ++k) {
      Node& n = parent(o, k);
      if (!n.requires_grad) continue;
      for (std::size_t j = 0; j < d; ++j) n.grad[j] += o.grad[k * d + j];
    }
  }, "stack_rows");
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
  require_matrix(top, "concat_rows");
  require_matrix(bottom, "concat_rows");
  require(top.dim(1) == bottom.dim(1), "concat_rows: column counts differ");
  const std::size_t split = top.numel();
  std::vector<double> out(top.data().begin(), top.data().end());
  out.insert(out.end(), bottom.data().begin(), bottom.data().end());
  return Tensor::make_result({top.dim(0) + bottom.dim(0), top.dim(1)}, std::move(out), {top, bottom},
                             [split](Node& o) {
    Node& nt = parent(o, 0);
    Node& nb = parent(o, 1);
    if (nt.requires_grad)
      for (std::size_t i = 0; i < split; ++i) nt.grad[i] += o.grad[i];
    if (nb.requires_grad)
      for (std::size_t i = split; i < o.grad.size(); ++i) nb.grad[i - split] += o.grad[i];
  }, "concat_rows");
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t n = x.dim(0), d = x.dim(1);
  require(count > 0 && begin + count <= d, "slice_cols: range out of bounds for " + shape_str(x.shape()));
  auto X = x.data();
  std::vector<double> out(n * count);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = X[i * d + begin + j];
  return Tensor::make_result({n, count}, std::move(out), {x}, [n, d, begin, count](Node& o) {
    Node& nx = parent(o, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) nx.grad[i * d + begin + j] += o.grad[i * count + j];
  }, "slice_cols");
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  const std::size_t n = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    require(p.dim(0) == n, "concat_cols: row counts differ");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(n * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto P = parts[k].data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + off + j] = P[i * widths[k] + j];
    off += widths[k];
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return Tensor::make_result({n, total}, std::move(out), std::move(parents),
                             [n, total, widths = std::move(widths)](Node& o) {
    std::size_t off2 = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& np = parent(o, k);
      if (np.requires_grad) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) np.grad[i * widths[k] + j] += o.grad[i * total + off2 + j];
      }
      off2 += widths[k];
    }
  }, "concat_cols");
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  return Tensor::make_result(std::move(shape), to_vec(x.data()), {x}, [](Node& o) {
    Node& nx = parent(o, 0);
    for (std::size_t i = 0; i < o.grad.size(); ++i) nx.grad[i] += o.grad[i];
  }, "reshape");
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require(a.numel() == b.numel(), "dot: lengths differ");
  return sum(mul(reshape(a, {a.numel()}), reshape(b, {b.numel()})));
}

Tensor l2_normalize(const Tensor& x) {
  require(x.rank() == 1 || x.rank() == 2, "l2_normalize: expected vector or matrix");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  auto X = x.data();
  std::vector<double> out(X.size());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += X[r * d + j] * X[r * d + j];
    if (ss == 0.0) throw Error(ErrorKind::ZeroVector, "l2_normalize: row " + std::to_string(r) + " is zero");
    norms[r] = std::sqrt(ss);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = X[r * d + j] / norms[r];
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [rows, d, norms = std::move(norms)](Node& o) {
    Node& nx = parent(o, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      double gy = 0.0;
      for (std::size_t j = 0; j < d; ++j) gy += o.grad[r * d + j] * o.data[r * d + j];
      for (std::size_t j = 0; j < d; ++j)
        nx.grad[r * d + j] += (o.grad[r * d + j] - o.data[r * d + j] * gy) / norms[r];
    }
  }, "l2_normalize");
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require(logits.rank() == 1 || logits.rank() == 2, "cross_entropy: logits must be [C] or [B x C]");
  const std::size_t c = logits.shape().back();
  const std::size_t b = logits.numel() / c;
  require(labels.size() == b, "cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                  std::to_string(b) + " rows");
  for (auto l : labels) {
    if (l >= c) {
      throw Error(ErrorKind::LabelOutOfRange,
                  "label " + std::to_string(l) + " with " + std::to_string(c) + " classes");
    }
  }
  auto Z = logits.data();
  std::vector<double> probs(Z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* z = &Z[i * c];
    const double mx = *std::max_element(z, z + c);
    double se = 0.0;
    for (std::size_t j = 0; j < c; ++j) se += std::exp(z[j] - mx);
    const double lse = mx + std::log(se);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(z[j] - lse);
    total += lse - z[labels[i]];
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  std::vector<std::size_t> labs(labels.begin(), labels.end());
  return Tensor::make_result({}, {total * inv_b}, {logits},
                             [b, c, inv_b, probs = std::move(probs), labs = std::move(labs)](Node& o) {
    Node& nz = parent(o, 0);
    const double g = o.grad[0] * inv_b;
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double target = (j == labs[i]) ? 1.0 : 0.0;
        nz.grad[i * c + j] += g * (probs[i * c + j] - target);
      }
    }
  }, "cross_entropy");
}

}  // namespace medfocus
