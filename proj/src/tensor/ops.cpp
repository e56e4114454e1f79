#include "cot2/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cot2/common/error.hpp"

namespace cot2::tensor {
namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) {
    throw UsageError(std::string(op) + ": operands live on different tapes");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         a.shape_string() + " vs " + b.shape_string());
  }
}

Tensor matrix_like(std::size_t rows, std::size_t cols, double fill = 0.0) {
  return Tensor({rows, cols}, fill);
}

// out += a * b, a is n x k, b is k x m.
void gemm_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* o = &out[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) {
        continue;
      }
      const double* br = &b[p * m];
      for (std::size_t j = 0; j < m; ++j) {
        o[j] += av * br[j];
      }
    }
  }
}

// out += a * b^T, a is n x k, b is m x k.
void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = &a[i * k];
    for (std::size_t j = 0; j < m; ++j) {
      const double* br = &b[j * k];
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        s += ar[p] * br[p];
      }
      out[i * m + j] += s;
    }
  }
}

// out += a^T * b, a is k x n, b is k x m.
void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    const double* br = &b[p * m];
    for (std::size_t i = 0; i < n; ++i) {
      const double av = a[p * n + i];
      if (av == 0.0) {
        continue;
      }
      double* o = &out[i * m];
      for (std::size_t j = 0; j < m; ++j) {
        o[j] += av * br[j];
      }
    }
  }
}

constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ for " +
                         av.shape_string() + " and " + bv.shape_string());
  }
  Tensor out = matrix_like(av.rows(), bv.cols());
  gemm_acc(av, bv, out);
  return a.tape().record(std::move(out), {a, b}, [](const AdjointContext& c) {
    const Tensor& g = c.out_grad();
    if (Tensor* ga = c.input_grad(0)) {
      gemm_nt_acc(g, c.input(1), *ga);
    }
    if (Tensor* gb = c.input_grad(1)) {
      gemm_tn_acc(c.input(0), g, *gb);
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), cl = av.cols();
  Tensor out = matrix_like(cl, r);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < cl; ++j) {
      out[j * r + i] = av[i * cl + j];
    }
  }
  return a.tape().record(std::move(out), {a}, [r, cl](const AdjointContext& c) {
    const Tensor& g = c.out_grad();
    Tensor* ga = c.input_grad(0);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < cl; ++j) {
        (*ga)[i * cl + j] += g[j * r + i];
      }
    }
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.accumulate(b.value());
  return a.tape().record(std::move(out), {a, b}, [](const AdjointContext& c) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (Tensor* g = c.input_grad(k)) {
        g->accumulate(c.out_grad());
      }
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] -= bv[i];
  }
  return a.tape().record(std::move(out), {a, b}, [](const AdjointContext& c) {
    const Tensor& g = c.out_grad();
    if (Tensor* ga = c.input_grad(0)) {
      ga->accumulate(g);
    }
    if (Tensor* gb = c.input_grad(1)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*gb)[i] -= g[i];
      }
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] *= bv[i];
  }
  return a.tape().record(std::move(out), {a, b}, [](const AdjointContext& c) {
    const Tensor& g = c.out_grad();
    if (Tensor* ga = c.input_grad(0)) {
      const Tensor& bv = c.input(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*ga)[i] += g[i] * bv[i];
      }
    }
    if (Tensor* gb = c.input_grad(1)) {
      const Tensor& av = c.input(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*gb)[i] += g[i] * av[i];
      }
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& x : out.values()) {
    x *= factor;
  }
  return a.tape().record(std::move(out), {a}, [factor](const AdjointContext& c) {
    const Tensor& g = c.out_grad();
    Tensor* ga = c.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      (*ga)[i] += factor * g[i];
    }
  });
}

Var add_row(Var a, Var bias) {
  require_same_tape(a, bias, "add_row");
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_row: bias " + bv.shape_string() +
                         " does not broadcast over " + av.shape_string());
  }
  Tensor out = av;
  const std::size_t r = av.rows(), cl = av.cols();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < cl; ++j) {
      out[i * cl + j] += bv[j];
    }
  }
  return a.tape().record(std::move(out), {a, bias},
                         [r, cl](const AdjointContext& c) {
                           const Tensor& g = c.out_grad();
                           if (Tensor* ga = c.input_grad(0)) {
                             ga->accumulate(g);
                           }
                           if (Tensor* gb = c.input_grad(1)) {
                             for (std::size_t i = 0; i < r; ++i) {
                               for (std::size_t j = 0; j < cl; ++j) {
                                 (*gb)[j] += g[i * cl + j];
                               }
                             }
                           }
                         });
}

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().values()) {
    s += x;
  }
  return a.tape().record(Tensor::scalar(s), {a}, [](const AdjointContext& c) {
    const double g = c.out_grad()[0];
    for (double& x : c.input_grad(0)->values()) {
      x += g;
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_tape(x, gain, "layer_norm");
  require_same_tape(x, bias, "layer_norm");
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), cl = xv.cols();
  if (gain.value().size() != cl || bias.value().size() != cl) {
    throw DimensionError("layer_norm: gain/bias must have " +
                         std::to_string(cl) + " entries");
  }
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor normalized = matrix_like(r, cl);
  std::vector<double> inv_std(r);
  Tensor out = matrix_like(r, cl);
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < cl; ++j) {
      mean += xv[i * cl + j];
    }
    mean /= static_cast<double>(cl);
    double var = 0.0;
    for (std::size_t j = 0; j < cl; ++j) {
      const double d = xv[i * cl + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cl);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cl; ++j) {
      const double nh = (xv[i * cl + j] - mean) * inv_std[i];
      normalized[i * cl + j] = nh;
      out[i * cl + j] = gv[j] * nh + bv[j];
    }
  }
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [r, cl, normalized = std::move(normalized),
       inv_std = std::move(inv_std)](const AdjointContext& c) {
        const Tensor& g = c.out_grad();
        const Tensor& gv = c.input(1);
        if (Tensor* gx = c.input_grad(0)) {
          std::vector<double> dn(cl);
          for (std::size_t i = 0; i < r; ++i) {
            double mean_dn = 0.0, mean_dn_n = 0.0;
            for (std::size_t j = 0; j < cl; ++j) {
              dn[j] = g[i * cl + j] * gv[j];
              mean_dn += dn[j];
              mean_dn_n += dn[j] * normalized[i * cl + j];
            }
            mean_dn /= static_cast<double>(cl);
            mean_dn_n /= static_cast<double>(cl);
            for (std::size_t j = 0; j < cl; ++j) {
              (*gx)[i * cl + j] +=
                  inv_std[i] *
                  (dn[j] - mean_dn - normalized[i * cl + j] * mean_dn_n);
            }
          }
        }
        if (Tensor* gg = c.input_grad(1)) {
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < cl; ++j) {
              (*gg)[j] += g[i * cl + j] * normalized[i * cl + j];
            }
          }
        }
        if (Tensor* gb = c.input_grad(2)) {
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < cl; ++j) {
              (*gb)[j] += g[i * cl + j];
            }
          }
        }
      });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) {
    const double t = std::tanh(kSqrt2OverPi * (v + kGeluC * v * v * v));
    v = 0.5 * v * (1.0 + t);
  }
  return x.tape().record(std::move(out), {x}, [](const AdjointContext& c) {
    const Tensor& g = c.out_grad();
    const Tensor& xv = c.input(0);
    Tensor* gx = c.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double t = std::tanh(kSqrt2OverPi * (v + kGeluC * v * v * v));
      const double dt = (1.0 - t * t) * kSqrt2OverPi * (1.0 + 3.0 * kGeluC * v * v);
      (*gx)[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
    }
  });
}

Var embedding_lookup(Var table, std::span<const std::size_t> indices) {
  const Tensor& tv = table.value();
  const std::size_t d = tv.cols();
  Tensor out = matrix_like(indices.size(), d);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= tv.rows()) {
      throw DimensionError("embedding_lookup: index " +
                           std::to_string(indices[i]) + " outside table " +
                           tv.shape_string());
    }
    std::copy_n(&tv[indices[i] * d], d, &out[i * d]);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return table.tape().record(
      std::move(out), {table}, [idx = std::move(idx), d](const AdjointContext& c) {
        const Tensor& g = c.out_grad();
        Tensor* gt = c.input_grad(0);
        for (std::size_t i = 0; i < idx.size(); ++i) {
          for (std::size_t j = 0; j < d; ++j) {
            (*gt)[idx[i] * d + j] += g[i * d + j];
          }
        }
      });
}

Var embedding_mix(Var weights, Var table) {
  require_same_tape(weights, table, "embedding_mix");
  const Tensor& wv = weights.value();
  const Tensor& tv = table.value();
  if (wv.cols() != tv.rows()) {
    throw DimensionError("embedding_mix: weights " + wv.shape_string() +
                         " do not match table " + tv.shape_string());
  }
  Tensor out = matrix_like(wv.rows(), tv.cols());
  gemm_acc(wv, tv, out);
  return weights.tape().record(std::move(out), {weights, table},
                               [](const AdjointContext& c) {
                                 const Tensor& g = c.out_grad();
                                 if (Tensor* gw = c.input_grad(0)) {
                                   gemm_nt_acc(g, c.input(1), *gw);
                                 }
                                 if (Tensor* gt = c.input_grad(1)) {
                                   gemm_tn_acc(c.input(0), g, *gt);
                                 }
                               });
}

Var causal_scores(Var q, Var k, double scale_factor) {
  require_same_tape(q, k, "causal_scores");
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  if (!qv.same_shape(kv)) {
    throw DimensionError("causal_scores: query " + qv.shape_string() +
                         " and key " + kv.shape_string() + " differ");
  }
  const std::size_t t = qv.rows(), dk = qv.cols();
  Tensor out = matrix_like(t, t, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < dk; ++p) {
        s += qv[i * dk + p] * kv[j * dk + p];
      }
      out[i * t + j] = scale_factor * s;
    }
  }
  return q.tape().record(
      std::move(out), {q, k}, [t, dk, scale_factor](const AdjointContext& c) {
        const Tensor& g = c.out_grad();
        const Tensor& qv = c.input(0);
        const Tensor& kv = c.input(1);
        Tensor* gq = c.input_grad(0);
        Tensor* gk = c.input_grad(1);
        for (std::size_t i = 0; i < t; ++i) {
          for (std::size_t j = 0; j <= i; ++j) {
            const double gij = scale_factor * g[i * t + j];
            if (gij == 0.0) {
              continue;
            }
            for (std::size_t p = 0; p < dk; ++p) {
              if (gq) (*gq)[i * dk + p] += gij * kv[j * dk + p];
              if (gk) (*gk)[j * dk + p] += gij * qv[i * dk + p];
            }
          }
        }
      });
}

Var softmax_rows(Var x, double temperature) {
  if (!(temperature > 0.0)) {
    throw UsageError("softmax_rows: temperature must be positive");
  }
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), cl = xv.cols();
  Tensor out = matrix_like(r, cl);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cl; ++j) {
      const double v = xv[i * cl + j];
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
        throw NumericError("softmax_rows: non-finite logit");
      }
      mx = std::max(mx, v);
    }
    if (!std::isfinite(mx)) {
      throw NumericError("softmax_rows: row has no finite logit");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < cl; ++j) {
      const double e = std::exp((xv[i * cl + j] - mx) / temperature);
      out[i * cl + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < cl; ++j) {
      out[i * cl + j] /= z;
    }
  }
  return x.tape().record(
      std::move(out), {x}, [r, cl, temperature](const AdjointContext& c) {
        const Tensor& g = c.out_grad();
        const Tensor& y = c.out_value();
        Tensor* gx = c.input_grad(0);
        for (std::size_t i = 0; i < r; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < cl; ++j) {
            dot += g[i * cl + j] * y[i * cl + j];
          }
          for (std::size_t j = 0; j < cl; ++j) {
            (*gx)[i * cl + j] +=
                y[i * cl + j] * (g[i * cl + j] - dot) / temperature;
          }
        }
      });
}

Var log_softmax_rows(Var x) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), cl = xv.cols();
  Tensor out = matrix_like(r, cl);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cl; ++j) {
      const double v = xv[i * cl + j];
      if (!std::isfinite(v)) {
        throw NumericError("log_softmax_rows: non-finite logit");
      }
      mx = std::max(mx, v);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < cl; ++j) {
      z += std::exp(xv[i * cl + j] - mx);
    }
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < cl; ++j) {
      out[i * cl + j] = xv[i * cl + j] - lse;
    }
  }
  return x.tape().record(std::move(out), {x}, [r, cl](const AdjointContext& c) {
    const Tensor& g = c.out_grad();
    const Tensor& y = c.out_value();
    Tensor* gx = c.input_grad(0);
    for (std::size_t i = 0; i < r; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < cl; ++j) {
        gsum += g[i * cl + j];
      }
      for (std::size_t j = 0; j < cl; ++j) {
        (*gx)[i * cl + j] += g[i * cl + j] - std::exp(y[i * cl + j]) * gsum;
      }
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  const std::size_t cl = xv.cols();
  if (begin + count > xv.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " +
                         xv.shape_string());
  }
  Tensor out = matrix_like(count, cl);
  std::copy_n(&xv[begin * cl], count * cl, &out[0]);
  return x.tape().record(std::move(out), {x},
                         [begin, cl](const AdjointContext& c) {
                           const Tensor& g = c.out_grad();
                           Tensor* gx = c.input_grad(0);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             (*gx)[begin * cl + i] += g[i];
                           }
                         });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), cl = xv.cols();
  if (begin + count > cl) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) +
                         ", " + std::to_string(begin + count) + ") outside " +
                         xv.shape_string());
  }
  Tensor out = matrix_like(r, count);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(&xv[i * cl + begin], count, &out[i * count]);
  }
  return x.tape().record(std::move(out), {x},
                         [begin, count, r, cl](const AdjointContext& c) {
                           const Tensor& g = c.out_grad();
                           Tensor* gx = c.input_grad(0);
                           for (std::size_t i = 0; i < r; ++i) {
                             for (std::size_t j = 0; j < count; ++j) {
                               (*gx)[i * cl + begin + j] += g[i * count + j];
                             }
                           }
                         });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) {
    throw UsageError("concat_rows: no parts");
  }
  const std::size_t cl = parts.front().value().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().cols() != cl) {
      throw DimensionError("concat_rows: column count mismatch " +
                           parts.front().value().shape_string() + " vs " +
                           p.value().shape_string());
    }
    total += p.value().rows();
  }
  Tensor out = matrix_like(total, cl);
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (const Var& p : parts) {
    offsets.push_back(at);
    const Tensor& pv = p.value();
    std::copy(pv.values().begin(), pv.values().end(), &out[at * cl]);
    at += pv.rows();
  }
  return parts.front().tape().record(
      std::move(out), parts,
      [offsets = std::move(offsets), cl](const AdjointContext& c) {
        const Tensor& g = c.out_grad();
        for (std::size_t k = 0; k < offsets.size(); ++k) {
          if (Tensor* gp = c.input_grad(k)) {
            for (std::size_t i = 0; i < gp->size(); ++i) {
              (*gp)[i] += g[offsets[k] * cl + i];
            }
          }
        }
      });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) {
    throw UsageError("concat_cols: no parts");
  }
  const std::size_t r = parts.front().value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    if (p.value().rows() != r) {
      throw DimensionError("concat_cols: row count mismatch " +
                           parts.front().value().shape_string() + " vs " +
                           p.value().shape_string());
    }
    widths.push_back(p.value().cols());
    total += p.value().cols();
  }
  Tensor out = matrix_like(r, total);
  std::size_t at = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    const std::size_t w = pv.cols();
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(&pv[i * w], w, &out[i * total + at]);
    }
    at += w;
  }
  return parts.front().tape().record(
      std::move(out), parts,
      [widths = std::move(widths), r, total](const AdjointContext& c) {
        const Tensor& g = c.out_grad();
        std::size_t at = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          const std::size_t w = widths[k];
          if (Tensor* gp = c.input_grad(k)) {
            for (std::size_t i = 0; i < r; ++i) {
              for (std::size_t j = 0; j < w; ++j) {
                (*gp)[i * w + j] += g[i * total + at + j];
              }
            }
          }
          at += w;
        }
      });
}

Var gather_weighted(Var x, const std::vector<std::vector<GatherEntry>>& groups) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), cl = xv.cols();
  Tensor out = matrix_like(1, groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    double s = 0.0;
    for (const GatherEntry& e : groups[g]) {
      if (e.row >= r || e.col >= cl) {
        throw DimensionError("gather_weighted: entry (" +
                             std::to_string(e.row) + ", " +
                             std::to_string(e.col) + ") outside " +
                             xv.shape_string());
      }
      s += e.weight * xv[e.row * cl + e.col];
    }
    out[g] = s;
  }
  return x.tape().record(std::move(out), {x},
                         [groups, cl](const AdjointContext& c) {
                           const Tensor& g = c.out_grad();
                           Tensor* gx = c.input_grad(0);
                           for (std::size_t k = 0; k < groups.size(); ++k) {
                             for (const GatherEntry& e : groups[k]) {
                               (*gx)[e.row * cl + e.col] += e.weight * g[k];
                             }
                           }
                         });
}

Var soft_cross_entropy(std::span<const double> target, Var predicted) {
  const Tensor& pv = predicted.value();
  if (pv.size() != target.size()) {
    throw DimensionError("soft_cross_entropy: target has " +
                         std::to_string(target.size()) +
                         " entries, prediction " + pv.shape_string());
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] != 0.0) {
      loss -= target[i] * std::log(std::max(pv[i], kProbabilityFloor));
    }
  }
  std::vector<double> t(target.begin(), target.end());
  return predicted.tape().record(
      Tensor::scalar(loss), {predicted}, [t = std::move(t)](const AdjointContext& c) {
        const double g = c.out_grad()[0];
        const Tensor& pv = c.input(0);
        Tensor* gp = c.input_grad(0);
        for (std::size_t i = 0; i < t.size(); ++i) {
          if (t[i] != 0.0 && pv[i] > kProbabilityFloor) {
            (*gp)[i] -= g * t[i] / pv[i];
          }
        }
      });
}

}  // namespace cot2::tensor
