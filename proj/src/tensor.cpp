#include "iaqcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace iaq {

using detail::Bcast;
using detail::Node;
using detail::OpKind;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  return s.empty() ? "scalar" : os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

double Tensor::value() const {
  if (numel() != 1)
    throw Error::internal("scalar read of tensor with shape " + shape_str(shape()));
  return node().value[0];
}

namespace {

const char* kind_name(OpKind k) {
  switch (k) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConst: return "const";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kRelu: return "relu";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kSquare: return "square";
    case OpKind::kAffine: return "affine";
    case OpKind::kClamp: return "clamp";
    case OpKind::kReduceSum: return "reduce_sum";
    case OpKind::kReduceMean: return "reduce_mean";
    case OpKind::kConcat: return "concat";
    case OpKind::kSliceRows: return "slice_rows";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kCosRows: return "cos_rows";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kGruSeq: return "gru_seq";
  }
  return "?";
}

void check_positive_dims(const Shape& s) {
  if (s.empty()) throw Error::internal("tensor shape must have at least one dimension");
  for (auto d : s)
    if (d == 0) throw Error::internal("tensor shape has zero dimension: " + shape_str(s));
}

bool row_matches(const Node& v, const Node& m) {
  if (m.shape.size() != 2) return false;
  const std::size_t c = m.shape[1];
  if (v.shape.size() == 1) return v.shape[0] == c;
  if (v.shape.size() == 2) return v.shape[0] == 1 && v.shape[1] == c;
  return false;
}

struct BcastPlan {
  Bcast bc;
  Shape out;
};

BcastPlan plan_bcast(const Node& a, const Node& b, const char* op) {
  if (a.shape == b.shape) return {Bcast::kEqual, a.shape};
  if (b.value.size() == 1) return {Bcast::kRightScalar, a.shape};
  if (a.value.size() == 1) return {Bcast::kLeftScalar, b.shape};
  if (row_matches(b, a)) return {Bcast::kRightRow, a.shape};
  if (row_matches(a, b)) return {Bcast::kLeftRow, b.shape};
  throw Error::internal(std::string(op) + ": shapes not broadcastable: " +
                        shape_str(a.shape) + " vs " + shape_str(b.shape));
}

// Expanded read of an operand under the node's broadcast plan. `self_left`
// selects which operand the index mapping applies to.
inline std::size_t bcast_index(Bcast bc, bool left, std::size_t i, std::size_t cols) {
  switch (bc) {
    case Bcast::kEqual: return i;
    case Bcast::kLeftScalar: return left ? 0 : i;
    case Bcast::kRightScalar: return left ? i : 0;
    case Bcast::kLeftRow: return left ? i % cols : i;
    case Bcast::kRightRow: return left ? i : i % cols;
  }
  return i;
}

void forward_compute(Node& n) {
  const std::size_t out_n = shape_numel(n.shape);
  n.value.assign(out_n, 0.0);
  double* out = n.value.data();

  switch (n.kind) {
    case OpKind::kLeaf:
    case OpKind::kConst:
      break;  // value set by creator

    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kDiv: {
      const Node& a = *n.parents[0];
      const Node& b = *n.parents[1];
      const std::size_t cols = n.cols();
      for (std::size_t i = 0; i < out_n; ++i) {
        const double x = a.value[bcast_index(n.bc, true, i, cols)];
        const double y = b.value[bcast_index(n.bc, false, i, cols)];
        switch (n.kind) {
          case OpKind::kAdd: out[i] = x + y; break;
          case OpKind::kSub: out[i] = x - y; break;
          case OpKind::kMul: out[i] = x * y; break;
          default: out[i] = x / y; break;
        }
      }
      break;
    }

    case OpKind::kMatMul: {
      const Node& a = *n.parents[0];
      const Node& b = *n.parents[1];
      const std::size_t m = a.shape[0], k = a.shape[1], p = b.shape[1];
      const double* av = a.value.data();
      const double* bv = b.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        double* orow = out + i * p;
        const double* arow = av + i * k;
        for (std::size_t t = 0; t < k; ++t) {
          const double x = arow[t];
          const double* brow = bv + t * p;
          for (std::size_t j = 0; j < p; ++j) orow[j] += x * brow[j];
        }
      }
      break;
    }

    case OpKind::kTranspose: {
      const Node& a = *n.parents[0];
      const std::size_t m = a.shape[0], c = a.shape[1];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * m + i] = a.value[i * c + j];
      break;
    }

    case OpKind::kTanh:
    case OpKind::kSigmoid:
    case OpKind::kRelu:
    case OpKind::kExp:
    case OpKind::kLog:
    case OpKind::kSqrt:
    case OpKind::kSquare:
    case OpKind::kAffine:
    case OpKind::kClamp: {
      const Node& a = *n.parents[0];
      for (std::size_t i = 0; i < out_n; ++i) {
        const double x = a.value[i];
        switch (n.kind) {
          case OpKind::kTanh: out[i] = std::tanh(x); break;
          case OpKind::kSigmoid: out[i] = 1.0 / (1.0 + std::exp(-x)); break;
          case OpKind::kRelu: out[i] = x > 0.0 ? x : 0.0; break;
          case OpKind::kExp: out[i] = std::exp(x); break;
          case OpKind::kLog: out[i] = std::log(x); break;
          case OpKind::kSqrt: out[i] = std::sqrt(x); break;
          case OpKind::kSquare: out[i] = x * x; break;
          case OpKind::kAffine: out[i] = n.a0 * x + n.a1; break;
          default: out[i] = std::min(std::max(x, n.a0), n.a1); break;
        }
      }
      break;
    }

    case OpKind::kReduceSum:
    case OpKind::kReduceMean: {
      const Node& a = *n.parents[0];
      const bool mean = n.kind == OpKind::kReduceMean;
      if (n.axis < 0) {
        double s = 0.0;
        for (double v : a.value) s += v;
        out[0] = mean ? s / static_cast<double>(a.value.size()) : s;
      } else if (a.shape.size() == 1 || n.axis == 0) {
        const std::size_t m = a.rows(), c = a.cols();
        for (std::size_t j = 0; j < c; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < m; ++i) s += a.value[i * c + j];
          out[j] = mean ? s / static_cast<double>(m) : s;
        }
      } else {  // axis == 1
        const std::size_t m = a.shape[0], c = a.shape[1];
        for (std::size_t i = 0; i < m; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += a.value[i * c + j];
          out[i] = mean ? s / static_cast<double>(c) : s;
        }
      }
      break;
    }

    case OpKind::kConcat: {
      if (n.axis == 0) {
        std::size_t off = 0;
        for (const Node* p : n.parents) {
          std::copy(p->value.begin(), p->value.end(), out + off);
          off += p->value.size();
        }
      } else {
        const std::size_t m = n.shape[0], c = n.shape[1];
        std::size_t col_off = 0;
        for (const Node* p : n.parents) {
          const std::size_t pc = p->shape[1];
          for (std::size_t i = 0; i < m; ++i)
            std::copy(p->value.begin() + i * pc, p->value.begin() + (i + 1) * pc,
                      out + i * c + col_off);
          col_off += pc;
        }
      }
      break;
    }

    case OpKind::kSliceRows: {
      const Node& a = *n.parents[0];
      const std::size_t c = a.shape[1];
      std::copy(a.value.begin() + n.i0 * c, a.value.begin() + n.i1 * c, out);
      break;
    }

    case OpKind::kSliceCols: {
      const Node& a = *n.parents[0];
      const std::size_t m = a.shape[0], c = a.shape[1], w = n.i1 - n.i0;
      for (std::size_t i = 0; i < m; ++i)
        std::copy(a.value.begin() + i * c + n.i0, a.value.begin() + i * c + n.i1,
                  out + i * w);
      break;
    }

    case OpKind::kCosRows: {
      const Node& a = *n.parents[0];
      const Node& b = *n.parents[1];
      const std::size_t m = a.shape[0], c = a.shape[1];
      n.scratch.assign(3 * m, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        const double* ar = a.value.data() + i * c;
        const double* br = b.value.data() + i * c;
        double dot = 0.0, na2 = 0.0, nb2 = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          dot += ar[j] * br[j];
          na2 += ar[j] * ar[j];
          nb2 += br[j] * br[j];
        }
        const double na = std::sqrt(na2), nb = std::sqrt(nb2);
        const double cs = (na > 0.0 && nb > 0.0) ? dot / (na * nb) : 0.0;
        out[i] = cs;
        n.scratch[3 * i] = na;
        n.scratch[3 * i + 1] = nb;
        n.scratch[3 * i + 2] = cs;
      }
      break;
    }

    case OpKind::kLayerNorm: {
      const Node& x = *n.parents[0];
      const Node& gain = *n.parents[1];
      const Node& bias = *n.parents[2];
      const std::size_t m = x.shape[0], c = x.shape[1];
      n.scratch.assign(m * c + m, 0.0);
      double* xhat = n.scratch.data();
      double* inv = n.scratch.data() + m * c;
      for (std::size_t i = 0; i < m; ++i) {
        const double* xr = x.value.data() + i * c;
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += xr[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(c);
        const double iv = 1.0 / std::sqrt(var + n.a0);
        inv[i] = iv;
        for (std::size_t j = 0; j < c; ++j) {
          const double xh = (xr[j] - mu) * iv;
          xhat[i * c + j] = xh;
          out[i * c + j] = xh * gain.value[j] + bias.value[j];
        }
      }
      break;
    }

    case OpKind::kGruSeq: {
      const Node& x = *n.parents[0];
      const std::size_t steps = x.shape[0], d = x.shape[1], h = n.shape[1];
      const double* wxz = n.parents[1]->value.data();
      const double* whz = n.parents[2]->value.data();
      const double* bz = n.parents[3]->value.data();
      const double* wxr = n.parents[4]->value.data();
      const double* whr = n.parents[5]->value.data();
      const double* br = n.parents[6]->value.data();
      const double* wxc = n.parents[7]->value.data();
      const double* whc = n.parents[8]->value.data();
      const double* bc = n.parents[9]->value.data();

      n.scratch.assign(3 * steps * h, 0.0);
      double* zs = n.scratch.data();
      double* rs = zs + steps * h;
      double* cs = rs + steps * h;

      std::vector<double> az(h), ar(h), ac(h), rh(h);
      std::vector<double> hprev(h, 0.0);
      for (std::size_t t = 0; t < steps; ++t) {
        const double* xt = x.value.data() + t * d;
        for (std::size_t j = 0; j < h; ++j) {
          az[j] = bz[j];
          ar[j] = br[j];
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double xv = xt[k];
          const double* wz_row = wxz + k * h;
          const double* wr_row = wxr + k * h;
          for (std::size_t j = 0; j < h; ++j) {
            az[j] += xv * wz_row[j];
            ar[j] += xv * wr_row[j];
          }
        }
        for (std::size_t k = 0; k < h; ++k) {
          const double hv = hprev[k];
          if (hv == 0.0) continue;
          const double* wz_row = whz + k * h;
          const double* wr_row = whr + k * h;
          for (std::size_t j = 0; j < h; ++j) {
            az[j] += hv * wz_row[j];
            ar[j] += hv * wr_row[j];
          }
        }
        double* z = zs + t * h;
        double* r = rs + t * h;
        for (std::size_t j = 0; j < h; ++j) {
          z[j] = 1.0 / (1.0 + std::exp(-az[j]));
          r[j] = 1.0 / (1.0 + std::exp(-ar[j]));
          rh[j] = r[j] * hprev[j];
        }
        for (std::size_t j = 0; j < h; ++j) ac[j] = bc[j];
        for (std::size_t k = 0; k < d; ++k) {
          const double xv = xt[k];
          const double* wc_row = wxc + k * h;
          for (std::size_t j = 0; j < h; ++j) ac[j] += xv * wc_row[j];
        }
        for (std::size_t k = 0; k < h; ++k) {
          const double rv = rh[k];
          if (rv == 0.0) continue;
          const double* wc_row = whc + k * h;
          for (std::size_t j = 0; j < h; ++j) ac[j] += rv * wc_row[j];
        }
        double* c = cs + t * h;
        double* ht = out + t * h;
        for (std::size_t j = 0; j < h; ++j) {
          c[j] = std::tanh(ac[j]);
          ht[j] = (1.0 - z[j]) * hprev[j] + z[j] * c[j];
          hprev[j] = ht[j];
        }
      }
      break;
    }
  }
}

void backward_compute(Node& n) {
  if (n.kind == OpKind::kLeaf || n.kind == OpKind::kConst) return;
  const double* g = n.grad.data();
  const std::size_t out_n = n.value.size();

  switch (n.kind) {
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kDiv: {
      Node& a = *n.parents[0];
      Node& b = *n.parents[1];
      const std::size_t cols = n.cols();
      for (std::size_t i = 0; i < out_n; ++i) {
        const std::size_t ia = bcast_index(n.bc, true, i, cols);
        const std::size_t ib = bcast_index(n.bc, false, i, cols);
        const double x = a.value[ia];
        const double y = b.value[ib];
        double da = 0.0, db = 0.0;
        switch (n.kind) {
          case OpKind::kAdd: da = 1.0; db = 1.0; break;
          case OpKind::kSub: da = 1.0; db = -1.0; break;
          case OpKind::kMul: da = y; db = x; break;
          default: da = 1.0 / y; db = -x / (y * y); break;
        }
        a.grad[ia] += g[i] * da;
        b.grad[ib] += g[i] * db;
      }
      break;
    }

    case OpKind::kMatMul: {
      Node& a = *n.parents[0];
      Node& b = *n.parents[1];
      const std::size_t m = a.shape[0], k = a.shape[1], p = b.shape[1];
      const double* av = a.value.data();
      const double* bv = b.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * p;
        double* garow = a.grad.data() + i * k;
        for (std::size_t t = 0; t < k; ++t) {
          const double* brow = bv + t * p;
          double s = 0.0;
          for (std::size_t j = 0; j < p; ++j) s += grow[j] * brow[j];
          garow[t] += s;
        }
        const double* arow = av + i * k;
        for (std::size_t t = 0; t < k; ++t) {
          const double x = arow[t];
          double* gbrow = b.grad.data() + t * p;
          for (std::size_t j = 0; j < p; ++j) gbrow[j] += x * grow[j];
        }
      }
      break;
    }

    case OpKind::kTranspose: {
      Node& a = *n.parents[0];
      const std::size_t m = a.shape[0], c = a.shape[1];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) a.grad[i * c + j] += g[j * m + i];
      break;
    }

    case OpKind::kTanh:
    case OpKind::kSigmoid:
    case OpKind::kRelu:
    case OpKind::kExp:
    case OpKind::kLog:
    case OpKind::kSqrt:
    case OpKind::kSquare:
    case OpKind::kAffine:
    case OpKind::kClamp: {
      Node& a = *n.parents[0];
      for (std::size_t i = 0; i < out_n; ++i) {
        const double x = a.value[i];
        const double y = n.value[i];
        double d = 0.0;
        switch (n.kind) {
          case OpKind::kTanh: d = 1.0 - y * y; break;
          case OpKind::kSigmoid: d = y * (1.0 - y); break;
          case OpKind::kRelu: d = x > 0.0 ? 1.0 : 0.0; break;
          case OpKind::kExp: d = y; break;
          case OpKind::kLog: d = 1.0 / x; break;
          case OpKind::kSqrt: d = 0.5 / y; break;
          case OpKind::kSquare: d = 2.0 * x; break;
          case OpKind::kAffine: d = n.a0; break;
          default: d = (x >= n.a0 && x <= n.a1) ? 1.0 : 0.0; break;
        }
        a.grad[i] += g[i] * d;
      }
      break;
    }

    case OpKind::kReduceSum:
    case OpKind::kReduceMean: {
      Node& a = *n.parents[0];
      const bool mean = n.kind == OpKind::kReduceMean;
      if (n.axis < 0) {
        const double gv =
            mean ? g[0] / static_cast<double>(a.value.size()) : g[0];
        for (auto& ga : a.grad) ga += gv;
      } else if (a.shape.size() == 1 || n.axis == 0) {
        const std::size_t m = a.rows(), c = a.cols();
        const double inv = mean ? 1.0 / static_cast<double>(m) : 1.0;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) a.grad[i * c + j] += g[j] * inv;
      } else {
        const std::size_t m = a.shape[0], c = a.shape[1];
        const double inv = mean ? 1.0 / static_cast<double>(c) : 1.0;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) a.grad[i * c + j] += g[i] * inv;
      }
      break;
    }

    case OpKind::kConcat: {
      if (n.axis == 0) {
        std::size_t off = 0;
        for (Node* p : n.parents) {
          for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += g[off + i];
          off += p->value.size();
        }
      } else {
        const std::size_t m = n.shape[0], c = n.shape[1];
        std::size_t col_off = 0;
        for (Node* p : n.parents) {
          const std::size_t pc = p->shape[1];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < pc; ++j)
              p->grad[i * pc + j] += g[i * c + col_off + j];
          col_off += pc;
        }
      }
      break;
    }

    case OpKind::kSliceRows: {
      Node& a = *n.parents[0];
      const std::size_t c = a.shape[1];
      for (std::size_t i = 0; i < out_n; ++i) a.grad[n.i0 * c + i] += g[i];
      break;
    }

    case OpKind::kSliceCols: {
      Node& a = *n.parents[0];
      const std::size_t m = a.shape[0], c = a.shape[1], w = n.i1 - n.i0;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) a.grad[i * c + n.i0 + j] += g[i * w + j];
      break;
    }

    case OpKind::kCosRows: {
      Node& a = *n.parents[0];
      Node& b = *n.parents[1];
      const std::size_t m = a.shape[0], c = a.shape[1];
      for (std::size_t i = 0; i < m; ++i) {
        const double na = n.scratch[3 * i];
        const double nb = n.scratch[3 * i + 1];
        const double cs = n.scratch[3 * i + 2];
        if (na <= 0.0 || nb <= 0.0) continue;  // dead row, zero gradient
        const double gi = g[i];
        const double* ar = a.value.data() + i * c;
        const double* br = b.value.data() + i * c;
        double* gar = a.grad.data() + i * c;
        double* gbr = b.grad.data() + i * c;
        const double inv_ab = 1.0 / (na * nb);
        for (std::size_t j = 0; j < c; ++j) {
          gar[j] += gi * (br[j] * inv_ab - cs * ar[j] / (na * na));
          gbr[j] += gi * (ar[j] * inv_ab - cs * br[j] / (nb * nb));
        }
      }
      break;
    }

    case OpKind::kGruSeq: {
      Node& x = *n.parents[0];
      const std::size_t steps = x.shape[0], d = x.shape[1], h = n.shape[1];
      const double* wxz = n.parents[1]->value.data();
      const double* whz = n.parents[2]->value.data();
      const double* wxr = n.parents[4]->value.data();
      const double* whr = n.parents[5]->value.data();
      const double* wxc = n.parents[7]->value.data();
      const double* whc = n.parents[8]->value.data();
      double* gwxz = n.parents[1]->grad.data();
      double* gwhz = n.parents[2]->grad.data();
      double* gbz = n.parents[3]->grad.data();
      double* gwxr = n.parents[4]->grad.data();
      double* gwhr = n.parents[5]->grad.data();
      double* gbr = n.parents[6]->grad.data();
      double* gwxc = n.parents[7]->grad.data();
      double* gwhc = n.parents[8]->grad.data();
      double* gbc = n.parents[9]->grad.data();

      const double* zs = n.scratch.data();
      const double* rs = zs + steps * h;
      const double* cs = rs + steps * h;

      std::vector<double> dh(h, 0.0), daz(h), dar(h), dac(h), drh(h);
      for (std::size_t t = steps; t-- > 0;) {
        const double* z = zs + t * h;
        const double* r = rs + t * h;
        const double* c = cs + t * h;
        const double* hprev = t > 0 ? n.value.data() + (t - 1) * h : nullptr;
        const double* gt = g + t * h;
        const double* xt = x.value.data() + t * d;

        // dh carries gradient from later steps; gt is this step's own share
        for (std::size_t j = 0; j < h; ++j) {
          const double total = gt[j] + dh[j];
          const double hp = hprev ? hprev[j] : 0.0;
          const double dz = total * (c[j] - hp);
          const double dc = total * z[j];
          daz[j] = dz * z[j] * (1.0 - z[j]);
          dac[j] = dc * (1.0 - c[j] * c[j]);
          dh[j] = total * (1.0 - z[j]);  // direct path into h_{t-1}
        }
        // candidate pre-activation: a_c = x W_xc + (r . h_prev) W_hc + b_c
        for (std::size_t j = 0; j < h; ++j) {
          gbc[j] += dac[j];
          gbz[j] += daz[j];
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double xv = xt[k];
          double* gwc_row = gwxc + k * h;
          double* gwz_row = gwxz + k * h;
          for (std::size_t j = 0; j < h; ++j) {
            gwc_row[j] += xv * dac[j];
            gwz_row[j] += xv * daz[j];
          }
        }
        // d(r.h_prev) = dac * W_hc^T
        for (std::size_t k = 0; k < h; ++k) {
          const double* wc_row = whc + k * h;
          double s = 0.0;
          for (std::size_t j = 0; j < h; ++j) s += dac[j] * wc_row[j];
          drh[k] = s;
        }
        if (hprev) {
          for (std::size_t k = 0; k < h; ++k) {
            const double rh = r[k] * hprev[k];
            if (rh != 0.0) {
              double* gwc_row = gwhc + k * h;
              for (std::size_t j = 0; j < h; ++j) gwc_row[j] += rh * dac[j];
            }
            const double dr = drh[k] * hprev[k];
            dar[k] = dr * r[k] * (1.0 - r[k]);
            dh[k] += drh[k] * r[k];
          }
          for (std::size_t j = 0; j < h; ++j) gbr[j] += dar[j];
          for (std::size_t k = 0; k < d; ++k) {
            const double xv = xt[k];
            double* gwr_row = gwxr + k * h;
            for (std::size_t j = 0; j < h; ++j) gwr_row[j] += xv * dar[j];
          }
          for (std::size_t k = 0; k < h; ++k) {
            const double hp = hprev[k];
            if (hp != 0.0) {
              double* gz_row = gwhz + k * h;
              double* gr_row = gwhr + k * h;
              for (std::size_t j = 0; j < h; ++j) {
                gz_row[j] += hp * daz[j];
                gr_row[j] += hp * dar[j];
              }
            }
            const double* wz_row = whz + k * h;
            const double* wr_row = whr + k * h;
            double s = 0.0;
            for (std::size_t j = 0; j < h; ++j)
              s += daz[j] * wz_row[j] + dar[j] * wr_row[j];
            dh[k] += s;
          }
        } else {
          // h_prev = 0: reset gate has no effect and no gradient
          std::fill(dar.begin(), dar.end(), 0.0);
        }
        // input gradient
        double* gx_row = x.grad.data() + t * d;
        for (std::size_t k = 0; k < d; ++k) {
          const double* wz_row = wxz + k * h;
          const double* wr_row = wxr + k * h;
          const double* wc_row = wxc + k * h;
          double s = 0.0;
          for (std::size_t j = 0; j < h; ++j)
            s += daz[j] * wz_row[j] + dar[j] * wr_row[j] + dac[j] * wc_row[j];
          gx_row[k] += s;
        }
      }
      break;
    }

    case OpKind::kLayerNorm: {
      Node& x = *n.parents[0];
      Node& gain = *n.parents[1];
      Node& bias = *n.parents[2];
      const std::size_t m = x.shape[0], c = x.shape[1];
      const double* xhat = n.scratch.data();
      const double* inv = n.scratch.data() + m * c;
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * c;
        const double* xh = xhat + i * c;
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          const double dxh = grow[j] * gain.value[j];
          m1 += dxh;
          m2 += dxh * xh[j];
          gain.grad[j] += grow[j] * xh[j];
          bias.grad[j] += grow[j];
        }
        m1 /= static_cast<double>(c);
        m2 /= static_cast<double>(c);
        double* gx = x.grad.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) {
          const double dxh = grow[j] * gain.value[j];
          gx[j] += inv[i] * (dxh - m1 - xh[j] * m2);
        }
      }
      break;
    }

    default:
      break;
  }
}

Graph& common_graph(const Tensor& a, const Tensor& b) {
  Graph& g = a.graph();
  if (&g != &b.graph())
    throw Error::internal("operands belong to different graphs");
  return g;
}

}  // namespace

detail::Node* Graph::add_node(Node&& n) {
  n.graph = this;
  nodes_.push_back(std::make_unique<Node>(std::move(n)));
  return nodes_.back().get();
}

Tensor Graph::make_op(Node&& proto) {
  forward_compute(proto);
  if (strict_finite_) {
    for (double v : proto.value) {
      if (!std::isfinite(v))
        throw Error::numeric(std::string("non-finite value produced by op '") +
                             kind_name(proto.kind) + "'");
    }
  }
  return Tensor(add_node(std::move(proto)));
}

Tensor Graph::constant(Shape shape, std::span<const double> values) {
  check_positive_dims(shape);
  if (shape_numel(shape) != values.size())
    throw Error::internal("constant: data length " + std::to_string(values.size()) +
                          " does not match shape " + shape_str(shape));
  Node n;
  n.kind = OpKind::kConst;
  n.shape = std::move(shape);
  n.value.assign(values.begin(), values.end());
  return Tensor(add_node(std::move(n)));
}

Tensor Graph::constant(Shape shape, double fill) {
  check_positive_dims(shape);
  Node n;
  n.kind = OpKind::kConst;
  n.value.assign(shape_numel(shape), fill);
  n.shape = std::move(shape);
  return Tensor(add_node(std::move(n)));
}

Tensor Graph::leaf(const std::string& name, Shape shape,
                   std::span<const double> values) {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) {
    if (it->second->shape != shape)
      throw Error::internal("leaf '" + name + "' rebound with shape " +
                            shape_str(shape) + ", was " +
                            shape_str(it->second->shape));
    return Tensor(it->second);
  }
  check_positive_dims(shape);
  if (shape_numel(shape) != values.size())
    throw Error::internal("leaf '" + name + "': data length does not match shape " +
                          shape_str(shape));
  Node n;
  n.kind = OpKind::kLeaf;
  n.shape = std::move(shape);
  n.value.assign(values.begin(), values.end());
  n.trainable = true;
  n.name = name;
  Node* ptr = add_node(std::move(n));
  leaves_.emplace(name, ptr);
  leaf_order_.push_back(name);
  return Tensor(ptr);
}

void Graph::backward(const Tensor& loss) {
  if (!loss.valid() || &loss.graph() != this)
    throw Error::internal("backward on a tensor detached from this graph");
  if (loss.numel() != 1)
    throw Error::internal("backward requires a scalar loss, got shape " +
                          shape_str(loss.shape()));
  if (backward_done_)
    throw Error::internal("backward called twice without reset_grads()");
  if (nodes_.empty()) throw Error::internal("backward on empty graph");

  for (auto& n : nodes_) n->grad.assign(n->value.size(), 0.0);
  // Seed: d loss / d loss = 1.
  loss.node_->grad[0] = 1.0;

  std::size_t visits = 0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    backward_compute(*nodes_[i]);
    ++visits;
  }
  last_visits_ = visits;
  backward_done_ = true;
}

void Graph::reset_grads() {
  for (auto& n : nodes_) n->grad.clear();
  backward_done_ = false;
}

std::span<const double> Graph::grad_by_name(const std::string& name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end())
    throw Error::internal("no trainable leaf named '" + name + "'");
  if (!backward_done_)
    throw Error::internal("gradient read before backward()");
  return it->second->grad;
}

Tensor Graph::leaf_by_name(const std::string& name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end())
    throw Error::internal("no trainable leaf named '" + name + "'");
  return Tensor(it->second);
}

// --- op builders ----------------------------------------------------------

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.shape().size() != 2)
    throw Error::internal(std::string(op) + ": expected a rank-2 tensor, got shape " +
                          shape_str(t.shape()));
}

Node binary_proto(OpKind kind, const Tensor& a, const Tensor& b, const char* op) {
  Node n;
  n.kind = kind;
  const auto plan = plan_bcast(*a.node_ptr(), *b.node_ptr(), op);
  n.bc = plan.bc;
  n.shape = plan.out;
  n.parents = {a.node_ptr(), b.node_ptr()};
  return n;
}

Node unary_proto(OpKind kind, const Tensor& a) {
  Node n;
  n.kind = kind;
  n.shape = a.shape();
  n.parents = {a.node_ptr()};
  return n;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  Graph& g = common_graph(a, b);
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.shape()[1] != b.shape()[0])
    throw Error::internal("matmul: inner dimensions disagree: " +
                          shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Node n;
  n.kind = OpKind::kMatMul;
  n.shape = {a.shape()[0], b.shape()[1]};
  n.parents = {a.node_ptr(), b.node_ptr()};
  return g.make_op(std::move(n));
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Node n;
  n.kind = OpKind::kTranspose;
  n.shape = {a.shape()[1], a.shape()[0]};
  n.parents = {a.node_ptr()};
  return a.graph().make_op(std::move(n));
}

Tensor add(const Tensor& a, const Tensor& b) {
  Graph& g = common_graph(a, b);
  return g.make_op(binary_proto(OpKind::kAdd, a, b, "add"));
}
Tensor sub(const Tensor& a, const Tensor& b) {
  Graph& g = common_graph(a, b);
  return g.make_op(binary_proto(OpKind::kSub, a, b, "sub"));
}
Tensor mul(const Tensor& a, const Tensor& b) {
  Graph& g = common_graph(a, b);
  return g.make_op(binary_proto(OpKind::kMul, a, b, "mul"));
}
Tensor div(const Tensor& a, const Tensor& b) {
  Graph& g = common_graph(a, b);
  return g.make_op(binary_proto(OpKind::kDiv, a, b, "div"));
}

Tensor tanh(const Tensor& a) { return a.graph().make_op(unary_proto(OpKind::kTanh, a)); }
Tensor sigmoid(const Tensor& a) { return a.graph().make_op(unary_proto(OpKind::kSigmoid, a)); }
Tensor relu(const Tensor& a) { return a.graph().make_op(unary_proto(OpKind::kRelu, a)); }
Tensor exp(const Tensor& a) { return a.graph().make_op(unary_proto(OpKind::kExp, a)); }
Tensor log(const Tensor& a) { return a.graph().make_op(unary_proto(OpKind::kLog, a)); }
Tensor sqrt(const Tensor& a) { return a.graph().make_op(unary_proto(OpKind::kSqrt, a)); }
Tensor square(const Tensor& a) { return a.graph().make_op(unary_proto(OpKind::kSquare, a)); }

Tensor affine(const Tensor& a, double scale, double shift) {
  Node n = unary_proto(OpKind::kAffine, a);
  n.a0 = scale;
  n.a1 = shift;
  return a.graph().make_op(std::move(n));
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw Error::internal("clamp: lo must not exceed hi");
  Node n = unary_proto(OpKind::kClamp, a);
  n.a0 = lo;
  n.a1 = hi;
  return a.graph().make_op(std::move(n));
}

namespace {

Node reduce_proto(OpKind kind, const Tensor& a, std::optional<int> axis) {
  Node n;
  n.kind = kind;
  n.parents = {a.node_ptr()};
  if (!axis) {
    n.axis = -1;
    n.shape = {1};
    return n;
  }
  const int ax = *axis;
  const int rank = static_cast<int>(a.shape().size());
  if (ax < 0 || ax >= rank)
    throw Error::internal("reduce: axis " + std::to_string(ax) +
                          " out of range for rank " + std::to_string(rank));
  n.axis = ax;
  if (rank == 1)
    n.shape = {1};
  else
    n.shape = ax == 0 ? Shape{1, a.shape()[1]} : Shape{a.shape()[0], 1};
  return n;
}

}  // namespace

Tensor reduce_sum(const Tensor& a, std::optional<int> axis) {
  return a.graph().make_op(reduce_proto(OpKind::kReduceSum, a, axis));
}

Tensor reduce_mean(const Tensor& a, std::optional<int> axis) {
  return a.graph().make_op(reduce_proto(OpKind::kReduceMean, a, axis));
}

Tensor concat(std::span<const Tensor> ts, int axis) {
  if (ts.empty()) throw Error::internal("concat: no inputs");
  if (axis != 0 && axis != 1) throw Error::internal("concat: axis must be 0 or 1");
  Graph& g = ts[0].graph();
  std::size_t rows = 0, cols = 0;
  for (const Tensor& t : ts) {
    if (&t.graph() != &g) throw Error::internal("concat: operands from different graphs");
    require_rank2(t, "concat");
  }
  if (axis == 0) {
    cols = ts[0].shape()[1];
    for (const Tensor& t : ts) {
      if (t.shape()[1] != cols)
        throw Error::internal("concat axis 0: column mismatch: " +
                              shape_str(ts[0].shape()) + " vs " + shape_str(t.shape()));
      rows += t.shape()[0];
    }
  } else {
    rows = ts[0].shape()[0];
    for (const Tensor& t : ts) {
      if (t.shape()[0] != rows)
        throw Error::internal("concat axis 1: row mismatch: " +
                              shape_str(ts[0].shape()) + " vs " + shape_str(t.shape()));
      cols += t.shape()[1];
    }
  }
  Node n;
  n.kind = OpKind::kConcat;
  n.axis = axis;
  n.shape = {rows, cols};
  n.parents.reserve(ts.size());
  for (const Tensor& t : ts) n.parents.push_back(t.node_ptr());
  return g.make_op(std::move(n));
}

Tensor slice_rows(const Tensor& a, std::size_t from, std::size_t to) {
  require_rank2(a, "slice_rows");
  const std::size_t rows = a.shape()[0];
  if (!(from < to && to <= rows))
    throw Error::internal("slice_rows: range [" + std::to_string(from) + ", " +
                          std::to_string(to) + ") out of bounds for " +
                          std::to_string(rows) + " rows");
  Node n;
  n.kind = OpKind::kSliceRows;
  n.i0 = from;
  n.i1 = to;
  n.shape = {to - from, a.shape()[1]};
  n.parents = {a.node_ptr()};
  return a.graph().make_op(std::move(n));
}

Tensor slice_cols(const Tensor& a, std::size_t from, std::size_t to) {
  require_rank2(a, "slice_cols");
  const std::size_t cols = a.shape()[1];
  if (!(from < to && to <= cols))
    throw Error::internal("slice_cols: range [" + std::to_string(from) + ", " +
                          std::to_string(to) + ") out of bounds for " +
                          std::to_string(cols) + " columns");
  Node n;
  n.kind = OpKind::kSliceCols;
  n.i0 = from;
  n.i1 = to;
  n.shape = {a.shape()[0], to - from};
  n.parents = {a.node_ptr()};
  return a.graph().make_op(std::move(n));
}

Tensor cos_rows(const Tensor& a, const Tensor& b) {
  Graph& g = common_graph(a, b);
  require_rank2(a, "cos_rows");
  if (a.shape() != b.shape())
    throw Error::internal("cos_rows: shape mismatch: " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
  Node n;
  n.kind = OpKind::kCosRows;
  n.shape = {a.shape()[0], 1};
  n.parents = {a.node_ptr(), b.node_ptr()};
  return g.make_op(std::move(n));
}

Tensor gru_seq(const Tensor& x, const Tensor& w_xz, const Tensor& w_hz, const Tensor& b_z,
               const Tensor& w_xr, const Tensor& w_hr, const Tensor& b_r,
               const Tensor& w_xc, const Tensor& w_hc, const Tensor& b_c) {
  require_rank2(x, "gru_seq");
  require_rank2(w_xz, "gru_seq");
  require_rank2(w_hz, "gru_seq");
  const std::size_t d = x.shape()[1];
  const std::size_t h = w_hz.shape()[0];
  auto check_w = [&](const Tensor& w, std::size_t rows, const char* what) {
    if (w.shape().size() != 2 || w.shape()[0] != rows || w.shape()[1] != h)
      throw Error::internal(std::string("gru_seq: ") + what + " has shape " +
                            shape_str(w.shape()));
  };
  check_w(w_xz, d, "W_xz");
  check_w(w_hz, h, "W_hz");
  check_w(w_xr, d, "W_xr");
  check_w(w_hr, h, "W_hr");
  check_w(w_xc, d, "W_xc");
  check_w(w_hc, h, "W_hc");
  for (const Tensor* b : {&b_z, &b_r, &b_c}) {
    if (b->numel() != h)
      throw Error::internal("gru_seq: gate bias length must equal the hidden width");
  }
  Node n;
  n.kind = OpKind::kGruSeq;
  n.shape = {x.shape()[0], h};
  n.parents = {x.node_ptr(),    w_xz.node_ptr(), w_hz.node_ptr(), b_z.node_ptr(),
               w_xr.node_ptr(), w_hr.node_ptr(), b_r.node_ptr(),  w_xc.node_ptr(),
               w_hc.node_ptr(), b_c.node_ptr()};
  for (const detail::Node* p : n.parents)
    if (p->graph != &x.graph()) throw Error::internal("gru_seq: operands from different graphs");
  return x.graph().make_op(std::move(n));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  Graph& g = common_graph(x, gain);
  if (&bias.graph() != &g) throw Error::internal("layer_norm: operands from different graphs");
  require_rank2(x, "layer_norm");
  const std::size_t h = x.shape()[1];
  if (gain.numel() != h || bias.numel() != h)
    throw Error::internal("layer_norm: gain/bias length must equal feature count " +
                          std::to_string(h));
  Node n;
  n.kind = OpKind::kLayerNorm;
  n.a0 = eps;
  n.shape = x.shape();
  n.parents = {x.node_ptr(), gain.node_ptr(), bias.node_ptr()};
  return g.make_op(std::move(n));
}

}  // namespace iaq
