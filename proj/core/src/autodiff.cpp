#include "cdr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdr/util.hpp"

namespace cdr {

Tensor& ParamStore::get_or_create(const std::string& name, const std::vector<int>& shape,
                                  Init init) {
  auto it = entries_.find(name);
  if (it != entries_.end()) {
    CDR_REQUIRE(it->second.value.shape == shape, "parameter ", name, " exists with shape ",
                shape_str(it->second.value.shape), ", requested ", shape_str(shape));
    return it->second.value;
  }

  Tensor t = Tensor::zeros(shape);
  if (init == Init::GlorotUniform) {
    CDR_REQUIRE(t.rank() >= 2, "Glorot init needs rank >= 2, got shape ", shape_str(shape));
    // fan_in/fan_out for conv weights [F,C,kh,kw] include the receptive field.
    int64_t receptive = 1;
    for (size_t d = 2; d < shape.size(); ++d) receptive *= shape[d];
    const double fan_out = static_cast<double>(shape[0]) * receptive;
    const double fan_in = static_cast<double>(shape[1]) * receptive;
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Rng rng(derive_seed(init_seed_, name));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
  }
  return entries_.emplace(name, Entry{std::move(t), Tensor{}, Tensor{}}).first->second.value;
}

Tensor& ParamStore::value(const std::string& name) {
  auto it = entries_.find(name);
  CDR_REQUIRE(it != entries_.end(), "unknown parameter ", name);
  return it->second.value;
}

const Tensor& ParamStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  CDR_REQUIRE(it != entries_.end(), "unknown parameter ", name);
  return it->second.value;
}

void ParamStore::set(const std::string& name, Tensor value) {
  entries_[name].value = std::move(value);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

int64_t ParamStore::total_coords() const {
  int64_t n = 0;
  for (const auto& [name, entry] : entries_) n += entry.value.size();
  return n;
}

Tensor& ParamStore::adam_m(const std::string& name) {
  auto it = entries_.find(name);
  CDR_REQUIRE(it != entries_.end(), "unknown parameter ", name);
  if (it->second.m.data.empty()) it->second.m = Tensor::zeros(it->second.value.shape);
  return it->second.m;
}

Tensor& ParamStore::adam_v(const std::string& name) {
  auto it = entries_.find(name);
  CDR_REQUIRE(it != entries_.end(), "unknown parameter ", name);
  if (it->second.v.data.empty()) it->second.v = Tensor::zeros(it->second.value.shape);
  return it->second.v;
}

const Tensor& ParamStore::adam_m(const std::string& name) const {
  auto it = entries_.find(name);
  CDR_REQUIRE(it != entries_.end() && !it->second.m.data.empty(), "no Adam state for ", name);
  return it->second.m;
}

const Tensor& ParamStore::adam_v(const std::string& name) const {
  auto it = entries_.find(name);
  CDR_REQUIRE(it != entries_.end() && !it->second.v.data.empty(), "no Adam state for ", name);
  return it->second.v;
}

void ParamStore::set_adam_state(const std::string& name, Tensor m, Tensor v) {
  auto it = entries_.find(name);
  CDR_REQUIRE(it != entries_.end(), "set_adam_state: unknown parameter ", name);
  CDR_REQUIRE(m.same_shape(it->second.value) && v.same_shape(it->second.value),
              "set_adam_state: moment shape mismatch for ", name);
  it->second.m = std::move(m);
  it->second.v = std::move(v);
}

bool ParamStore::has_adam_state(const std::string& name) const {
  auto it = entries_.find(name);
  return it != entries_.end() && !it->second.m.data.empty();
}

Value Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Value v) {
  CDR_REQUIRE(v.index >= 0 && v.index < static_cast<int>(nodes_.size()),
              "bad tape value handle ", v.index);
  return nodes_[v.index];
}

const Tape::Node& Tape::node(Value v) const {
  CDR_REQUIRE(v.index >= 0 && v.index < static_cast<int>(nodes_.size()),
              "bad tape value handle ", v.index);
  return nodes_[v.index];
}

Value Tape::input(Tensor t) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(t);
  return push(std::move(n));
}

Value Tape::constant(Tensor t) { return input(std::move(t)); }

Value Tape::param(const std::string& name, const std::vector<int>& shape, Init init) {
  auto it = param_nodes_.find(name);
  if (it != param_nodes_.end()) {
    CDR_REQUIRE(nodes_[it->second].value.shape == shape, "parameter ", name,
                " already on tape with shape ", shape_str(nodes_[it->second].value.shape));
    return Value{it->second};
  }
  Node n;
  n.op = Op::Leaf;
  n.value = store_->get_or_create(name, shape, init);
  n.param_name = name;
  Value v = push(std::move(n));
  param_nodes_[name] = v.index;
  return v;
}

namespace {

void require_matrix(const Tensor& t, const char* what) {
  CDR_REQUIRE(t.rank() == 2, what, " expects a matrix, got shape ", shape_str(t.shape));
}

}  // namespace

Value Tape::add(Value a, Value b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  CDR_REQUIRE(ta.same_shape(tb), "add: shape mismatch ", shape_str(ta.shape), " vs ",
              shape_str(tb.shape));
  Node n;
  n.op = Op::Add;
  n.a = a.index;
  n.b = b.index;
  n.value = ta;
  for (int64_t i = 0; i < n.value.size(); ++i) n.value.data[i] += tb.data[i];
  return push(std::move(n));
}

Value Tape::sub(Value a, Value b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  CDR_REQUIRE(ta.same_shape(tb), "sub: shape mismatch ", shape_str(ta.shape), " vs ",
              shape_str(tb.shape));
  Node n;
  n.op = Op::Sub;
  n.a = a.index;
  n.b = b.index;
  n.value = ta;
  for (int64_t i = 0; i < n.value.size(); ++i) n.value.data[i] -= tb.data[i];
  return push(std::move(n));
}

Value Tape::mul(Value a, Value b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  CDR_REQUIRE(ta.same_shape(tb), "mul: shape mismatch ", shape_str(ta.shape), " vs ",
              shape_str(tb.shape));
  Node n;
  n.op = Op::Mul;
  n.a = a.index;
  n.b = b.index;
  n.value = ta;
  for (int64_t i = 0; i < n.value.size(); ++i) n.value.data[i] *= tb.data[i];
  return push(std::move(n));
}

Value Tape::scale(Value a, double c) {
  Node n;
  n.op = Op::Scale;
  n.a = a.index;
  n.c = c;
  n.value = node(a).value;
  for (double& v : n.value.data) v *= c;
  return push(std::move(n));
}

Value Tape::add_scalar(Value a, double c) {
  Node n;
  n.op = Op::AddScalar;
  n.a = a.index;
  n.c = c;
  n.value = node(a).value;
  for (double& v : n.value.data) v += c;
  return push(std::move(n));
}

Value Tape::matmul(Value a, Value b, bool transpose_b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require_matrix(ta, "matmul");
  require_matrix(tb, "matmul");
  const int rows = ta.dim(0), inner = ta.dim(1);
  const int cols = transpose_b ? tb.dim(0) : tb.dim(1);
  const int b_inner = transpose_b ? tb.dim(1) : tb.dim(0);
  CDR_REQUIRE(inner == b_inner, "matmul: inner dims differ, ", shape_str(ta.shape), " x ",
              shape_str(tb.shape), transpose_b ? " (b transposed)" : "");

  Node n;
  n.op = Op::MatMul;
  n.a = a.index;
  n.b = b.index;
  n.flag = transpose_b;
  n.value = Tensor::zeros({rows, cols});
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      double acc = 0.0;
      if (transpose_b) {
        for (int k = 0; k < inner; ++k) acc += ta.at(i, k) * tb.at(j, k);
      } else {
        for (int k = 0; k < inner; ++k) acc += ta.at(i, k) * tb.at(k, j);
      }
      n.value.at(i, j) = acc;
    }
  }
  return push(std::move(n));
}

Value Tape::add_row(Value m, Value row) {
  const Tensor& tm = node(m).value;
  const Tensor& tr = node(row).value;
  require_matrix(tm, "add_row");
  CDR_REQUIRE(tr.rank() == 2 && tr.dim(0) == 1 && tr.dim(1) == tm.dim(1),
              "add_row: want [1,", tm.dim(1), "], got ", shape_str(tr.shape));
  Node n;
  n.op = Op::AddRow;
  n.a = m.index;
  n.b = row.index;
  n.value = tm;
  for (int i = 0; i < tm.dim(0); ++i)
    for (int j = 0; j < tm.dim(1); ++j) n.value.at(i, j) += tr.data[j];
  return push(std::move(n));
}

Value Tape::add_col(Value m, Value col) {
  const Tensor& tm = node(m).value;
  const Tensor& tc = node(col).value;
  require_matrix(tm, "add_col");
  CDR_REQUIRE(tc.rank() == 2 && tc.dim(1) == 1 && tc.dim(0) == tm.dim(0),
              "add_col: want [", tm.dim(0), ",1], got ", shape_str(tc.shape));
  Node n;
  n.op = Op::AddCol;
  n.a = m.index;
  n.b = col.index;
  n.value = tm;
  for (int i = 0; i < tm.dim(0); ++i)
    for (int j = 0; j < tm.dim(1); ++j) n.value.at(i, j) += tc.data[i];
  return push(std::move(n));
}

Value Tape::mul_col(Value m, Value col) {
  const Tensor& tm = node(m).value;
  const Tensor& tc = node(col).value;
  require_matrix(tm, "mul_col");
  CDR_REQUIRE(tc.rank() == 2 && tc.dim(1) == 1 && tc.dim(0) == tm.dim(0),
              "mul_col: want [", tm.dim(0), ",1], got ", shape_str(tc.shape));
  Node n;
  n.op = Op::MulCol;
  n.a = m.index;
  n.b = col.index;
  n.value = tm;
  for (int i = 0; i < tm.dim(0); ++i)
    for (int j = 0; j < tm.dim(1); ++j) n.value.at(i, j) *= tc.data[i];
  return push(std::move(n));
}

Value Tape::mul_row(Value m, Value row) {
  const Tensor& tm = node(m).value;
  const Tensor& tr = node(row).value;
  require_matrix(tm, "mul_row");
  CDR_REQUIRE(tr.rank() == 2 && tr.dim(0) == 1 && tr.dim(1) == tm.dim(1),
              "mul_row: want [1,", tm.dim(1), "], got ", shape_str(tr.shape));
  Node n;
  n.op = Op::MulRow;
  n.a = m.index;
  n.b = row.index;
  n.value = tm;
  for (int i = 0; i < tm.dim(0); ++i)
    for (int j = 0; j < tm.dim(1); ++j) n.value.at(i, j) *= tr.data[j];
  return push(std::move(n));
}

Value Tape::relu(Value a) {
  Node n;
  n.op = Op::Relu;
  n.a = a.index;
  n.value = node(a).value;
  n.aux = Tensor::zeros(n.value.shape);
  for (int64_t i = 0; i < n.value.size(); ++i) {
    if (n.value.data[i] > 0.0) {
      n.aux.data[i] = 1.0;
    } else {
      n.value.data[i] = 0.0;
    }
  }
  return push(std::move(n));
}

Value Tape::tanh(Value a) {
  Node n;
  n.op = Op::Tanh;
  n.a = a.index;
  n.value = node(a).value;
  for (double& v : n.value.data) v = std::tanh(v);
  return push(std::move(n));
}

Value Tape::sigmoid(Value a) {
  Node n;
  n.op = Op::Sigmoid;
  n.a = a.index;
  n.value = node(a).value;
  for (double& v : n.value.data) v = 1.0 / (1.0 + std::exp(-v));
  return push(std::move(n));
}

Value Tape::exp(Value a) {
  Node n;
  n.op = Op::Exp;
  n.a = a.index;
  n.value = node(a).value;
  for (double& v : n.value.data) v = std::exp(v);
  return push(std::move(n));
}

Value Tape::log(Value a) {
  Node n;
  n.op = Op::Log;
  n.a = a.index;
  n.value = node(a).value;
  for (double& v : n.value.data) {
    CDR_REQUIRE(v > 0.0, "log of non-positive value ", v);
    v = std::log(v);
  }
  return push(std::move(n));
}

Value Tape::sqrt(Value a) {
  Node n;
  n.op = Op::Sqrt;
  n.a = a.index;
  n.value = node(a).value;
  for (double& v : n.value.data) {
    CDR_REQUIRE(v >= 0.0, "sqrt of negative value ", v);
    v = std::sqrt(v);
  }
  return push(std::move(n));
}

Value Tape::reciprocal(Value a) {
  Node n;
  n.op = Op::Reciprocal;
  n.a = a.index;
  n.value = node(a).value;
  for (double& v : n.value.data) {
    CDR_REQUIRE(v != 0.0, "reciprocal of zero");
    v = 1.0 / v;
  }
  return push(std::move(n));
}

Value Tape::conv2d(Value input, Value weight, int stride) {
  const Tensor& in = node(input).value;
  const Tensor& w = node(weight).value;
  CDR_REQUIRE(in.rank() == 4, "conv2d input must be [N,C,H,W], got ", shape_str(in.shape));
  CDR_REQUIRE(w.rank() == 4, "conv2d weight must be [F,C,kh,kw], got ", shape_str(w.shape));
  CDR_REQUIRE(stride >= 1, "conv2d stride must be >= 1, got ", stride);
  const int batch = in.dim(0), chans = in.dim(1), height = in.dim(2), width = in.dim(3);
  const int filters = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  CDR_REQUIRE(w.dim(1) == chans, "conv2d: weight expects ", w.dim(1), " channels, input has ",
              chans);
  CDR_REQUIRE(height >= kh && width >= kw, "conv2d: kernel ", kh, "x", kw,
              " larger than input ", height, "x", width);
  const int oh = (height - kh) / stride + 1;
  const int ow = (width - kw) / stride + 1;

  Node n;
  n.op = Op::Conv2d;
  n.a = input.index;
  n.b = weight.index;
  n.i0 = stride;
  n.value = Tensor::zeros({batch, filters, oh, ow});

  const auto in_at = [&](int ni, int ci, int yi, int xi) {
    return in.data[((static_cast<int64_t>(ni) * chans + ci) * height + yi) * width + xi];
  };
  for (int ni = 0; ni < batch; ++ni) {
    for (int f = 0; f < filters; ++f) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int ci = 0; ci < chans; ++ci) {
            for (int ky = 0; ky < kh; ++ky) {
              for (int kx = 0; kx < kw; ++kx) {
                acc += in_at(ni, ci, oy * stride + ky, ox * stride + kx) *
                       w.data[((static_cast<int64_t>(f) * chans + ci) * kh + ky) * kw + kx];
              }
            }
          }
          n.value.data[((static_cast<int64_t>(ni) * filters + f) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
  return push(std::move(n));
}

Value Tape::add_channel_bias(Value input, Value bias) {
  const Tensor& in = node(input).value;
  const Tensor& b = node(bias).value;
  CDR_REQUIRE(in.rank() == 4, "add_channel_bias input must be [N,F,H,W], got ",
              shape_str(in.shape));
  CDR_REQUIRE(b.rank() == 1 && b.dim(0) == in.dim(1), "add_channel_bias: want bias [",
              in.dim(1), "], got ", shape_str(b.shape));
  Node n;
  n.op = Op::AddChannelBias;
  n.a = input.index;
  n.b = bias.index;
  n.value = in;
  const int64_t plane = static_cast<int64_t>(in.dim(2)) * in.dim(3);
  for (int ni = 0; ni < in.dim(0); ++ni) {
    for (int f = 0; f < in.dim(1); ++f) {
      double* p = n.value.data.data() + (static_cast<int64_t>(ni) * in.dim(1) + f) * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] += b.data[f];
    }
  }
  return push(std::move(n));
}

Value Tape::reshape(Value a, const std::vector<int>& shape) {
  const Tensor& ta = node(a).value;
  CDR_REQUIRE(shape_size(shape) == ta.size(), "reshape: ", shape_str(ta.shape), " to ",
              shape_str(shape), " changes element count");
  Node n;
  n.op = Op::Reshape;
  n.a = a.index;
  n.value = Tensor{shape, ta.data};
  return push(std::move(n));
}

Value Tape::concat_cols(Value a, Value b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require_matrix(ta, "concat_cols");
  require_matrix(tb, "concat_cols");
  CDR_REQUIRE(ta.dim(0) == tb.dim(0), "concat_cols: row counts differ, ", shape_str(ta.shape),
              " vs ", shape_str(tb.shape));
  const int rows = ta.dim(0), ca = ta.dim(1), cb = tb.dim(1);
  Node n;
  n.op = Op::ConcatCols;
  n.a = a.index;
  n.b = b.index;
  n.i0 = ca;
  n.value = Tensor::zeros({rows, ca + cb});
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < ca; ++j) n.value.at(i, j) = ta.at(i, j);
    for (int j = 0; j < cb; ++j) n.value.at(i, ca + j) = tb.at(i, j);
  }
  return push(std::move(n));
}

Value Tape::slice_rows(Value a, int begin, int count) {
  const Tensor& ta = node(a).value;
  require_matrix(ta, "slice_rows");
  CDR_REQUIRE(begin >= 0 && count > 0 && begin + count <= ta.dim(0), "slice_rows: [", begin,
              ", ", begin + count, ") out of range for ", shape_str(ta.shape));
  Node n;
  n.op = Op::SliceRows;
  n.a = a.index;
  n.i0 = begin;
  n.i1 = count;
  const int cols = ta.dim(1);
  n.value = Tensor::zeros({count, cols});
  std::copy_n(ta.data.begin() + static_cast<int64_t>(begin) * cols,
              static_cast<int64_t>(count) * cols, n.value.data.begin());
  return push(std::move(n));
}

Value Tape::slice_cols(Value a, int begin, int count) {
  const Tensor& ta = node(a).value;
  require_matrix(ta, "slice_cols");
  CDR_REQUIRE(begin >= 0 && count > 0 && begin + count <= ta.dim(1), "slice_cols: [", begin,
              ", ", begin + count, ") out of range for ", shape_str(ta.shape));
  Node n;
  n.op = Op::SliceCols;
  n.a = a.index;
  n.i0 = begin;
  n.i1 = count;
  n.value = Tensor::zeros({ta.dim(0), count});
  for (int i = 0; i < ta.dim(0); ++i)
    for (int j = 0; j < count; ++j) n.value.at(i, j) = ta.at(i, begin + j);
  return push(std::move(n));
}

Value Tape::tile_rows(Value row, int count) {
  const Tensor& tr = node(row).value;
  CDR_REQUIRE(tr.rank() == 2 && tr.dim(0) == 1, "tile_rows expects [1,M], got ",
              shape_str(tr.shape));
  CDR_REQUIRE(count > 0, "tile_rows: count must be positive, got ", count);
  Node n;
  n.op = Op::TileRows;
  n.a = row.index;
  n.i0 = count;
  n.value = Tensor::zeros({count, tr.dim(1)});
  for (int i = 0; i < count; ++i)
    std::copy_n(tr.data.begin(), tr.dim(1), n.value.data.begin() + static_cast<int64_t>(i) * tr.dim(1));
  return push(std::move(n));
}

Value Tape::rowwise_sqnorm(Value a) {
  const Tensor& ta = node(a).value;
  require_matrix(ta, "rowwise_sqnorm");
  Node n;
  n.op = Op::RowwiseSqnorm;
  n.a = a.index;
  n.value = Tensor::zeros({ta.dim(0), 1});
  for (int i = 0; i < ta.dim(0); ++i) {
    double acc = 0.0;
    for (int j = 0; j < ta.dim(1); ++j) acc += ta.at(i, j) * ta.at(i, j);
    n.value.data[i] = acc;
  }
  return push(std::move(n));
}

Value Tape::sum(Value a) {
  Node n;
  n.op = Op::Sum;
  n.a = a.index;
  double acc = 0.0;
  for (double v : node(a).value.data) acc += v;
  n.value = Tensor::scalar(acc);
  return push(std::move(n));
}

Value Tape::mean(Value a) {
  const Tensor& ta = node(a).value;
  CDR_REQUIRE(ta.size() > 0, "mean of empty tensor");
  Node n;
  n.op = Op::Mean;
  n.a = a.index;
  double acc = 0.0;
  for (double v : ta.data) acc += v;
  n.value = Tensor::scalar(acc / static_cast<double>(ta.size()));
  return push(std::move(n));
}

Value Tape::info_nce_rows(Value scores) {
  const Tensor& s = node(scores).value;
  require_matrix(s, "info_nce_rows");
  CDR_REQUIRE(s.dim(0) == s.dim(1), "info_nce_rows expects a square score matrix, got ",
              shape_str(s.shape));
  const int n_rows = s.dim(0);
  CDR_REQUIRE(n_rows >= 1, "info_nce_rows needs at least 1 row, got ", n_rows);

  Node n;
  n.op = Op::InfoNceRows;
  n.a = scores.index;
  n.aux = Tensor::zeros(s.shape);  // row softmax, reused by backward
  double total = 0.0;
  for (int i = 0; i < n_rows; ++i) {
    double row_max = s.at(i, 0);
    for (int j = 1; j < n_rows; ++j) row_max = std::max(row_max, s.at(i, j));
    double denom = 0.0;
    for (int j = 0; j < n_rows; ++j) {
      const double e = std::exp(s.at(i, j) - row_max);
      n.aux.at(i, j) = e;
      denom += e;
    }
    for (int j = 0; j < n_rows; ++j) n.aux.at(i, j) /= denom;
    total += std::log(denom) - (s.at(i, i) - row_max);
  }
  n.value = Tensor::scalar(total / n_rows);
  return push(std::move(n));
}

const Tensor& Tape::value(Value v) const { return node(v).value; }

const Tensor& Tape::grad(Value v) const {
  CDR_REQUIRE(ran_backward_, "grad requested before backward()");
  return node(v).grad;
}

double Tape::scalar(Value v) const {
  const Tensor& t = node(v).value;
  CDR_REQUIRE(t.size() == 1, "scalar() on tensor of shape ", shape_str(t.shape));
  return t.data[0];
}

void Tape::backward(Value loss) {
  const Tensor& lt = node(loss).value;
  CDR_REQUIRE(lt.size() == 1, "backward expects a scalar loss, got shape ",
              shape_str(lt.shape));
  for (Node& n : nodes_) n.grad = Tensor::zeros(n.value.shape);
  node(loss).grad.data[0] = 1.0;
  for (int i = loss.index; i >= 0; --i) backward_node(i);
  ran_backward_ = true;
}

void Tape::backward_node(int idx) {
  Node& n = nodes_[idx];
  const Tensor& g = n.grad;
  bool all_zero = true;
  for (double v : g.data) {
    if (v != 0.0) { all_zero = false; break; }
  }
  if (all_zero) return;

  Tensor* da = n.a >= 0 ? &nodes_[n.a].grad : nullptr;
  Tensor* db = n.b >= 0 ? &nodes_[n.b].grad : nullptr;
  const Tensor* va = n.a >= 0 ? &nodes_[n.a].value : nullptr;
  const Tensor* vb = n.b >= 0 ? &nodes_[n.b].value : nullptr;

  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Add:
      for (int64_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i];
      for (int64_t i = 0; i < g.size(); ++i) db->data[i] += g.data[i];
      break;
    case Op::Sub:
      for (int64_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i];
      for (int64_t i = 0; i < g.size(); ++i) db->data[i] -= g.data[i];
      break;
    case Op::Mul:
      for (int64_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i] * vb->data[i];
      for (int64_t i = 0; i < g.size(); ++i) db->data[i] += g.data[i] * va->data[i];
      break;
    case Op::Scale:
      for (int64_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i] * n.c;
      break;
    case Op::AddScalar:
      for (int64_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i];
      break;
    case Op::MatMul: {
      const int rows = va->dim(0), inner = va->dim(1), cols = n.value.dim(1);
      if (n.flag) {
        // C = A B^T: dA += G B, dB += G^T A
        for (int i = 0; i < rows; ++i)
          for (int k = 0; k < inner; ++k) {
            double acc = 0.0;
            for (int j = 0; j < cols; ++j) acc += g.at(i, j) * vb->at(j, k);
            da->at(i, k) += acc;
          }
        for (int j = 0; j < cols; ++j)
          for (int k = 0; k < inner; ++k) {
            double acc = 0.0;
            for (int i = 0; i < rows; ++i) acc += g.at(i, j) * va->at(i, k);
            db->at(j, k) += acc;
          }
      } else {
        // C = A B: dA += G B^T, dB += A^T G
        for (int i = 0; i < rows; ++i)
          for (int k = 0; k < inner; ++k) {
            double acc = 0.0;
            for (int j = 0; j < cols; ++j) acc += g.at(i, j) * vb->at(k, j);
            da->at(i, k) += acc;
          }
        for (int k = 0; k < inner; ++k)
          for (int j = 0; j < cols; ++j) {
            double acc = 0.0;
            for (int i = 0; i < rows; ++i) acc += va->at(i, k) * g.at(i, j);
            db->at(k, j) += acc;
          }
      }
      break;
    }
    case Op::AddRow:
      for (int64_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i];
      for (int i = 0; i < n.value.dim(0); ++i)
        for (int j = 0; j < n.value.dim(1); ++j) db->data[j] += g.at(i, j);
      break;
    case Op::AddCol:
      for (int64_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i];
      for (int i = 0; i < n.value.dim(0); ++i)
        for (int j = 0; j < n.value.dim(1); ++j) db->data[i] += g.at(i, j);
      break;
    case Op::MulCol:
      for (int i = 0; i < n.value.dim(0); ++i)
        for (int j = 0; j < n.value.dim(1); ++j) {
          da->at(i, j) += g.at(i, j) * vb->data[i];
          db->data[i] += g.at(i, j) * va->at(i, j);
        }
      break;
    case Op::MulRow:
      for (int i = 0; i < n.value.dim(0); ++i)
        for (int j = 0; j < n.value.dim(1); ++j) {
          da->at(i, j) += g.at(i, j) * vb->data[j];
          db->data[j] += g.at(i, j) * va->at(i, j);
        }
      break;
    case Op::Relu:
      for (int64_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i] * n.aux.data[i];
      break;
    case Op::Tanh:
      for (int64_t i = 0; i < g.size(); ++i)
        da->data[i] += g.data[i] * (1.0 - n.value.data[i] * n.value.data[i]);
      break;
    case Op::Sigmoid:
      for (int64_t i = 0; i < g.size(); ++i)
        da->data[i] += g.data[i] * n.value.data[i] * (1.0 - n.value.data[i]);
      break;
    case Op::Exp:
      for (int64_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i] * n.value.data[i];
      break;
    case Op::Log:
      for (int64_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i] / va->data[i];
      break;
    case Op::Sqrt:
      for (int64_t i = 0; i < g.size(); ++i)
        da->data[i] += g.data[i] / (2.0 * n.value.data[i]);
      break;
    case Op::Reciprocal:
      for (int64_t i = 0; i < g.size(); ++i)
        da->data[i] -= g.data[i] * n.value.data[i] * n.value.data[i];
      break;
    case Op::Conv2d: {
      const int stride = n.i0;
      const int batch = va->dim(0), chans = va->dim(1), height = va->dim(2), width = va->dim(3);
      const int filters = vb->dim(0), kh = vb->dim(2), kw = vb->dim(3);
      const int oh = n.value.dim(2), ow = n.value.dim(3);
      for (int ni = 0; ni < batch; ++ni) {
        for (int f = 0; f < filters; ++f) {
          for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
              const double go =
                  g.data[((static_cast<int64_t>(ni) * filters + f) * oh + oy) * ow + ox];
              if (go == 0.0) continue;
              for (int ci = 0; ci < chans; ++ci) {
                for (int ky = 0; ky < kh; ++ky) {
                  for (int kx = 0; kx < kw; ++kx) {
                    const int64_t in_idx =
                        ((static_cast<int64_t>(ni) * chans + ci) * height + oy * stride + ky) *
                            width +
                        ox * stride + kx;
                    const int64_t w_idx =
                        ((static_cast<int64_t>(f) * chans + ci) * kh + ky) * kw + kx;
                    da->data[in_idx] += go * vb->data[w_idx];
                    db->data[w_idx] += go * va->data[in_idx];
                  }
                }
              }
            }
          }
        }
      }
      break;
    }
    case Op::AddChannelBias: {
      const int64_t plane = static_cast<int64_t>(n.value.dim(2)) * n.value.dim(3);
      for (int64_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i];
      for (int ni = 0; ni < n.value.dim(0); ++ni)
        for (int f = 0; f < n.value.dim(1); ++f) {
          const double* p = g.data.data() + (static_cast<int64_t>(ni) * n.value.dim(1) + f) * plane;
          double acc = 0.0;
          for (int64_t i = 0; i < plane; ++i) acc += p[i];
          db->data[f] += acc;
        }
      break;
    }
    case Op::Reshape:
      for (int64_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i];
      break;
    case Op::ConcatCols: {
      const int rows = n.value.dim(0), ca = n.i0, cb = n.value.dim(1) - n.i0;
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < ca; ++j) da->at(i, j) += g.at(i, j);
        for (int j = 0; j < cb; ++j) db->at(i, j) += g.at(i, ca + j);
      }
      break;
    }
    case Op::SliceRows: {
      const int cols = va->dim(1);
      for (int i = 0; i < n.i1; ++i)
        for (int j = 0; j < cols; ++j) da->at(n.i0 + i, j) += g.at(i, j);
      break;
    }
    case Op::SliceCols:
      for (int i = 0; i < n.value.dim(0); ++i)
        for (int j = 0; j < n.i1; ++j) da->at(i, n.i0 + j) += g.at(i, j);
      break;
    case Op::TileRows:
      for (int i = 0; i < n.i0; ++i)
        for (int j = 0; j < n.value.dim(1); ++j) da->data[j] += g.at(i, j);
      break;
    case Op::RowwiseSqnorm:
      for (int i = 0; i < va->dim(0); ++i)
        for (int j = 0; j < va->dim(1); ++j) da->at(i, j) += 2.0 * va->at(i, j) * g.data[i];
      break;
    case Op::Sum:
      for (int64_t i = 0; i < da->size(); ++i) da->data[i] += g.data[0];
      break;
    case Op::Mean: {
      const double c = g.data[0] / static_cast<double>(da->size());
      for (int64_t i = 0; i < da->size(); ++i) da->data[i] += c;
      break;
    }
    case Op::InfoNceRows: {
      const int rows = va->dim(0);
      const double c = g.data[0] / rows;
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < rows; ++j)
          da->at(i, j) += c * (n.aux.at(i, j) - (i == j ? 1.0 : 0.0));
      break;
    }
  }
}

bool Tape::has_grad(const std::string& param_name) const {
  return ran_backward_ && param_nodes_.count(param_name) != 0;
}

const Tensor& Tape::param_grad(const std::string& param_name) const {
  CDR_REQUIRE(ran_backward_, "param_grad requested before backward()");
  auto it = param_nodes_.find(param_name);
  CDR_REQUIRE(it != param_nodes_.end(), "parameter ", param_name, " not on tape");
  return nodes_[it->second].grad;
}

std::vector<std::string> Tape::touched_params() const {
  std::vector<std::string> out;
  out.reserve(param_nodes_.size());
  for (const auto& [name, idx] : param_nodes_) out.push_back(name);
  return out;
}

std::vector<uint8_t> Tape::relu_signature() const {
  std::vector<uint8_t> sig;
  for (const Node& n : nodes_) {
    if (n.op != Op::Relu) continue;
    for (double m : n.aux.data) sig.push_back(m > 0.0 ? 1 : 0);
  }
  return sig;
}

int64_t adam_step(ParamStore& store, const Tape& tape, const AdamConfig& config) {
  const int64_t step = store.adam_step() + 1;
  store.set_adam_step(step);
  const double corr1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double corr2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));

  for (const std::string& name : tape.touched_params()) {
    const Tensor& g = tape.param_grad(name);
    Tensor& value = store.value(name);
    Tensor& m = store.adam_m(name);
    Tensor& v = store.adam_v(name);
    for (int64_t i = 0; i < value.size(); ++i) {
      m.data[i] = config.beta1 * m.data[i] + (1.0 - config.beta1) * g.data[i];
      v.data[i] = config.beta2 * v.data[i] + (1.0 - config.beta2) * g.data[i] * g.data[i];
      const double m_hat = m.data[i] / corr1;
      const double v_hat = v.data[i] / corr2;
      value.data[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
  return step;
}

GradCheckResult grad_check(ParamStore& store,
                           const std::function<Value(Tape&)>& build_loss, uint64_t seed,
                           int sample_count, double h) {
  CDR_REQUIRE(sample_count > 0 && h > 0.0, "grad_check: bad sample_count/h");

  Tape tape(store);
  Value loss = build_loss(tape);
  tape.backward(loss);

  const std::vector<std::string> names = tape.touched_params();
  CDR_REQUIRE(!names.empty(), "grad_check: loss touches no parameters");
  std::vector<int64_t> offsets{0};
  for (const std::string& name : names)
    offsets.push_back(offsets.back() + store.value(name).size());
  const int64_t total = offsets.back();

  // Sample distinct coordinates with a partial Fisher-Yates pass.
  std::vector<int64_t> coords(total);
  std::iota(coords.begin(), coords.end(), 0);
  Rng rng(derive_seed(seed, "grad_check"));
  const int64_t picks = std::min<int64_t>(sample_count, total);
  for (int64_t i = 0; i < picks; ++i) {
    const int64_t j = i + rng.uniform_int(static_cast<int>(total - i));
    std::swap(coords[i], coords[j]);
  }

  GradCheckResult result;
  for (int64_t s = 0; s < picks; ++s) {
    const int64_t flat = coords[s];
    const auto which =
        std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1;
    const std::string& name = names[which];
    const int64_t idx = flat - offsets[which];

    double& coord = store.value(name).data[idx];
    const double orig = coord;

    coord = orig + h;
    Tape plus(store);
    const double loss_plus = plus.scalar(build_loss(plus));
    const std::vector<uint8_t> sig_plus = plus.relu_signature();

    coord = orig - h;
    Tape minus(store);
    const double loss_minus = minus.scalar(build_loss(minus));
    const std::vector<uint8_t> sig_minus = minus.relu_signature();

    coord = orig;

    if (sig_plus != sig_minus) {
      // A relu kink sits inside the perturbation interval; the finite
      // difference is not comparing the same smooth piece.
      ++result.skipped;
      continue;
    }

    const double fd = (loss_plus - loss_minus) / (2.0 * h);
    const double analytic = tape.param_grad(name).data[idx];
    const double denom = std::max({std::fabs(fd), std::fabs(analytic), 1e-6});
    const double rel = std::fabs(fd - analytic) / denom;
    ++result.checked;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_param = name;
      result.worst_coord = idx;
    }
  }
  return result;
}

}  // namespace cdr
