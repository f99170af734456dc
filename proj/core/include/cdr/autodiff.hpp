#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cdr/rng.hpp"
#include "cdr/tensor.hpp"

namespace cdr {

enum class Init : uint8_t { Zero, GlorotUniform };

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Persistent learnable state. Parameter values (and Adam moments) live here
// across tape rebuilds; a Tape only borrows them for one forward/backward.
class ParamStore {
 public:
  explicit ParamStore(uint64_t init_seed) : init_seed_(init_seed) {}

  // Creates on first use: Glorot uniform is seeded by the parameter name, so
  // initialization does not depend on creation order.
  Tensor& get_or_create(const std::string& name, const std::vector<int>& shape, Init init);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  void set(const std::string& name, Tensor value);

  std::vector<std::string> names() const;
  size_t size() const { return entries_.size(); }
  int64_t total_coords() const;

  uint64_t init_seed() const { return init_seed_; }
  int64_t adam_step() const { return adam_step_; }
  void set_adam_step(int64_t step) { adam_step_ = step; }
  Tensor& adam_m(const std::string& name);
  Tensor& adam_v(const std::string& name);
  const Tensor& adam_m(const std::string& name) const;  // requires existing state
  const Tensor& adam_v(const std::string& name) const;
  void set_adam_state(const std::string& name, Tensor m, Tensor v);
  bool has_adam_state(const std::string& name) const;

 private:
  struct Entry {
    Tensor value;
    Tensor m, v;  // sized lazily by the optimizer
  };
  std::map<std::string, Entry> entries_;
  uint64_t init_seed_;
  int64_t adam_step_ = 0;
};

struct Value {
  int index = -1;
  bool valid() const { return index >= 0; }
};

// Eager reverse-mode tape over dense double tensors. Every op validates its
// shapes up front and computes its result immediately; backward() then walks
// the nodes in reverse creation order, which is a fixed, deterministic
// schedule. Calling param() twice with one name returns the same node, so
// shared weights accumulate gradient naturally.
class Tape {
 public:
  explicit Tape(ParamStore& store) : store_(&store) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value input(Tensor t);
  Value constant(Tensor t);
  Value param(const std::string& name, const std::vector<int>& shape, Init init);

  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value scale(Value a, double c);
  Value add_scalar(Value a, double c);

  // [N,K] x [K,M] -> [N,M]; with transpose_b, b is [M,K].
  Value matmul(Value a, Value b, bool transpose_b = false);
  Value add_row(Value m, Value row);  // row [1,M] broadcast over rows of [N,M]
  Value add_col(Value m, Value col);  // col [N,1] broadcast over columns
  Value mul_col(Value m, Value col);
  Value mul_row(Value m, Value row);

  Value relu(Value a);
  Value tanh(Value a);
  Value sigmoid(Value a);
  Value exp(Value a);
  Value log(Value a);
  Value sqrt(Value a);
  Value reciprocal(Value a);

  // Valid convolution, no padding: input [N,C,H,W], weight [F,C,kh,kw].
  Value conv2d(Value input, Value weight, int stride);
  Value add_channel_bias(Value input, Value bias);  // input [N,F,H,W], bias [F]

  Value reshape(Value a, const std::vector<int>& shape);
  Value concat_cols(Value a, Value b);
  Value slice_rows(Value a, int begin, int count);
  Value slice_cols(Value a, int begin, int count);
  Value tile_rows(Value row, int count);  // [1,M] -> [count,M]

  Value rowwise_sqnorm(Value a);  // [N,M] -> [N,1]
  Value sum(Value a);             // -> [1]
  Value mean(Value a);            // -> [1]

  // Scores [N,N] -> scalar mean_i -log softmax_row_i(s)_i, computed with
  // row-max shifts so huge scores stay finite.
  Value info_nce_rows(Value scores);

  const Tensor& value(Value v) const;
  const Tensor& grad(Value v) const;
  double scalar(Value v) const;

  void backward(Value loss);
  bool has_grad(const std::string& param_name) const;
  const Tensor& param_grad(const std::string& param_name) const;
  std::vector<std::string> touched_params() const;

  // Concatenated relu activation masks in node order; two runs that disagree
  // crossed a kink between them.
  std::vector<uint8_t> relu_signature() const;

  size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : uint8_t {
    Leaf, Add, Sub, Mul, Scale, AddScalar, MatMul, AddRow, AddCol, MulCol, MulRow,
    Relu, Tanh, Sigmoid, Exp, Log, Sqrt, Reciprocal, Conv2d, AddChannelBias, Reshape, ConcatCols,
    SliceRows, SliceCols, TileRows, RowwiseSqnorm, Sum, Mean, InfoNceRows,
  };
  struct Node {
    Op op = Op::Leaf;
    int a = -1, b = -1;
    int i0 = 0, i1 = 0;   // stride / slice begin / tile count, slice count
    bool flag = false;    // matmul transpose_b
    double c = 0.0;       // scale / add_scalar constant
    Tensor value;
    Tensor grad;
    Tensor aux;           // relu mask, softmax probabilities
    std::string param_name;
  };

  Value push(Node node);
  Node& node(Value v);
  const Node& node(Value v) const;
  void backward_node(int i);

  std::vector<Node> nodes_;
  std::map<std::string, int> param_nodes_;
  ParamStore* store_;
  bool ran_backward_ = false;
};

// One Adam update over every parameter the tape touched, in name order.
// Untouched parameters are left alone. Returns the global step after the
// update.
int64_t adam_step(ParamStore& store, const Tape& tape, const AdamConfig& config);

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  int skipped = 0;  // coordinates whose perturbation crossed a relu kink
  std::string worst_param;
  int64_t worst_coord = -1;
};

// Central-difference check of d(loss)/d(param) for a sampled subset of
// coordinates. build_loss must rebuild the same scalar loss from the store on
// every call.
GradCheckResult grad_check(ParamStore& store,
                           const std::function<Value(Tape&)>& build_loss,
                           uint64_t seed, int sample_count = 200, double h = 1e-5);

}  // namespace cdr
