#pragma once

#include <string>
#include <vector>

#include "cdr/autodiff.hpp"

namespace cdr {

// All model widths in one place; every loss and the planner read the latent
// dimension from here.
struct ModelDims {
  int resolution = 32;
  int latent_dim = 8;
  int conv1_channels = 8;
  int conv2_channels = 16;
  int fc_hidden = 64;
  int action_hidden = 64;
  int action_code_dim = 16;
  int trunk_hidden = 64;
  int gru_hidden = 32;
  int horizon = 6;      // K
  int context_len = 4;  // frames fed to the GRU before predicting

  void validate() const;
};

// Short architecture tag stored in checkpoint manifests.
std::string arch_string(const ModelDims& dims, const std::string& kind);

// Image encoder f: [N,3,H,W] -> [N,latent_dim]. Two stride-2 valid
// convolutions with relu, then two fully connected layers.
Value encode(Tape& tape, Value images, const ModelDims& dims);

// Action-conditioned forward model g: (z [N,latent], actions [N,2]) ->
// [N,latent]. The trunk output is added to z, so a zero trunk is the
// identity.
Value predict_next(Tape& tape, Value z, Value actions, const ModelDims& dims);

// GRU over an encoded latent sequence. z_seq is [T*N, latent] time-major
// (rows t*N..t*N+N-1 hold step t). Returns K = dims.horizon head outputs,
// each [N, latent].
std::vector<Value> predict_multistep(Tape& tape, Value z_seq, int seq_len, int batch,
                                     const ModelDims& dims);

// Inference conveniences: run the nets on plain tensors through a scratch
// tape, forward only. Chunked so big pools do not hold one huge graph.
Tensor encode_images(ParamStore& store, const ModelDims& dims, const Tensor& images,
                     int chunk = 256);
Tensor predict_next_latents(ParamStore& store, const ModelDims& dims, const Tensor& z,
                            const Tensor& actions);

// Separable-feature encoder: sigma(phi_x(x) Wx^T + phi_e(e) We^T + b) on
// precomputed features. With clamp_we the We term is omitted entirely, which
// is the "W_e = 0 with free bias" restriction.
struct SeparableEncoder {
  std::string prefix = "sep";  // parameter names: <prefix>.wx/.we/.b
  int feature_dim = 6;
  int out_dim = 2;
  bool tanh_out = false;
  bool clamp_we = false;
};

Value separable_forward(Tape& tape, const SeparableEncoder& enc, Value phi_x, Value phi_e);

}  // namespace cdr
