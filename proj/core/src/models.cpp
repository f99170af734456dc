#include "cdr/models.hpp"

#include <algorithm>

#include "cdr/util.hpp"

namespace cdr {
namespace {

Value fully_connected(Tape& t, Value x, const std::string& prefix, int in, int out) {
  Value w = t.param(prefix + ".w", {in, out}, Init::GlorotUniform);
  Value b = t.param(prefix + ".b", {1, out}, Init::Zero);
  return t.add_row(t.matmul(x, w), b);
}

Value linear_no_bias(Tape& t, Value x, const std::string& name, int in, int out) {
  return t.matmul(x, t.param(name, {in, out}, Init::GlorotUniform));
}

}  // namespace

void ModelDims::validate() const {
  CDR_REQUIRE(resolution >= 8, "model resolution too small: ", resolution);
  CDR_REQUIRE(latent_dim > 0 && conv1_channels > 0 && conv2_channels > 0 && fc_hidden > 0 &&
                  action_hidden > 0 && action_code_dim > 0 && trunk_hidden > 0 &&
                  gru_hidden > 0 && horizon > 0 && context_len > 0,
              "model dims must all be positive");
}

std::string arch_string(const ModelDims& d, const std::string& kind) {
  return str_cat("cdr-", kind, "-r", d.resolution, "-z", d.latent_dim, "-c", d.conv1_channels,
                 ".", d.conv2_channels, "-fc", d.fc_hidden, "-k", d.horizon);
}

Value encode(Tape& t, Value images, const ModelDims& dims) {
  const Tensor& in = t.value(images);
  CDR_REQUIRE(in.rank() == 4 && in.dim(1) == 3, "encode expects [N,3,H,W], got ",
              shape_str(in.shape));
  CDR_REQUIRE(in.dim(2) == dims.resolution && in.dim(3) == dims.resolution,
              "encode: configured resolution is ", dims.resolution, ", image is ", in.dim(2),
              "x", in.dim(3));

  Value x = t.conv2d(images, t.param("enc.conv1.w", {dims.conv1_channels, 3, 3, 3},
                                     Init::GlorotUniform), 2);
  x = t.add_channel_bias(x, t.param("enc.conv1.b", {dims.conv1_channels}, Init::Zero));
  x = t.relu(x);
  x = t.conv2d(x, t.param("enc.conv2.w", {dims.conv2_channels, dims.conv1_channels, 3, 3},
                          Init::GlorotUniform), 2);
  x = t.add_channel_bias(x, t.param("enc.conv2.b", {dims.conv2_channels}, Init::Zero));
  x = t.relu(x);

  const Tensor& conv_out = t.value(x);
  const int flat = conv_out.dim(1) * conv_out.dim(2) * conv_out.dim(3);
  x = t.reshape(x, {conv_out.dim(0), flat});
  x = t.relu(fully_connected(t, x, "enc.fc1", flat, dims.fc_hidden));
  return fully_connected(t, x, "enc.fc2", dims.fc_hidden, dims.latent_dim);
}

Value predict_next(Tape& t, Value z, Value actions, const ModelDims& dims) {
  const Tensor& tz = t.value(z);
  const Tensor& ta = t.value(actions);
  CDR_REQUIRE(tz.rank() == 2 && tz.dim(1) == dims.latent_dim, "predict_next: z must be [N,",
              dims.latent_dim, "], got ", shape_str(tz.shape));
  CDR_REQUIRE(ta.rank() == 2 && ta.dim(1) == 2 && ta.dim(0) == tz.dim(0),
              "predict_next: actions must be [", tz.dim(0), ",2], got ", shape_str(ta.shape));

  Value code = t.tanh(fully_connected(t, actions, "fwd.act1", 2, dims.action_hidden));
  code = t.tanh(fully_connected(t, code, "fwd.act2", dims.action_hidden, dims.action_code_dim));

  Value h = t.concat_cols(z, code);
  h = t.relu(fully_connected(t, h, "fwd.trunk1", dims.latent_dim + dims.action_code_dim,
                             dims.trunk_hidden));
  h = t.relu(fully_connected(t, h, "fwd.trunk2", dims.trunk_hidden, dims.trunk_hidden));
  Value delta = fully_connected(t, h, "fwd.trunk3", dims.trunk_hidden, dims.latent_dim);
  return t.add(z, delta);
}

std::vector<Value> predict_multistep(Tape& t, Value z_seq, int seq_len, int batch,
                                     const ModelDims& dims) {
  const Tensor& tz = t.value(z_seq);
  CDR_REQUIRE(seq_len >= 1, "predict_multistep: sequence length must be >= 1");
  CDR_REQUIRE(tz.rank() == 2 && tz.dim(1) == dims.latent_dim &&
                  tz.dim(0) == seq_len * batch,
              "predict_multistep: z_seq must be [", seq_len * batch, ",", dims.latent_dim,
              "], got ", shape_str(tz.shape));

  const int d = dims.latent_dim, hid = dims.gru_hidden;
  Value wxr = t.param("gru.wxr", {d, hid}, Init::GlorotUniform);
  Value whr = t.param("gru.whr", {hid, hid}, Init::GlorotUniform);
  Value br = t.param("gru.br", {1, hid}, Init::Zero);
  Value wxu = t.param("gru.wxu", {d, hid}, Init::GlorotUniform);
  Value whu = t.param("gru.whu", {hid, hid}, Init::GlorotUniform);
  Value bu = t.param("gru.bu", {1, hid}, Init::Zero);
  Value wxc = t.param("gru.wxc", {d, hid}, Init::GlorotUniform);
  Value whc = t.param("gru.whc", {hid, hid}, Init::GlorotUniform);
  Value bc = t.param("gru.bc", {1, hid}, Init::Zero);

  Value h = t.constant(Tensor::zeros({batch, hid}));
  for (int step = 0; step < seq_len; ++step) {
    Value x = t.slice_rows(z_seq, step * batch, batch);
    Value r = t.sigmoid(t.add_row(t.add(t.matmul(x, wxr), t.matmul(h, whr)), br));
    Value u = t.sigmoid(t.add_row(t.add(t.matmul(x, wxu), t.matmul(h, whu)), bu));
    Value c = t.tanh(t.add_row(t.add(t.matmul(x, wxc), t.matmul(t.mul(r, h), whc)), bc));
    Value keep = t.mul(u, h);
    Value blend = t.mul(t.add_scalar(t.scale(u, -1.0), 1.0), c);
    h = t.add(keep, blend);
  }

  std::vector<Value> preds;
  preds.reserve(static_cast<size_t>(dims.horizon));
  for (int k = 0; k < dims.horizon; ++k) {
    preds.push_back(linear_no_bias(t, h, str_cat("gru.head", k, ".w"), hid, d));
  }
  return preds;
}

Tensor encode_images(ParamStore& store, const ModelDims& dims, const Tensor& images,
                     int chunk) {
  CDR_REQUIRE(images.rank() == 4, "encode_images expects [N,3,H,W], got ",
              shape_str(images.shape));
  CDR_REQUIRE(chunk > 0, "encode_images: chunk must be positive");
  const int n = images.dim(0);
  Tensor out = Tensor::zeros({n, dims.latent_dim});
  const int64_t frame = static_cast<int64_t>(images.dim(1)) * images.dim(2) * images.dim(3);

  for (int begin = 0; begin < n; begin += chunk) {
    const int count = std::min(chunk, n - begin);
    Tensor part({count, images.dim(1), images.dim(2), images.dim(3)},
                std::vector<double>(images.data.begin() + begin * frame,
                                    images.data.begin() + (begin + count) * frame));
    Tape tape(store);
    Value z = encode(tape, tape.input(std::move(part)), dims);
    const Tensor& tz = tape.value(z);
    std::copy(tz.data.begin(), tz.data.end(),
              out.data.begin() + static_cast<int64_t>(begin) * dims.latent_dim);
  }
  return out;
}

Tensor predict_next_latents(ParamStore& store, const ModelDims& dims, const Tensor& z,
                            const Tensor& actions) {
  Tape tape(store);
  Value out = predict_next(tape, tape.input(z), tape.input(actions), dims);
  return tape.value(out);
}

Value separable_forward(Tape& t, const SeparableEncoder& enc, Value phi_x, Value phi_e) {
  const Tensor& px = t.value(phi_x);
  const Tensor& pe = t.value(phi_e);
  CDR_REQUIRE(px.rank() == 2 && px.dim(1) == enc.feature_dim, "phi_x must be [N,",
              enc.feature_dim, "], got ", shape_str(px.shape));
  CDR_REQUIRE(pe.rank() == 2 && pe.dim(1) == enc.feature_dim, "phi_e must be [N,",
              enc.feature_dim, "], got ", shape_str(pe.shape));

  const Value wx = t.param(enc.prefix + ".wx", {enc.out_dim, enc.feature_dim},
                           Init::GlorotUniform);
  Value out = t.matmul(phi_x, wx, /*transpose_b=*/true);
  if (!enc.clamp_we) {
    const Value we = t.param(enc.prefix + ".we", {enc.out_dim, enc.feature_dim},
                             Init::GlorotUniform);
    out = t.add(out, t.matmul(phi_e, we, /*transpose_b=*/true));
  }
  out = t.add_row(out, t.param(enc.prefix + ".b", {1, enc.out_dim}, Init::Zero));
  return enc.tanh_out ? t.tanh(out) : out;
}

}  // namespace cdr
