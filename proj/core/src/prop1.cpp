#include "cdr/prop1.hpp"

#include <algorithm>
#include <map>
#include <cmath>
#include <cstdio>

#include "cdr/contrastive.hpp"
#include "cdr/models.hpp"
#include "cdr/util.hpp"

namespace cdr {
namespace {

constexpr int kInputDim = 4;    // x and e dimensionality
constexpr int kFeatureDim = 4;  // phi output width
constexpr int kTargetDim = 2;   // y dimensionality
constexpr double kLabelNoiseStd = 0.1;
constexpr double kMapScale = 1.2;

// Fixed per-trial problem: feature maps and the generating parameters.
struct Setup {
  Tensor map_x, map_e;        // [kFeatureDim, kInputDim]
  Tensor wx_true, we_true;    // [kTargetDim, kFeatureDim]
  Tensor b_true;              // [1, kTargetDim]
  bool dependent = false;
};

struct SyntheticBatch {
  Tensor phi_x, phi_e;  // [N, kFeatureDim]
  Tensor y;             // [N, kTargetDim]
};

Tensor random_matrix(Rng& rng, int rows, int cols) {
  Tensor t({rows, cols});
  for (double& v : t.data) v = rng.normal();
  return t;
}

// Random rotation, scaled. Orthogonal rows keep the tanh features away from
// collinearity; nearly dependent features would leave weight directions that
// the gradient cannot reach within any reasonable step budget.
Tensor random_feature_map(Rng& rng) {
  Tensor m = random_matrix(rng, kFeatureDim, kInputDim);
  for (int r = 0; r < kFeatureDim; ++r) {
    for (int p = 0; p < r; ++p) {
      double proj = 0.0;
      for (int c = 0; c < kInputDim; ++c) proj += m.at(r, c) * m.at(p, c);
      for (int c = 0; c < kInputDim; ++c) m.at(r, c) -= proj * m.at(p, c);
    }
    double norm = 0.0;
    for (int c = 0; c < kInputDim; ++c) norm += m.at(r, c) * m.at(r, c);
    norm = std::sqrt(norm);
    for (int c = 0; c < kInputDim; ++c) m.at(r, c) *= kMapScale / norm;
  }
  return m;
}

Setup make_setup(uint64_t trial_seed, bool dependent) {
  Rng rng(derive_seed(trial_seed, "setup"));
  Setup s;
  s.map_x = random_feature_map(rng);
  s.map_e = random_feature_map(rng);
  s.wx_true = random_matrix(rng, kTargetDim, kFeatureDim);
  s.we_true = random_matrix(rng, kTargetDim, kFeatureDim);
  s.b_true = random_matrix(rng, 1, kTargetDim);
  s.dependent = dependent;
  return s;
}

// phi(v) = tanh(M v) applied row-wise.
Tensor features(const Tensor& inputs, const Tensor& map) {
  const int n = inputs.dim(0);
  Tensor out({n, kFeatureDim});
  for (int i = 0; i < n; ++i)
    for (int f = 0; f < kFeatureDim; ++f) {
      double acc = 0.0;
      for (int k = 0; k < kInputDim; ++k) acc += map.at(f, k) * inputs.at(i, k);
      out.at(i, f) = std::tanh(acc);
    }
  return out;
}

SyntheticBatch draw_batch(const Setup& s, Rng& rng, int n) {
  Tensor x({n, kInputDim}), e({n, kInputDim});
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  for (double& v : e.data) v = rng.uniform(-1.0, 1.0);

  SyntheticBatch batch;
  batch.phi_x = features(x, s.map_x);
  batch.phi_e = features(e, s.map_e);
  batch.y = Tensor({n, kTargetDim});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < kTargetDim; ++j) {
      double acc = s.b_true.at(0, j);
      for (int f = 0; f < kFeatureDim; ++f) {
        acc += s.wx_true.at(j, f) * batch.phi_x.at(i, f);
        if (s.dependent) acc += s.we_true.at(j, f) * batch.phi_e.at(i, f);
      }
      batch.y.at(i, j) = acc + kLabelNoiseStd * rng.normal();
    }
  return batch;
}

Value batch_loss(Tape& tape, const SeparableEncoder& enc, const SyntheticBatch& batch,
                 bool squared_error) {
  const Value phi_x = tape.input(batch.phi_x);
  const Value phi_e = tape.input(batch.phi_e);
  const Value y = tape.input(batch.y);
  const Value f = separable_forward(tape, enc, phi_x, phi_e);
  if (squared_error) {
    const Value diff = tape.sub(f, y);
    return tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / batch.y.dim(0));
  }
  return contrastive_loss_graph(tape, f, y, SimilarityKind::NegL2);
}

// Constant for the first half, then linear decay to zero; lets the weights
// settle instead of jittering around the optimum at full step size.
double lr_at(double base, int step, int total) {
  const int half = total / 2;
  if (step < half || total <= 1) return base;
  return base * static_cast<double>(total - step) / static_cast<double>(total - half);
}

struct TrainedModel {
  ParamStore store{0};
  bool converged = false;
};

TrainedModel train_model(const Setup& setup, const Prop1Config& config, uint64_t trial_seed,
                         const char* stream, bool clamp_we, bool squared_error) {
  SeparableEncoder enc;
  enc.prefix = "p1";
  enc.feature_dim = kFeatureDim;
  enc.out_dim = kTargetDim;
  enc.clamp_we = clamp_we;

  TrainedModel model{ParamStore(derive_seed(trial_seed, str_cat(stream, "/init")))};
  Rng data_rng(derive_seed(trial_seed, str_cat(stream, "/data")));
  AdamConfig adam;

  // Polyak tail average: the reported weights are the mean of the iterates
  // over the last fifth of training, which cancels the stationary optimizer
  // jitter around the optimum instead of sampling one point of it.
  const int avg_start = config.steps - std::max(1, config.steps / 5);
  std::map<std::string, Tensor> avg_sum;
  int avg_count = 0;

  std::vector<double> losses;
  losses.reserve(config.steps);
  for (int step = 0; step < config.steps; ++step) {
    const SyntheticBatch batch = draw_batch(setup, data_rng, config.batch_size);
    Tape tape(model.store);
    const Value loss = batch_loss(tape, enc, batch, squared_error);
    losses.push_back(tape.scalar(loss));
    tape.backward(loss);
    adam.learning_rate = lr_at(config.learning_rate, step, config.steps);
    adam_step(model.store, tape, adam);
    if (step >= avg_start) {
      for (const std::string& name : model.store.names()) {
        const Tensor& cur = model.store.value(name);
        auto [it, fresh] = avg_sum.try_emplace(name, Tensor(cur.shape));
        for (size_t k = 0; k < cur.data.size(); ++k) it->second.data[k] += cur.data[k];
      }
      ++avg_count;
    }
  }
  for (auto& [name, sum] : avg_sum) {
    for (double& v : sum.data) v /= avg_count;
    model.store.value(name) = sum;
  }

  // Plateau check over the two trailing windows.
  const int window = std::max(1, config.steps / 10);
  if (config.steps >= 2 * window) {
    double tail = 0.0, prev = 0.0;
    for (int i = 0; i < window; ++i) {
      tail += losses[config.steps - 1 - i];
      prev += losses[config.steps - 1 - window - i];
    }
    tail /= window;
    prev /= window;
    model.converged = std::isfinite(tail) && std::abs(prev - tail) <= 0.05 * std::max(tail, 1e-9);
  }
  return model;
}

double frobenius(const Tensor& t) {
  double sq = 0.0;
  for (double v : t.data) sq += v * v;
  return std::sqrt(sq);
}

double eval_loss(ParamStore& store, const SeparableEncoder& enc, const SyntheticBatch& batch,
                 bool squared_error) {
  Tape tape(store);
  return tape.scalar(batch_loss(tape, enc, batch, squared_error));
}

}  // namespace

Prop1Regime prop1_regime_from_string(const std::string& name) {
  if (name == "indep") return Prop1Regime::Independent;
  if (name == "dep") return Prop1Regime::Dependent;
  throw std::invalid_argument(str_cat("unknown regime \"", name, "\" (want indep|dep)"));
}

const char* to_string(Prop1Regime regime) {
  return regime == Prop1Regime::Independent ? "indep" : "dep";
}

Prop1Report prop1_experiment(Prop1Regime regime, const Prop1Config& config, uint64_t seed) {
  CDR_REQUIRE(config.trials >= 1, "prop1 needs at least one trial");
  const bool squared_error = config.loss == "squared_error";
  CDR_REQUIRE(squared_error || config.loss == "infonce", "prop1 loss must be squared_error ",
              "or infonce, got ", config.loss);

  Prop1Report report;
  report.regime = regime;
  report.trials.reserve(config.trials);

  for (int i = 0; i < config.trials; ++i) {
    const uint64_t trial_seed = derive_seed(seed, str_cat("prop1/", to_string(regime), "/", i));
    const Setup setup = make_setup(trial_seed, regime == Prop1Regime::Dependent);

    TrainedModel full = train_model(setup, config, trial_seed, "full", false, squared_error);
    TrainedModel clamped = train_model(setup, config, trial_seed, "clamped", true, squared_error);

    Rng eval_rng(derive_seed(trial_seed, "eval"));
    const SyntheticBatch eval_batch = draw_batch(setup, eval_rng, config.eval_samples);

    SeparableEncoder enc_full, enc_clamped;
    enc_full.prefix = enc_clamped.prefix = "p1";
    enc_full.feature_dim = enc_clamped.feature_dim = kFeatureDim;
    enc_full.out_dim = enc_clamped.out_dim = kTargetDim;
    enc_clamped.clamp_we = true;

    Prop1Trial trial;
    trial.seed = trial_seed;
    trial.ratio = frobenius(full.store.value("p1.we")) / frobenius(full.store.value("p1.wx"));
    trial.loss_unrestricted = eval_loss(full.store, enc_full, eval_batch, squared_error);
    trial.loss_clamped = eval_loss(clamped.store, enc_clamped, eval_batch, squared_error);
    trial.converged = full.converged && clamped.converged;
    report.trials.push_back(trial);
    report.converged_count += trial.converged;
  }

  std::vector<double> ratios;
  ratios.reserve(report.trials.size());
  for (const Prop1Trial& t : report.trials) ratios.push_back(t.ratio);
  std::sort(ratios.begin(), ratios.end());
  const size_t n = ratios.size();
  report.median_ratio = n % 2 == 1 ? ratios[n / 2] : 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]);
  return report;
}

std::string to_line(const Prop1Trial& trial, Prop1Regime regime) {
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "prop1 regime=%s seed=%llu ratio=%.17g loss_full=%.17g loss_clamped=%.17g "
                "converged=%d",
                to_string(regime), static_cast<unsigned long long>(trial.seed), trial.ratio,
                trial.loss_unrestricted, trial.loss_clamped, trial.converged ? 1 : 0);
  return buf;
}

std::string to_text(const Prop1Report& report) {
  std::string out;
  for (const Prop1Trial& t : report.trials) out += to_line(t, report.regime) + "\n";
  char buf[120];
  std::snprintf(buf, sizeof(buf), "prop1 regime=%s median_ratio=%.17g converged=%d/%zu\n",
                to_string(report.regime), report.median_ratio, report.converged_count,
                report.trials.size());
  out += buf;
  return out;
}

}  // namespace cdr
