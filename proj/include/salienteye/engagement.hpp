#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "salienteye/error.hpp"
#include "salienteye/features.hpp"
#include "salienteye/rng.hpp"

// Two-layer classification head over the pooled embedding:
// GAP(D) -> 1024 ReLU -> 2 softmax, trained with SGD + momentum and a
// 1/(1 + decay*t) learning-rate schedule. Templated on the scalar so the
// finite-difference checks can run the whole path in 64-bit; production
// storage is float32 with 64-bit accumulation in every reduction.

namespace salienteye {

inline constexpr int kHiddenUnits = 1024;

template <typename T>
struct HeadParamsT {
  int embedding_dim = 0;
  int hidden_dim = kHiddenUnits;
  std::vector<T> w1;  // hidden_dim x embedding_dim, row-major
  std::vector<T> b1;  // hidden_dim
  std::vector<T> w2;  // 2 x hidden_dim, row 0 = High logit, row 1 = Low logit
  std::vector<T> b2;  // 2
};

using HeadParams = HeadParamsT<float>;

struct TrainConfig {
  double lr0 = 0.005;
  double momentum = 0.9;
  double decay = 1e-6;
  int epochs = 10;
  int batch_size = 64;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const {
    if (!(lr0 > 0)) throw ValidationError("train config: lr0 must be > 0");
    if (momentum < 0 || momentum >= 1) throw ValidationError("train config: momentum in [0,1)");
    if (decay < 0) throw ValidationError("train config: decay must be >= 0");
    if (epochs < 1) throw ValidationError("train config: epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("train config: batch_size must be >= 1");
  }
};

template <typename T>
struct PredictionT {
  T p_high{};
  T p_low{};
};

using Prediction = PredictionT<float>;

template <typename T>
struct ForwardStateT {
  std::vector<T> hidden;  // post-ReLU activations
  T logit_high{};
  T logit_low{};
  PredictionT<T> probs;
};

template <typename T>
struct GradientsT {
  std::vector<double> w1, b1, w2, b2;  // accumulated in 64-bit regardless of T
};

template <typename T>
struct OptimizerStateT {
  std::vector<T> v_w1, v_b1, v_w2, v_b2;
  std::int64_t step = 0;

  static OptimizerStateT zeros_like(const HeadParamsT<T>& head) {
    OptimizerStateT s;
    s.v_w1.assign(head.w1.size(), T(0));
    s.v_b1.assign(head.b1.size(), T(0));
    s.v_w2.assign(head.w2.size(), T(0));
    s.v_b2.assign(head.b2.size(), T(0));
    return s;
  }
};

using OptimizerState = OptimizerStateT<float>;

template <typename T>
struct TrainingExampleT {
  std::vector<T> embedding;
  bool high = false;
};

using TrainingExample = TrainingExampleT<float>;

// ---------------------------------------------------------------------------
// Initialization and forward pass
// ---------------------------------------------------------------------------

// He-uniform on both layers (bound sqrt(6/fan_in)), zero biases.
template <typename T>
HeadParamsT<T> init_head(int embedding_dim, std::uint64_t seed, int hidden_dim = kHiddenUnits) {
  if (embedding_dim <= 0) throw ValidationError("init_head: embedding_dim must be > 0");
  HeadParamsT<T> head;
  head.embedding_dim = embedding_dim;
  head.hidden_dim = hidden_dim;
  Rng rng(seed);
  auto fill_uniform = [&](std::vector<T>& w, std::size_t count, int fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    w.resize(count);
    for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
  };
  fill_uniform(head.w1, static_cast<std::size_t>(hidden_dim) * embedding_dim, embedding_dim);
  head.b1.assign(static_cast<std::size_t>(hidden_dim), T(0));
  fill_uniform(head.w2, 2 * static_cast<std::size_t>(hidden_dim), hidden_dim);
  head.b2.assign(2, T(0));
  return head;
}

template <typename T>
ForwardStateT<T> forward(const HeadParamsT<T>& head, std::span<const T> embedding) {
  if (embedding.size() != static_cast<std::size_t>(head.embedding_dim))
    throw ValidationError("forward: embedding dim " + std::to_string(embedding.size()) +
                          " != head dim " + std::to_string(head.embedding_dim));
  ForwardStateT<T> st;
  st.hidden.resize(static_cast<std::size_t>(head.hidden_dim));
  for (int j = 0; j < head.hidden_dim; ++j) {
    double acc = static_cast<double>(head.b1[static_cast<std::size_t>(j)]);
    const T* row = head.w1.data() + static_cast<std::size_t>(j) * head.embedding_dim;
    for (int d = 0; d < head.embedding_dim; ++d)
      acc += static_cast<double>(row[d]) * static_cast<double>(embedding[static_cast<std::size_t>(d)]);
    st.hidden[static_cast<std::size_t>(j)] = acc > 0.0 ? static_cast<T>(acc) : T(0);
  }
  double z[2];
  for (int o = 0; o < 2; ++o) {
    double acc = static_cast<double>(head.b2[static_cast<std::size_t>(o)]);
    const T* row = head.w2.data() + static_cast<std::size_t>(o) * head.hidden_dim;
    for (int j = 0; j < head.hidden_dim; ++j)
      acc += static_cast<double>(row[j]) * static_cast<double>(st.hidden[static_cast<std::size_t>(j)]);
    z[o] = acc;
  }
  st.logit_high = static_cast<T>(z[0]);
  st.logit_low = static_cast<T>(z[1]);
  // max-subtracted softmax; stable for |z| up to ~1e300
  const double zmax = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - zmax);
  const double e1 = std::exp(z[1] - zmax);
  st.probs.p_high = static_cast<T>(e0 / (e0 + e1));
  st.probs.p_low = static_cast<T>(e1 / (e0 + e1));
  return st;
}

// Cross-entropy against the true class, clamped at 1e-12.
template <typename T>
double loss(const PredictionT<T>& pred, bool high) {
  const double p = static_cast<double>(high ? pred.p_high : pred.p_low);
  return -std::log(std::max(p, 1e-12));
}

namespace detail {

// One forward + backward sweep over the batch: raw gradient sums land in
// g, the summed cross-entropy comes back. Shared by gradients() and the
// training loop so each example is forwarded once per step.
template <typename T>
double accumulate_gradients(const HeadParamsT<T>& head,
                            std::span<const TrainingExampleT<T>> batch, GradientsT<T>& g) {
  g.w1.assign(head.w1.size(), 0.0);
  g.b1.assign(head.b1.size(), 0.0);
  g.w2.assign(head.w2.size(), 0.0);
  g.b2.assign(head.b2.size(), 0.0);

  double loss_sum = 0.0;
  std::vector<double> dpre(static_cast<std::size_t>(head.hidden_dim));
  for (const auto& example : batch) {
    const auto st = forward(head, std::span<const T>(example.embedding));
    loss_sum += loss(st.probs, example.high);
    const double dz[2] = {static_cast<double>(st.probs.p_high) - (example.high ? 1.0 : 0.0),
                          static_cast<double>(st.probs.p_low) - (example.high ? 0.0 : 1.0)};
    for (int o = 0; o < 2; ++o) {
      g.b2[static_cast<std::size_t>(o)] += dz[o];
      double* grow = g.w2.data() + static_cast<std::size_t>(o) * head.hidden_dim;
      for (int j = 0; j < head.hidden_dim; ++j)
        grow[j] += dz[o] * static_cast<double>(st.hidden[static_cast<std::size_t>(j)]);
    }
    for (int j = 0; j < head.hidden_dim; ++j) {
      const std::size_t js = static_cast<std::size_t>(j);
      if (st.hidden[js] > T(0)) {
        dpre[js] = dz[0] * static_cast<double>(head.w2[js]) +
                   dz[1] * static_cast<double>(head.w2[static_cast<std::size_t>(head.hidden_dim) + js]);
      } else {
        dpre[js] = 0.0;
      }
    }
    for (int j = 0; j < head.hidden_dim; ++j) {
      const double dj = dpre[static_cast<std::size_t>(j)];
      if (dj == 0.0) continue;
      g.b1[static_cast<std::size_t>(j)] += dj;
      double* grow = g.w1.data() + static_cast<std::size_t>(j) * head.embedding_dim;
      for (int d = 0; d < head.embedding_dim; ++d)
        grow[d] += dj * static_cast<double>(example.embedding[static_cast<std::size_t>(d)]);
    }
  }
  return loss_sum;
}

}  // namespace detail

// Mean-over-batch gradients; the softmax+CE gradient at the logits is
// (p - onehot).
template <typename T>
GradientsT<T> gradients(const HeadParamsT<T>& head,
                        std::span<const TrainingExampleT<T>> batch) {
  if (batch.empty()) throw ValidationError("gradients: empty batch");
  GradientsT<T> g;
  detail::accumulate_gradients(head, batch, g);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (auto* buf : {&g.w1, &g.b1, &g.w2, &g.b2})
    for (double& v : *buf) v *= inv_n;
  return g;
}

// ---------------------------------------------------------------------------
// SGD with momentum and 1/(1 + decay*t) learning-rate decay
// ---------------------------------------------------------------------------

inline double learning_rate_at(const TrainConfig& cfg, std::int64_t step) {
  return cfg.lr0 / (1.0 + cfg.decay * static_cast<double>(step));
}

template <typename T>
void sgd_step(HeadParamsT<T>& head, const GradientsT<T>& grads, OptimizerStateT<T>& state,
              const TrainConfig& cfg) {
  const double lr = learning_rate_at(cfg, state.step);
  auto update = [&](std::vector<T>& w, std::vector<T>& v, const std::vector<double>& g) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double vnew = cfg.momentum * static_cast<double>(v[i]) - lr * g[i];
      v[i] = static_cast<T>(vnew);
      w[i] = static_cast<T>(static_cast<double>(w[i]) + vnew);
    }
  };
  update(head.w1, state.v_w1, grads.w1);
  update(head.b1, state.v_b1, grads.b1);
  update(head.w2, state.v_w2, grads.w2);
  update(head.b2, state.v_b2, grads.b2);
  ++state.step;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochStats {
  double loss = 0.0;      // mean example loss over the epoch (pre-update per batch)
  double macro_f1 = 0.0;  // on the full dataset with the post-epoch head
};

template <typename T>
struct TrainResult {
  HeadParamsT<T> head;
  std::vector<EpochStats> history;
  std::int64_t steps = 0;
};

template <typename T>
std::pair<bool, PredictionT<T>> predict(const HeadParamsT<T>& head, std::span<const T> embedding) {
  const auto st = forward(head, embedding);
  // exact probability ties resolve to Low
  return {st.probs.p_high > st.probs.p_low, st.probs};
}

namespace detail {

// Macro F1 over boolean high/low labels; shared with the evaluation module.
inline double macro_f1_binary(const std::vector<bool>& pred_high,
                              const std::vector<bool>& true_high) {
  std::int64_t tp_h = 0, fp_h = 0, fn_h = 0, tp_l = 0, fp_l = 0, fn_l = 0;
  for (std::size_t i = 0; i < pred_high.size(); ++i) {
    const bool p = pred_high[i], t = true_high[i];
    if (p && t) ++tp_h;
    if (p && !t) ++fp_h;
    if (!p && t) ++fn_h;
    if (!p && !t) ++tp_l;
    if (!p && t) ++fp_l;
    if (p && !t) ++fn_l;
  }
  auto f1 = [](std::int64_t tp, std::int64_t fp, std::int64_t fn) {
    const std::int64_t denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  };
  return 0.5 * (f1(tp_h, fp_h, fn_h) + f1(tp_l, fp_l, fn_l));
}

}  // namespace detail

// Deterministic: (dataset, cfg) fully determines the resulting bit
// pattern. Partial final batches are used as-is.
template <typename T>
TrainResult<T> train(const std::vector<TrainingExampleT<T>>& dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw DataError("train: empty dataset");
  bool any_high = false, any_low = false;
  for (const auto& ex : dataset) (ex.high ? any_high : any_low) = true;
  if (!any_high || !any_low)
    throw DataError("train: dataset must contain both High and Low examples");
  const int dim = static_cast<int>(dataset[0].embedding.size());
  for (const auto& ex : dataset)
    if (ex.embedding.size() != static_cast<std::size_t>(dim))
      throw ValidationError("train: inconsistent embedding dims");

  TrainResult<T> result;
  result.head = init_head<T>(dim, cfg.seed);
  auto state = OptimizerStateT<T>::zeros_like(result.head);
  // distinct deterministic stream for shuffling
  Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<TrainingExampleT<T>> batch;
  std::vector<bool> pred_high(n), true_high(n);
  for (std::size_t i = 0; i < n; ++i) true_high[i] = dataset[i].high;

  GradientsT<T> grads;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(dataset[order[i]]);
      loss_sum += detail::accumulate_gradients(
          result.head, std::span<const TrainingExampleT<T>>(batch), grads);
      const double inv_batch = 1.0 / static_cast<double>(batch.size());
      for (auto* buf : {&grads.w1, &grads.b1, &grads.w2, &grads.b2})
        for (double& v : *buf) v *= inv_batch;
      sgd_step(result.head, grads, state, cfg);
    }
    EpochStats stats;
    stats.loss = loss_sum / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      pred_high[i] = predict(result.head, std::span<const T>(dataset[i].embedding)).first;
    stats.macro_f1 = detail::macro_f1_binary(pred_high, true_high);
    result.history.push_back(stats);
  }
  result.steps = state.step;
  return result;
}

// ---------------------------------------------------------------------------
// Persistence (JSON, decimal floats, round-trippable)
// ---------------------------------------------------------------------------

struct HeadArtifact {
  HeadParams head;
  TrainConfig config;
  std::vector<EpochStats> history;
};

inline nlohmann::ordered_json head_to_json(const HeadArtifact& artifact) {
  const auto& head = artifact.head;
  auto matrix = [](const std::vector<float>& w, int rows, int cols) {
    nlohmann::ordered_json rows_json = nlohmann::ordered_json::array();
    for (int r = 0; r < rows; ++r) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (int c = 0; c < cols; ++c)
        row.push_back(static_cast<double>(w[static_cast<std::size_t>(r) * cols + c]));
      rows_json.push_back(std::move(row));
    }
    return rows_json;
  };
  auto vec = [](const std::vector<float>& v) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (float x : v) arr.push_back(static_cast<double>(x));
    return arr;
  };
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["embedding_dim"] = head.embedding_dim;
  j["w1"] = matrix(head.w1, head.hidden_dim, head.embedding_dim);
  j["b1"] = vec(head.b1);
  j["w2"] = matrix(head.w2, 2, head.hidden_dim);
  j["b2"] = vec(head.b2);
  j["train_config"] = {{"lr0", artifact.config.lr0},
                       {"momentum", artifact.config.momentum},
                       {"decay", artifact.config.decay},
                       {"epochs", artifact.config.epochs},
                       {"batch_size", artifact.config.batch_size},
                       {"seed", artifact.config.seed},
                       {"shuffle", artifact.config.shuffle}};
  nlohmann::ordered_json hist = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < artifact.history.size(); ++i)
    hist.push_back({{"epoch", i + 1},
                    {"loss", artifact.history[i].loss},
                    {"macro_f1", artifact.history[i].macro_f1}});
  j["history"] = std::move(hist);
  return j;
}

inline void save_head(const HeadArtifact& artifact, const std::filesystem::path& path) {
  const std::string text = head_to_json(artifact).dump(2) + "\n";
  detail::write_file_bytes(path, text.data(), text.size());
}

inline HeadArtifact load_head(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot read head artifact: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("head artifact " + path.string() + ": " + e.what());
  }
  HeadArtifact artifact;
  try {
    artifact.head.embedding_dim = j.at("embedding_dim").get<int>();
    const auto& w1 = j.at("w1");
    artifact.head.hidden_dim = static_cast<int>(w1.size());
    for (const auto& row : w1)
      for (const auto& v : row) artifact.head.w1.push_back(v.get<float>());
    for (const auto& v : j.at("b1")) artifact.head.b1.push_back(v.get<float>());
    for (const auto& row : j.at("w2"))
      for (const auto& v : row) artifact.head.w2.push_back(v.get<float>());
    for (const auto& v : j.at("b2")) artifact.head.b2.push_back(v.get<float>());
    const auto& tc = j.at("train_config");
    artifact.config.lr0 = tc.at("lr0").get<double>();
    artifact.config.momentum = tc.at("momentum").get<double>();
    artifact.config.decay = tc.at("decay").get<double>();
    artifact.config.epochs = tc.at("epochs").get<int>();
    artifact.config.batch_size = tc.at("batch_size").get<int>();
    artifact.config.seed = tc.at("seed").get<std::uint64_t>();
    artifact.config.shuffle = tc.at("shuffle").get<bool>();
    for (const auto& h : j.at("history"))
      artifact.history.push_back({h.at("loss").get<double>(), h.at("macro_f1").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("head artifact " + path.string() + ": " + e.what());
  }
  const auto expect_w1 =
      static_cast<std::size_t>(artifact.head.hidden_dim) * artifact.head.embedding_dim;
  if (artifact.head.w1.size() != expect_w1 ||
      artifact.head.b1.size() != static_cast<std::size_t>(artifact.head.hidden_dim) ||
      artifact.head.w2.size() != 2 * static_cast<std::size_t>(artifact.head.hidden_dim) ||
      artifact.head.b2.size() != 2)
    throw ModelError("head artifact " + path.string() + ": inconsistent weight dims");
  return artifact;
}

}  // namespace salienteye
