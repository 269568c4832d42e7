#include "uiqbench/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include <nlohmann/json.hpp>

#include "uiqbench/metrics.hpp"
#include "uiqbench/simrank.hpp"

namespace uiqbench {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_finite(const Matrix& m, const char* what) {
  for (double v : m.data) {
    if (!std::isfinite(v)) {
      throw ValidationError(std::string(what) + ": non-finite value (diverged parameters?)");
    }
  }
}

}  // namespace

Matrix Matrix::transposed() const {
  Matrix t(cols, rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double counter_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c,
                       std::uint64_t d) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ a);
  h = splitmix(h ^ b);
  h = splitmix(h ^ c);
  h = splitmix(h ^ d);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

ProjectionHead ProjectionHead::initialize(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed,
                                          std::uint64_t stream, double dropout_rate) {
  if (in_dim == 0 || out_dim == 0) throw ValidationError("projection head dims must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ValidationError("dropout rate must be in [0, 1)");
  }
  ProjectionHead head;
  head.weight = Matrix(in_dim, out_dim);
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  for (std::size_t i = 0; i < in_dim; ++i) {
    for (std::size_t j = 0; j < out_dim; ++j) {
      // Stream tag 0xA11 keeps init draws disjoint from dropout draws.
      head.weight(i, j) = (2.0 * counter_uniform(seed, 0xA11, stream, i, j) - 1.0) * bound;
    }
  }
  head.ln_gamma.assign(out_dim, 1.0);
  head.ln_beta.assign(out_dim, 0.0);
  head.dropout_rate = dropout_rate;
  return head;
}

HeadActivations forward_with_cache(const ProjectionHead& head, const Matrix& batch, bool train_mode,
                                   const DropoutKey& key) {
  if (batch.cols != head.in_dim()) {
    throw ValidationError("projection input width " + std::to_string(batch.cols) +
                          " does not match head input dim " + std::to_string(head.in_dim()));
  }
  const std::size_t n = batch.rows, in = head.in_dim(), out = head.out_dim();
  HeadActivations a;
  a.input = batch;

  Matrix h(n, out);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < in; ++i) {
      const double x = batch(r, i);
      if (x == 0.0) continue;
      const auto w = head.weight.row(i);
      auto hr = h.row(r);
      for (std::size_t j = 0; j < out; ++j) hr[j] += x * w[j];
    }
  }

  if (train_mode && head.dropout_rate > 0.0) {
    if (!key.row_keys.empty() && key.row_keys.size() != n) {
      throw ValidationError("dropout row keys do not match batch size");
    }
    a.mask = Matrix(n, out);
    const double keep_scale = 1.0 / (1.0 - head.dropout_rate);
    for (std::size_t r = 0; r < n; ++r) {
      const std::uint64_t rk = key.row_keys.empty() ? r : key.row_keys[r];
      for (std::size_t j = 0; j < out; ++j) {
        const bool drop = counter_uniform(key.seed, key.stream, key.step, rk, j) < head.dropout_rate;
        a.mask(r, j) = drop ? 0.0 : keep_scale;
        h(r, j) *= a.mask(r, j);
      }
    }
  }

  a.xhat = Matrix(n, out);
  a.output = Matrix(n, out);
  a.rstd.resize(n);
  a.norms.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto hr = h.row(r);
    double mean = 0.0;
    for (double v : hr) mean += v;
    mean /= static_cast<double>(out);
    double var = 0.0;
    for (double v : hr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(out);
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    a.rstd[r] = rstd;

    double sq = 0.0;
    for (std::size_t j = 0; j < out; ++j) {
      const double xh = (hr[j] - mean) * rstd;
      a.xhat(r, j) = xh;
      const double y = head.ln_gamma[j] * xh + head.ln_beta[j];
      a.output(r, j) = y;
      sq += y * y;
    }
    const double norm = std::sqrt(sq);
    if (!(norm >= kDegenerateNorm)) {
      throw ValidationError("projection row " + std::to_string(r) +
                            " is degenerate after layer norm (norm " + std::to_string(norm) + ")");
    }
    a.norms[r] = norm;
    for (std::size_t j = 0; j < out; ++j) a.output(r, j) /= norm;
  }
  check_finite(a.output, "projection head output");
  return a;
}

Matrix forward(const ProjectionHead& head, const Matrix& batch, bool train_mode, const DropoutKey& key) {
  return forward_with_cache(head, batch, train_mode, key).output;
}

HeadGradients backward(const ProjectionHead& head, const HeadActivations& acts, const Matrix& grad_output) {
  const std::size_t n = acts.output.rows, in = head.in_dim(), out = head.out_dim();
  HeadGradients g;
  g.weight = Matrix(in, out);
  g.ln_gamma.assign(out, 0.0);
  g.ln_beta.assign(out, 0.0);

  std::vector<double> dy(out), dxhat(out);
  Matrix dh(n, out);
  for (std::size_t r = 0; r < n; ++r) {
    const auto z = acts.output.row(r);
    const auto dz = grad_output.row(r);
    double z_dot_dz = 0.0;
    for (std::size_t j = 0; j < out; ++j) z_dot_dz += z[j] * dz[j];
    // L2 normalization
    for (std::size_t j = 0; j < out; ++j) dy[j] = (dz[j] - z[j] * z_dot_dz) / acts.norms[r];
    // Layer norm
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < out; ++j) {
      const double xh = acts.xhat(r, j);
      g.ln_gamma[j] += dy[j] * xh;
      g.ln_beta[j] += dy[j];
      dxhat[j] = dy[j] * head.ln_gamma[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xh;
    }
    mean_dxhat /= static_cast<double>(out);
    mean_dxhat_xhat /= static_cast<double>(out);
    for (std::size_t j = 0; j < out; ++j) {
      double d = acts.rstd[r] * (dxhat[j] - mean_dxhat - acts.xhat(r, j) * mean_dxhat_xhat);
      if (!acts.mask.data.empty()) d *= acts.mask(r, j);  // dropout
      dh(r, j) = d;
    }
  }
  // Linear: dW = X^T dH
  for (std::size_t r = 0; r < n; ++r) {
    const auto dhr = dh.row(r);
    for (std::size_t i = 0; i < in; ++i) {
      const double x = acts.input(r, i);
      if (x == 0.0) continue;
      auto gw = g.weight.row(i);
      for (std::size_t j = 0; j < out; ++j) gw[j] += x * dhr[j];
    }
  }
  return g;
}

namespace {

void require_square(const Matrix& sim, double tau) {
  if (sim.rows != sim.cols || sim.rows == 0) {
    throw ValidationError("InfoNCE requires a non-empty square similarity matrix");
  }
  if (!(tau > 0.0)) throw ValidationError("temperature must be positive");
}

// Row-wise softmax of S/tau (transpose first for the column direction).
Matrix softmax_rows(const Matrix& sim, double tau, std::vector<double>* log_diag) {
  const std::size_t n = sim.rows;
  Matrix p(n, n);
  if (log_diag) log_diag->assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, sim(i, j) / tau);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      p(i, j) = std::exp(sim(i, j) / tau - mx);
      z += p(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) p(i, j) /= z;
    if (log_diag) (*log_diag)[i] = sim(i, i) / tau - mx - std::log(z);
  }
  return p;
}

}  // namespace

double infonce_loss(const Matrix& sim, double tau) {
  require_square(sim, tau);
  const std::size_t n = sim.rows;
  std::vector<double> row_logp, col_logp;
  softmax_rows(sim, tau, &row_logp);
  softmax_rows(sim.transposed(), tau, &col_logp);
  double t2a = 0.0, a2t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    t2a -= row_logp[i];
    a2t -= col_logp[i];
  }
  return 0.5 * (t2a / static_cast<double>(n) + a2t / static_cast<double>(n));
}

Matrix infonce_grad(const Matrix& sim, double tau) {
  require_square(sim, tau);
  const std::size_t n = sim.rows;
  const Matrix p = softmax_rows(sim, tau, nullptr);
  const Matrix q = softmax_rows(sim.transposed(), tau, nullptr);  // q(j, i): column j softmax at i
  const double scale = 0.5 / (static_cast<double>(n) * tau);
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double delta = i == j ? 1.0 : 0.0;
      g(i, j) = scale * ((p(i, j) - delta) + (q(j, i) - delta));
    }
  }
  return g;
}

ContrastiveStep contrastive_step(const ProjectionHead& text_head, const ProjectionHead& audio_head,
                                 const Matrix& text_batch, const Matrix& audio_batch, double tau,
                                 bool train_mode, const DropoutKey& text_key,
                                 const DropoutKey& audio_key) {
  if (text_batch.rows != audio_batch.rows) {
    throw ValidationError("text and audio batches differ in size");
  }
  if (text_head.out_dim() != audio_head.out_dim()) {
    throw ValidationError("text and audio heads project to different widths");
  }
  const auto ta = forward_with_cache(text_head, text_batch, train_mode, text_key);
  const auto aa = forward_with_cache(audio_head, audio_batch, train_mode, audio_key);
  const std::size_t n = text_batch.rows, d = text_head.out_dim();

  Matrix sim(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += ta.output(i, k) * aa.output(j, k);
      sim(i, j) = s;
    }

  ContrastiveStep step;
  step.loss = infonce_loss(sim, tau);
  const Matrix gs = infonce_grad(sim, tau);

  Matrix dzt(n, d), dza(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double gij = gs(i, j);
      for (std::size_t k = 0; k < d; ++k) {
        dzt(i, k) += gij * aa.output(j, k);
        dza(j, k) += gij * ta.output(i, k);
      }
    }
  step.text = backward(text_head, ta, dzt);
  step.audio = backward(audio_head, aa, dza);
  return step;
}

void TrainConfig::validate() const {
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  if (batch_size == 0) throw ValidationError("batch size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ValidationError("learning rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("Adam betas must be in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ValidationError("Adam epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be non-negative");
}

namespace {

struct AdamState {
  std::vector<double> m, v;
};

void adamw_update(std::vector<double>& param, const std::vector<double>& grad, AdamState& st,
                  const TrainConfig& cfg, std::size_t t) {
  if (st.m.empty()) {
    st.m.assign(param.size(), 0.0);
    st.v.assign(param.size(), 0.0);
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    param[i] -= cfg.learning_rate * (mhat / (std::sqrt(vhat) + cfg.adam_epsilon) + cfg.weight_decay * param[i]);
  }
}

struct HeadOptimizer {
  AdamState weight, gamma, beta;

  void step(ProjectionHead& head, const HeadGradients& g, const TrainConfig& cfg, std::size_t t) {
    adamw_update(head.weight.data, g.weight.data, weight, cfg, t);
    // Decay applies to the projection weights only.
    TrainConfig no_decay = cfg;
    no_decay.weight_decay = 0.0;
    adamw_update(head.ln_gamma, g.ln_gamma, gamma, no_decay, t);
    adamw_update(head.ln_beta, g.ln_beta, beta, no_decay, t);
  }
};

Matrix gather_rows(const EmbeddingSet& set, const std::vector<std::size_t>& rows) {
  Matrix m(rows.size(), set.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = set.row(rows[r]);
    std::copy(src.begin(), src.end(), m.row(r).begin());
  }
  return m;
}

void check_pairs(const std::vector<TrainPair>& pairs, const EmbeddingSet& text_emb,
                 const EmbeddingSet& audio_emb) {
  for (const auto& p : pairs) {
    if (p.text_row >= text_emb.size() || p.audio_row >= audio_emb.size()) {
      throw ValidationError("training pair references a row outside the embedding sets");
    }
  }
}

}  // namespace

EmbeddingSet project(const ProjectionHead& head, const EmbeddingSet& set) {
  std::vector<std::size_t> rows(set.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Matrix out = forward(head, gather_rows(set, rows), false);
  std::vector<float> data(out.data.size());
  for (std::size_t r = 0; r < out.rows; ++r) {
    // Renormalize after the float32 cast.
    double sq = 0.0;
    for (std::size_t j = 0; j < out.cols; ++j) sq += out(r, j) * out(r, j);
    const double norm = std::sqrt(sq);
    for (std::size_t j = 0; j < out.cols; ++j) data[r * out.cols + j] = static_cast<float>(out(r, j) / norm);
  }
  return EmbeddingSet(set.ids(), static_cast<std::uint32_t>(out.cols), std::move(data), true);
}

double pair_recall_at_k(const ProjectionHead& text_head, const ProjectionHead& audio_head,
                        const EmbeddingSet& text_emb, const EmbeddingSet& audio_emb,
                        const std::vector<TrainPair>& pairs, std::size_t k) {
  check_pairs(pairs, text_emb, audio_emb);
  std::map<std::size_t, std::size_t> audio_pos;
  for (const auto& p : pairs) audio_pos.emplace(p.audio_row, 0);
  std::vector<std::size_t> audio_rows, text_rows;
  for (auto& [row, pos] : audio_pos) {
    pos = audio_rows.size();
    audio_rows.push_back(row);
  }
  for (const auto& p : pairs) text_rows.push_back(p.text_row);

  const Matrix zt = forward(text_head, gather_rows(text_emb, text_rows), false);
  const Matrix za = forward(audio_head, gather_rows(audio_emb, audio_rows), false);
  std::vector<RankOutcome> outcomes;
  std::vector<float> scores(za.rows);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = 0; j < za.rows; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < za.cols; ++c) s += zt(i, c) * za(j, c);
      scores[j] = static_cast<float>(s);
    }
    outcomes.push_back({std::to_string(i), rank_of(scores, audio_pos.at(pairs[i].audio_row)), std::nullopt});
  }
  return recall_at_k(outcomes, k);
}

TrainResult train(ProjectionHead text_head, ProjectionHead audio_head, const EmbeddingSet& text_emb,
                  const EmbeddingSet& audio_emb, const std::vector<TrainPair>& train_pairs,
                  const std::vector<TrainPair>& val_pairs, const TrainConfig& cfg) {
  cfg.validate();
  if (train_pairs.empty()) throw ValidationError("no training pairs");
  if (text_emb.dim() != text_head.in_dim() || audio_emb.dim() != audio_head.in_dim()) {
    throw ValidationError("embedding dims do not match projection head input dims");
  }
  check_pairs(train_pairs, text_emb, audio_emb);
  check_pairs(val_pairs, text_emb, audio_emb);

  TrainResult result{text_head, audio_head, {}};
  HeadOptimizer text_opt, audio_opt;
  const std::size_t n = train_pairs.size();
  const std::size_t batch = std::min(cfg.batch_size, n);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;

  std::vector<std::size_t> order(n);
  double best_val = -1.0;
  std::size_t epochs_since_best = 0;
  std::size_t step = 0;
  for (std::size_t epoch = 0; step < cfg.max_steps; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(splitmix(cfg.seed ^ splitmix(epoch + 1)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    for (std::size_t b = 0; b < steps_per_epoch && step < cfg.max_steps; ++b) {
      const std::size_t begin = b * batch, end = std::min(n, begin + batch);
      // A trailing singleton batch carries no in-batch negatives.
      if (end - begin < 2 && batch >= 2) continue;
      std::vector<std::size_t> trows, arows;
      std::vector<std::uint64_t> keys;
      for (std::size_t i = begin; i < end; ++i) {
        trows.push_back(train_pairs[order[i]].text_row);
        arows.push_back(train_pairs[order[i]].audio_row);
        keys.push_back(order[i]);
      }
      const DropoutKey tkey{cfg.seed, 1, step, keys};
      const DropoutKey akey{cfg.seed, 2, step, keys};
      ContrastiveStep cs;
      try {
        cs = contrastive_step(text_head, audio_head, gather_rows(text_emb, trows),
                              gather_rows(audio_emb, arows), cfg.temperature, true, tkey, akey);
      } catch (const ValidationError& e) {
        throw DivergenceError(step, "training diverged at step " + std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(cs.loss)) {
        throw DivergenceError(step, "training diverged at step " + std::to_string(step) +
                                        ": non-finite loss");
      }
      result.trace.step_loss.push_back(cs.loss);
      ++step;
      text_opt.step(text_head, cs.text, cfg, step);
      audio_opt.step(audio_head, cs.audio, cfg, step);
    }

    if (!val_pairs.empty()) {
      const double r10 = pair_recall_at_k(text_head, audio_head, text_emb, audio_emb, val_pairs, 10);
      result.trace.epochs.push_back({epoch, step, r10});
      if (r10 > best_val) {
        best_val = r10;
        epochs_since_best = 0;
        result.trace.best_epoch = epoch;
        result.text_head = text_head;
        result.audio_head = audio_head;
      } else if (cfg.patience > 0 && ++epochs_since_best >= cfg.patience) {
        result.trace.early_stopped = true;
        return result;
      }
    }
  }
  if (val_pairs.empty()) {
    result.text_head = text_head;
    result.audio_head = audio_head;
  }
  return result;
}

void save_checkpoint(const ProjectionHead& head, const std::filesystem::path& path) {
  std::vector<std::string> ids;
  std::vector<float> data;
  for (std::size_t i = 0; i < head.in_dim(); ++i) ids.push_back("w" + std::to_string(i));
  for (double v : head.weight.data) data.push_back(static_cast<float>(v));
  save_embeddings(EmbeddingSet(std::move(ids), static_cast<std::uint32_t>(head.out_dim()), std::move(data)),
                  path);
  nlohmann::json j = {{"in_dim", head.in_dim()},
                      {"out_dim", head.out_dim()},
                      {"dropout_rate", head.dropout_rate},
                      {"layer_norm_epsilon", kLayerNormEpsilon},
                      {"ln_gamma", head.ln_gamma},
                      {"ln_beta", head.ln_beta}};
  const auto meta = std::filesystem::path(path.string() + ".head.json");
  std::ofstream out(meta, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + meta.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failure on '" + meta.string() + "'");
}

ProjectionHead load_checkpoint(const std::filesystem::path& path) {
  const EmbeddingSet w = load_embeddings(path);
  const auto meta = std::filesystem::path(path.string() + ".head.json");
  std::ifstream in(meta);
  if (!in) throw IoError("cannot open '" + meta.string() + "' for reading");
  ProjectionHead head;
  try {
    const auto j = nlohmann::json::parse(in);
    head.weight = Matrix(j.at("in_dim").get<std::size_t>(), j.at("out_dim").get<std::size_t>());
    head.dropout_rate = j.at("dropout_rate").get<double>();
    head.ln_gamma = j.at("ln_gamma").get<std::vector<double>>();
    head.ln_beta = j.at("ln_beta").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(meta.string() + ": malformed checkpoint header: " + e.what());
  }
  if (w.size() != head.in_dim() || w.dim() != head.out_dim() || head.ln_gamma.size() != head.out_dim() ||
      head.ln_beta.size() != head.out_dim()) {
    throw ValidationError("checkpoint '" + path.string() + "' has inconsistent shapes");
  }
  for (std::size_t i = 0; i < head.weight.data.size(); ++i) head.weight.data[i] = w.data()[i];
  return head;
}

void save_trace(const TrainTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (std::size_t s = 0; s < trace.step_loss.size(); ++s) {
    out << nlohmann::json{{"step", s}, {"loss", trace.step_loss[s]}}.dump() << '\n';
  }
  for (const auto& e : trace.epochs) {
    out << nlohmann::json{{"epoch", e.epoch}, {"step", e.step}, {"val_r10", e.val_recall_at_10}}.dump()
        << '\n';
  }
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

}  // namespace uiqbench
