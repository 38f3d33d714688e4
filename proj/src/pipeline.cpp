#include "mgtta/pipeline.hpp"

#include <chrono>
#include <cmath>

#include "mgtta/rng.hpp"

namespace mgtta {

namespace {

constexpr std::uint64_t kBankTag = 0xba9c;
constexpr std::uint64_t kReinitTag = 0x5e91;

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

int count_correct(const Tensor& logits, const std::vector<int>& labels) {
  const std::vector<int> pred = predict_labels(logits);
  int correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++correct;
  return correct;
}

void check_finite(const LossBreakdown& b, int batch_index) {
  if (!std::isfinite(b.total))
    throw NumericError("non-finite loss at batch " + std::to_string(batch_index), batch_index);
}

// Shared online loop: scores every batch, updates parameters while the
// budget allows, optionally meta-updates the optimizer weights (pre-training
// mode). Batch `i` may contribute a gradient only when i < max_batches.
struct EpisodeConfig {
  Scalar eta_theta = 0.0;
  Scalar lambda = 0.4;
  UpdateOrder order = UpdateOrder::deferred;
  BudgetSpec budget;
  bool update_phir = false;
  Scalar eta_phir = 0.0;
  TraceFn trace;
};

struct EpisodeOutcome {
  RunMetrics metrics;
  Model model;
  MggState state;
};

EpisodeOutcome run_mgg_episode(Model model, MggState state, const std::vector<Batch>& stream,
                               const SourceStats& stats, const EpisodeConfig& ec) {
  RunMetrics metrics;
  const double t0 = now_seconds();
  const int max_batches =
      ec.budget.max_batches.value_or(static_cast<int>(stream.size()) + 1);
  bool time_ok = true;

  std::optional<Tensor> prev_z;
  Tensor theta = flatten_adaptable(model);

  long long seen = 0, correct = 0;
  Scalar first_entropy = -1.0;

  for (int i = 0; i < static_cast<int>(stream.size()); ++i) {
    const Batch& batch = stream[static_cast<std::size_t>(i)];
    if (time_ok && ec.budget.max_seconds && now_seconds() - t0 >= *ec.budget.max_seconds)
      time_ok = false;  // batch-granular: no update straddles the deadline

    bool updated = false;
    std::optional<GmlMemoryBank> pre_bank;
    if (ec.order == UpdateOrder::deferred && prev_z && time_ok && i - 1 < max_batches) {
      if (ec.update_phir) pre_bank = state.bank;
      if (ec.trace) ec.trace(TraceEvent::memorize, i);
      state = step_memorize(std::move(state), *prev_z);
      if (ec.trace) ec.trace(TraceEvent::generate, i);
      const Tensor ghat = generate(state, *prev_z);
      theta.m() -= ec.eta_theta * ghat.m();
      model = scatter_adaptable(std::move(model), theta);
      if (ec.trace) ec.trace(TraceEvent::theta_update, i);
      updated = true;
    }

    const bool need_grad = time_ok && i < max_batches;

    BatchRecord rec;
    rec.index = i;
    rec.frozen = true;  // may flip below once an update lands in this batch

    Tensor logits;
    if (need_grad) {
      TtaLossResult res = tta_loss(model, batch.images, stats, ec.lambda);
      check_finite(res.breakdown, i);
      rec.loss = res.breakdown;
      logits = res.logits;
      if (ec.trace) ec.trace(TraceEvent::predict, i);
      if (ec.trace) ec.trace(TraceEvent::grad, i);

      if (ec.update_phir && updated && pre_bank) {
        MggState pre_state{state.weights, std::move(*pre_bank), state.preproc};
        const MggWeightGrads mg = meta_grad(pre_state, *prev_z, res.grad_adaptable, ec.eta_theta);
        apply_weight_grads(state.weights, mg, ec.eta_phir);
        if (ec.trace) ec.trace(TraceEvent::phir_update, i);
      }

      PreprocResult pr = preprocess(state.preproc, res.grad_adaptable);
      state.preproc = std::move(pr.state);
      prev_z = std::move(pr.z);

      if (ec.order == UpdateOrder::immediate) {
        if (ec.trace) ec.trace(TraceEvent::memorize, i);
        state = step_memorize(std::move(state), *prev_z);
        if (ec.trace) ec.trace(TraceEvent::generate, i);
        const Tensor ghat = generate(state, *prev_z);
        theta.m() -= ec.eta_theta * ghat.m();
        model = scatter_adaptable(std::move(model), theta);
        if (ec.trace) ec.trace(TraceEvent::theta_update, i);
        updated = true;
      }
    } else {
      ForwardResult fr = forward(model, batch.images);
      rec.loss.entropy = entropy_term(fr.logits);
      rec.loss.discrepancy = discrepancy_term(fr.features, stats);
      rec.loss.lambda = ec.lambda;
      rec.loss.total = rec.loss.entropy + ec.lambda * rec.loss.discrepancy;
      logits = fr.logits;
      if (ec.trace) ec.trace(TraceEvent::predict, i);
    }

    rec.frozen = !updated;
    correct += count_correct(logits, batch.labels);
    seen += static_cast<long long>(batch.labels.size());
    rec.running_acc = static_cast<double>(correct) / static_cast<double>(seen);
    rec.wall_seconds = now_seconds() - t0;

    if (first_entropy < 0.0) first_entropy = rec.loss.entropy;
    if (metrics.diverged_at < 0 && rec.loss.entropy > 3.0 * first_entropy) metrics.diverged_at = i;

    metrics.per_batch.push_back(rec);
  }

  metrics.final_acc = seen > 0 ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
  metrics.total_seconds = now_seconds() - t0;
  return {std::move(metrics), std::move(model), std::move(state)};
}

}  // namespace

Model train_source(Model m, const LabeledSet& clean, int epochs, Scalar lr, std::uint64_t seed,
                   int batch_size) {
  const Index n = clean.size();
  if (n == 0 || epochs <= 0) return m;
  const Index bs = std::min<Index>(batch_size, n);

  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng(mix_seed(seed, 0x7261696eULL, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    for (Index start = 0; start + bs <= n; start += bs) {
      Tensor xb = Tensor::matrix(bs, clean.images.cols());
      std::vector<int> yb(static_cast<std::size_t>(bs));
      for (Index r = 0; r < bs; ++r) {
        const Index src = order[static_cast<std::size_t>(start + r)];
        for (Index j = 0; j < clean.images.cols(); ++j) xb(r, j) = clean.images(src, j);
        yb[static_cast<std::size_t>(r)] = clean.labels[static_cast<std::size_t>(src)];
      }
      Graph g;
      TapeForward tf = forward_tape(m, g, xb, ParamFilter::kAll);
      Var loss = cross_entropy_mean(tf.logits, yb);
      Gradients grads = g.backward(loss);
      for (const auto& [name, leaf] : tf.leaves) {
        Tensor& p = m.params.at(name);
        p.m() -= lr * grads.at(leaf).m();
      }
    }
  }
  return m;
}

double evaluate_accuracy(const Model& m, const LabeledSet& set, int batch_size) {
  const Index n = set.size();
  long long correct = 0;
  for (Index start = 0; start < n; start += batch_size) {
    const Index bs = std::min<Index>(batch_size, n - start);
    Tensor xb = Tensor::matrix(bs, set.images.cols());
    std::vector<int> yb(static_cast<std::size_t>(bs));
    for (Index r = 0; r < bs; ++r) {
      for (Index j = 0; j < set.images.cols(); ++j) xb(r, j) = set.images(start + r, j);
      yb[static_cast<std::size_t>(r)] = set.labels[static_cast<std::size_t>(start + r)];
    }
    ForwardResult fr = forward(m, xb);
    correct += count_correct(fr.logits, yb);
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

PretrainResult pretrain_mgg(const Model& source, const RunConfig& cfg, const LabeledSet& val_clean,
                            const std::vector<CorruptionSpec>& val_specs, const SourceStats& stats,
                            std::uint64_t seed) {
  for (const CorruptionSpec& s : val_specs)
    if (s.severity > 0 && is_test_kind(s.kind))
      throw DisjointnessError("pretrain_mgg: test corruption kind '" + kind_name(s.kind) +
                              "' in pre-training data");
  if (val_specs.empty()) throw std::invalid_argument("pretrain_mgg: no corruption specs");
  if (cfg.reinit_every < 1 || cfg.reinit_every > std::max(1, cfg.pretrain_iters))
    throw std::invalid_argument("pretrain_mgg: reinit_every must be in [1, T]");

  const Index n = adaptable_count(source);
  const Scalar eta_theta = cfg.resolved_eta_theta();

  // Fixed corrupted pool: every sample drawn once through a uniformly
  // assigned validation corruption.
  LabeledSet pool = val_clean;
  {
    Rng assign(mix_seed(seed, 0xa110cULL));
    const Index dim = val_clean.images.cols();
    for (Index i = 0; i < val_clean.size(); ++i) {
      const CorruptionSpec& cs = val_specs[assign.index(val_specs.size())];
      CorruptionSpec per{cs.kind, cs.severity,
                         mix_seed(cs.seed == 0 ? seed : cs.seed, 0x5a17, static_cast<std::uint64_t>(i))};
      Tensor row = Tensor::vector(dim);
      for (Index j = 0; j < dim; ++j) row(j) = val_clean.images(i, j);
      Tensor corrupted = corrupt(row, per);
      for (Index j = 0; j < dim; ++j) pool.images(i, j) = corrupted(j);
    }
  }

  // Deterministic evaluation episode over the pool in natural order.
  std::vector<Batch> eval_stream;
  {
    const Index bs = cfg.batch_size;
    for (Index start = 0; start + bs <= pool.size(); start += bs) {
      Batch b;
      b.images = Tensor::matrix(bs, pool.images.cols());
      b.labels.assign(pool.labels.begin() + start, pool.labels.begin() + start + bs);
      for (Index r = 0; r < bs; ++r)
        for (Index j = 0; j < pool.images.cols(); ++j) b.images(r, j) = pool.images(start + r, j);
      eval_stream.push_back(std::move(b));
    }
  }

  auto score = [&](const MggWeights& w, std::uint64_t eval_seed) {
    MggState st;
    st.weights = w;
    st.bank = init_bank(n, cfg.gml_d, mix_seed(eval_seed, kBankTag));
    st.preproc = init_preproc(n, cfg.preproc_eps);
    EpisodeConfig ec;
    ec.eta_theta = eta_theta;
    ec.lambda = cfg.lambda;
    ec.order = UpdateOrder::deferred;
    EpisodeOutcome out = run_mgg_episode(source, std::move(st), eval_stream, stats, ec);
    Scalar total = 0.0;
    for (const BatchRecord& r : out.metrics.per_batch) total += r.loss.total;
    return total / static_cast<Scalar>(out.metrics.per_batch.size());
  };

  PretrainResult result;
  MggWeights weights = init_weights(cfg.gml_d, mix_seed(seed, 0x77ULL));
  result.initial_score = score(weights, mix_seed(seed, 0xe7a1ULL));
  result.best_score = result.initial_score;
  result.weights = weights;

  if (cfg.pretrain_iters == 0) return result;

  // Training stream: reshuffled passes over the corrupted pool.
  const Index bs = cfg.batch_size;
  std::vector<Index> order(static_cast<std::size_t>(pool.size()));
  for (Index i = 0; i < pool.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  Rng epoch_rng(mix_seed(seed, 0xe90cULL));
  Index cursor = pool.size();  // force a shuffle on first use

  auto next_batch = [&]() {
    if (cursor + bs > pool.size()) {
      epoch_rng.shuffle(order);
      cursor = 0;
    }
    Batch b;
    b.images = Tensor::matrix(bs, pool.images.cols());
    b.labels.resize(static_cast<std::size_t>(bs));
    for (Index r = 0; r < bs; ++r) {
      const Index src = order[static_cast<std::size_t>(cursor + r)];
      for (Index j = 0; j < pool.images.cols(); ++j) b.images(r, j) = pool.images(src, j);
      b.labels[static_cast<std::size_t>(r)] = pool.labels[static_cast<std::size_t>(src)];
    }
    cursor += bs;
    return b;
  };

  Model model = source;
  Tensor theta = flatten_adaptable(model);
  MggState state;
  state.weights = weights;
  int segment = 0;

  auto reinit_segment = [&]() {
    model = source;
    theta = flatten_adaptable(model);
    state.bank = init_bank(n, cfg.gml_d, mix_seed(seed, kReinitTag, static_cast<std::uint64_t>(segment)));
    state.preproc = init_preproc(n, cfg.preproc_eps);
    ++segment;
  };
  reinit_segment();

  std::optional<Tensor> prev_z;
  for (int t = 0; t < cfg.pretrain_iters; ++t) {
    if (t > 0 && t % cfg.reinit_every == 0) {
      const Scalar s = score(state.weights, mix_seed(seed, 0xe7a1ULL));
      result.segment_scores.push_back(s);
      if (s < result.best_score) {
        result.best_score = s;
        result.weights = state.weights;
      }
      reinit_segment();
      prev_z.reset();
    }

    const Batch batch = next_batch();

    std::optional<GmlMemoryBank> pre_bank;
    bool updated = false;
    if (prev_z) {
      pre_bank = state.bank;
      state = step_memorize(std::move(state), *prev_z);
      const Tensor ghat = generate(state, *prev_z);
      theta.m() -= eta_theta * ghat.m();
      model = scatter_adaptable(std::move(model), theta);
      updated = true;
    }

    TtaLossResult res = tta_loss(model, batch.images, stats, cfg.lambda);
    check_finite(res.breakdown, t);

    if (updated && pre_bank) {
      MggState pre_state{state.weights, std::move(*pre_bank), state.preproc};
      const MggWeightGrads mg = meta_grad(pre_state, *prev_z, res.grad_adaptable, eta_theta);
      apply_weight_grads(state.weights, mg, cfg.eta_phir);
    }

    PreprocResult pr = preprocess(state.preproc, res.grad_adaptable);
    state.preproc = std::move(pr.state);
    prev_z = std::move(pr.z);
  }

  const Scalar s = score(state.weights, mix_seed(seed, 0xe7a1ULL));
  result.segment_scores.push_back(s);
  if (s < result.best_score) {
    result.best_score = s;
    result.weights = state.weights;
  }
  return result;
}

RunMetrics adapt(const Model& source, const MggWeights& weights, const std::vector<Batch>& stream,
                 const RunConfig& cfg, const SourceStats& stats, std::uint64_t seed,
                 TraceFn trace) {
  const Index n = adaptable_count(source);
  MggState state;
  state.weights = weights;
  state.bank = init_bank(n, weights.d, mix_seed(seed, kBankTag));
  state.preproc = init_preproc(n, cfg.preproc_eps);

  EpisodeConfig ec;
  ec.eta_theta = cfg.resolved_eta_theta();
  ec.lambda = cfg.lambda;
  ec.order = cfg.update_order;
  ec.budget = cfg.budget;
  ec.trace = std::move(trace);

  EpisodeOutcome out = run_mgg_episode(source, std::move(state), stream, stats, ec);
  out.metrics.method = "mgtta";
  out.metrics.seed = seed;
  return std::move(out.metrics);
}

RunMetrics run_baseline(const Model& source, BaselineMethod method,
                        const std::vector<Batch>& stream, const RunConfig& cfg,
                        const SourceStats& stats, std::uint64_t seed) {
  RunMetrics metrics;
  metrics.method = method == BaselineMethod::no_adapt ? "no_adapt" : "sgd_entropy";
  metrics.seed = seed;

  const double t0 = now_seconds();
  const Scalar eta = cfg.resolved_eta_theta();
  const int max_batches = cfg.budget.max_batches.value_or(static_cast<int>(stream.size()) + 1);
  bool time_ok = true;

  Model model = source;
  Tensor theta = flatten_adaptable(model);
  long long seen = 0, correct = 0;
  Scalar first_entropy = -1.0;

  for (int i = 0; i < static_cast<int>(stream.size()); ++i) {
    const Batch& batch = stream[static_cast<std::size_t>(i)];
    if (time_ok && cfg.budget.max_seconds && now_seconds() - t0 >= *cfg.budget.max_seconds)
      time_ok = false;

    const bool do_update =
        method == BaselineMethod::sgd_entropy && time_ok && i < max_batches;

    BatchRecord rec;
    rec.index = i;

    Tensor logits;
    if (do_update) {
      // entropy-only objective: plain SGD on the raw gradient
      TtaLossResult res = tta_loss(model, batch.images, stats, 0.0);
      check_finite(res.breakdown, i);
      rec.loss = res.breakdown;  // discrepancy recorded for diagnostics, weightless
      logits = res.logits;
      theta.m() -= eta * res.grad_adaptable.m();
      model = scatter_adaptable(std::move(model), theta);
      rec.frozen = false;
    } else {
      ForwardResult fr = forward(model, batch.images);
      rec.loss.entropy = entropy_term(fr.logits);
      rec.loss.discrepancy = discrepancy_term(fr.features, stats);
      rec.loss.lambda = 0.0;
      rec.loss.total = rec.loss.entropy;
      logits = fr.logits;
      rec.frozen = true;
    }

    correct += count_correct(logits, batch.labels);
    seen += static_cast<long long>(batch.labels.size());
    rec.running_acc = static_cast<double>(correct) / static_cast<double>(seen);
    rec.wall_seconds = now_seconds() - t0;

    if (first_entropy < 0.0) first_entropy = rec.loss.entropy;
    if (metrics.diverged_at < 0 && rec.loss.entropy > 3.0 * first_entropy) metrics.diverged_at = i;

    metrics.per_batch.push_back(rec);
  }

  metrics.final_acc = seen > 0 ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
  metrics.total_seconds = now_seconds() - t0;
  return metrics;
}

RunMetrics budget_eval(const Model& source, const MggWeights& weights,
                       const std::vector<Batch>& stream, const RunConfig& cfg,
                       const SourceStats& stats, std::uint64_t seed, const BudgetSpec& budget) {
  RunConfig limited = cfg;
  limited.budget = budget;
  RunMetrics m = adapt(source, weights, stream, limited, stats, seed);
  m.method = "mgtta";
  return m;
}

}  // namespace mgtta
