#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mgtta/mgg.hpp"
#include "mgtta/model.hpp"
#include "mgtta/shiftgen.hpp"
#include "mgtta/tta_loss.hpp"

namespace mgtta {

// Raised when a pre-training stream contains corruption kinds reserved for
// testing (or vice versa without an explicit override).
struct DisjointnessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a loss turns non-finite; carries the offending batch.
struct NumericError : std::runtime_error {
  NumericError(const std::string& what, int batch) : std::runtime_error(what), batch_index(batch) {}
  int batch_index = -1;
};

struct BudgetSpec {
  std::optional<double> max_seconds;
  std::optional<int> max_batches;

  bool any() const { return max_seconds.has_value() || max_batches.has_value(); }
};

enum class UpdateOrder {
  deferred,   // apply the previous batch's refined gradient before predicting (Algorithm-style)
  immediate,  // predict, then update with this batch's own gradient
};

struct RunConfig {
  Scalar eta_theta = 0.0;  // 0 -> auto: 1e-3 for batch > 4, else 1e-4
  Scalar eta_phir = 1e-2;
  Scalar lambda = 0.4;
  int batch_size = 64;
  int pretrain_iters = 300;
  int reinit_every = 64;
  Index gml_d = 8;
  std::vector<std::uint64_t> seeds = {1};
  BudgetSpec budget;
  UpdateOrder update_order = UpdateOrder::deferred;
  Scalar preproc_eps = 1e-10;

  Scalar resolved_eta_theta() const {
    if (eta_theta > 0.0) return eta_theta;
    return batch_size <= 4 ? 1e-4 : 1e-3;
  }
};

struct BatchRecord {
  int index = 0;
  double wall_seconds = 0.0;  // excluded from determinism guarantees
  LossBreakdown loss;
  double running_acc = 0.0;
  bool frozen = false;  // no parameter update happened while handling this batch
};

struct RunMetrics {
  std::string run_id;
  std::string method;
  std::uint64_t seed = 0;
  std::vector<BatchRecord> per_batch;
  double final_acc = 0.0;
  int diverged_at = -1;  // first batch whose entropy exceeded 3x the initial entropy
  double total_seconds = 0.0;
};

enum class BaselineMethod { no_adapt, sgd_entropy };

enum class TraceEvent { predict, grad, memorize, generate, theta_update, phir_update };
using TraceFn = std::function<void(TraceEvent, int batch_index)>;

// Supervised cross-entropy training of all parameters; plain SGD.
Model train_source(Model m, const LabeledSet& clean, int epochs, Scalar lr, std::uint64_t seed,
                   int batch_size = 32);

double evaluate_accuracy(const Model& m, const LabeledSet& set, int batch_size = 256);

struct PretrainResult {
  MggWeights weights;        // best-scoring checkpoint
  Scalar best_score = 0.0;   // mean TTA validation loss of the returned weights
  Scalar initial_score = 0.0;
  std::vector<Scalar> segment_scores;  // score after each memory-reinit boundary
};

// Meta-trains the shared optimizer weights on a small pool of samples
// corrupted with held-out validation kinds only. Every reinit_every
// iterations the memories, preprocessing state and model are reset, the
// current weights are scored on a fixed validation episode, and the best
// scorer wins.
PretrainResult pretrain_mgg(const Model& source, const RunConfig& cfg, const LabeledSet& val_clean,
                            const std::vector<CorruptionSpec>& val_specs, const SourceStats& stats,
                            std::uint64_t seed);

// Online adaptation with a frozen pre-trained optimizer.
RunMetrics adapt(const Model& source, const MggWeights& weights, const std::vector<Batch>& stream,
                 const RunConfig& cfg, const SourceStats& stats, std::uint64_t seed,
                 TraceFn trace = nullptr);

RunMetrics run_baseline(const Model& source, BaselineMethod method,
                        const std::vector<Batch>& stream, const RunConfig& cfg,
                        const SourceStats& stats, std::uint64_t seed);

// Same run with an injected budget; updates stop when it is exhausted and
// the rest of the stream is inference-only.
RunMetrics budget_eval(const Model& source, const MggWeights& weights,
                       const std::vector<Batch>& stream, const RunConfig& cfg,
                       const SourceStats& stats, std::uint64_t seed, const BudgetSpec& budget);

}  // namespace mgtta
