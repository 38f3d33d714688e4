#include "mgtta/tta_loss.hpp"

#include <cmath>
#include <stdexcept>

namespace mgtta {

SourceStats collect_source_stats(const Model& m, const LabeledSet& clean, int k) {
  if (k < 2) throw std::invalid_argument("collect_source_stats: k must be >= 2");
  if (static_cast<Index>(k) > clean.size())
    throw std::invalid_argument("collect_source_stats: k exceeds set size");

  Tensor batch = Tensor::matrix(k, clean.images.cols());
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < clean.images.cols(); ++j) batch(i, j) = clean.images(i, j);

  ForwardResult fr = forward(m, batch);
  SourceStats stats;
  stats.sample_count = k;
  for (const Tensor& f : fr.features) {
    const Mat& x = f.m();
    RowVec mu = x.colwise().mean();
    RowVec sigma =
        ((x.rowwise() - mu).array().square().colwise().sum() / static_cast<Scalar>(x.rows()))
            .sqrt();
    stats.mu.push_back(Tensor::vector(Vec(mu.transpose())));
    stats.sigma.push_back(Tensor::vector(Vec(sigma.transpose())));
  }
  return stats;
}

Scalar entropy_term(const Tensor& logits) {
  const Mat& x = logits.m();
  Scalar total = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar mx = x.row(i).maxCoeff();
    const Scalar lse = mx + std::log((x.row(i).array() - mx).exp().sum());
    const RowVec p = (x.row(i).array() - lse).exp();
    total += lse - p.dot(x.row(i));
  }
  return total / static_cast<Scalar>(x.rows());
}

Scalar discrepancy_term(const std::vector<Tensor>& features, const SourceStats& stats) {
  if (features.size() != stats.mu.size())
    throw std::invalid_argument("discrepancy_term: feature layers (" +
                                std::to_string(features.size()) + ") != stats layers (" +
                                std::to_string(stats.mu.size()) + ")");
  Scalar total = 0.0;
  for (std::size_t l = 0; l < features.size(); ++l) {
    const Mat& x = features[l].m();
    if (x.rows() < 2) throw std::invalid_argument("discrepancy_term: batch must have >= 2 rows");
    RowVec mu = x.colwise().mean();
    RowVec sigma =
        ((x.rowwise() - mu).array().square().colwise().sum() / static_cast<Scalar>(x.rows()))
            .sqrt();
    total += (mu - stats.mu[l].m().row(0)).squaredNorm();
    total += (sigma - stats.sigma[l].m().row(0)).squaredNorm();
  }
  return total;
}

TtaLossResult tta_loss(const Model& m, const Tensor& batch, const SourceStats& stats,
                       Scalar lambda) {
  Graph g;
  TapeForward tf = forward_tape(m, g, batch, ParamFilter::kAdaptableOnly);

  Var loss = entropy_mean(tf.logits);
  if (tf.features.size() != stats.mu.size())
    throw std::invalid_argument("tta_loss: stats were collected for a different architecture");
  Var disc_acc{};
  bool have_disc = false;
  for (std::size_t l = 0; l < tf.features.size(); ++l) {
    Var dmu = sub(col_mean(tf.features[l]), g.constant(stats.mu[l]));
    Var dsig = sub(col_std(tf.features[l]), g.constant(stats.sigma[l]));
    Var term = add(sq_norm(dmu), sq_norm(dsig));
    disc_acc = have_disc ? add(disc_acc, term) : term;
    have_disc = true;
  }
  Var total = have_disc ? add(loss, scale(disc_acc, lambda)) : loss;

  Gradients grads = g.backward(total);

  TtaLossResult out;
  out.breakdown.entropy = g.value(loss)(0);
  out.breakdown.discrepancy = have_disc ? g.value(disc_acc)(0) : 0.0;
  out.breakdown.lambda = lambda;
  out.breakdown.total = g.value(total)(0);
  out.logits = g.value(tf.logits);

  out.grad_adaptable = Tensor::vector(adaptable_count(m));
  Index k = 0;
  for (const auto& [name, leaf] : tf.leaves) {
    const Tensor& t = grads.at(leaf);
    for (Scalar v : t.data()) out.grad_adaptable(k++) = v;
  }
  return out;
}

LossBreakdown eval_tta_loss(const Model& m, const Tensor& batch, const SourceStats& stats,
                            Scalar lambda) {
  ForwardResult fr = forward(m, batch);
  LossBreakdown b;
  b.entropy = entropy_term(fr.logits);
  b.discrepancy = discrepancy_term(fr.features, stats);
  b.lambda = lambda;
  b.total = b.entropy + lambda * b.discrepancy;
  return b;
}

}  // namespace mgtta
