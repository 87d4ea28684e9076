#include <cmath>

#include "layoutgen/errors.hpp"
#include "layoutgen/model.hpp"

namespace layoutgen {

using num::Tape;
using num::Tensor;
using num::Var;

namespace {

struct TrainingSet {
  std::vector<LayoutGraph> graphs;
  std::vector<ReconTargets> targets;
  std::vector<SoftGraph> lifted;
  std::vector<DiscPlan> lifted_plans;  // zero-probability pairs dropped
  DiscPlan dense_plan;                 // all pairs (for decoder outputs)
};

TrainingSet prepare(const std::vector<LayoutDocument>& corpus, const GraphConfig& graph_cfg,
                    const TrainingConfig& cfg) {
  TrainingSet set;
  set.graphs.reserve(corpus.size());
  for (const LayoutDocument& doc : corpus) {
    LayoutGraph g = build_graph(doc, graph_cfg);
    set.targets.push_back(recon_targets(g, cfg.n_max));
    set.lifted.push_back(lift_graph(g, cfg.n_max));
    set.lifted_plans.push_back(disc_plan(cfg.n_max, &set.lifted.back().edge_probs));
    set.graphs.push_back(std::move(g));
  }
  set.dense_plan = disc_plan(cfg.n_max, nullptr);
  return set;
}

Tensor draw_normals(num::Rng& rng, std::size_t n) {
  Tensor t = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i) t.at(i) = rng.normal();
  return t;
}

void shuffle_indices(std::vector<std::size_t>& idx, num::Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = rng.next_u64() % i;
    std::swap(idx[i - 1], idx[j]);
  }
}

// Runs `epochs` additional epochs in place, appending to the loss trace.
void run_epochs(ModelState& st, const TrainingSet& set, int epochs, const EpochCallback& on_epoch) {
  const TrainingConfig& cfg = st.cfg;
  const std::size_t n_docs = set.graphs.size();
  const std::size_t batch = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.batch_size));
  const std::size_t z_dim = static_cast<std::size_t>(cfg.d_latent);

  std::vector<std::size_t> idx(n_docs);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    // Shuffle from the identity each epoch so the batch order is a pure
    // function of the RNG state (resumed runs replay it exactly).
    for (std::size_t i = 0; i < n_docs; ++i) idx[i] = i;
    shuffle_indices(idx, st.rng);
    double gen_loss_sum = 0.0;
    double disc_loss_sum = 0.0;
    std::size_t seen = 0;

    for (std::size_t begin = 0; begin < n_docs; begin += batch) {
      const std::size_t end = std::min(n_docs, begin + batch);
      const std::size_t b = end - begin;
      const int batch_no = static_cast<int>(begin / batch);

      // Discriminator step: real graphs vs detached prior samples.
      std::vector<SoftGraph> fakes;
      fakes.reserve(b);
      for (std::size_t k = 0; k < b; ++k)
        fakes.push_back(decode_soft(draw_normals(st.rng, z_dim), st.gen, cfg));
      {
        Tape t;
        ParamBinder disc(t, st.disc, BindMode::kTrain);
        std::vector<const SoftGraph*> reals, fake_ptrs;
        std::vector<const DiscPlan*> plans;
        for (std::size_t k = 0; k < b; ++k) {
          const std::size_t i = idx[begin + k];
          reals.push_back(&set.lifted[i]);
          plans.push_back(&set.lifted_plans[i]);
          fake_ptrs.push_back(&fakes[k]);
        }
        Var loss_d = discriminator_batch_loss(t, reals, plans, fake_ptrs, disc, cfg,
                                              set.dense_plan);
        const double loss_d_value = t.value(loss_d).at(0);
        if (!std::isfinite(loss_d_value))
          throw NumericError("numeric failure: discriminator loss is not finite at epoch " +
                             std::to_string(epoch + 1) + ", batch " + std::to_string(batch_no));
        t.backward(loss_d);
        num::adam_step(st.disc, st.opt_disc);
        disc_loss_sum += loss_d_value * static_cast<double>(b);
      }

      // Generator/VAE step.
      {
        Tape t;
        ParamBinder gen(t, st.gen, BindMode::kTrain);
        ParamBinder disc(t, st.disc, BindMode::kFrozen);
        std::vector<const LayoutGraph*> graphs;
        std::vector<const ReconTargets*> targets;
        std::vector<Tensor> eps;
        for (std::size_t k = 0; k < b; ++k) {
          const std::size_t i = idx[begin + k];
          graphs.push_back(&set.graphs[i]);
          targets.push_back(&set.targets[i]);
          eps.push_back(draw_normals(st.rng, z_dim));
        }
        Var loss_g = generator_batch_loss(t, graphs, targets, eps, gen, disc, cfg, set.dense_plan);
        const double loss_g_value = t.value(loss_g).at(0);
        if (!std::isfinite(loss_g_value))
          throw NumericError("numeric failure: generator loss is not finite at epoch " +
                             std::to_string(epoch + 1) + ", batch " + std::to_string(batch_no));
        t.backward(loss_g);
        num::adam_step(st.gen, st.opt_gen);
        gen_loss_sum += loss_g_value * static_cast<double>(b);
        seen += b;
      }
    }

    const double gen_mean = gen_loss_sum / static_cast<double>(seen);
    const double disc_mean = disc_loss_sum / static_cast<double>(seen);
    st.loss_trace.push_back(gen_mean);
    if (on_epoch) on_epoch(static_cast<int>(st.loss_trace.size()), gen_mean, disc_mean);
  }
}

}  // namespace

ModelState train(const std::vector<LayoutDocument>& corpus, const GraphConfig& graph_cfg,
                 const TrainingConfig& cfg, const EpochCallback& on_epoch) {
  if (corpus.empty()) throw InvalidInputError("training corpus is empty");
  ModelState st = init_model(cfg, graph_cfg);
  const TrainingSet set = prepare(corpus, graph_cfg, cfg);
  run_epochs(st, set, cfg.epochs, on_epoch);
  return st;
}

ModelState fine_tune(const ModelState& ckpt, const std::vector<LayoutDocument>& corpus,
                     const FineTuneOptions& opts, const EpochCallback& on_epoch) {
  if (corpus.empty()) throw InvalidInputError("fine-tune corpus is empty");
  if (opts.epochs < 0) throw InvalidInputError("fine-tune: epochs must be >= 0");
  ModelState st = ckpt;
  if (opts.lr) {
    st.cfg.lr = *opts.lr;
    st.opt_gen.lr = *opts.lr;
    st.opt_disc.lr = *opts.lr;
  }
  const TrainingSet set = prepare(corpus, st.graph_cfg, st.cfg);
  run_epochs(st, set, opts.epochs, on_epoch);
  st.cfg.epochs = static_cast<int>(st.loss_trace.size());
  return st;
}

}  // namespace layoutgen
