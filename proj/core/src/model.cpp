#include "layoutgen/model.hpp"

#include <algorithm>
#include <cmath>

#include "layoutgen/errors.hpp"

namespace layoutgen {

using num::ParamStore;
using num::Tape;
using num::Tensor;
using num::Var;

namespace {
constexpr double kBboxDelta = 1e-3;

void add_affine_params(ParamStore& store, num::Rng& rng, const std::string& name,
                       std::size_t fan_in, std::size_t fan_out) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w = Tensor::zeros({fan_in, fan_out});
  for (std::size_t i = 0; i < w.numel(); ++i) w.at(i) = rng.uniform(-s, s);
  store.add(name + ".W", std::move(w));
  store.add(name + ".b", Tensor::zeros({fan_out}));
}

std::size_t decoder_out_dim(const TrainingConfig& cfg) {
  const std::size_t n = static_cast<std::size_t>(cfg.n_max);
  return n * 13 + pair_count(n);
}

constexpr std::size_t kDiscNodeDim = 14;  // presence + 8 type + 4 bbox + slot fraction
}  // namespace

std::string_view to_string(GenObjective o) {
  return o == GenObjective::kMinimax ? "minimax" : "non_saturating";
}

std::optional<GenObjective> parse_gen_objective(std::string_view name) {
  if (name == "minimax") return GenObjective::kMinimax;
  if (name == "non_saturating") return GenObjective::kNonSaturating;
  return std::nullopt;
}

std::size_t pair_count(std::size_t n_max) { return n_max * (n_max - 1) / 2; }

std::size_t pair_index(std::size_t i, std::size_t j, std::size_t n_max) {
  // Pairs (0,1), (0,2), ..., (0,n-1), (1,2), ... in lexicographic order.
  return i * n_max - i * (i + 1) / 2 + (j - i - 1);
}

std::vector<std::string> check_soft_graph(const SoftGraph& s, int n_max) {
  std::vector<std::string> v;
  const std::size_t n = static_cast<std::size_t>(n_max);
  if (s.presence.shape() != std::vector<std::size_t>{n}) v.push_back("presence shape");
  if (s.type_probs.shape() != std::vector<std::size_t>{n, 8}) v.push_back("type_probs shape");
  if (s.bbox.shape() != std::vector<std::size_t>{n, 4}) v.push_back("bbox shape");
  if (s.edge_probs.shape() != std::vector<std::size_t>{pair_count(n)})
    v.push_back("edge_probs shape");
  if (!v.empty()) return v;
  auto in01 = [](double p) { return p >= 0.0 && p <= 1.0; };
  for (std::size_t k = 0; k < n; ++k) {
    if (!in01(s.presence.at(k))) v.push_back("presence out of [0,1]");
    double row = 0.0;
    for (std::size_t c = 0; c < 8; ++c) {
      if (!in01(s.type_probs.at(k, c))) v.push_back("type prob out of [0,1]");
      row += s.type_probs.at(k, c);
    }
    if (std::abs(row - 1.0) > 1e-9) v.push_back("type_probs row does not sum to 1");
    for (std::size_t c = 0; c < 4; ++c)
      if (!in01(s.bbox.at(k, c))) v.push_back("bbox out of [0,1]");
  }
  for (std::size_t p = 0; p < s.edge_probs.numel(); ++p)
    if (!in01(s.edge_probs.at(p))) v.push_back("edge prob out of [0,1]");
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

ModelState init_model(const TrainingConfig& cfg, const GraphConfig& graph_cfg) {
  if (cfg.d_hidden < 1 || cfg.d_latent < 1 || cfg.layers < 1 || cfg.n_max < 1)
    throw InvalidInputError("training config: dimensions and layer count must be positive");
  ModelState st;
  st.cfg = cfg;
  st.graph_cfg = graph_cfg;
  st.rng = num::Rng(cfg.seed);

  const auto h = static_cast<std::size_t>(cfg.d_hidden);
  const auto z = static_cast<std::size_t>(cfg.d_latent);

  add_affine_params(st.gen, st.rng, "enc.proj", kNodeFeatureDim, h);
  for (int l = 0; l < cfg.layers; ++l)
    add_affine_params(st.gen, st.rng, "enc.l" + std::to_string(l), h + h + kEdgeFeatureDim, h);
  add_affine_params(st.gen, st.rng, "vae.mu", h, z);
  add_affine_params(st.gen, st.rng, "vae.logvar", h, z);
  add_affine_params(st.gen, st.rng, "dec.fc", z, h);
  add_affine_params(st.gen, st.rng, "dec.out", h, decoder_out_dim(cfg));

  add_affine_params(st.disc, st.rng, "disc.proj", kDiscNodeDim, h);
  for (int l = 0; l < cfg.layers; ++l)
    add_affine_params(st.disc, st.rng, "disc.l" + std::to_string(l), h + h, h);
  add_affine_params(st.disc, st.rng, "disc.head", h, 1);

  st.opt_gen = num::AdamState::init(st.gen, cfg.lr);
  st.opt_disc = num::AdamState::init(st.disc, cfg.lr);
  return st;
}

Var ParamBinder::operator()(const std::string& name) {
  for (const auto& [n, v] : cache_)
    if (n == name) return v;
  Var v = mode_ == BindMode::kTrain ? tape_.param(*store_, name) : tape_.leaf(store_->value(name));
  cache_.emplace_back(name, v);
  return v;
}

MessagePlan message_plan(const LayoutGraph& g) {
  MessagePlan plan;
  std::vector<std::vector<double>> feats;
  auto push = [&](std::size_t recv, std::size_t send, const Edge& e, bool flipped) {
    plan.recv.push_back(recv);
    plan.send.push_back(send);
    std::vector<double> f(kEdgeFeatureDim, 0.0);
    f[static_cast<std::size_t>(e.kind)] = 1.0;
    // Offset as seen from the receiver: sender center minus receiver center.
    const double sign = flipped ? -1.0 : 1.0;
    f[8] = sign * e.offset[0];
    f[9] = sign * e.offset[1];
    feats.push_back(std::move(f));
  };
  for (const Edge& e : g.edges) {
    if (e.src == e.dst) {
      push(e.src, e.src, e, false);
    } else if (e.kind == RelationKind::kHierarchy) {
      push(e.dst, e.src, e, true);  // directed: message lands at dst only
    } else {
      push(e.src, e.dst, e, false);
      push(e.dst, e.src, e, true);
    }
  }
  plan.edge_feats = Tensor::zeros({feats.size(), kEdgeFeatureDim});
  for (std::size_t m = 0; m < feats.size(); ++m)
    for (std::size_t c = 0; c < kEdgeFeatureDim; ++c) plan.edge_feats.at(m, c) = feats[m][c];
  return plan;
}

Var message_passing_layer(Tape& t, Var h, const MessagePlan& plan, std::size_t n_nodes, Var w,
                          Var b) {
  Var hi = t.gather_rows(h, plan.recv);
  Var hj = t.gather_rows(h, plan.send);
  Var ef = t.leaf(plan.edge_feats);
  Var x = t.concat_cols({hi, hj, ef});
  Var m = t.affine(x, w, b);
  Var s = t.scatter_add_rows(m, plan.recv, n_nodes);
  return t.relu(s);
}

Tensor message_passing_layer(const Tensor& h, const LayoutGraph& g, const Tensor& w,
                             const Tensor& b) {
  Tape t;
  Var hv = t.leaf(h);
  Var out = message_passing_layer(t, hv, message_plan(g), g.node_count(), t.leaf(w), t.leaf(b));
  return t.value(out);
}

EncodeResult encode_graph(Tape& t, const LayoutGraph& g, ParamBinder& gen,
                          const TrainingConfig& cfg) {
  const MessagePlan plan = message_plan(g);
  Var h = t.affine(t.leaf(g.node_features), gen("enc.proj.W"), gen("enc.proj.b"));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string base = "enc.l" + std::to_string(l);
    h = message_passing_layer(t, h, plan, g.node_count(), gen(base + ".W"), gen(base + ".b"));
  }
  return EncodeResult{h, t.mean_rows(h)};
}

std::pair<Tensor, Tensor> encode_graph_values(const LayoutGraph& g, const ParamStore& gen,
                                              const TrainingConfig& cfg) {
  Tape t;
  ParamBinder binder(t, gen);
  EncodeResult r = encode_graph(t, g, binder, cfg);
  return {t.value(r.node_embeddings), t.value(r.pooled)};
}

VaeHeads vae_heads(Tape& t, Var pooled, ParamBinder& gen) {
  return VaeHeads{t.affine(pooled, gen("vae.mu.W"), gen("vae.mu.b")),
                  t.affine(pooled, gen("vae.logvar.W"), gen("vae.logvar.b"))};
}

Var reparameterize(Tape& t, Var mu, Var log_var, const Tensor& eps) {
  Var sigma = t.exp(t.scale(log_var, 0.5));
  return t.add(mu, t.mul(sigma, t.leaf(eps)));
}

SoftGraphVars decode(Tape& t, Var z, ParamBinder& gen, const TrainingConfig& cfg) {
  const std::size_t n = static_cast<std::size_t>(cfg.n_max);
  const std::size_t pairs = pair_count(n);
  Var h = t.relu(t.affine(z, gen("dec.fc.W"), gen("dec.fc.b")));
  Var o = t.affine(h, gen("dec.out.W"), gen("dec.out.b"));

  SoftGraphVars s;
  s.presence = t.sigmoid(t.slice(o, 0, n));
  s.type_probs = t.softmax_rows(t.reshape(t.slice(o, n, n + 8 * n), {n, 8}));
  Var bbox_raw = t.sigmoid(t.reshape(t.slice(o, 9 * n, 13 * n), {n, 4}));
  s.bbox = t.bbox_order(bbox_raw, kBboxDelta);
  s.edge_probs = t.sigmoid(t.slice(o, 13 * n, 13 * n + pairs));
  return s;
}

SoftGraph materialize(const Tape& t, const SoftGraphVars& s) {
  return SoftGraph{t.value(s.presence), t.value(s.type_probs), t.value(s.bbox),
                   t.value(s.edge_probs)};
}

SoftGraph decode_soft(const Tensor& z, const ParamStore& gen, const TrainingConfig& cfg) {
  Tape t;
  ParamBinder binder(t, gen);
  return materialize(t, decode(t, t.leaf(z), binder, cfg));
}

ReconTargets recon_targets(const LayoutGraph& g, int n_max) {
  const std::size_t n = g.node_count();
  const std::size_t nm = static_cast<std::size_t>(n_max);
  if (n > nm)
    throw InvalidInputError("document \"" + g.doc_id + "\" has " + std::to_string(n) +
                            " elements, more than n_max = " + std::to_string(n_max));
  ReconTargets tg;
  tg.n = n;
  tg.presence = Tensor::zeros({nm});
  for (std::size_t k = 0; k < n; ++k) tg.presence.at(k) = 1.0;
  tg.type_labels.resize(n);
  tg.bbox = Tensor::zeros({n, 4});
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t label = 0;
    for (std::size_t c = 0; c < 8; ++c)
      if (g.node_features.at(k, c) == 1.0) label = c;
    tg.type_labels[k] = label;
    for (std::size_t c = 0; c < 4; ++c) tg.bbox.at(k, c) = g.node_features.at(k, 8 + c);
  }
  tg.adjacency = Tensor::zeros({pair_count(nm)});
  for (const Edge& e : g.edges) {
    if (e.src == e.dst) continue;
    const std::size_t a = std::min(e.src, e.dst), b = std::max(e.src, e.dst);
    tg.adjacency.at(pair_index(a, b, nm)) = 1.0;
  }
  return tg;
}

Var reconstruction_loss(Tape& t, const SoftGraphVars& s, const ReconTargets& targets) {
  Var presence_term = t.bce(s.presence, t.leaf(targets.presence), Tape::Reduction::kSum);
  Var loss = presence_term;
  if (targets.n > 0) {
    Var type_term =
        t.cross_entropy_rows(t.slice_rows(s.type_probs, 0, targets.n), targets.type_labels);
    Var bbox_term = t.mse(t.slice_rows(s.bbox, 0, targets.n), t.leaf(targets.bbox));
    loss = t.add(loss, t.add(type_term, bbox_term));
  }
  Var edge_term = t.bce(s.edge_probs, t.leaf(targets.adjacency), Tape::Reduction::kSum);
  return t.add(loss, edge_term);
}

double reconstruction_loss_value(const SoftGraph& s, const LayoutGraph& g, int n_max) {
  Tape t;
  SoftGraphVars vars{t.leaf(s.presence), t.leaf(s.type_probs), t.leaf(s.bbox),
                     t.leaf(s.edge_probs)};
  return t.value(reconstruction_loss(t, vars, recon_targets(g, n_max))).at(0);
}

Var vae_loss(Tape& t, const SoftGraphVars& s, const ReconTargets& targets, Var mu, Var log_var,
             double beta) {
  Var recon = reconstruction_loss(t, s, targets);
  if (beta == 0.0) return recon;
  return t.add(recon, t.scale(t.kl_diag_gaussian(mu, log_var), beta));
}

double vae_loss_value(const SoftGraph& s, const LayoutGraph& g, const Tensor& mu,
                      const Tensor& log_var, double beta, int n_max) {
  Tape t;
  SoftGraphVars vars{t.leaf(s.presence), t.leaf(s.type_probs), t.leaf(s.bbox),
                     t.leaf(s.edge_probs)};
  return t.value(vae_loss(t, vars, recon_targets(g, n_max), t.leaf(mu), t.leaf(log_var), beta))
      .at(0);
}

SoftGraph lift_graph(const LayoutGraph& g, int n_max) {
  const std::size_t n = g.node_count();
  const std::size_t nm = static_cast<std::size_t>(n_max);
  if (n > nm)
    throw InvalidInputError("document \"" + g.doc_id + "\" has " + std::to_string(n) +
                            " elements, more than n_max = " + std::to_string(n_max));
  SoftGraph s;
  s.presence = Tensor::zeros({nm});
  s.type_probs = Tensor::full({nm, 8}, 1.0 / 8.0);
  s.bbox = Tensor::zeros({nm, 4});
  for (std::size_t k = 0; k < n; ++k) {
    s.presence.at(k) = 1.0;
    for (std::size_t c = 0; c < 8; ++c) s.type_probs.at(k, c) = 0.0;
    std::size_t label = 0;
    for (std::size_t c = 0; c < 8; ++c)
      if (g.node_features.at(k, c) == 1.0) label = c;
    s.type_probs.at(k, label) = 1.0;
    for (std::size_t c = 0; c < 4; ++c) s.bbox.at(k, c) = g.node_features.at(k, 8 + c);
  }
  s.edge_probs = Tensor::zeros({pair_count(nm)});
  for (const Edge& e : g.edges) {
    if (e.src == e.dst) continue;
    const std::size_t a = std::min(e.src, e.dst), b = std::max(e.src, e.dst);
    s.edge_probs.at(pair_index(a, b, nm)) = 1.0;
  }
  return s;
}

DiscPlan disc_plan(int n_max, const Tensor* edge_probs) {
  DiscPlan plan;
  const std::size_t nm = static_cast<std::size_t>(n_max);
  for (std::size_t i = 0; i < nm; ++i) {
    for (std::size_t j = i + 1; j < nm; ++j) {
      const std::size_t p = pair_index(i, j, nm);
      if (edge_probs != nullptr && edge_probs->at(p) == 0.0) continue;
      plan.recv.push_back(i);
      plan.send.push_back(j);
      plan.pair_of_message.push_back(p);
      plan.recv.push_back(j);
      plan.send.push_back(i);
      plan.pair_of_message.push_back(p);
    }
  }
  return plan;
}

Var discriminate(Tape& t, const SoftGraphVars& s, ParamBinder& disc, const TrainingConfig& cfg,
                 const DiscPlan& plan) {
  const std::size_t nm = static_cast<std::size_t>(cfg.n_max);
  Tensor slot_frac = Tensor::zeros({nm, 1});
  for (std::size_t k = 0; k < nm; ++k)
    slot_frac.at(k, 0) = nm > 1 ? static_cast<double>(k) / static_cast<double>(nm - 1) : 0.0;

  Var features = t.concat_cols(
      {t.reshape(s.presence, {nm, 1}), s.type_probs, s.bbox, t.leaf(slot_frac)});
  Var h = t.affine(features, disc("disc.proj.W"), disc("disc.proj.b"));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string base = "disc.l" + std::to_string(l);
    Var hi = t.gather_rows(h, plan.recv);
    Var hj = t.gather_rows(h, plan.send);
    Var x = t.concat_cols({hi, hj});
    Var m = t.affine(x, disc(base + ".W"), disc(base + ".b"));
    Var scaled = t.row_scale(m, t.gather_elems(s.edge_probs, plan.pair_of_message));
    h = t.relu(t.scatter_add_rows(scaled, plan.recv, nm));
  }
  Var pooled = t.mean_rows(h);
  Var logit = t.affine(pooled, disc("disc.head.W"), disc("disc.head.b"));
  return t.sigmoid(logit);
}

double discriminate_value(const SoftGraph& s, const ParamStore& disc,
                          const TrainingConfig& cfg) {
  Tape t;
  ParamBinder binder(t, disc);
  SoftGraphVars vars{t.leaf(s.presence), t.leaf(s.type_probs), t.leaf(s.bbox),
                     t.leaf(s.edge_probs)};
  const DiscPlan plan = disc_plan(cfg.n_max, &s.edge_probs);
  return t.value(discriminate(t, vars, binder, cfg, plan)).at(0);
}

double discriminate_value(const LayoutGraph& g, const ParamStore& disc,
                          const TrainingConfig& cfg) {
  return discriminate_value(lift_graph(g, cfg.n_max), disc, cfg);
}

Var gan_value(Tape& t, Var d_real, Var d_fake) {
  return t.add(t.log_prob(d_real), t.log_one_minus(d_fake));
}

double gan_value(double d_real, double d_fake) {
  auto clamp = [](double p) {
    return std::min(std::max(p, Tape::kProbEps), 1.0 - Tape::kProbEps);
  };
  return std::log(clamp(d_real)) + std::log(1.0 - clamp(d_fake));
}

namespace {
SoftGraphVars as_vars(Tape& t, const SoftGraph& s) {
  return SoftGraphVars{t.leaf(s.presence), t.leaf(s.type_probs), t.leaf(s.bbox),
                       t.leaf(s.edge_probs)};
}
}  // namespace

Var discriminator_batch_loss(Tape& t, const std::vector<const SoftGraph*>& reals,
                             const std::vector<const DiscPlan*>& real_plans,
                             const std::vector<const SoftGraph*>& fakes, ParamBinder& disc,
                             const TrainingConfig& cfg, const DiscPlan& dense_plan) {
  if (reals.empty() || reals.size() != fakes.size() || reals.size() != real_plans.size())
    throw InvalidInputError("discriminator_batch_loss: batch lists must be non-empty and aligned");
  Var acc{};
  for (std::size_t k = 0; k < reals.size(); ++k) {
    SoftGraphVars real_vars = as_vars(t, *reals[k]);
    Var d_real = discriminate(t, real_vars, disc, cfg, *real_plans[k]);
    SoftGraphVars fake_vars = as_vars(t, *fakes[k]);
    Var d_fake = discriminate(t, fake_vars, disc, cfg, dense_plan);
    Var term = gan_value(t, d_real, d_fake);
    acc = k == 0 ? term : t.add(acc, term);
  }
  return t.scale(acc, -1.0 / static_cast<double>(reals.size()));
}

Var generator_batch_loss(Tape& t, const std::vector<const LayoutGraph*>& graphs,
                         const std::vector<const ReconTargets*>& targets,
                         const std::vector<Tensor>& eps, ParamBinder& gen, ParamBinder& disc,
                         const TrainingConfig& cfg, const DiscPlan& dense_plan) {
  if (graphs.empty() || graphs.size() != targets.size() || graphs.size() != eps.size())
    throw InvalidInputError("generator_batch_loss: batch lists must be non-empty and aligned");
  Var acc{};
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    EncodeResult enc = encode_graph(t, *graphs[k], gen, cfg);
    VaeHeads heads = vae_heads(t, enc.pooled, gen);
    Var z = reparameterize(t, heads.mu, heads.log_var, eps[k]);
    SoftGraphVars soft = decode(t, z, gen, cfg);
    Var term = vae_loss(t, soft, *targets[k], heads.mu, heads.log_var, cfg.beta);
    if (cfg.gamma != 0.0) {
      Var d_fake = discriminate(t, soft, disc, cfg, dense_plan);
      Var adv = cfg.gen_objective == GenObjective::kNonSaturating
                    ? t.scale(t.log_prob(d_fake), -1.0)
                    : t.log_one_minus(d_fake);
      term = t.add(term, t.scale(adv, cfg.gamma));
    }
    acc = k == 0 ? term : t.add(acc, term);
  }
  Var loss = t.scale(acc, 1.0 / static_cast<double>(graphs.size()));
  if (cfg.lambda != 0.0) {
    Var l2{};
    const num::ParamStore& store = gen.store();
    for (std::size_t p = 0; p < store.size(); ++p) {
      Var term = t.sum_squares(gen(store.name(p)));
      l2 = p == 0 ? term : t.add(l2, term);
    }
    loss = t.add(loss, t.scale(l2, cfg.lambda));
  }
  return loss;
}

}  // namespace layoutgen
