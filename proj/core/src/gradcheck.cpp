#include "layoutgen/errors.hpp"
#include "layoutgen/model.hpp"

namespace layoutgen {

using num::Tape;
using num::Tensor;
using num::Var;

namespace {

// 4-element fixture exercising alignment, proximity and both hierarchy rules.
LayoutDocument grad_check_fixture() {
  LayoutDocument doc;
  doc.id = "grad-check-fixture";
  LayoutElement heading;
  heading.type = ElementType::kHeading;
  heading.bbox = {0.10, 0.05, 0.60, 0.10};
  heading.font_size = 0.03;
  LayoutElement text;
  text.type = ElementType::kTextBlock;
  text.bbox = {0.10, 0.13, 0.90, 0.35};
  text.font_size = 0.018;
  LayoutElement image;
  image.type = ElementType::kImage;
  image.bbox = {0.25, 0.40, 0.75, 0.60};
  LayoutElement caption;
  caption.type = ElementType::kCaption;
  caption.bbox = {0.25, 0.62, 0.75, 0.66};
  caption.font_size = 0.014;
  doc.elements = {heading, text, image, caption};
  return doc;
}

}  // namespace

num::GradCheckResult composite_grad_check(std::uint64_t seed) {
  // Full architecture at reduced width; the parameter set is complete
  // (encoder, both VAE heads, decoder, discriminator), only the dims shrink
  // so the per-coordinate sweep stays fast.
  TrainingConfig cfg;
  cfg.d_hidden = 8;
  cfg.d_latent = 4;
  cfg.layers = 2;
  cfg.n_max = 6;
  cfg.seed = seed;
  const GraphConfig graph_cfg;

  ModelState st = init_model(cfg, graph_cfg);
  const LayoutGraph g = build_graph(grad_check_fixture(), graph_cfg);
  const ReconTargets targets = recon_targets(g, cfg.n_max);
  const SoftGraph lifted = lift_graph(g, cfg.n_max);
  const DiscPlan lifted_plan = disc_plan(cfg.n_max, &lifted.edge_probs);
  const DiscPlan dense_plan = disc_plan(cfg.n_max, nullptr);

  // Frozen noise so the objective is a pure function of the parameters.
  Tensor eps = Tensor::zeros({static_cast<std::size_t>(cfg.d_latent)});
  for (std::size_t i = 0; i < eps.numel(); ++i) eps.at(i) = st.rng.normal();

  auto loss = [&](bool with_grad) -> double {
    Tape t;
    ParamBinder gen(t, st.gen, BindMode::kTrain);
    ParamBinder disc(t, st.disc, BindMode::kTrain);

    EncodeResult enc = encode_graph(t, g, gen, cfg);
    VaeHeads heads = vae_heads(t, enc.pooled, gen);
    Var z = reparameterize(t, heads.mu, heads.log_var, eps);
    SoftGraphVars soft = decode(t, z, gen, cfg);
    Var generator_loss = vae_loss(t, soft, targets, heads.mu, heads.log_var, cfg.beta);

    Var d_fake = discriminate(t, soft, disc, cfg, dense_plan);
    Var adv = cfg.gen_objective == GenObjective::kNonSaturating ? t.scale(t.log_prob(d_fake), -1.0)
                                                                : t.log_one_minus(d_fake);
    generator_loss = t.add(generator_loss, t.scale(adv, cfg.gamma));

    Var l2{};
    bool first = true;
    for (std::size_t p = 0; p < st.gen.size(); ++p) {
      Var term = t.sum_squares(gen(st.gen.name(p)));
      l2 = first ? term : t.add(l2, term);
      first = false;
    }
    generator_loss = t.add(generator_loss, t.scale(l2, cfg.lambda));

    // Discriminator role: maximize gan_value, i.e. minimize its negation.
    SoftGraphVars real_vars{t.leaf(lifted.presence), t.leaf(lifted.type_probs),
                            t.leaf(lifted.bbox), t.leaf(lifted.edge_probs)};
    Var d_real = discriminate(t, real_vars, disc, cfg, lifted_plan);
    Var composite = t.add(generator_loss, t.scale(gan_value(t, d_real, d_fake), -1.0));

    if (with_grad) t.backward(composite);
    return t.value(composite).at(0);
  };

  num::GradCheckResult over_gen = num::finite_diff_check(loss, st.gen, 1e-5);
  num::GradCheckResult over_disc = num::finite_diff_check(loss, st.disc, 1e-5);
  return over_gen.max_rel_error >= over_disc.max_rel_error ? over_gen : over_disc;
}

}  // namespace layoutgen
