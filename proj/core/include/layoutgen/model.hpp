#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "layoutgen/graph.hpp"
#include "layoutgen/optim.hpp"
#include "layoutgen/rng.hpp"
#include "layoutgen/tape.hpp"

namespace layoutgen {

inline constexpr int kCheckpointVersion = 1;

enum class GenObjective { kMinimax, kNonSaturating };

std::string_view to_string(GenObjective o);
std::optional<GenObjective> parse_gen_objective(std::string_view name);

struct TrainingConfig {
  double beta = 1.0;      // KL weight
  double lambda = 1e-4;   // L2 weight penalty
  double gamma = 0.1;     // generator adversarial weight
  GenObjective gen_objective = GenObjective::kNonSaturating;
  int d_hidden = 32;
  int d_latent = 8;
  int layers = 2;
  int n_max = 12;
  int epochs = 300;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 7;

  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

std::size_t pair_count(std::size_t n_max);
// Index of unordered slot pair (i, j), i < j, in lexicographic order.
std::size_t pair_index(std::size_t i, std::size_t j, std::size_t n_max);

// Continuous decoder output over n_max slots.
struct SoftGraph {
  num::Tensor presence;    // [N]
  num::Tensor type_probs;  // [N x 8], rows sum to 1
  num::Tensor bbox;        // [N x 4], each row ordered with x0 < x1, y0 < y1
  num::Tensor edge_probs;  // [P] over unordered slot pairs
};

std::vector<std::string> check_soft_graph(const SoftGraph& s, int n_max);

// Tape-resident counterpart used while a loss graph is being built.
struct SoftGraphVars {
  num::Var presence, type_probs, bbox, edge_probs;
};

// Full model state. A checkpoint is this struct verbatim: weights, optimizer
// moments, RNG position and the loss trace all round-trip, which is what makes
// interrupted training resumable bit-for-bit.
struct ModelState {
  TrainingConfig cfg;
  GraphConfig graph_cfg;
  num::ParamStore gen;   // enc.*, vae.*, dec.*
  num::ParamStore disc;  // disc.*
  num::AdamState opt_gen;
  num::AdamState opt_disc;
  num::Rng rng{0};
  std::vector<double> loss_trace;  // per-epoch mean generator loss
};

ModelState init_model(const TrainingConfig& cfg, const GraphConfig& graph_cfg);

enum class BindMode { kTrain, kFrozen };

// Hands out one tape var per parameter, either trainable or as a constant.
class ParamBinder {
 public:
  ParamBinder(num::Tape& tape, num::ParamStore& store, BindMode mode)
      : tape_(tape), store_(&store), mode_(mode) {}
  // Frozen binding never mutates the store.
  ParamBinder(num::Tape& tape, const num::ParamStore& store)
      : tape_(tape), store_(const_cast<num::ParamStore*>(&store)), mode_(BindMode::kFrozen) {}
  num::Var operator()(const std::string& name);
  num::ParamStore& store() { return *store_; }

 private:
  num::Tape& tape_;
  num::ParamStore* store_;
  BindMode mode_;
  std::vector<std::pair<std::string, num::Var>> cache_;
};

// Messages of one graph: row m sends node send[m]'s state to node recv[m]
// together with the edge features seen from the receiver.
struct MessagePlan {
  std::vector<std::size_t> recv, send;
  num::Tensor edge_feats;  // [M x kEdgeFeatureDim]
};

MessagePlan message_plan(const LayoutGraph& g);

// One Eq.-style update: relu of per-node sums of affine([h_i | h_j | e_ij]).
num::Var message_passing_layer(num::Tape& t, num::Var h, const MessagePlan& plan,
                               std::size_t n_nodes, num::Var w, num::Var b);
// Convenience wrapper over concrete tensors (tests).
num::Tensor message_passing_layer(const num::Tensor& h, const LayoutGraph& g,
                                  const num::Tensor& w, const num::Tensor& b);

struct EncodeResult {
  num::Var node_embeddings;  // [n x d_hidden]
  num::Var pooled;           // [d_hidden]
};

EncodeResult encode_graph(num::Tape& t, const LayoutGraph& g, ParamBinder& gen,
                          const TrainingConfig& cfg);
// Concrete (node embeddings, pooled) for tests and tools.
std::pair<num::Tensor, num::Tensor> encode_graph_values(const LayoutGraph& g,
                                                        const num::ParamStore& gen,
                                                        const TrainingConfig& cfg);

struct VaeHeads {
  num::Var mu;       // [d_latent]
  num::Var log_var;  // [d_latent]
};

VaeHeads vae_heads(num::Tape& t, num::Var pooled, ParamBinder& gen);

// z = mu + exp(log_var / 2) * eps.
num::Var reparameterize(num::Tape& t, num::Var mu, num::Var log_var, const num::Tensor& eps);

SoftGraphVars decode(num::Tape& t, num::Var z, ParamBinder& gen, const TrainingConfig& cfg);
SoftGraph materialize(const num::Tape& t, const SoftGraphVars& s);
SoftGraph decode_soft(const num::Tensor& z, const num::ParamStore& gen,
                      const TrainingConfig& cfg);

// Slot-aligned reconstruction targets of a real graph (slots follow canonical
// reading order, so no graph matching is needed).
struct ReconTargets {
  std::size_t n = 0;
  num::Tensor presence;                   // [N]
  std::vector<std::size_t> type_labels;   // [n]
  num::Tensor bbox;                       // [n x 4]
  num::Tensor adjacency;                  // [P] 0/1, self-loops excluded
};

ReconTargets recon_targets(const LayoutGraph& g, int n_max);

num::Var reconstruction_loss(num::Tape& t, const SoftGraphVars& s, const ReconTargets& targets);
double reconstruction_loss_value(const SoftGraph& s, const LayoutGraph& g, int n_max);

num::Var vae_loss(num::Tape& t, const SoftGraphVars& s, const ReconTargets& targets, num::Var mu,
                  num::Var log_var, double beta);
double vae_loss_value(const SoftGraph& s, const LayoutGraph& g, const num::Tensor& mu,
                      const num::Tensor& log_var, double beta, int n_max);

// Exact soft form of a hard graph: presence 1 for its n slots, one-hot types,
// exact bboxes, 0/1 adjacency. Empty slots carry uniform type rows, zero
// bboxes and zero edge probabilities.
SoftGraph lift_graph(const LayoutGraph& g, int n_max);

// All-pairs slot message list; pairs whose probability is exactly zero are
// dropped (their messages are zero anyway, and variable probabilities coming
// out of a sigmoid are never exactly zero).
struct DiscPlan {
  std::vector<std::size_t> recv, send, pair_of_message;
};

DiscPlan disc_plan(int n_max, const num::Tensor* edge_probs);

num::Var discriminate(num::Tape& t, const SoftGraphVars& s, ParamBinder& disc,
                      const TrainingConfig& cfg, const DiscPlan& plan);
double discriminate_value(const SoftGraph& s, const num::ParamStore& disc,
                          const TrainingConfig& cfg);
double discriminate_value(const LayoutGraph& g, const num::ParamStore& disc,
                          const TrainingConfig& cfg);

// Single-sample estimate of the adversarial value: log d_real + log(1 - d_fake).
num::Var gan_value(num::Tape& t, num::Var d_real, num::Var d_fake);
double gan_value(double d_real, double d_fake);

// Discriminator objective for one batch: -mean_i gan_value(D(real_i), D(fake_i)).
num::Var discriminator_batch_loss(num::Tape& t, const std::vector<const SoftGraph*>& reals,
                                  const std::vector<const DiscPlan*>& real_plans,
                                  const std::vector<const SoftGraph*>& fakes, ParamBinder& disc,
                                  const TrainingConfig& cfg, const DiscPlan& dense_plan);

// Total generator objective for one batch:
// mean_i [recon_i + beta*KL_i + gamma*adv_i] + lambda * sum of squares of all
// generator-side parameters. adv follows cfg.gen_objective; eps[i] is the
// frozen reparameterization noise of example i.
num::Var generator_batch_loss(num::Tape& t, const std::vector<const LayoutGraph*>& graphs,
                              const std::vector<const ReconTargets*>& targets,
                              const std::vector<num::Tensor>& eps, ParamBinder& gen,
                              ParamBinder& disc, const TrainingConfig& cfg,
                              const DiscPlan& dense_plan);

using EpochCallback = std::function<void(int epoch, double gen_loss, double disc_loss)>;

ModelState train(const std::vector<LayoutDocument>& corpus, const GraphConfig& graph_cfg,
                 const TrainingConfig& cfg, const EpochCallback& on_epoch = nullptr);

struct FineTuneOptions {
  int epochs = 0;                // additional epochs to run
  std::optional<double> lr;      // optional learning-rate override
};

ModelState fine_tune(const ModelState& ckpt, const std::vector<LayoutDocument>& corpus,
                     const FineTuneOptions& opts, const EpochCallback& on_epoch = nullptr);

std::string checkpoint_to_text(const ModelState& st);
ModelState checkpoint_from_text(const std::string& text);
void save_checkpoint(const ModelState& st, const std::string& path);
ModelState load_checkpoint(const std::string& path);

// Finite-difference verification of the full encoder + VAE + GAN composite on
// a 4-node fixture with frozen noise. Covers every generator and discriminator
// parameter.
num::GradCheckResult composite_grad_check(std::uint64_t seed);

}  // namespace layoutgen
