// layoutgen command-line tool: toy corpora, model training, layout generation,
// validation, diversity metrics and the downstream-classification experiment,
// all as reproducible seeded subcommands.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "layoutgen/config.hpp"
#include "layoutgen/errors.hpp"
#include "layoutgen/io.hpp"
#include "layoutgen/layout.hpp"
#include "layoutgen/metrics.hpp"
#include "layoutgen/model.hpp"
#include "layoutgen/synthesis.hpp"

namespace lg = layoutgen;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInvalidInput = 2;
constexpr int kExitNumeric = 3;

lg::CliConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return lg::CliConfig{};
  return lg::load_cli_config(path);
}

std::vector<lg::LayoutDocument> docs_of(const std::vector<lg::SyntheticLayout>& layouts) {
  std::vector<lg::LayoutDocument> docs;
  docs.reserve(layouts.size());
  for (const auto& l : layouts) docs.push_back(l.doc);
  return docs;
}

void print_epoch(int epoch, double gen_loss, double disc_loss) {
  std::cout << "epoch " << epoch << " gen_loss=" << lg::format_real(gen_loss)
            << " disc_loss=" << lg::format_real(disc_loss) << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"graph-based document layout generation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::to_string(lg::kCheckpointVersion));

  // gen-toy
  auto* gen_toy = app.add_subcommand("gen-toy", "write a seeded toy corpus");
  int classes = 3, per_class = 100;
  double jitter = 0.02;
  std::uint64_t toy_seed = 7;
  std::string toy_out;
  gen_toy->add_option("--classes", classes, "number of built-in class templates")
      ->check(CLI::Range(1, 3));
  gen_toy->add_option("--per-class", per_class, "documents per class")->check(CLI::PositiveNumber);
  gen_toy->add_option("--jitter", jitter, "max per-coordinate perturbation")
      ->check(CLI::NonNegativeNumber);
  gen_toy->add_option("--seed", toy_seed, "rng seed");
  gen_toy->add_option("--out", toy_out, "output corpus path")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train the generative model on a corpus");
  std::string train_corpus, train_config, train_out;
  train_cmd->add_option("--corpus", train_corpus, "training corpus (JSON Lines)")->required();
  train_cmd->add_option("--config", train_config, "config file (JSON)");
  train_cmd->add_option("--out", train_out, "output checkpoint path")->required();

  // fine-tune
  auto* ft_cmd = app.add_subcommand("fine-tune", "continue training from a checkpoint");
  std::string ft_ckpt, ft_corpus, ft_out;
  int ft_epochs = 0;
  double ft_lr = -1.0;
  ft_cmd->add_option("--checkpoint", ft_ckpt, "input checkpoint")->required();
  ft_cmd->add_option("--corpus", ft_corpus, "fine-tuning corpus")->required();
  ft_cmd->add_option("--epochs", ft_epochs, "additional epochs")->required()
      ->check(CLI::NonNegativeNumber);
  ft_cmd->add_option("--lr", ft_lr, "learning-rate override");
  ft_cmd->add_option("--out", ft_out, "output checkpoint path")->required();

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "sample layouts from a checkpoint");
  std::string gen_ckpt, gen_out, gen_config;
  std::size_t gen_n = 10;
  std::uint64_t gen_seed = 0;
  bool gen_validate = false;
  std::size_t gen_max_draws = 0;
  gen_cmd->add_option("--checkpoint", gen_ckpt, "input checkpoint")->required();
  gen_cmd->add_option("--n", gen_n, "number of layouts")->required();
  gen_cmd->add_option("--seed", gen_seed, "sampling seed");
  gen_cmd->add_option("--out", gen_out, "output corpus path")->required();
  gen_cmd->add_flag("--validate", gen_validate,
                    "rejection-sample until --n layouts pass the validation rules");
  gen_cmd->add_option("--max-draws", gen_max_draws,
                      "draw budget for --validate (default 100 * n)");
  gen_cmd->add_option("--config", gen_config, "config file (validation rules)");

  // validate
  auto* val_cmd = app.add_subcommand("validate", "run the validation rules over a corpus");
  std::string val_corpus, val_config, val_report;
  val_cmd->add_option("--corpus", val_corpus, "corpus to validate")->required();
  val_cmd->add_option("--config", val_config, "config file (JSON)");
  val_cmd->add_option("--report", val_report, "report output path")->required();

  // perplexity
  auto* ppl_cmd = app.add_subcommand("perplexity", "bigram perplexity of one corpus under another");
  std::string ppl_fit, ppl_eval, ppl_report;
  int ppl_grid = 8;
  double ppl_alpha = 1.0;
  ppl_cmd->add_option("--fit", ppl_fit, "corpus the bigram model is fitted on")->required();
  ppl_cmd->add_option("--eval", ppl_eval, "held-out corpus to evaluate")->required();
  ppl_cmd->add_option("--grid", ppl_grid, "tokenizer grid")->check(CLI::PositiveNumber);
  ppl_cmd->add_option("--alpha", ppl_alpha, "Laplace smoothing")->check(CLI::NonNegativeNumber);
  ppl_cmd->add_option("--report", ppl_report, "report output path")->required();

  // render
  auto* render_cmd = app.add_subcommand("render", "write one SVG per document");
  std::string render_corpus, render_dir;
  render_cmd->add_option("--corpus", render_corpus, "corpus to render")->required();
  render_cmd->add_option("--out-dir", render_dir, "output directory")->required();

  // eval-downstream
  auto* eval_cmd = app.add_subcommand("eval-downstream",
                                      "classification accuracy with and without augmentation");
  std::string eval_real, eval_synth, eval_test, eval_report;
  int eval_seeds = 5;
  eval_cmd->add_option("--real", eval_real, "labeled real training corpus")->required();
  eval_cmd->add_option("--synthetic", eval_synth, "synthetic corpus")->required();
  eval_cmd->add_option("--test", eval_test, "labeled test corpus")->required();
  eval_cmd->add_option("--seeds", eval_seeds, "number of seeds")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--report", eval_report, "report output path")->required();

  // grad-check
  auto* gc_cmd = app.add_subcommand("grad-check", "finite-difference check of the full model");
  std::uint64_t gc_seed = 1;
  gc_cmd->add_option("--seed", gc_seed, "init seed");

  CLI11_PARSE(app, argc, argv);

  if (gen_toy->parsed()) {
    lg::ToyCorpusSpec spec;
    auto templates = lg::default_toy_templates();
    templates.resize(static_cast<std::size_t>(classes));
    spec.classes = std::move(templates);
    spec.per_class = per_class;
    spec.jitter = jitter;
    spec.seed = toy_seed;
    lg::write_corpus(lg::generate_toy_corpus(spec), toy_out);
    std::cout << "wrote " << classes * per_class << " documents to " << toy_out << "\n";
  } else if (train_cmd->parsed()) {
    const lg::CliConfig cfg = load_config_or_default(train_config);
    const auto corpus = lg::parse_corpus(train_corpus);
    const lg::ModelState ckpt = lg::train(corpus, cfg.graph, cfg.training, print_epoch);
    lg::save_checkpoint(ckpt, train_out);
    std::cout << "wrote checkpoint to " << train_out << "\n";
  } else if (ft_cmd->parsed()) {
    const lg::ModelState ckpt = lg::load_checkpoint(ft_ckpt);
    const auto corpus = lg::parse_corpus(ft_corpus);
    lg::FineTuneOptions opts;
    opts.epochs = ft_epochs;
    if (ft_lr > 0.0) opts.lr = ft_lr;
    const lg::ModelState tuned = lg::fine_tune(ckpt, corpus, opts, print_epoch);
    lg::save_checkpoint(tuned, ft_out);
    std::cout << "wrote checkpoint to " << ft_out << "\n";
  } else if (gen_cmd->parsed()) {
    const lg::ModelState ckpt = lg::load_checkpoint(gen_ckpt);
    if (gen_validate) {
      const lg::CliConfig cfg = load_config_or_default(gen_config);
      const std::size_t budget = gen_max_draws > 0 ? gen_max_draws : 100 * gen_n;
      const auto [accepted, stats] =
          lg::rejection_sample(ckpt, gen_n, cfg.validation, gen_seed, budget, gen_ckpt);
      lg::write_corpus(docs_of(accepted), gen_out);
      std::cout << "accepted " << stats.accepted << "/" << stats.draws
                << " draws (rate " << lg::format_real(stats.acceptance_rate) << ") to " << gen_out
                << "\n";
    } else {
      lg::write_corpus(docs_of(lg::sample_layouts(ckpt, gen_n, gen_seed, gen_ckpt)), gen_out);
      std::cout << "wrote " << gen_n << " layouts to " << gen_out << "\n";
    }
  } else if (val_cmd->parsed()) {
    const lg::CliConfig cfg = load_config_or_default(val_config);
    const auto corpus = lg::parse_corpus(val_corpus);
    const lg::ValidationReport report = lg::validate_corpus(corpus, cfg.validation);
    lg::atomic_write_file(val_report, lg::validation_report_to_text(report));
    std::cout << "overall pass rate " << lg::format_real(report.overall_pass_rate) << ", report at "
              << val_report << "\n";
  } else if (ppl_cmd->parsed()) {
    lg::TokenizerConfig tok;
    tok.grid = ppl_grid;
    const auto fit = lg::parse_corpus(ppl_fit);
    const auto eval = lg::parse_corpus(ppl_eval);
    const lg::PerplexityReport report = lg::layout_perplexity(fit, eval, tok, ppl_alpha);
    lg::atomic_write_file(ppl_report, lg::perplexity_report_to_text(report));
    std::cout << "perplexity " << lg::format_real(report.perplexity) << ", report at " << ppl_report
              << "\n";
  } else if (render_cmd->parsed()) {
    const auto corpus = lg::parse_corpus(render_corpus);
    fs::create_directories(render_dir);
    for (const auto& doc : corpus)
      lg::atomic_write_file((fs::path(render_dir) / (doc.id + ".svg")).string(),
                            lg::render_svg(doc));
    std::cout << "rendered " << corpus.size() << " documents to " << render_dir << "\n";
  } else if (eval_cmd->parsed()) {
    const auto real = lg::parse_corpus(eval_real);
    const auto synth = lg::parse_corpus(eval_synth);
    const auto test = lg::parse_corpus(eval_test);
    std::vector<std::uint64_t> seeds;
    for (int s = 0; s < eval_seeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    const lg::EvalReport report = lg::compare_augmentation(real, synth, test, seeds, {});
    lg::atomic_write_file(eval_report, lg::eval_report_to_text(report));
    for (const auto& c : report.conditions)
      std::cout << c.name << " mean accuracy " << lg::format_real(c.mean) << " (std "
                << lg::format_real(c.stddev) << ")\n";
  } else if (gc_cmd->parsed()) {
    const lg::num::GradCheckResult res = lg::composite_grad_check(gc_seed);
    std::cout << "max relative error " << lg::format_real(res.max_rel_error) << " (worst parameter "
              << res.worst_param << "[" << res.worst_coord << "])\n";
    if (!(res.max_rel_error < 1e-4))
      throw lg::NumericError("gradient check failed: max relative error " +
                             lg::format_real(res.max_rel_error) + " >= 1e-4");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const lg::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const lg::InvalidInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  }
}
