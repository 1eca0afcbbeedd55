// fnmme: Full-Network multimodal embedding toolkit.
//
// Exit codes: 0 success, 2 invalid input, 3 I/O failure, 4 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "fnmme/errors.hpp"
#include "fnmme/eval.hpp"
#include "fnmme/pipeline.hpp"
#include "fnmme/tensorio.hpp"

namespace {

using namespace fnmme;
namespace fs = std::filesystem;

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct GlobalOptions {
  int verbosity = 0;
  std::size_t threads = 1;
  bool deterministic = false;
};

struct FitOptions {
  std::string manifest;
  std::string out;
  float theta_pos = fne::FneConfig{}.theta_pos;
  float theta_neg = fne::FneConfig{}.theta_neg;
};

struct TrainOptions {
  std::string manifest;
  std::string stats;
  std::string out;
  std::string report;
  TrainConfig cfg;
  bool mean_loss = false;
};

struct EvalOptions {
  std::string checkpoint;
  std::string manifest;
  std::string split = "test";
  std::string label = "FN-MME";
  bool json = false;
};

struct EmbedOptions {
  std::string checkpoint;
  std::string text;
  std::string activation;
};

struct SearchOptions {
  std::string checkpoint;
  std::string manifest;
  std::string split = "test";
  std::string text;
  std::string image;
  std::size_t k = 10;
  bool json = false;
};

void require_parent_dir(const std::string& path) {
  const auto parent = fs::absolute(path).parent_path();
  if (!fs::is_directory(parent)) throw IoError("output directory does not exist: " + parent.string());
}

void print_vector(const Vec<float>& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  std::cout << arr.dump() << "\n";
}

std::string describe(const TrainConfig& c) {
  return fmt::format(
      "alpha={} batch_size={} clip_threshold={} learning_rate={} max_epochs={} seed={} "
      "vocab_size={} word_dim={} hidden_dim={} adam_beta1={} adam_beta2={} adam_epsilon={} "
      "reduction={} threads={}",
      c.alpha, c.batch_size, c.clip_threshold, c.learning_rate, c.max_epochs, c.seed, c.vocab_size,
      c.word_dim, c.hidden_dim, c.adam_beta1, c.adam_beta2, c.adam_epsilon,
      c.reduction == mmspace::LossReduction::mean ? "mean" : "sum", c.threads);
}

int run_fit(const FitOptions& o) {
  const fne::FneConfig cfg{o.theta_pos, o.theta_neg};
  fne::validate(cfg);
  require_parent_dir(o.out);
  const auto manifest = tensorio::load_manifest(o.manifest);
  if (manifest.entries_in(tensorio::Split::train).empty()) {
    throw ValidationError("manifest has no training entries");
  }
  const auto raw = load_raw_features(manifest, tensorio::Split::train);
  const auto stats = fne::fit_stats(raw);
  tensorio::save_stats({stats, cfg}, o.out);
  std::cout << "D=" << stats.dimension() << " fitted_on=" << stats.fitted_on << "\n";
  return 0;
}

int run_train(TrainOptions o, const GlobalOptions& g) {
  o.cfg.threads = g.deterministic ? 1 : g.threads;
  if (o.mean_loss) o.cfg.reduction = mmspace::LossReduction::mean;
  validate(o.cfg);
  std::cout << "config: " << describe(o.cfg) << "\n";

  require_parent_dir(o.out);
  if (!o.report.empty()) require_parent_dir(o.report);
  const auto manifest = tensorio::load_manifest(o.manifest);
  const auto stats = tensorio::load_stats(o.stats);
  fne::validate(stats.config);
  const auto data = load_training_data(manifest, stats);
  if (data.train.empty() || data.val.empty()) {
    throw ValidationError("training needs non-empty train and val splits");
  }

  auto progress = [&](const EpochRecord& e) {
    if (g.verbosity >= 0) {
      std::cout << fmt::format("epoch {:>3}  loss {:.6g}  val score {:.4f}  ({:.1f}s)\n", e.epoch,
                               e.train_loss, e.score, e.seconds);
    }
  };
  try {
    const auto result = train(data, o.cfg, progress);
    tensorio::save_checkpoint(result.checkpoint, o.out);
    if (!o.report.empty()) {
      const auto text = result.report.to_json();
      tensorio::write_file(o.report, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                               text.size()));
    }
    std::cout << "selected epoch " << result.report.selected_epoch << " (validation score "
              << result.checkpoint.provenance.validation_score << ")\n";
  } catch (const TrainingAborted& e) {
    if (e.last_good) {
      tensorio::save_checkpoint(*e.last_good, o.out);
      std::cerr << "training aborted; kept checkpoint of epoch " << e.last_good->provenance.epoch
                << " at " << o.out << "\n";
    }
    throw;
  }
  return 0;
}

int run_eval(const EvalOptions& o) {
  const auto split = tensorio::parse_split(o.split);
  const auto ckpt = tensorio::load_checkpoint(o.checkpoint);
  const auto manifest = tensorio::load_manifest(o.manifest);
  if (manifest.entries_in(split).empty()) {
    throw ValidationError("split '" + o.split + "' is empty");
  }
  const auto metrics = evaluate(ckpt, manifest, split);
  if (o.json) {
    std::cout << eval::to_json(metrics) << "\n";
  } else {
    std::cout << eval::render_table(o.label, metrics);
  }
  return 0;
}

int run_embed_text(const EmbedOptions& o) {
  const auto ckpt = tensorio::load_checkpoint(o.checkpoint);
  print_vector(embed_caption(ckpt, o.text));
  return 0;
}

int run_embed_image(const EmbedOptions& o) {
  const auto ckpt = tensorio::load_checkpoint(o.checkpoint);
  const auto acts = tensorio::read_activation_file(o.activation);
  print_vector(embed_image(ckpt, acts));
  return 0;
}

int run_search(const SearchOptions& o, const GlobalOptions& g) {
  if (o.text.empty() == o.image.empty()) {
    throw ValidationError("search needs exactly one of --text or --image");
  }
  if (o.k < 1) throw ValidationError("--k must be at least 1");
  const auto split = tensorio::parse_split(o.split);
  const auto ckpt = tensorio::load_checkpoint(o.checkpoint);
  const auto manifest = tensorio::load_manifest(o.manifest);
  // Query first: an empty caption fails before any indexing work.
  const Vec<float> query = o.text.empty()
                               ? embed_image(ckpt, tensorio::read_activation_file(o.image))
                               : embed_caption(ckpt, o.text);
  const auto items = load_split(manifest, split, ckpt.stats, ckpt.fne_config);
  if (items.empty()) throw ValidationError("split '" + o.split + "' is empty");
  const auto index = embed_split(ckpt.params, ckpt.vocab, items, g.deterministic ? 1 : g.threads);

  const Mat<float>& pool = o.text.empty() ? index.captions : index.images;
  std::vector<Vec<double>> candidates;
  for (Eigen::Index j = 0; j < pool.cols(); ++j) candidates.push_back(pool.col(j).cast<double>());
  const Vec<double> q = query.cast<double>();
  const auto order = eval::rank_candidates<double>(q, candidates);

  nlohmann::json results = nlohmann::json::array();
  for (std::size_t r = 0; r < std::min(o.k, order.size()); ++r) {
    const auto j = order[r];
    const double sim = mmspace::cosine<double>(q, candidates[j]);
    const std::string label = o.text.empty()
                                  ? index.image_ids[index.caption_image[j]] + "\t" + index.caption_texts[j]
                                  : index.image_ids[j];
    if (o.json) {
      results.push_back({{"rank", r + 1}, {"index", j}, {"similarity", sim}, {"item", label}});
    } else {
      std::cout << fmt::format("{:>4}  {:+.6f}  {}\n", r + 1, sim, label);
    }
  }
  if (o.json) std::cout << results.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Full-Network multimodal embeddings: FNE features, joint image-caption training, "
               "retrieval evaluation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option defaults (flags take precedence)");

  GlobalOptions g;
  app.add_flag("-v,--verbose", g.verbosity, "More output");
  app.add_option("--threads", g.threads, "Worker threads for caption encoding")
      ->envname("FNMME_THREADS")
      ->check(CLI::PositiveNumber);
  app.add_flag("--deterministic", g.deterministic, "Force sequential reductions");

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit-fne", "Fit FNE statistics on the training split");
  fit_cmd->add_option("--manifest", fit.manifest, "Dataset manifest (JSON lines)")->required();
  fit_cmd->add_option("--out", fit.out, "Output FNES file")->required();
  fit_cmd->add_option("--theta-pos", fit.theta_pos, "Threshold for +1")->capture_default_str();
  fit_cmd->add_option("--theta-neg", fit.theta_neg, "Threshold for -1")->capture_default_str();

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train the joint embedding");
  train_cmd->add_option("--manifest", tr.manifest, "Dataset manifest")->required();
  train_cmd->add_option("--stats", tr.stats, "FNES file from fit-fne")->required();
  train_cmd->add_option("--out", tr.out, "Output checkpoint (FNEC)")->required();
  train_cmd->add_option("--report", tr.report, "Write the per-epoch report as JSON");
  train_cmd->add_option("--lr", tr.cfg.learning_rate, "ADAM learning rate")->capture_default_str();
  train_cmd->add_option("--batch-size", tr.cfg.batch_size, "Pairs per batch")->capture_default_str();
  train_cmd->add_option("--epochs", tr.cfg.max_epochs, "Maximum epochs")->capture_default_str();
  train_cmd->add_option("--clip", tr.cfg.clip_threshold, "GRU gradient clipping threshold")
      ->capture_default_str();
  train_cmd->add_option("--alpha", tr.cfg.alpha, "Ranking margin")->capture_default_str();
  train_cmd->add_option("--seed", tr.cfg.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--vocab-size", tr.cfg.vocab_size, "Most frequent words kept")
      ->capture_default_str();
  train_cmd->add_option("--word-dim", tr.cfg.word_dim, "Word embedding width")->capture_default_str();
  train_cmd->add_option("--hidden-dim", tr.cfg.hidden_dim, "GRU units / joint space width")
      ->capture_default_str();
  train_cmd->add_option("--beta1", tr.cfg.adam_beta1, "ADAM beta1")->capture_default_str();
  train_cmd->add_option("--beta2", tr.cfg.adam_beta2, "ADAM beta2")->capture_default_str();
  train_cmd->add_option("--adam-eps", tr.cfg.adam_epsilon, "ADAM epsilon")->capture_default_str();
  train_cmd->add_flag("--mean-loss", tr.mean_loss, "Average the loss over the batch instead of summing");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Recall@K and median rank on a split");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint (FNEC)")->required();
  eval_cmd->add_option("--manifest", ev.manifest, "Dataset manifest")->required();
  eval_cmd->add_option("--split", ev.split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--label", ev.label, "Row label in the table")->capture_default_str();
  eval_cmd->add_flag("--json", ev.json, "Machine-readable output");

  EmbedOptions et;
  auto* text_cmd = app.add_subcommand("embed-text", "Print a caption's joint-space embedding");
  text_cmd->add_option("--checkpoint", et.checkpoint, "Checkpoint (FNEC)")->required();
  text_cmd->add_option("--text", et.text, "Caption text")->required();

  EmbedOptions ei;
  auto* image_cmd = app.add_subcommand("embed-image", "Print an image's joint-space embedding");
  image_cmd->add_option("--checkpoint", ei.checkpoint, "Checkpoint (FNEC)")->required();
  image_cmd->add_option("--activation", ei.activation, "FNEA activation file")->required();

  SearchOptions se;
  auto* search_cmd = app.add_subcommand("search", "Rank a split's items against a query");
  search_cmd->add_option("--checkpoint", se.checkpoint, "Checkpoint (FNEC)")->required();
  search_cmd->add_option("--manifest", se.manifest, "Manifest providing the candidate pool")->required();
  search_cmd->add_option("--split", se.split, "Split to index")->capture_default_str();
  search_cmd->add_option("--text", se.text, "Caption query (ranks images)");
  search_cmd->add_option("--image", se.image, "FNEA activation file query (ranks captions)");
  search_cmd->add_option("--k", se.k, "Results to print")->capture_default_str();
  search_cmd->add_flag("--json", se.json, "Machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*fit_cmd) return run_fit(fit);
    if (*train_cmd) return run_train(tr, g);
    if (*eval_cmd) return run_eval(ev);
    if (*text_cmd) return run_embed_text(et);
    if (*image_cmd) return run_embed_image(ei);
    if (*search_cmd) return run_search(se, g);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
