#include "fnmme/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "json.hpp"

#include "fnmme/errors.hpp"
#include "fnmme/optim.hpp"
#include "fnmme/parallel.hpp"

namespace fnmme {

using tensorio::Checkpoint;
using tensorio::DatasetManifest;
using tensorio::Split;

std::vector<fne::RawFeatureVector> load_raw_features(const DatasetManifest& manifest, Split split) {
  std::vector<fne::RawFeatureVector> out;
  std::optional<ActivationSet> reference;
  for (const auto* entry : manifest.entries_in(split)) {
    auto acts = tensorio::read_activation_file(manifest.resolve(*entry));
    acts.image_id = entry->image_id;
    validate(acts);
    if (reference) {
      check_same_layout(*reference, acts);
    } else {
      reference = acts;
    }
    out.push_back(fne::spatial_pool(acts));
  }
  return out;
}

std::vector<ImageCaptions> load_split(const DatasetManifest& manifest, Split split,
                                      const fne::FneStats& stats, const fne::FneConfig& cfg) {
  std::vector<ImageCaptions> out;
  std::optional<ActivationSet> reference;
  for (const auto* entry : manifest.entries_in(split)) {
    auto acts = tensorio::read_activation_file(manifest.resolve(*entry));
    acts.image_id = entry->image_id;
    if (reference) {
      check_same_layout(*reference, acts);
    } else {
      reference = acts;
    }
    out.push_back({fne::fne_embed(acts, stats, cfg), entry->captions});
  }
  return out;
}

TrainingData load_training_data(const DatasetManifest& manifest, const tensorio::StatsFile& stats) {
  TrainingData data;
  data.stats = stats.stats;
  data.fne_config = stats.config;
  data.train = load_split(manifest, Split::train, stats.stats, stats.config);
  data.val = load_split(manifest, Split::val, stats.stats, stats.config);
  return data;
}

namespace {

std::vector<textenc::TokenIndex> caption_indices(const textenc::Vocabulary& vocab,
                                                 const std::string& text) {
  const auto tokens = textenc::tokenize(text);
  return textenc::encode(tokens, vocab);
}

}  // namespace

Vec<float> embed_caption(const Checkpoint& ckpt, const std::string& text) {
  const auto indices = caption_indices(ckpt.vocab, text);
  if (indices.empty()) throw EmptyCaptionError("caption has no tokens: '" + text + "'");
  return textenc::gru_forward<float>(indices, ckpt.params.word_embedding, ckpt.params.gru).output();
}

Vec<float> embed_image(const Checkpoint& ckpt, const fne::FneVector& fne) {
  return mmspace::project_image<float>(fne, ckpt.params.affine);
}

Vec<float> embed_image(const Checkpoint& ckpt, const ActivationSet& acts) {
  return embed_image(ckpt, fne::fne_embed(acts, ckpt.stats, ckpt.fne_config));
}

EmbeddedSplit embed_split(const mmspace::ModelParams<float>& params,
                          const textenc::Vocabulary& vocab, const std::vector<ImageCaptions>& items,
                          std::size_t workers) {
  EmbeddedSplit out;
  const auto hidden = params.hidden_dim();
  out.images.resize(hidden, static_cast<Eigen::Index>(items.size()));
  std::vector<std::vector<textenc::TokenIndex>> sequences;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out.image_ids.push_back(items[i].image.image_id);
    out.images.col(static_cast<Eigen::Index>(i)) =
        mmspace::project_image<float>(items[i].image, params.affine);
    for (const auto& text : items[i].captions) {
      auto indices = caption_indices(vocab, text);
      if (indices.empty()) continue;
      sequences.push_back(std::move(indices));
      out.caption_image.push_back(i);
      out.caption_texts.push_back(text);
    }
  }
  out.captions.resize(hidden, static_cast<Eigen::Index>(sequences.size()));
  parallel_chunks(sequences.size(), workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      out.captions.col(static_cast<Eigen::Index>(k)) =
          textenc::gru_forward<float>(sequences[k], params.word_embedding, params.gru).output();
    }
  });
  return out;
}

eval::Metrics evaluate(const Checkpoint& ckpt, const std::vector<ImageCaptions>& items) {
  if (items.empty()) throw ValidationError("cannot evaluate an empty split");
  const auto emb = embed_split(ckpt.params, ckpt.vocab, items, ckpt.config.threads);
  return eval::evaluate_embeddings(emb.images, emb.captions, emb.caption_image);
}

eval::Metrics evaluate(const Checkpoint& ckpt, const DatasetManifest& manifest, Split split) {
  return evaluate(ckpt, load_split(manifest, split, ckpt.stats, ckpt.fne_config));
}

bool TrainReport::same_results(const TrainReport& other) const {
  if (selected_epoch != other.selected_epoch || epochs.size() != other.epochs.size()) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& a = epochs[i];
    const auto& b = other.epochs[i];
    if (a.epoch != b.epoch || a.train_loss != b.train_loss || !(a.validation == b.validation) ||
        a.score != b.score) {
      return false;
    }
  }
  return true;
}

std::string TrainReport::to_json() const {
  nlohmann::json j;
  j["selected_epoch"] = selected_epoch;
  j["wall_clock_seconds"] = wall_clock_seconds;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : epochs) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"validation", nlohmann::json::parse(eval::to_json(e.validation))},
                           {"score", e.score},
                           {"seconds", e.seconds}});
  }
  return j.dump(2);
}

textenc::Vocabulary training_vocabulary(const TrainingData& data, const TrainConfig& cfg) {
  std::vector<std::string> corpus;
  for (const auto& item : data.train) {
    corpus.insert(corpus.end(), item.captions.begin(), item.captions.end());
  }
  return textenc::build_vocab(corpus, cfg.vocab_size);
}

namespace {

struct Pair {
  std::size_t image;
  std::vector<textenc::TokenIndex> tokens;
};

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

TrainResult train(const TrainingData& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  fne::validate(data.fne_config);
  if (data.train.empty()) throw ValidationError("training split is empty");
  if (data.val.empty()) throw ValidationError("validation split is empty");
  const std::size_t dim = data.train.front().image.values.size();
  for (const auto* split : {&data.train, &data.val}) {
    for (const auto& item : *split) {
      if (item.image.values.size() != dim) {
        throw DimensionError("image '" + item.image.image_id + "' has FNE dimension " +
                             std::to_string(item.image.values.size()) + ", expected " +
                             std::to_string(dim));
      }
    }
  }
  if (data.stats.dimension() != dim) {
    throw DimensionError("FNE statistics dimension does not match the training images");
  }

  const auto started = std::chrono::steady_clock::now();
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.fne_config = data.fne_config;
  ckpt.stats = data.stats;
  ckpt.vocab = training_vocabulary(data, cfg);

  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    for (const auto& text : data.train[i].captions) {
      auto tokens = caption_indices(ckpt.vocab, text);
      if (tokens.empty()) {
        std::cerr << "warning: dropping empty caption of image '" << data.train[i].image.image_id
                  << "'\n";
        continue;
      }
      pairs.push_back({i, std::move(tokens)});
    }
  }
  if (pairs.empty()) throw ValidationError("training split has no non-empty captions");

  auto params = mmspace::init_params<float>(static_cast<Eigen::Index>(ckpt.vocab.size()),
                                            static_cast<Eigen::Index>(cfg.word_dim),
                                            static_cast<Eigen::Index>(cfg.hidden_dim),
                                            static_cast<Eigen::Index>(dim), cfg.seed);
  auto adam = optim::AdamState<float>::for_params(params);
  const auto adam_cfg = optim::adam_config(cfg);
  const auto alpha = static_cast<float>(cfg.alpha);

  TrainReport report;
  std::optional<Checkpoint> best;
  double best_score = -1;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    EpochRecord record;
    record.epoch = epoch;
    try {
      const auto order = epoch_order(pairs.size(), cfg.seed, epoch);
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        mmspace::TrainingBatch<float> batch;
        batch.images.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(end - start));
        for (std::size_t k = start; k < end; ++k) {
          const auto& pair = pairs[order[k]];
          batch.images.col(static_cast<Eigen::Index>(k - start)) =
              mmspace::to_real<float>(data.train[pair.image].image);
          batch.captions.push_back(pair.tokens);
        }
        auto result = mmspace::loss_backward<float>(batch, params, alpha, cfg.reduction, cfg.threads);
        if (!std::isfinite(result.loss)) {
          throw NumericError("non-finite loss in epoch " + std::to_string(epoch));
        }
        record.train_loss += result.loss;
        optim::clip_gru_gradients(result.grads, cfg.clip_threshold);
        optim::adam_step(params, result.grads, adam, cfg.learning_rate, adam_cfg);
      }
    } catch (const NumericError& e) {
      report.wall_clock_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      throw TrainingAborted(e.what(), best, report);
    }

    const auto emb = embed_split(params, ckpt.vocab, data.val, cfg.threads);
    record.validation = eval::evaluate_embeddings(emb.images, emb.captions, emb.caption_image);
    record.score = record.validation.score();
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    report.epochs.push_back(record);

    if (!best || record.score > best_score) {
      best_score = record.score;
      report.selected_epoch = epoch;
      ckpt.params = params;
      ckpt.provenance = {static_cast<std::uint32_t>(epoch), cfg.seed, record.score};
      best = ckpt;
    }
    if (on_epoch) on_epoch(record);
  }

  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(*best), std::move(report)};
}

}  // namespace fnmme
