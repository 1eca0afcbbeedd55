#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fnmme/config.hpp"
#include "fnmme/eval.hpp"
#include "fnmme/fne.hpp"
#include "fnmme/tensorio.hpp"

/// End-to-end glue: loading splits, encoding items into the joint space,
/// the training loop and checkpoint evaluation.
namespace fnmme {

/// One image with its captions, already reduced to its FNE.
struct ImageCaptions {
  fne::FneVector image;
  std::vector<std::string> captions;
};

struct TrainingData {
  std::vector<ImageCaptions> train;
  std::vector<ImageCaptions> val;
  fne::FneStats stats;
  fne::FneConfig fne_config;
};

/// Reads every activation file of `split`, checks layer layouts agree and
/// returns their pooled raw features in manifest order.
std::vector<fne::RawFeatureVector> load_raw_features(const tensorio::DatasetManifest& manifest,
                                                     tensorio::Split split);

/// FNE vectors and captions for `split`, in manifest order.
std::vector<ImageCaptions> load_split(const tensorio::DatasetManifest& manifest,
                                      tensorio::Split split, const fne::FneStats& stats,
                                      const fne::FneConfig& cfg);

TrainingData load_training_data(const tensorio::DatasetManifest& manifest,
                                const tensorio::StatsFile& stats);

/// Caption embedding in the joint space. Throws EmptyCaptionError when the
/// text has no tokens.
Vec<float> embed_caption(const tensorio::Checkpoint& ckpt, const std::string& text);

Vec<float> embed_image(const tensorio::Checkpoint& ckpt, const fne::FneVector& fne);
Vec<float> embed_image(const tensorio::Checkpoint& ckpt, const ActivationSet& acts);

/// Joint-space embeddings of a split: one column per image, one per
/// caption, plus the caption -> image index map. Captions without tokens
/// are dropped.
struct EmbeddedSplit {
  Mat<float> images;
  Mat<float> captions;
  std::vector<std::size_t> caption_image;
  std::vector<std::string> image_ids;
  std::vector<std::string> caption_texts;
};

EmbeddedSplit embed_split(const mmspace::ModelParams<float>& params,
                          const textenc::Vocabulary& vocab,
                          const std::vector<ImageCaptions>& items, std::size_t workers = 1);

eval::Metrics evaluate(const tensorio::Checkpoint& ckpt, const std::vector<ImageCaptions>& items);
eval::Metrics evaluate(const tensorio::Checkpoint& ckpt, const tensorio::DatasetManifest& manifest,
                       tensorio::Split split);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  eval::Metrics validation;
  double score = 0;
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t selected_epoch = 0;
  double wall_clock_seconds = 0;

  /// Equality over everything except timings.
  bool same_results(const TrainReport& other) const;
  std::string to_json() const;
};

struct TrainResult {
  tensorio::Checkpoint checkpoint;
  TrainReport report;
};

/// Raised when training hits non-finite values; carries the best checkpoint
/// of the completed epochs, if any.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::optional<tensorio::Checkpoint> last_good,
                  TrainReport report)
      : NumericError(what), last_good(std::move(last_good)), report(std::move(report)) {}

  std::optional<tensorio::Checkpoint> last_good;
  TrainReport report;
};

/// Called after every epoch; useful for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains the word embedding, GRU and affine projection with ADAM on the
/// hinge ranking loss and returns the checkpoint of the best validation epoch.
TrainResult train(const TrainingData& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Vocabulary of the training captions, as used by train().
textenc::Vocabulary training_vocabulary(const TrainingData& data, const TrainConfig& cfg);

}  // namespace fnmme
