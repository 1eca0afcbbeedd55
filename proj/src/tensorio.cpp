#include "fnmme/tensorio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

#include "fnmme/errors.hpp"

namespace fnmme::tensorio {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kActivationMagic = "FNEA";
constexpr std::string_view kStatsMagic = "FNES";
constexpr std::string_view kCheckpointMagic = "FNEC";

class ByteWriter {
 public:
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  void u8(std::uint8_t v) { bytes_.push_back(v); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  void f32s(std::span<const float> v) {
    bytes_.reserve(bytes_.size() + 4 * v.size());
    for (float x : v) f32(x);
  }

  void str(std::string_view s) {
    if (s.size() > std::numeric_limits<std::uint32_t>::max()) {
      throw FormatError("string too long to encode");
    }
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }

  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked cursor; every overrun raises TruncationError.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  void need(std::uint64_t n) const {
    if (n > remaining()) {
      throw TruncationError(what_ + ": expected " + std::to_string(n) + " more bytes at offset " +
                            std::to_string(pos_) + ", only " + std::to_string(remaining()) +
                            " remain");
    }
  }

  void magic(std::string_view expected) {
    if (remaining() < expected.size() ||
        std::memcmp(bytes_.data() + pos_, expected.data(), expected.size()) != 0) {
      throw FormatError(what_ + ": bad magic, expected \"" + std::string(expected) + "\"");
    }
    pos_ += expected.size();
  }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  /// Throws unless `count` float32 values remain.
  void need_floats(std::uint64_t count) const {
    if (count > remaining() / 4) {
      throw TruncationError(what_ + ": payload of " + std::to_string(count) +
                            " floats exceeds the " + std::to_string(remaining()) +
                            " bytes remaining at offset " + std::to_string(pos_));
    }
  }

  void skip(std::uint64_t n) {
    need(n);
    pos_ += static_cast<std::size_t>(n);
  }

  std::vector<float> f32s(std::uint64_t count) {
    need_floats(count);
    std::vector<float> out(static_cast<std::size_t>(count));
    for (auto& x : out) x = f32();
    return out;
  }

  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void expect_end() const {
    if (remaining() != 0) {
      throw FormatError(what_ + ": " + std::to_string(remaining()) + " trailing bytes");
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

void check_version(std::uint32_t found, std::uint32_t expected, const std::string& what) {
  if (found != expected) {
    throw VersionError(what + ": format version " + std::to_string(found) +
                       " is not supported (expected " + std::to_string(expected) + ")");
  }
}

}  // namespace

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed while reading '" + path.string() + "'");
  return bytes;
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed while writing '" + path.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'");
  }
}

// ---- activations -----------------------------------------------------------

std::vector<std::uint8_t> encode_activation(const ActivationSet& set) {
  try {
    validate(set);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("refusing to write activation file: ") + e.what());
  }
  ByteWriter w;
  w.raw(kActivationMagic);
  w.u32(kActivationVersion);
  w.str(set.image_id);
  w.u32(static_cast<std::uint32_t>(set.layers.size()));
  for (const auto& layer : set.layers) {
    w.str(layer.name);
    w.u8(static_cast<std::uint8_t>(layer.kind));
    for (auto d : layer.shape) w.u32(d);
    w.f32s(layer.values);
  }
  return w.take();
}

ActivationSet decode_activation(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "activation file");
  r.magic(kActivationMagic);
  check_version(r.u32(), kActivationVersion, "activation file");
  ActivationSet set;
  set.image_id = r.str();
  const std::uint32_t layer_count = r.u32();
  if (layer_count == 0) throw FormatError("activation file declares no layers");
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    LayerActivation layer;
    layer.name = r.str();
    const std::uint8_t kind = r.u8();
    if (kind > 1) {
      throw FormatError("activation file: layer '" + layer.name + "' has unknown kind code " +
                        std::to_string(kind));
    }
    layer.kind = static_cast<LayerKind>(kind);
    const int rank = layer.kind == LayerKind::conv ? 3 : 1;
    for (int d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      if (dim == 0) {
        throw FormatError("activation file: layer '" + layer.name + "' has a zero dimension");
      }
      layer.shape.push_back(dim);
    }
    std::uint64_t count = 1;
    for (auto dim : layer.shape) {
      // A product beyond the remaining payload is a truncation; checking per
      // factor also keeps the multiplication from overflowing.
      if (dim > r.remaining() / 4 / count) r.need_floats(std::uint64_t{dim} * count);
      count *= dim;
    }
    layer.values = r.f32s(count);
    set.layers.push_back(std::move(layer));
  }
  r.expect_end();
  return set;
}

ActivationSet read_activation_file(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_activation(bytes);
  } catch (const FormatError& e) {
    if (dynamic_cast<const TruncationError*>(&e)) {
      throw TruncationError("'" + path.string() + "': " + e.what());
    }
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

void write_activation_file(const ActivationSet& set, const fs::path& path) {
  write_file(path, encode_activation(set));
}

// ---- manifest --------------------------------------------------------------

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(name) + "'");
}

std::map<Split, std::size_t> DatasetManifest::counts() const {
  std::map<Split, std::size_t> out;
  for (const auto& e : entries) ++out[e.split];
  return out;
}

std::vector<const ManifestEntry*> DatasetManifest::entries_in(Split split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(&e);
  }
  return out;
}

fs::path DatasetManifest::resolve(const ManifestEntry& entry) const {
  fs::path p(entry.activation_path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

DatasetManifest parse_manifest(std::string_view text, fs::path base_dir) {
  DatasetManifest manifest;
  manifest.base_dir = std::move(base_dir);
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    const std::string where = "manifest line " + std::to_string(line_no);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (!record.is_object()) throw ValidationError(where + ": expected a JSON object");
    auto field = [&](const char* key) -> const json& {
      auto it = record.find(key);
      if (it == record.end()) throw ValidationError(where + ": missing field '" + key + "'");
      return *it;
    };
    auto string_field = [&](const char* key) {
      const json& v = field(key);
      if (!v.is_string()) throw ValidationError(where + ": field '" + key + "' must be a string");
      return v.get<std::string>();
    };

    ManifestEntry entry;
    entry.image_id = string_field("image_id");
    entry.split = parse_split(string_field("split"));
    entry.activation_path = string_field("activation_path");
    const json& captions = field("captions");
    if (!captions.is_array() || captions.empty()) {
      throw ValidationError(where + ": 'captions' must be a non-empty array");
    }
    for (const auto& c : captions) {
      if (!c.is_string()) throw ValidationError(where + ": captions must be strings");
      entry.captions.push_back(c.get<std::string>());
    }
    if (!seen.insert(entry.image_id).second) {
      throw ValidationError(where + ": duplicate image_id '" + entry.image_id + "'");
    }
    manifest.entries.push_back(std::move(entry));
    if (end == text.size()) break;
  }
  return manifest;
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& e : manifest.entries) {
    json record{{"image_id", e.image_id},
                {"split", split_name(e.split)},
                {"activation_path", e.activation_path},
                {"captions", e.captions}};
    out += record.dump();
    out += '\n';
  }
  return out;
}

DatasetManifest load_manifest(const fs::path& path) {
  const auto bytes = read_file(path);
  std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return parse_manifest(text, path.parent_path());
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  const auto text = format_manifest(manifest);
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---- FNE statistics --------------------------------------------------------

std::vector<std::uint8_t> encode_stats(const StatsFile& file) {
  const auto& s = file.stats;
  if (s.mean.size() != s.std.size()) throw FormatError("FNE stats mean/std lengths differ");
  ByteWriter w;
  w.raw(kStatsMagic);
  w.u32(kStatsVersion);
  w.u32(static_cast<std::uint32_t>(s.mean.size()));
  w.f32s(s.mean);
  w.f32s(s.std);
  w.f32(file.config.theta_pos);
  w.f32(file.config.theta_neg);
  w.u32(s.fitted_on);
  return w.take();
}

StatsFile decode_stats(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "FNE stats file");
  r.magic(kStatsMagic);
  check_version(r.u32(), kStatsVersion, "FNE stats file");
  StatsFile file;
  const std::uint32_t dim = r.u32();
  file.stats.mean = r.f32s(dim);
  file.stats.std = r.f32s(dim);
  file.config.theta_pos = r.f32();
  file.config.theta_neg = r.f32();
  file.stats.fitted_on = r.u32();
  r.expect_end();
  for (float sd : file.stats.std) {
    if (!(sd >= 0)) throw FormatError("FNE stats file holds a negative or NaN std");
  }
  return file;
}

StatsFile load_stats(const fs::path& path) {
  const auto bytes = read_file(path);
  return decode_stats(bytes);
}

void save_stats(const StatsFile& file, const fs::path& path) {
  write_file(path, encode_stats(file));
}

// ---- checkpoints -----------------------------------------------------------

namespace {

json config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"clip_threshold", c.clip_threshold},
          {"alpha", c.alpha},
          {"seed", c.seed},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"vocab_size", c.vocab_size},
          {"word_dim", c.word_dim},
          {"hidden_dim", c.hidden_dim},
          {"reduction", c.reduction == mmspace::LossReduction::mean ? "mean" : "sum"},
          {"threads", c.threads}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.clip_threshold = j.at("clip_threshold").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_epsilon = j.at("adam_epsilon").get<double>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.word_dim = j.at("word_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  const auto reduction = j.at("reduction").get<std::string>();
  if (reduction != "sum" && reduction != "mean") {
    throw FormatError("checkpoint: unknown loss reduction '" + reduction + "'");
  }
  c.reduction = reduction == "mean" ? mmspace::LossReduction::mean : mmspace::LossReduction::sum;
  c.threads = j.at("threads").get<std::size_t>();
  return c;
}

struct TensorEntry {
  std::string name;
  std::uint64_t rows;
  std::uint64_t cols;
};

// Row-major float32 copy of a column-major Eigen tensor.
void write_row_major(ByteWriter& w, std::span<const float> data, Eigen::Index rows,
                     Eigen::Index cols) {
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) w.f32(data[static_cast<std::size_t>(j * rows + i)]);
  }
}

void read_row_major(ByteReader& r, std::span<float> data, Eigen::Index rows, Eigen::Index cols) {
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) data[static_cast<std::size_t>(j * rows + i)] = r.f32();
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  mmspace::check_shapes(ckpt.params);
  const auto& p = ckpt.params;
  if (static_cast<std::size_t>(p.vocab_size()) != ckpt.vocab.size()) {
    throw FormatError("checkpoint: embedding rows do not match the vocabulary size");
  }
  if (static_cast<std::size_t>(p.image_dim()) != ckpt.stats.dimension() ||
      ckpt.stats.std.size() != ckpt.stats.dimension()) {
    throw FormatError("checkpoint: projection input does not match the FNE dimension");
  }

  json directory = json::array();
  directory.push_back({{"name", "fne.mean"}, {"rows", ckpt.stats.dimension()}, {"cols", 1}});
  directory.push_back({{"name", "fne.std"}, {"rows", ckpt.stats.dimension()}, {"cols", 1}});
  for (const auto& t : mmspace::tensors(p)) {
    directory.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  }
  json header{
      {"config", config_to_json(ckpt.config)},
      {"fne_config", {{"theta_pos", ckpt.fne_config.theta_pos}, {"theta_neg", ckpt.fne_config.theta_neg}}},
      {"vocab", {{"max_size", ckpt.vocab.max_size()}, {"words", ckpt.vocab.words()}}},
      {"fne_stats", {{"fitted_on", ckpt.stats.fitted_on}}},
      {"provenance",
       {{"epoch", ckpt.provenance.epoch},
        {"seed", ckpt.provenance.seed},
        {"validation_score", ckpt.provenance.validation_score}}},
      {"layout", "row-major float32"},
      {"tensors", directory}};
  const std::string text = header.dump();

  ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u32(ckpt.format_version);
  w.u64(text.size());
  w.raw(text);
  w.f32s(ckpt.stats.mean);
  w.f32s(ckpt.stats.std);
  for (const auto& t : mmspace::tensors(p)) write_row_major(w, t.data, t.rows, t.cols);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "checkpoint");
  r.magic(kCheckpointMagic);
  Checkpoint ckpt;
  ckpt.format_version = r.u32();
  check_version(ckpt.format_version, kCheckpointVersion, "checkpoint");
  const std::uint64_t header_len = r.u64();
  r.need(header_len);
  std::string text(reinterpret_cast<const char*>(bytes.data() + r.position()),
                   static_cast<std::size_t>(header_len));
  r.skip(header_len);

  std::vector<TensorEntry> directory;
  try {
    const json header = json::parse(text);
    ckpt.config = config_from_json(header.at("config"));
    ckpt.fne_config.theta_pos = header.at("fne_config").at("theta_pos").get<float>();
    ckpt.fne_config.theta_neg = header.at("fne_config").at("theta_neg").get<float>();
    ckpt.vocab = textenc::Vocabulary(header.at("vocab").at("words").get<std::vector<std::string>>(),
                                     header.at("vocab").at("max_size").get<std::size_t>());
    ckpt.stats.fitted_on = header.at("fne_stats").at("fitted_on").get<std::uint32_t>();
    const auto& prov = header.at("provenance");
    ckpt.provenance.epoch = prov.at("epoch").get<std::uint32_t>();
    ckpt.provenance.seed = prov.at("seed").get<std::uint64_t>();
    ckpt.provenance.validation_score = prov.at("validation_score").get<double>();
    for (const auto& t : header.at("tensors")) {
      directory.push_back({t.at("name").get<std::string>(), t.at("rows").get<std::uint64_t>(),
                           t.at("cols").get<std::uint64_t>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }

  // Expected order: fne.mean, fne.std, then the model tensors.
  const std::vector<std::string_view> names = [] {
    std::vector<std::string_view> n{"fne.mean", "fne.std"};
    mmspace::ModelParams<float> probe;
    for (const auto& t : mmspace::tensors(probe)) n.push_back(t.name);
    return n;
  }();
  if (directory.size() != names.size()) throw FormatError("checkpoint: unexpected tensor count");
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& e = directory[i];
    if (e.name != names[i]) {
      throw FormatError("checkpoint: tensor '" + e.name + "' where '" + std::string(names[i]) +
                        "' was expected");
    }
    if (e.rows == 0 || e.cols == 0 || e.rows > r.remaining() || e.cols > r.remaining() ||
        e.rows * e.cols > r.remaining() / 4) {
      throw TruncationError("checkpoint: tensor '" + e.name + "' exceeds the payload");
    }
    total += e.rows * e.cols;
  }
  r.need_floats(total);

  const std::uint64_t dim = directory[0].rows;
  if (directory[1].rows != dim || directory[0].cols != 1 || directory[1].cols != 1) {
    throw FormatError("checkpoint: FNE statistics tensors disagree in shape");
  }
  ckpt.stats.mean = r.f32s(dim);
  ckpt.stats.std = r.f32s(dim);

  auto dims = [&](std::size_t i) {
    return std::pair{static_cast<Eigen::Index>(directory[i].rows),
                     static_cast<Eigen::Index>(directory[i].cols)};
  };
  const auto [vocab, word_dim] = dims(2);
  const auto hidden = dims(3).first;
  const auto image_dim = static_cast<Eigen::Index>(dim);
  const std::vector<std::pair<Eigen::Index, Eigen::Index>> expected{
      {vocab, word_dim}, {hidden, word_dim}, {hidden, word_dim}, {hidden, word_dim},
      {hidden, hidden},  {hidden, hidden},   {hidden, hidden},   {hidden, 1},
      {hidden, 1},       {hidden, 1},        {hidden, image_dim}, {hidden, 1}};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (dims(i + 2) != expected[i]) {
      throw FormatError("checkpoint: tensor '" + directory[i + 2].name +
                        "' has an inconsistent shape");
    }
  }
  ckpt.params = mmspace::ModelParams<float>::zeros(vocab, word_dim, hidden,
                                                   static_cast<Eigen::Index>(dim));
  auto views = mmspace::tensors(ckpt.params);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto [rows, cols] = dims(i + 2);
    read_row_major(r, views[i].data, rows, cols);
  }
  r.expect_end();
  if (static_cast<std::size_t>(vocab) != ckpt.vocab.size()) {
    throw FormatError("checkpoint: embedding rows do not match the vocabulary");
  }
  return ckpt;
}

Checkpoint load_checkpoint(const fs::path& path) {
  const auto bytes = read_file(path);
  return decode_checkpoint(bytes);
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

}  // namespace fnmme::tensorio
