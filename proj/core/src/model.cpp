#include "nerforge/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "nerforge/errors.hpp"

namespace nerforge {

namespace {

constexpr char kMagic[4] = {'N', 'E', 'R', 'B'};
constexpr uint16_t kFormatVersion = 1;

void put_u16(std::ostream& out, uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_f32(std::ostream& out, float v) {
  put_u32(out, std::bit_cast<uint32_t>(v));
}

uint16_t get_u16(std::istream& in, const std::string& path) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) throw DataError(path + ": truncated model file");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError(path + ": truncated model file");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

float get_f32(std::istream& in, const std::string& path) {
  return std::bit_cast<float>(get_u32(in, path));
}

}  // namespace

void TaggerConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw std::invalid_argument(std::string("TaggerConfig: ") + what + " must be > 0");
  };
  positive(word_dim, "word_dim");
  positive(char_emb_dim, "char_emb_dim");
  positive(cnn_filters, "cnn_filters");
  positive(cnn_kernel, "cnn_kernel");
  positive(case_emb_dim, "case_emb_dim");
  positive(lstm_state, "lstm_state");
  positive(char_vocab_size, "char_vocab_size");
  if (tags.empty()) throw std::invalid_argument("TaggerConfig: tag list is empty");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("TaggerConfig: dropout must be in [0, 1)");
  }
}

TaggerModel init_model(TaggerConfig config, const CharVocab& vocab, const EmbeddingStore& store,
                       uint64_t seed) {
  config.word_dim = store.dim();
  config.char_vocab_size = static_cast<int>(vocab.size());
  config.validate();
  TaggerModel model;
  model.config = config;
  model.char_vocab = vocab;
  for (size_t i = 0; i < config.tags.size(); ++i) {
    model.tag_index.emplace(config.tags[i], static_cast<int>(i));
  }
  if (model.tag_index.size() != config.tags.size()) {
    throw std::invalid_argument("init_model: duplicate tag in tag list");
  }
  model.embedding_name = store.name();
  model.seed = seed;
  model.params = init_params<float>(config, seed);
  return model;
}

ad::Value<float> forward_scores(ad::Tape<float>& tape, TaggerModel& model, const Sentence& sentence,
                                const EmbeddingStore& store, bool training, Rng* rng) {
  return forward_scores_t<float>(tape, model.params, model.config, model.char_vocab, sentence,
                                 store, training, rng);
}

std::vector<std::string> predict_tags(TaggerModel& model, const Sentence& sentence,
                                      const EmbeddingStore& store) {
  ad::Tape<float> tape;
  auto scores = forward_scores(tape, model, sentence, store, false, nullptr);
  const int t_len = scores.shape().dim[0];
  const int k = scores.shape().dim[1];
  const float* s = scores.data().data();
  std::vector<std::string> tags(static_cast<size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    int best = 0;
    const float* row = s + static_cast<int64_t>(t) * k;
    for (int j = 1; j < k; ++j) {
      if (row[j] > row[best]) best = j;
    }
    tags[static_cast<size_t>(t)] = model.config.tags[static_cast<size_t>(best)];
  }
  return repair_bio(tags);
}

void save_model(const TaggerModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path + ": cannot open for writing");

  nlohmann::ordered_json meta;
  meta["config"] = {{"word_dim", model.config.word_dim},
                    {"char_emb_dim", model.config.char_emb_dim},
                    {"cnn_filters", model.config.cnn_filters},
                    {"cnn_kernel", model.config.cnn_kernel},
                    {"case_emb_dim", model.config.case_emb_dim},
                    {"lstm_state", model.config.lstm_state},
                    {"dropout", model.config.dropout}};
  meta["tags"] = model.config.tags;
  meta["char_vocab"] = model.char_vocab.chars();
  meta["embedding"] = {{"name", model.embedding_name}, {"dim", model.config.word_dim}};
  meta["seed"] = model.seed;
  const std::string meta_str = meta.dump();

  out.write(kMagic, 4);
  put_u16(out, kFormatVersion);
  put_u32(out, static_cast<uint32_t>(meta_str.size()));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  for (const ad::Param<float>* p : model.params.all()) {
    put_u32(out, static_cast<uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u32(out, static_cast<uint32_t>(p->value.shape.rank));
    for (int i = 0; i < p->value.shape.rank; ++i) {
      put_u32(out, static_cast<uint32_t>(p->value.shape.dim[static_cast<size_t>(i)]));
    }
    for (float v : p->value.v) put_f32(out, v);
  }
  if (!out) throw DataError(path + ": write failed");
}

TaggerModel load_model(const std::string& path, const EmbeddingStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");

  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path + ": not a model file (bad magic)");
  }
  const uint16_t version = get_u16(in, path);
  if (version != kFormatVersion) {
    throw DataError(path + ": unsupported model format version " + std::to_string(version));
  }
  const uint32_t meta_len = get_u32(in, path);
  std::string meta_str(meta_len, '\0');
  if (!in.read(meta_str.data(), meta_len)) throw DataError(path + ": truncated metadata");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad metadata: " + e.what());
  }

  TaggerModel model;
  try {
    const auto& c = meta.at("config");
    model.config.word_dim = c.at("word_dim").get<int>();
    model.config.char_emb_dim = c.at("char_emb_dim").get<int>();
    model.config.cnn_filters = c.at("cnn_filters").get<int>();
    model.config.cnn_kernel = c.at("cnn_kernel").get<int>();
    model.config.case_emb_dim = c.at("case_emb_dim").get<int>();
    model.config.lstm_state = c.at("lstm_state").get<int>();
    model.config.dropout = c.at("dropout").get<double>();
    model.config.tags = meta.at("tags").get<std::vector<std::string>>();
    model.char_vocab = CharVocab(meta.at("char_vocab").get<std::vector<uint32_t>>());
    model.config.char_vocab_size = static_cast<int>(model.char_vocab.size());
    model.embedding_name = meta.at("embedding").at("name").get<std::string>();
    const int emb_dim = meta.at("embedding").at("dim").get<int>();
    if (emb_dim != model.config.word_dim) throw DataError(path + ": inconsistent metadata dims");
    model.seed = meta.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad metadata: " + e.what());
  }
  model.config.validate();
  if (store.dim() != model.config.word_dim) {
    throw DataError(path + ": embedding dimension mismatch (model " +
                    std::to_string(model.config.word_dim) + ", store " +
                    std::to_string(store.dim()) + ")");
  }
  for (size_t i = 0; i < model.config.tags.size(); ++i) {
    model.tag_index.emplace(model.config.tags[i], static_cast<int>(i));
  }

  model.params = init_params<float>(model.config, 0);
  for (ad::Param<float>* p : model.params.all()) {
    const uint32_t name_len = get_u32(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw DataError(path + ": truncated tensor name");
    if (name != p->name) {
      throw DataError(path + ": tensor order mismatch (expected " + p->name + ", got " + name + ")");
    }
    const uint32_t rank = get_u32(in, path);
    if (rank != static_cast<uint32_t>(p->value.shape.rank)) {
      throw DataError(path + ": tensor rank mismatch for " + name);
    }
    for (uint32_t i = 0; i < rank; ++i) {
      const uint32_t d = get_u32(in, path);
      if (d != static_cast<uint32_t>(p->value.shape.dim[static_cast<size_t>(i)])) {
        throw DataError(path + ": tensor shape mismatch for " + name);
      }
    }
    for (float& v : p->value.v) v = get_f32(in, path);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError(path + ": trailing data after last tensor");
  }
  return model;
}

}  // namespace nerforge
