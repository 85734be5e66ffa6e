#include "imvalign/data.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

namespace imvalign {

const std::string kCorpusMagic = "IMVALIGN-CORPUS";
const std::string kCorpusVersion = "v1";

void SynthTaskConfig::validate() const {
  if (vocab_size < 1) throw ConfigError("synth: vocab size must be >= 1");
  if (feature_dim < 1) throw ConfigError("synth: feature dim must be >= 1");
  if (min_tokens < 1) throw ConfigError("synth: min tokens must be >= 1");
  if (max_tokens < min_tokens)
    throw ConfigError("synth: max tokens must be >= min tokens");
  if (min_frames_per_token < 1)
    throw ConfigError("synth: min frames per token must be >= 1");
  if (max_frames_per_token < min_frames_per_token)
    throw ConfigError("synth: max frames per token must be >= min frames per token");
  if (noise_std < 0.0) throw ConfigError("synth: noise std must be >= 0");
  if (one_hot_prototypes && feature_dim < vocab_size)
    throw ConfigError("synth: one-hot prototypes need feature dim >= vocab size");
}

SynthTask::SynthTask(const SynthTaskConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  prototypes_.assign(
      static_cast<std::size_t>(cfg_.vocab_size) * cfg_.feature_dim, 0.0);
  if (cfg_.one_hot_prototypes) {
    for (int v = 0; v < cfg_.vocab_size; ++v)
      prototypes_[static_cast<std::size_t>(v) * cfg_.feature_dim + v] = 1.0;
    return;
  }
  // Random directions with a fixed norm and a minimum pairwise angle, so the
  // classes stay distinct regardless of the seed (the task is separable by
  // construction). Redraw a direction when it leans too close to an earlier
  // one; with vocab of a few dozen over >= 8 dims this terminates quickly.
  std::mt19937_64 rng(cfg_.seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  const double target_norm = std::sqrt(static_cast<double>(cfg_.feature_dim));
  const double max_cos = cfg_.feature_dim >= 8 ? 0.5 : 0.95;
  const int max_tries = 10000;
  for (int v = 0; v < cfg_.vocab_size; ++v) {
    double* row = prototypes_.data() + static_cast<std::size_t>(v) * cfg_.feature_dim;
    for (int attempt = 0; attempt < max_tries; ++attempt) {
      double norm = 0.0;
      for (int f = 0; f < cfg_.feature_dim; ++f) {
        row[f] = dist(rng);
        norm += row[f] * row[f];
      }
      norm = std::sqrt(norm);
      if (norm < 1e-9) continue;
      for (int f = 0; f < cfg_.feature_dim; ++f) row[f] *= target_norm / norm;
      bool ok = true;
      for (int u = 0; u < v && ok; ++u) {
        const double* other =
            prototypes_.data() + static_cast<std::size_t>(u) * cfg_.feature_dim;
        double dot = 0.0;
        for (int f = 0; f < cfg_.feature_dim; ++f) dot += row[f] * other[f];
        if (std::abs(dot) / (target_norm * target_norm) > max_cos) ok = false;
      }
      if (ok) break;
      if (attempt == max_tries - 1)
        throw ConfigError("synth: could not place distinct prototypes");
    }
  }
}

TranscriptionExample SynthTask::sample(std::mt19937_64& rng) const {
  std::uniform_int_distribution<int> token_count(cfg_.min_tokens, cfg_.max_tokens);
  std::uniform_int_distribution<int> token_id(0, cfg_.vocab_size - 1);
  std::uniform_int_distribution<int> run_length(cfg_.min_frames_per_token,
                                                cfg_.max_frames_per_token);
  std::normal_distribution<double> noise(0.0, 1.0);

  TranscriptionExample ex;
  // downstream needs at least two frames; redraw the rare 1-frame utterance
  do {
    ex.tokens.clear();
    ex.alignment.clear();
    ex.features.clear();
    const int l_len = token_count(rng);
    ex.tokens.reserve(static_cast<std::size_t>(l_len));
    for (int j = 0; j < l_len; ++j) ex.tokens.push_back(token_id(rng));
    ex.feature_dim = cfg_.feature_dim;
    for (int j = 0; j < l_len; ++j) {
      const int runs = run_length(rng);
      const double* proto =
          prototypes_.data() +
          static_cast<std::size_t>(ex.tokens[static_cast<std::size_t>(j)]) *
              cfg_.feature_dim;
      for (int r = 0; r < runs; ++r) {
        ex.alignment.push_back(j);
        for (int f = 0; f < cfg_.feature_dim; ++f)
          ex.features.push_back(proto[f] + cfg_.noise_std * noise(rng));
      }
    }
    ex.frames = static_cast<int>(ex.alignment.size());
  } while (ex.frames < 2);
  return ex;
}

TranscriptionExample gen_example(const SynthTask& task, std::mt19937_64& rng) {
  return task.sample(rng);
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t bar = line.find('|', start);
    const std::size_t end = bar == std::string::npos ? line.size() : bar;
    std::size_t a = start, b = end;
    while (a < b && line[a] == ' ') ++a;
    while (b > a && line[b - 1] == ' ') --b;
    fields.emplace_back(line.substr(a, b - a));
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  return fields;
}

std::vector<double> parse_doubles(const std::string& field, const char* what) {
  std::vector<double> out;
  const char* p = field.data();
  const char* end = field.data() + field.size();
  while (p < end) {
    while (p < end && *p == ' ') ++p;
    if (p >= end) break;
    double v = 0.0;
    auto res = std::from_chars(p, end, v);
    if (res.ec != std::errc())
      throw CorpusTruncatedError(std::string("corpus: bad value in ") + what);
    out.push_back(v);
    p = res.ptr;
  }
  return out;
}

std::vector<int> parse_ints(const std::string& field, const char* what) {
  std::vector<int> out;
  const char* p = field.data();
  const char* end = field.data() + field.size();
  while (p < end) {
    while (p < end && *p == ' ') ++p;
    if (p >= end) break;
    int v = 0;
    auto res = std::from_chars(p, end, v);
    if (res.ec != std::errc())
      throw CorpusTruncatedError(std::string("corpus: bad value in ") + what);
    out.push_back(v);
    p = res.ptr;
  }
  return out;
}

}  // namespace

void write_corpus(const std::string& path,
                  const std::vector<TranscriptionExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("corpus: cannot open for writing: " + path);
  out << kCorpusMagic << ' ' << kCorpusVersion << '\n';
  std::string line;
  for (const auto& ex : examples) {
    line.clear();
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
      if (i) line += ' ';
      line += std::to_string(ex.tokens[i]);
    }
    line += " | ";
    line += std::to_string(ex.frames);
    line += ' ';
    line += std::to_string(ex.feature_dim);
    line += " | ";
    for (std::size_t i = 0; i < ex.features.size(); ++i) {
      if (i) line += ' ';
      append_double(line, ex.features[i]);
    }
    if (ex.has_alignment()) {
      line += " | ";
      for (std::size_t i = 0; i < ex.alignment.size(); ++i) {
        if (i) line += ' ';
        line += std::to_string(ex.alignment[i]);
      }
    }
    line += '\n';
    out << line;
  }
  if (!out) throw CorpusError("corpus: write failed: " + path);
}

std::vector<TranscriptionExample> read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("corpus: cannot open: " + path);
  std::string header;
  if (!std::getline(in, header))
    throw CorpusHeaderError("corpus: missing header line");
  std::istringstream hs(header);
  std::string magic, version;
  hs >> magic >> version;
  if (magic != kCorpusMagic)
    throw CorpusHeaderError("corpus: bad magic in header: " + header);
  if (version != kCorpusVersion)
    throw CorpusVersionError("corpus: unsupported version: " + version);

  std::vector<TranscriptionExample> examples;
  std::string line;
  long long record = 0;
  while (std::getline(in, line)) {
    ++record;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 3 && fields.size() != 4)
      throw CorpusTruncatedError("corpus: record " + std::to_string(record) +
                                 " has " + std::to_string(fields.size()) +
                                 " fields, expected 3 or 4");
    TranscriptionExample ex;
    ex.tokens = parse_ints(fields[0], "tokens");
    const auto dims = parse_ints(fields[1], "dimensions");
    if (dims.size() != 2)
      throw CorpusTruncatedError("corpus: record " + std::to_string(record) +
                                 " has a malformed dimension field");
    ex.frames = dims[0];
    ex.feature_dim = dims[1];
    if (ex.frames < 1 || ex.feature_dim < 1)
      throw CorpusTruncatedError("corpus: record " + std::to_string(record) +
                                 " has non-positive dimensions");
    ex.features = parse_doubles(fields[2], "features");
    if (static_cast<long long>(ex.features.size()) !=
        static_cast<long long>(ex.frames) * ex.feature_dim)
      throw CorpusTruncatedError("corpus: record " + std::to_string(record) +
                                 " is truncated: expected " +
                                 std::to_string(static_cast<long long>(ex.frames) *
                                                ex.feature_dim) +
                                 " features, found " +
                                 std::to_string(ex.features.size()));
    if (fields.size() == 4) {
      ex.alignment = parse_ints(fields[3], "alignment");
      if (static_cast<int>(ex.alignment.size()) != ex.frames)
        throw CorpusTruncatedError("corpus: record " + std::to_string(record) +
                                   " alignment length mismatch");
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

std::vector<std::string> load_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VocabError("vocab: cannot open: " + path);
  std::vector<std::string> vocab;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.eof()) break;
    if (!seen.insert(line).second)
      throw VocabError("vocab: duplicate token: " + line);
    vocab.push_back(line);
  }
  return vocab;
}

std::vector<std::pair<std::string, std::string>> load_class_map(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VocabError("class map: cannot open: " + path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  long long n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw VocabError("class map: line " + std::to_string(n) +
                       " is missing a tab separator");
    pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return pairs;
}

std::vector<int> resolve_class_map(
    const std::vector<std::string>& vocab,
    const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::map<std::string, std::string> token_to_class(pairs.begin(), pairs.end());
  std::map<std::string, int> class_ids;
  std::vector<int> out(vocab.size(), -1);
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    const auto it = token_to_class.find(vocab[id]);
    if (it == token_to_class.end())
      throw VocabError("class map: vocab token not mapped: " + vocab[id]);
    const auto ins = class_ids.emplace(it->second,
                                       static_cast<int>(class_ids.size()));
    out[id] = ins.first->second;
  }
  return out;
}

}  // namespace imvalign
