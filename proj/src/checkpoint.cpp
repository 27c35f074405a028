#include "mtltag/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "mtltag/errors.hpp"

namespace mtltag {

namespace {

constexpr char kMagic[8] = {'M', 'T', 'L', 'T', 'A', 'G', 'C', 'K'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw FormatError("cannot write checkpoint: " + path.string());
  }
  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(const Tensor& t) {
    out_.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  void raw(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void finish() {
    out_.flush();
    if (!out_) throw FormatError("checkpoint write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open checkpoint: " + path.string());
  }
  template <typename T>
  T pod() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ULL << 32)) throw FormatError("checkpoint string length out of range");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void doubles(Tensor& t) { read(reinterpret_cast<char*>(t.data()), t.size() * sizeof(double)); }
  void read(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (!in_) throw FormatError("truncated checkpoint");
  }

 private:
  std::ifstream in_;
};

nlohmann::json metadata(const Tagger& tagger) {
  const ModelDims& d = tagger.dims();
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : tagger.tasks()) {
    tasks.push_back({{"task_id", t.task_id},
                     {"name", t.name},
                     {"scheme", std::string(scheme_name(t.scheme))},
                     {"labels", t.label_set}});
  }
  return {{"method", std::string(method_name(tagger.method()))},
          {"dims",
           {{"char_embedding", d.char_embedding},
            {"char_hidden", d.char_hidden},
            {"word_embedding", d.word_embedding},
            {"word_hidden", d.word_hidden},
            {"word_layers", d.word_layers},
            {"task_embedding", d.task_embedding}}},
          {"tasks", tasks}};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Tagger& tagger,
                     const Adam* optimizer, const std::string& rng_state) {
  Writer w(path);
  w.raw(kMagic, sizeof kMagic);
  w.pod(kCheckpointVersion);
  w.str(metadata(tagger).dump());

  const Vocabulary& vocab = tagger.vocabulary();
  w.pod<std::uint64_t>(vocab.word_count());
  for (const auto& word : vocab.words()) w.str(word);
  w.pod<std::uint64_t>(vocab.char_count());
  for (char32_t c : vocab.chars()) w.pod<std::uint32_t>(c);
  w.pod<std::uint64_t>(vocab.task_token_ids().size());
  for (int id : vocab.task_token_ids()) w.pod<std::int64_t>(id);

  const auto& params = tagger.parameters().all();
  w.pod<std::uint64_t>(params.size());
  for (const auto& p : params) {
    w.str(p->name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t dim : p->value.shape()) w.pod<std::uint64_t>(dim);
    w.doubles(p->value);
  }

  w.pod<std::uint8_t>(optimizer ? 1 : 0);
  if (optimizer) {
    w.pod<std::uint64_t>(optimizer->steps());
    w.pod(optimizer->learning_rate());
    w.pod(optimizer->beta1());
    w.pod(optimizer->beta2());
    w.pod(optimizer->epsilon());
    w.pod<std::uint64_t>(optimizer->moments().size());
    for (const auto& [name, mo] : optimizer->moments()) {
      w.str(name);
      w.pod<std::uint64_t>(mo.m.size());
      w.doubles(mo.m);
      w.doubles(mo.v);
    }
  }
  w.str(rng_state);
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[sizeof kMagic];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a checkpoint file: " + path.string());
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  ModelDims dims;
  std::vector<TaskSpec> tasks;
  MtlMethod method;
  try {
    method = parse_method(meta.at("method").get<std::string>());
    const auto& d = meta.at("dims");
    dims.char_embedding = d.at("char_embedding").get<std::size_t>();
    dims.char_hidden = d.at("char_hidden").get<std::size_t>();
    dims.word_embedding = d.at("word_embedding").get<std::size_t>();
    dims.word_hidden = d.at("word_hidden").get<std::size_t>();
    dims.word_layers = d.at("word_layers").get<std::size_t>();
    dims.task_embedding = d.at("task_embedding").get<std::size_t>();
    for (const auto& t : meta.at("tasks")) {
      TaskSpec spec;
      spec.task_id = t.at("task_id").get<std::size_t>();
      spec.name = t.at("name").get<std::string>();
      spec.scheme = parse_scheme(t.at("scheme").get<std::string>());
      spec.label_set = t.at("labels").get<std::vector<std::string>>();
      tasks.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }

  Vocabulary vocab;
  const auto words = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < words; ++i) {
    const std::string w = r.str();
    if (i >= 2 && vocab.add_word(w) != static_cast<int>(i)) {
      throw FormatError("duplicate word in checkpoint vocabulary");
    }
  }
  const auto chars = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < chars; ++i) {
    const auto c = static_cast<char32_t>(r.pod<std::uint32_t>());
    if (i >= 2 && vocab.add_char(c) != static_cast<int>(i)) {
      throw FormatError("duplicate character in checkpoint vocabulary");
    }
  }
  std::vector<int> task_tokens;
  const auto token_count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < token_count; ++i) {
    task_tokens.push_back(static_cast<int>(r.pod<std::int64_t>()));
  }
  vocab.set_task_tokens(std::move(task_tokens));

  Tagger tagger(method, dims, std::move(tasks), std::move(vocab), 0);
  ParameterStore& store = tagger.parameters();
  const auto param_count = r.pod<std::uint64_t>();
  if (param_count != store.size()) {
    throw FormatError("checkpoint holds " + std::to_string(param_count) +
                      " parameters, model expects " + std::to_string(store.size()));
  }
  for (std::uint64_t i = 0; i < param_count; ++i) {
    const std::string name = r.str();
    Parameter* p = store.find(name);
    if (!p) throw FormatError("unknown parameter in checkpoint: " + name);
    Shape shape(r.pod<std::uint32_t>());
    for (auto& dim : shape) dim = r.pod<std::uint64_t>();
    if (shape != p->value.shape()) {
      throw FormatError("parameter " + name + " has shape " + shape_string(shape) +
                        ", expected " + shape_string(p->value.shape()));
    }
    r.doubles(p->value);
  }

  std::optional<Adam> optimizer;
  if (r.pod<std::uint8_t>()) {
    const auto steps = r.pod<std::uint64_t>();
    const auto lr = r.pod<double>();
    const auto b1 = r.pod<double>();
    const auto b2 = r.pod<double>();
    const auto eps = r.pod<double>();
    std::map<std::string, Adam::Moments> moments;
    const auto count = r.pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::string name = r.str();
      const Parameter* p = store.find(name);
      if (!p) throw FormatError("optimizer state for unknown parameter: " + name);
      if (r.pod<std::uint64_t>() != p->value.size()) {
        throw FormatError("optimizer state size mismatch for " + name);
      }
      Adam::Moments mo{Tensor(p->value.shape()), Tensor(p->value.shape())};
      r.doubles(mo.m);
      r.doubles(mo.v);
      moments.emplace(name, std::move(mo));
    }
    optimizer.emplace(lr, b1, b2, eps);
    optimizer->restore(steps, lr, std::move(moments));
  }
  std::string rng_state = r.str();
  return {std::move(tagger), std::move(optimizer), std::move(rng_state)};
}

}  // namespace mtltag
