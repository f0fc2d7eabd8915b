#include "pipo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace pipo::training {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'P', 'I', 'P', 'O', 'C', 'K', 'P', 'T'};

enum class DType : std::uint8_t { f64 = 0, i64 = 1, text = 2 };

struct Entry {
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  std::vector<double> f64;
  std::vector<std::int64_t> i64;
  std::string text;
};

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }

  void header(const std::string& name, DType dtype, const std::vector<std::uint64_t>& dims) {
    pod<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    out_ += name;
    pod<std::uint8_t>(static_cast<std::uint8_t>(dtype));
    pod<std::uint8_t>(static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) pod<std::uint64_t>(d);
    ++count_;
  }

  void matrix(const std::string& name, const Matrix& m) {
    header(name, DType::f64, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())});
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) pod<double>(m(r, c));
  }

  void vector(const std::string& name, const Vector& v) {
    header(name, DType::f64, {static_cast<std::uint64_t>(v.size())});
    for (Index i = 0; i < v.size(); ++i) pod<double>(v(i));
  }

  void integer(const std::string& name, std::int64_t v) {
    header(name, DType::i64, {});
    pod<std::int64_t>(v);
  }

  void text(const std::string& name, const std::string& t) {
    header(name, DType::text, {static_cast<std::uint64_t>(t.size())});
    out_ += t;
  }

  std::string finish() const {
    std::string file(kMagic, sizeof kMagic);
    char buf[4];
    std::memcpy(buf, &kCheckpointVersion, 4);
    file.append(buf, 4);
    const auto count = static_cast<std::uint32_t>(count_);
    std::memcpy(buf, &count, 4);
    file.append(buf, 4);
    return file + out_;
  }

 private:
  std::string out_;
  std::size_t count_ = 0;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + at_, sizeof(T));
    at_ += sizeof(T);
    return v;
  }

  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(at_, n);
    at_ += n;
    return s;
  }

  bool done() const { return at_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (at_ + n > bytes_.size()) throw IoError("checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t at_ = 0;
};

// Named module tensors in serialization order.
void write_net(Writer& w, nn::ProxNet& net) {
  for (nn::Param* p : net.params()) w.matrix(p->name, p->value);
  for (auto& b : net.buffers()) w.vector(b.name, *b.values);
}

class EntryTable {
 public:
  explicit EntryTable(std::map<std::string, Entry> entries) : entries_(std::move(entries)) {}

  const Entry& at(const std::string& name, DType dtype) const {
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw IoError("checkpoint is missing entry '" + name + "'");
    if (it->second.dtype != dtype) throw IoError("checkpoint entry '" + name + "' has the wrong type");
    return it->second;
  }

  void matrix(const std::string& name, Matrix& target) const {
    const Entry& e = at(name, DType::f64);
    if (e.dims.size() != 2 || e.dims[0] != static_cast<std::uint64_t>(target.rows()) ||
        e.dims[1] != static_cast<std::uint64_t>(target.cols()))
      throw IoError("checkpoint entry '" + name + "' has an unexpected shape");
    for (Index r = 0, i = 0; r < target.rows(); ++r)
      for (Index c = 0; c < target.cols(); ++c) target(r, c) = e.f64[static_cast<std::size_t>(i++)];
  }

  Matrix any_matrix(const std::string& name) const {
    const Entry& e = at(name, DType::f64);
    if (e.dims.size() != 2) throw IoError("checkpoint entry '" + name + "' is not a matrix");
    Matrix m(static_cast<Index>(e.dims[0]), static_cast<Index>(e.dims[1]));
    matrix(name, m);
    return m;
  }

  void vector(const std::string& name, Vector& target) const {
    const Entry& e = at(name, DType::f64);
    if (e.dims.size() != 1 || e.dims[0] != static_cast<std::uint64_t>(target.size()))
      throw IoError("checkpoint entry '" + name + "' has an unexpected shape");
    for (Index i = 0; i < target.size(); ++i) target(i) = e.f64[static_cast<std::size_t>(i)];
  }

  std::int64_t integer(const std::string& name) const { return at(name, DType::i64).i64.at(0); }
  const std::string& text(const std::string& name) const { return at(name, DType::text).text; }

  const std::map<std::string, Entry>& all() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

void read_net(const EntryTable& t, nn::ProxNet& net) {
  for (nn::Param* p : net.params()) t.matrix(p->name, p->value);
  for (auto& b : net.buffers()) t.vector(b.name, *b.values);
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt_in) {
  // parameter accessors are non-const; serialization does not modify anything
  auto& ckpt = const_cast<Checkpoint&>(ckpt_in);
  Writer w;
  config::IniDocument doc;
  ckpt.config.store(doc);
  w.text("meta.config", doc.render());
  w.integer("meta.epoch", ckpt.epoch);
  w.integer("meta.step", ckpt.step);
  w.text("meta.rng", ckpt.rng_state);

  unfolding::Pipeline& p = ckpt.pipeline;
  w.matrix("sampling.A", p.sampling.A);
  w.integer("sampling.whitened", p.sampling.whitened ? 1 : 0);
  w.matrix(p.irm.weight.name, p.irm.weight.value);
  w.matrix(p.irm.bias.name, p.irm.bias.value);
  for (Index k = 0; k < p.depth(); ++k) {
    auto& s = p.modules[static_cast<std::size_t>(k)];
    w.matrix(s.rho_raw.name, s.rho_raw.value);
    w.vector("drm" + std::to_string(k) + ".lambda", s.lambda_buf);
    write_net(w, s.prox);
    write_net(w, s.hfc);
  }

  w.integer("adam.step", ckpt.optimizer.step);
  for (const auto& [name, m] : ckpt.optimizer.m) w.matrix("adam.m." + name, m);
  for (const auto& [name, v] : ckpt.optimizer.v) w.matrix("adam.v." + name, v);
  return w.finish();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw IoError("not a checkpoint file (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.pod<std::uint32_t>();

  std::map<std::string, Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.pod<std::uint16_t>();
    std::string name = r.raw(name_len);
    Entry e;
    e.dtype = static_cast<DType>(r.pod<std::uint8_t>());
    const auto ndim = r.pod<std::uint8_t>();
    std::uint64_t total = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      e.dims.push_back(r.pod<std::uint64_t>());
      total *= e.dims.back();
    }
    switch (e.dtype) {
      case DType::f64:
        e.f64.resize(total);
        for (auto& v : e.f64) v = r.pod<double>();
        break;
      case DType::i64:
        e.i64.resize(total);
        for (auto& v : e.i64) v = r.pod<std::int64_t>();
        break;
      case DType::text:
        e.text = r.raw(ndim == 1 ? e.dims[0] : 0);
        break;
      default: throw IoError("checkpoint entry '" + name + "' has unknown dtype");
    }
    if (!entries.emplace(name, std::move(e)).second) throw IoError("duplicate checkpoint entry '" + name + "'");
  }
  if (!r.done()) throw IoError("trailing bytes after checkpoint entries");

  const EntryTable t(std::move(entries));
  Checkpoint ckpt;
  ckpt.config = TrainConfig::load(config::IniDocument::parse(t.text("meta.config"), "checkpoint config"));
  ckpt.config.validate();
  ckpt.epoch = t.integer("meta.epoch");
  ckpt.step = t.integer("meta.step");
  ckpt.rng_state = t.text("meta.rng");

  Matrix a = t.any_matrix("sampling.A");
  ckpt.pipeline = unfolding::Pipeline::allocate(ckpt.config.pipeline_options(), a.rows());
  if (a.cols() != ckpt.pipeline.n()) throw IoError("sampling matrix width does not match the patch size");
  unfolding::Pipeline& p = ckpt.pipeline;
  p.sampling.A = std::move(a);
  p.sampling.whitened = t.integer("sampling.whitened") != 0;
  p.sampling.trainable = ckpt.config.train_sampling;
  t.matrix(p.irm.weight.name, p.irm.weight.value);
  t.matrix(p.irm.bias.name, p.irm.bias.value);
  for (Index k = 0; k < p.depth(); ++k) {
    auto& s = p.modules[static_cast<std::size_t>(k)];
    t.matrix(s.rho_raw.name, s.rho_raw.value);
    t.vector("drm" + std::to_string(k) + ".lambda", s.lambda_buf);
    read_net(t, s.prox);
    read_net(t, s.hfc);
  }

  ckpt.optimizer.step = t.integer("adam.step");
  for (const auto& [name, e] : t.all()) {
    if (name.rfind("adam.m.", 0) == 0) ckpt.optimizer.m[name.substr(7)] = t.any_matrix(name);
    if (name.rfind("adam.v.", 0) == 0) ckpt.optimizer.v[name.substr(7)] = t.any_matrix(name);
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace pipo::training
