#include "pipo/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pipo::archive {

namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

constexpr char kMagic[8] = {'P', 'I', 'P', 'O', 'M', 'E', 'A', 'S'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Cursor {
 public:
  explicit Cursor(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
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
    if (at_ + n > bytes_.size()) throw IoError("measurement archive is truncated");
  }
  const std::string& bytes_;
  std::size_t at_ = 0;
};

}  // namespace

MeasurementRecord record_image(const unfolding::Pipeline& pipeline, const imaging::Image& image) {
  const unfolding::SampledImage s = unfolding::sample_image(pipeline, image);
  const auto grid = imaging::extract_patches(image, pipeline.options.patch_side);
  MeasurementRecord r;
  r.name = s.name;
  r.grid = s.grid;
  r.mean_subtracted = pipeline.options.mss;
  r.records.resize(s.grid.count(), s.y.rows() + 1);
  r.records.leftCols(s.y.rows()) = s.y.transpose();
  r.records.col(s.y.rows()) = grid.patches.colwise().sum().transpose();
  return r;
}

unfolding::SampledImage to_sampled(const MeasurementRecord& r) {
  unfolding::SampledImage s;
  s.name = r.name;
  s.grid = r.grid;
  s.y = r.records.leftCols(r.m()).transpose();
  if (r.mean_subtracted)
    s.patch_means = r.records.col(r.m()) / static_cast<double>(r.grid.n());
  else
    s.patch_means = Vector::Zero(r.grid.count());
  return s;
}

std::string serialize(const std::vector<MeasurementRecord>& records) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kArchiveVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(r.name.size()));
    out += r.name;
    const auto& g = r.grid;
    for (Index v : {g.n(), r.m(), g.patch_side, g.height, g.width, g.rows, g.cols, g.pad_bottom, g.pad_right})
      put<std::uint64_t>(out, static_cast<std::uint64_t>(v));
    put<std::uint8_t>(out, r.mean_subtracted ? 1 : 0);
    for (Index p = 0; p < r.records.rows(); ++p)
      for (Index c = 0; c < r.records.cols(); ++c) put<double>(out, r.records(p, c));
  }
  return out;
}

std::vector<MeasurementRecord> deserialize(const std::string& bytes) {
  Cursor in(bytes);
  if (in.raw(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw IoError("not a measurement archive (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kArchiveVersion) throw IoError("unsupported measurement archive version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  std::vector<MeasurementRecord> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    MeasurementRecord r;
    r.name = in.raw(in.get<std::uint16_t>());
    std::uint64_t h[9];
    for (auto& v : h) v = in.get<std::uint64_t>();
    const auto n = static_cast<Index>(h[0]);
    const auto m = static_cast<Index>(h[1]);
    r.grid = imaging::GridShape::for_image(static_cast<Index>(h[3]), static_cast<Index>(h[4]), static_cast<Index>(h[2]));
    if (r.grid.n() != n || r.grid.rows != static_cast<Index>(h[5]) || r.grid.cols != static_cast<Index>(h[6]) ||
        r.grid.pad_bottom != static_cast<Index>(h[7]) || r.grid.pad_right != static_cast<Index>(h[8]))
      throw IoError("measurement archive record '" + r.name + "' has an inconsistent grid header");
    if (m < 1 || m >= n) throw IoError("measurement archive record '" + r.name + "' has invalid m");
    r.mean_subtracted = in.get<std::uint8_t>() != 0;
    r.records.resize(r.grid.count(), m + 1);
    for (Index p = 0; p < r.records.rows(); ++p)
      for (Index c = 0; c < r.records.cols(); ++c) r.records(p, c) = in.get<double>();
    out.push_back(std::move(r));
  }
  if (!in.done()) throw IoError("trailing bytes after measurement archive records");
  return out;
}

void save(const std::filesystem::path& path, const std::vector<MeasurementRecord>& records) {
  const std::string bytes = serialize(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write measurement archive " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing measurement archive " + path.string());
}

std::vector<MeasurementRecord> load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open measurement archive " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace pipo::archive
