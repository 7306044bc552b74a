#include "tmdc/tensor/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tmdc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'M', 'D', 'C'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error("checkpoint: truncated file");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(std::span<const NamedTensor> tensors) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    put<std::uint64_t>(out, offset);
    put<std::uint64_t>(out, t.size());
    offset += t.size() * sizeof(double);
  }
  for (const auto& nt : tensors) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(nt.tensor.values().data());
    out.insert(out.end(), p, p + nt.tensor.size() * sizeof(double));
  }
  return out;
}

std::vector<NamedTensor> deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.get_string(4) != std::string(kMagic, 4)) throw Error("checkpoint: bad magic (not a TMDC file)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  struct Header {
    std::string name;
    Shape shape;
    std::uint64_t offset;
    std::uint64_t count;
  };
  std::vector<Header> headers;
  for (std::uint32_t i = 0; i < count; ++i) {
    Header h;
    h.name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) h.shape.push_back(r.get<std::uint64_t>());
    h.offset = r.get<std::uint64_t>();
    h.count = r.get<std::uint64_t>();
    if (numel(h.shape) != h.count) throw Error("checkpoint: entry '" + h.name + "' count does not match shape");
    headers.push_back(std::move(h));
  }
  const std::size_t data_start = r.pos();
  std::vector<NamedTensor> out;
  for (auto& h : headers) {
    const std::size_t begin = data_start + h.offset;
    const std::size_t nbytes = h.count * sizeof(double);
    if (begin + nbytes > bytes.size()) throw Error("checkpoint: entry '" + h.name + "' runs past end of file");
    std::vector<double> values(h.count);
    std::memcpy(values.data(), bytes.data() + begin, nbytes);
    out.push_back(NamedTensor{std::move(h.name), Tensor(std::move(h.shape), std::move(values))});
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  write_file_atomic(path, serialize_checkpoint(tensors));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  return deserialize_checkpoint(
      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

const Tensor& find_tensor(std::span<const NamedTensor> tensors, std::string_view name) {
  for (const auto& nt : tensors) {
    if (nt.name == name) return nt.tensor;
  }
  throw Error("checkpoint: missing tensor '" + std::string(name) + "'");
}

bool has_tensor(std::span<const NamedTensor> tensors, std::string_view name) {
  for (const auto& nt : tensors) {
    if (nt.name == name) return true;
  }
  return false;
}

}  // namespace tmdc
