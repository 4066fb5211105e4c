#include "medfocus/numerics/archive.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "medfocus/error.hpp"

namespace medfocus {

namespace {

constexpr char kMagic[4] = {'M', 'F', 'C', '1'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorKind::MalformedHeader, "MFC1: " + what); }

}  // namespace

std::vector<std::uint8_t> encode_archive(const TensorMap& tensors) {
  nlohmann::json index = nlohmann::json::object();
  std::vector<std::uint8_t> payload;
  for (const auto& [name, t] : tensors) {
    const std::size_t offset = payload.size();
    for (double v : t.data()) put_u64(payload, std::bit_cast<std::uint64_t>(v));
    index[name] = {{"shape", t.shape()}, {"byte_offset", offset}, {"byte_len", t.numel() * 8}};
  }
  const std::string index_text = index.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u64(out, index_text.size());
  out.insert(out.end(), index_text.begin(), index_text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

TensorMap decode_archive(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || !std::equal(kMagic, kMagic + 4, bytes.begin())) malformed("bad magic");
  const std::uint64_t index_len = get_u64(bytes.data() + 4);
  if (index_len > bytes.size() - 12) throw Error(ErrorKind::TruncatedPayload, "MFC1: index runs past end of file");
  const std::size_t payload_start = 12 + static_cast<std::size_t>(index_len);
  const std::size_t payload_len = bytes.size() - payload_start;

  nlohmann::json index;
  try {
    index = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
  } catch (const nlohmann::json::exception& e) {
    malformed(std::string("index is not JSON: ") + e.what());
  }
  if (!index.is_object()) malformed("index is not an object");

  TensorMap out;
  for (const auto& [name, entry] : index.items()) {
    Shape shape;
    std::uint64_t offset = 0, len = 0;
    try {
      shape = entry.at("shape").get<Shape>();
      offset = entry.at("byte_offset").get<std::uint64_t>();
      len = entry.at("byte_len").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      malformed("entry '" + name + "': " + e.what());
    }
    if (len != shape_numel(shape) * 8) malformed("entry '" + name + "': byte_len does not match shape");
    if (offset > payload_len || len > payload_len - offset) {
      throw Error(ErrorKind::TruncatedPayload, "MFC1: payload of '" + name + "' runs past end of file");
    }
    std::vector<double> values(shape_numel(shape));
    const std::uint8_t* p = bytes.data() + payload_start + offset;
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::bit_cast<double>(get_u64(p + 8 * i));
    out.emplace(name, Tensor::from(std::move(shape), std::move(values)));
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "short write to " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string read_text_file(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_archive(const std::filesystem::path& path, const TensorMap& tensors) {
  write_file_bytes(path, encode_archive(tensors));
}

TensorMap read_archive(const std::filesystem::path& path) { return decode_archive(read_file_bytes(path)); }

}  // namespace medfocus
