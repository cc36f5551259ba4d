#include "sift/io.hpp"

#include <bit>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <utility>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include "sift/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "shard I/O assumes a little-endian host");

namespace sift {

std::string_view record_type_name(RecordType type) {
  switch (type) {
    case RecordType::kEmbedding: return "embedding";
    case RecordType::kHiddenStates: return "hidden_states";
    case RecordType::kLoss: return "loss";
    case RecordType::kTokenCount: return "token_count";
    case RecordType::kTopK: return "topk";
    case RecordType::kPerplexityScores: return "perplexity_scores";
    case RecordType::kIfdScores: return "ifd_scores";
  }
  return "unknown";
}

namespace {

template <class T>
void put(std::byte*& out, T value) {
  std::memcpy(out, &value, sizeof(T));
  out += sizeof(T);
}

template <class T>
T get(const std::byte*& in) {
  T value;
  std::memcpy(&value, in, sizeof(T));
  in += sizeof(T);
  return value;
}

bool known_type(std::uint32_t tag) { return tag >= 1 && tag <= 7; }

}  // namespace

void encode_header(const ShardHeader& header, std::span<std::byte, kShardHeaderSize> out) {
  std::byte* p = out.data();
  std::memcpy(p, kShardMagic, 4);
  p += 4;
  put<std::uint32_t>(p, kShardVersion);
  put<std::uint32_t>(p, static_cast<std::uint32_t>(header.type));
  put<std::uint64_t>(p, header.start);
  put<std::uint64_t>(p, header.count);
  put<std::uint32_t>(p, header.dim);
}

ShardHeader decode_header(std::span<const std::byte> bytes, const std::string& path) {
  if (bytes.size() < kShardHeaderSize) {
    throw DataError(path + ": truncated header (" + std::to_string(bytes.size()) + " bytes)");
  }
  if (std::memcmp(bytes.data(), kShardMagic, 4) != 0) {
    throw DataError(path + ": bad magic, not a shard file");
  }
  const std::byte* p = bytes.data() + 4;
  const auto version = get<std::uint32_t>(p);
  if (version != kShardVersion) {
    throw DataError(path + ": unsupported shard version " + std::to_string(version));
  }
  const auto tag = get<std::uint32_t>(p);
  if (!known_type(tag)) {
    throw DataError(path + ": unknown record type " + std::to_string(tag));
  }
  ShardHeader h;
  h.type = static_cast<RecordType>(tag);
  h.start = get<std::uint64_t>(p);
  h.count = get<std::uint64_t>(p);
  h.dim = get<std::uint32_t>(p);
  return h;
}

MappedFile::MappedFile(const std::filesystem::path& path) : path_(path) {
  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) {
    throw DataError(path.string() + ": cannot open: " + std::strerror(errno));
  }
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    ::close(fd);
    throw DataError(path.string() + ": cannot stat: " + std::strerror(errno));
  }
  size_ = static_cast<std::size_t>(st.st_size);
  if (size_ > 0) {
    void* addr = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd, 0);
    if (addr == MAP_FAILED) {
      ::close(fd);
      throw DataError(path.string() + ": mmap failed: " + std::strerror(errno));
    }
    ::madvise(addr, size_, MADV_SEQUENTIAL);
    data_ = static_cast<const std::byte*>(addr);
  }
  ::close(fd);
}

MappedFile::~MappedFile() { release(); }

MappedFile::MappedFile(MappedFile&& other) noexcept
    : path_(std::move(other.path_)),
      data_(std::exchange(other.data_, nullptr)),
      size_(std::exchange(other.size_, 0)) {}

MappedFile& MappedFile::operator=(MappedFile&& other) noexcept {
  if (this != &other) {
    release();
    path_ = std::move(other.path_);
    data_ = std::exchange(other.data_, nullptr);
    size_ = std::exchange(other.size_, 0);
  }
  return *this;
}

void MappedFile::release() {
  if (data_ != nullptr) {
    ::munmap(const_cast<std::byte*>(data_), size_);
    data_ = nullptr;
    size_ = 0;
  }
}

AtomicFile::AtomicFile(std::filesystem::path path)
    : path_(std::move(path)), tmp_(path_.string() + ".tmp") {
  file_ = std::fopen(tmp_.c_str(), "wb");
  if (file_ == nullptr) {
    throw DataError(tmp_.string() + ": cannot create: " + std::strerror(errno));
  }
}

AtomicFile::~AtomicFile() {
  if (file_ != nullptr) {
    std::fclose(file_);
    std::error_code ec;
    std::filesystem::remove(tmp_, ec);
  }
}

void AtomicFile::write(std::span<const std::byte> bytes) {
  if (bytes.empty()) return;
  if (std::fwrite(bytes.data(), 1, bytes.size(), file_) != bytes.size()) {
    throw DataError(tmp_.string() + ": write failed");
  }
}

void AtomicFile::write(std::string_view text) { write(std::as_bytes(std::span(text))); }

void AtomicFile::commit() {
  if (file_ == nullptr) return;
  const bool ok = std::fflush(file_) == 0;
  std::fclose(file_);
  file_ = nullptr;
  if (!ok) {
    std::filesystem::remove(tmp_);
    throw DataError(tmp_.string() + ": flush failed");
  }
  std::filesystem::rename(tmp_, path_);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file_atomic(const std::filesystem::path& path, std::string_view text) {
  AtomicFile f(path);
  f.write(text);
  f.commit();
}

}  // namespace sift
