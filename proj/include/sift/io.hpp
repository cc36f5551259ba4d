#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace sift {

// Record-type tags of the shared binary header.
enum class RecordType : std::uint32_t {
  kEmbedding = 1,
  kHiddenStates = 2,
  kLoss = 3,
  kTokenCount = 4,
  kTopK = 5,
  kPerplexityScores = 6,
  kIfdScores = 7,
};

std::string_view record_type_name(RecordType type);

inline constexpr char kShardMagic[4] = {'S', 'I', 'F', 'T'};
inline constexpr std::uint32_t kShardVersion = 1;
inline constexpr std::size_t kShardHeaderSize = 32;

// Little-endian on disk:
//   magic[4] u32 version u32 record_type u64 start_index u64 count u32 dim
struct ShardHeader {
  RecordType type = RecordType::kEmbedding;
  std::uint64_t start = 0;
  std::uint64_t count = 0;
  std::uint32_t dim = 0;
};

void encode_header(const ShardHeader& header, std::span<std::byte, kShardHeaderSize> out);

// Throws DataError on bad magic, version, or unknown record type.
ShardHeader decode_header(std::span<const std::byte> bytes, const std::string& path);

// Read-only memory map of a whole file. Empty files map to an empty span.
class MappedFile {
 public:
  MappedFile() = default;
  explicit MappedFile(const std::filesystem::path& path);
  ~MappedFile();

  MappedFile(MappedFile&& other) noexcept;
  MappedFile& operator=(MappedFile&& other) noexcept;
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;

  std::span<const std::byte> bytes() const { return {data_, size_}; }
  const std::filesystem::path& path() const { return path_; }

 private:
  void release();

  std::filesystem::path path_;
  const std::byte* data_ = nullptr;
  std::size_t size_ = 0;
};

// Writes to "<path>.tmp" and renames over <path> on commit(). A writer that is
// destroyed without commit() removes its temp file.
class AtomicFile {
 public:
  explicit AtomicFile(std::filesystem::path path);
  ~AtomicFile();

  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;

  void write(std::span<const std::byte> bytes);
  void write(std::string_view text);
  template <class T>
  void write_pod(const T& value) {
    write(std::as_bytes(std::span<const T, 1>(&value, 1)));
  }
  void commit();

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_;
  std::FILE* file_ = nullptr;
};

// Whole-file helpers used for small text artifacts.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace sift
