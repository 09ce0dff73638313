#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "ctxdb/core.hpp"

namespace ctxdb::vfs {

// On-disk layout (all integers little-endian, every block 4096 bytes):
//
//   block 0            header
//   data blocks        raw vector payloads, fixed slots per block
//   index blocks       fixed-width adjacency records, chained by next pointer
//   directory blocks   trailing chain: block id -> (offset, type, aux)
//
// docs/vector_file_format.md has the byte-level description.

inline constexpr std::size_t kBlockSize = 4096;
inline constexpr std::uint32_t kVersion = 1;
inline constexpr char kMagic[4] = {'A', 'V', 'D', 'B'};

inline constexpr std::size_t kDataHeaderBytes = 64;
inline constexpr std::size_t kMaxSlotsPerDataBlock = 320;  // tombstone bitmap is 40 bytes
inline constexpr std::size_t kIndexHeaderBytes = 32;
inline constexpr std::size_t kDirectoryHeaderBytes = 32;
inline constexpr std::size_t kDirectoryEntryBytes = 16;
inline constexpr std::size_t kEntriesPerDirectoryBlock = (kBlockSize - kDirectoryHeaderBytes) / kDirectoryEntryBytes;

enum class BlockType : std::uint32_t { Header = 1, Data = 2, Index = 3, Directory = 4, Free = 5 };
enum class Role : std::uint32_t { Key = 0, Value = 1 };

struct FileHeader {
    std::uint32_t version = kVersion;
    std::uint32_t dim = 0;
    std::uint32_t elem_bits = 32;
    std::uint32_t block_size = kBlockSize;
    Role role = Role::Key;
    std::uint64_t n_vectors = 0;
    std::uint64_t n_blocks = 0;
    std::uint64_t directory_block = 0;
    std::uint64_t n_index_nodes = 0;
    std::uint32_t max_degree = 0;
    std::uint32_t entry_point = 0;
    std::uint64_t first_index_block = 0;  // 0 = no index
    std::uint64_t n_tombstones = 0;
    std::uint32_t slots_per_data_block = 0;

    friend bool operator==(const FileHeader&, const FileHeader&) = default;
};

struct DirectoryEntry {
    std::uint64_t offset;
    BlockType type;
    std::uint32_t aux;  // used slots (data), node count (index), entry count (directory)

    friend bool operator==(const DirectoryEntry&, const DirectoryEntry&) = default;
};

/// Graph adjacency as stored in index blocks.
struct Adjacency {
    std::uint32_t max_degree = 0;
    std::uint32_t entry_point = 0;
    std::vector<std::uint32_t> degrees;
    std::vector<TokenId> slots;  // degrees.size() * max_degree

    friend bool operator==(const Adjacency&, const Adjacency&) = default;
};

struct WriteOptions {
    std::uint32_t elem_bits = 32;  // 16 or 32
    Role role = Role::Key;
    std::size_t dim = 0;           // required when the vector set is empty
};

std::size_t slots_per_data_block(std::size_t dim, std::uint32_t elem_bits);
std::size_t nodes_per_index_block(std::size_t max_degree);

/// Writes a fresh file. Any existing file at `path` is replaced.
void write_vector_file(const std::filesystem::path& path, const VectorSet& vectors, const Adjacency* graph = nullptr,
                       const WriteOptions& options = {});

/// Appends vectors in new data blocks after the current end of file, then a
/// new directory chain. Only the header block is rewritten in place.
void append_vectors(const std::filesystem::path& path, const VectorSet& vectors);

/// Tombstones one vector id (the slot bytes stay in place).
void mark_deleted(const std::filesystem::path& path, TokenId id);

/// Read-only handle over one vector file. Reads are positional and safe to
/// issue from several threads.
class VectorFile {
public:
    explicit VectorFile(const std::filesystem::path& path);
    ~VectorFile();
    VectorFile(const VectorFile&) = delete;
    VectorFile& operator=(const VectorFile&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::uint64_t id() const noexcept { return id_; }
    const FileHeader& header() const noexcept { return header_; }
    const std::vector<DirectoryEntry>& directory() const noexcept { return directory_; }
    std::size_t block_count() const noexcept { return directory_.size(); }
    BlockType block_type(std::uint64_t block_id) const;

    /// Reads one block straight from disk; counts toward io_reads().
    std::vector<std::uint8_t> read_block_direct(std::uint64_t block_id) const;
    std::uint64_t io_reads() const noexcept { return io_reads_.load(); }

    /// Data block and slot holding vector `id`.
    std::pair<std::uint64_t, std::size_t> locate(TokenId id) const;
    std::vector<std::uint64_t> data_blocks() const;
    std::vector<std::uint64_t> index_blocks() const;

    VectorSet read_vectors() const;
    std::vector<bool> read_tombstones() const;
    std::optional<Adjacency> read_adjacency() const;

private:
    std::filesystem::path path_;
    int fd_ = -1;
    std::uint64_t id_;
    FileHeader header_;
    std::vector<DirectoryEntry> directory_;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> data_first_ids_;  // (first id, block id), sorted
    mutable std::atomic<std::uint64_t> io_reads_{0};
};

/// Decodes the vector in `slot` of a data block.
std::vector<float> decode_slot(std::span<const std::uint8_t> block, const FileHeader& header, std::size_t slot);

// ---------------------------------------------------------------------------

struct BlockKey {
    std::uint64_t file;
    std::uint64_t block;

    friend auto operator<=>(const BlockKey&, const BlockKey&) = default;
};

struct PoolStats {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t evictions = 0;
};

/// Buffer manager with block-type-aware eviction: data blocks are evicted
/// first (LRU among them); index, header and directory blocks go only when
/// no unpinned data block is resident (LRU among them). Pinned blocks are
/// never evicted.
class BufferPool {
    struct Frame;

public:
    /// Pins one resident block for as long as the handle lives.
    class Handle {
    public:
        Handle() = default;
        Handle(Handle&& other) noexcept;
        Handle& operator=(Handle&& other) noexcept;
        Handle(const Handle&) = delete;
        Handle& operator=(const Handle&) = delete;
        ~Handle();

        std::span<const std::uint8_t> bytes() const;
        BlockKey key() const;

    private:
        friend class BufferPool;
        Handle(BufferPool* pool, Frame* frame) : pool_(pool), frame_(frame) {}
        void release();
        BufferPool* pool_ = nullptr;
        Frame* frame_ = nullptr;
    };

    explicit BufferPool(std::size_t capacity_blocks);
    ~BufferPool();

    Handle read_block(const VectorFile& file, std::uint64_t block_id);

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t resident_count() const;
    bool is_resident(const VectorFile& file, std::uint64_t block_id) const;
    std::vector<BlockKey> resident_blocks() const;
    std::optional<BlockKey> last_victim() const;
    PoolStats stats() const;

private:
    struct Frame {
        BlockKey key;
        bool data_class;
        std::vector<std::uint8_t> bytes;
        int pins = 0;
        bool loading = true;
        bool failed = false;
        std::list<Frame*>::iterator lru_pos;
    };

    void unpin(Frame* frame);
    void touch(Frame* frame);
    Frame* choose_victim();

    std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable loaded_;
    std::map<BlockKey, std::shared_ptr<Frame>> frames_;
    std::list<Frame*> data_lru_;   // front = least recently used
    std::list<Frame*> index_lru_;
    std::optional<BlockKey> last_victim_;
    PoolStats stats_;
};

/// Convenience wrapper: copies the block bytes out of the pool.
std::vector<std::uint8_t> read_block(BufferPool& pool, const VectorFile& file, std::uint64_t block_id);

/// Vector `id` fetched through the pool.
Vector read_vector(BufferPool& pool, const VectorFile& file, TokenId id);

}  // namespace ctxdb::vfs
