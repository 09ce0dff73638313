#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>

#include "ctxdb/half.hpp"
#include "ctxdb/vfs.hpp"

namespace ctxdb::vfs {

namespace {

using Block = std::vector<std::uint8_t>;

void put_u32(std::uint8_t* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}
void put_u64(std::uint8_t* p, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}
void put_u16(std::uint8_t* p, std::uint16_t v) {
    p[0] = static_cast<std::uint8_t>(v);
    p[1] = static_cast<std::uint8_t>(v >> 8);
}
std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    return v;
}
std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
}
std::uint16_t get_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

std::string sys_error(const std::filesystem::path& path, const char* what, std::uint64_t offset) {
    return path.string() + ": " + what + " at offset " + std::to_string(offset) + ": " + std::strerror(errno);
}

class Fd {
public:
    Fd(const std::filesystem::path& path, int flags) : path_(path), fd_(::open(path.c_str(), flags, 0644)) {
        if (fd_ < 0) throw Error(path.string() + ": open failed: " + std::strerror(errno));
    }
    ~Fd() {
        if (fd_ >= 0) ::close(fd_);
    }
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;

    void write_at(std::uint64_t offset, std::span<const std::uint8_t> bytes) const {
        std::size_t done = 0;
        while (done < bytes.size()) {
            const ssize_t w = ::pwrite(fd_, bytes.data() + done, bytes.size() - done, off_t(offset + done));
            if (w < 0) {
                if (errno == EINTR) continue;
                throw Error(sys_error(path_, "write failed", offset + done));
            }
            done += std::size_t(w);
        }
    }
    void read_at(std::uint64_t offset, std::span<std::uint8_t> bytes) const { read_fully(fd_, path_, offset, bytes); }
    void sync() const {
        if (::fsync(fd_) != 0) throw Error(sys_error(path_, "fsync failed", 0));
    }

    static void read_fully(int fd, const std::filesystem::path& path, std::uint64_t offset,
                           std::span<std::uint8_t> bytes) {
        std::size_t done = 0;
        while (done < bytes.size()) {
            const ssize_t r = ::pread(fd, bytes.data() + done, bytes.size() - done, off_t(offset + done));
            if (r < 0) {
                if (errno == EINTR) continue;
                throw Error(sys_error(path, "read failed", offset + done));
            }
            if (r == 0) throw Error(path.string() + ": unexpected end of file at offset " + std::to_string(offset + done));
            done += std::size_t(r);
        }
    }

private:
    std::filesystem::path path_;
    int fd_;
};

Block encode_header(const FileHeader& h) {
    Block b(kBlockSize, 0);
    std::memcpy(b.data(), kMagic, 4);
    put_u32(&b[4], h.version);
    put_u32(&b[8], h.dim);
    put_u32(&b[12], h.elem_bits);
    put_u32(&b[16], h.block_size);
    put_u32(&b[20], static_cast<std::uint32_t>(h.role));
    put_u64(&b[24], h.n_vectors);
    put_u64(&b[32], h.n_blocks);
    put_u64(&b[40], h.directory_block);
    put_u64(&b[48], h.n_index_nodes);
    put_u32(&b[56], h.max_degree);
    put_u32(&b[60], h.entry_point);
    put_u64(&b[64], h.first_index_block);
    put_u64(&b[72], h.n_tombstones);
    put_u32(&b[80], h.slots_per_data_block);
    return b;
}

FileHeader decode_header(std::span<const std::uint8_t> b, const std::filesystem::path& path) {
    if (std::memcmp(b.data(), kMagic, 4) != 0) throw Error(path.string() + ": bad magic, not a vector file");
    FileHeader h;
    h.version = get_u32(&b[4]);
    if (h.version != kVersion) throw Error(path.string() + ": unsupported version " + std::to_string(h.version));
    h.dim = get_u32(&b[8]);
    h.elem_bits = get_u32(&b[12]);
    h.block_size = get_u32(&b[16]);
    h.role = static_cast<Role>(get_u32(&b[20]));
    h.n_vectors = get_u64(&b[24]);
    h.n_blocks = get_u64(&b[32]);
    h.directory_block = get_u64(&b[40]);
    h.n_index_nodes = get_u64(&b[48]);
    h.max_degree = get_u32(&b[56]);
    h.entry_point = get_u32(&b[60]);
    h.first_index_block = get_u64(&b[64]);
    h.n_tombstones = get_u64(&b[72]);
    h.slots_per_data_block = get_u32(&b[80]);
    if (h.block_size != kBlockSize) throw Error(path.string() + ": unsupported block size");
    if (h.elem_bits != 16 && h.elem_bits != 32) throw Error(path.string() + ": unsupported element width");
    if (h.dim == 0) throw Error(path.string() + ": zero dimension");
    return h;
}

void encode_slot(std::uint8_t* p, std::span<const float> v, std::uint32_t elem_bits) {
    for (std::size_t t = 0; t < v.size(); ++t) {
        if (elem_bits == 32) {
            put_u32(p + 4 * t, std::bit_cast<std::uint32_t>(v[t]));
        } else {
            const std::uint16_t h = float_to_half(v[t]);
            if ((h & 0x7c00u) == 0x7c00u) {
                throw Error("value " + std::to_string(v[t]) + " is outside the 16-bit storage range");
            }
            put_u16(p + 2 * t, h);
        }
    }
}

/// Data blocks for vectors [0, n) of `vectors`, numbered from first_id.
std::vector<Block> encode_data_blocks(const VectorSet& vectors, const FileHeader& h, std::uint64_t first_id,
                                      std::vector<std::uint32_t>& used) {
    std::vector<Block> out;
    const std::size_t slots = h.slots_per_data_block;
    const std::size_t vec_bytes = std::size_t(h.dim) * h.elem_bits / 8;
    for (std::size_t begin = 0; begin < vectors.size(); begin += slots) {
        const std::size_t count = std::min(slots, vectors.size() - begin);
        Block b(kBlockSize, 0);
        put_u32(&b[0], static_cast<std::uint32_t>(BlockType::Data));
        put_u32(&b[4], static_cast<std::uint32_t>(count));
        put_u64(&b[8], first_id + begin);
        put_u32(&b[16], static_cast<std::uint32_t>(slots));
        for (std::size_t s = 0; s < count; ++s) {
            encode_slot(&b[kDataHeaderBytes + s * vec_bytes], vectors.row(begin + s), h.elem_bits);
        }
        used.push_back(static_cast<std::uint32_t>(count));
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<Block> encode_index_blocks(const Adjacency& g, std::uint64_t first_block_id,
                                       std::vector<std::uint32_t>& counts) {
    std::vector<Block> out;
    const std::size_t per_block = nodes_per_index_block(g.max_degree);
    const std::size_t n = g.degrees.size();
    const std::size_t record = 4 * (1 + std::size_t(g.max_degree));
    const std::size_t n_blocks = (n + per_block - 1) / per_block;
    for (std::size_t bi = 0; bi < n_blocks; ++bi) {
        const std::size_t begin = bi * per_block;
        const std::size_t count = std::min(per_block, n - begin);
        Block b(kBlockSize, 0);
        put_u32(&b[0], static_cast<std::uint32_t>(BlockType::Index));
        put_u32(&b[4], static_cast<std::uint32_t>(count));
        put_u64(&b[8], begin);
        put_u64(&b[16], bi + 1 < n_blocks ? first_block_id + bi + 1 : 0);
        put_u32(&b[24], g.max_degree);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint8_t* p = &b[kIndexHeaderBytes + i * record];
            const std::size_t node = begin + i;
            put_u32(p, g.degrees[node]);
            for (std::size_t j = 0; j < g.degrees[node]; ++j) put_u32(p + 4 * (1 + j), g.slots[node * g.max_degree + j]);
        }
        counts.push_back(static_cast<std::uint32_t>(count));
        out.push_back(std::move(b));
    }
    return out;
}

/// Directory chain appended at block id `first`, covering `entries` plus
/// the directory blocks themselves.
std::vector<Block> encode_directory(std::vector<DirectoryEntry>& entries, std::uint64_t first) {
    std::size_t k = 1;
    while (k * kEntriesPerDirectoryBlock < entries.size() + k) ++k;
    const std::size_t total = entries.size() + k;
    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t in_block = std::min(kEntriesPerDirectoryBlock, total - j * kEntriesPerDirectoryBlock);
        entries.push_back({(first + j) * kBlockSize, BlockType::Directory, static_cast<std::uint32_t>(in_block)});
    }
    std::vector<Block> out;
    for (std::size_t j = 0; j < k; ++j) {
        Block b(kBlockSize, 0);
        const std::size_t begin = j * kEntriesPerDirectoryBlock;
        const std::size_t count = std::min(kEntriesPerDirectoryBlock, total - begin);
        put_u32(&b[0], static_cast<std::uint32_t>(BlockType::Directory));
        put_u32(&b[4], static_cast<std::uint32_t>(count));
        put_u64(&b[8], j + 1 < k ? first + j + 1 : 0);
        put_u64(&b[16], begin);
        for (std::size_t e = 0; e < count; ++e) {
            std::uint8_t* p = &b[kDirectoryHeaderBytes + e * kDirectoryEntryBytes];
            const auto& entry = entries[begin + e];
            put_u64(p, entry.offset);
            put_u32(p + 8, static_cast<std::uint32_t>(entry.type));
            put_u32(p + 12, entry.aux);
        }
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<std::uint8_t> concat(const std::vector<Block>& blocks) {
    std::vector<std::uint8_t> out;
    out.reserve(blocks.size() * kBlockSize);
    for (const auto& b : blocks) out.insert(out.end(), b.begin(), b.end());
    return out;
}

std::vector<DirectoryEntry> read_directory(int fd, const std::filesystem::path& path, const FileHeader& h,
                                           std::atomic<std::uint64_t>* reads) {
    std::vector<DirectoryEntry> entries;
    std::uint64_t block = h.directory_block;
    Block b(kBlockSize);
    std::size_t guard = 0;
    while (true) {
        if (++guard > h.n_blocks + 1) throw Error(path.string() + ": directory chain loops");
        Fd::read_fully(fd, path, block * kBlockSize, b);
        if (reads) ++*reads;
        if (get_u32(&b[0]) != static_cast<std::uint32_t>(BlockType::Directory)) {
            throw Error(path.string() + ": expected a directory block at offset " + std::to_string(block * kBlockSize));
        }
        const std::uint32_t count = get_u32(&b[4]);
        if (count > kEntriesPerDirectoryBlock) throw Error(path.string() + ": corrupt directory block");
        for (std::uint32_t e = 0; e < count; ++e) {
            const std::uint8_t* p = &b[kDirectoryHeaderBytes + e * kDirectoryEntryBytes];
            entries.push_back({get_u64(p), static_cast<BlockType>(get_u32(p + 8)), get_u32(p + 12)});
        }
        const std::uint64_t next = get_u64(&b[8]);
        if (next == 0) break;
        block = next;
    }
    if (entries.size() != h.n_blocks) throw Error(path.string() + ": directory size does not match header");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].offset != i * kBlockSize) throw Error(path.string() + ": misaligned directory entry");
    }
    return entries;
}

}  // namespace

std::size_t slots_per_data_block(std::size_t dim, std::uint32_t elem_bits) {
    const std::size_t vec_bytes = dim * elem_bits / 8;
    if (vec_bytes == 0 || vec_bytes > kBlockSize - kDataHeaderBytes) {
        throw Error("a " + std::to_string(dim) + "-dim vector does not fit in one data block");
    }
    return std::min(kMaxSlotsPerDataBlock, (kBlockSize - kDataHeaderBytes) / vec_bytes);
}

std::size_t nodes_per_index_block(std::size_t max_degree) {
    const std::size_t record = 4 * (1 + max_degree);
    if (max_degree == 0 || record > kBlockSize - kIndexHeaderBytes) {
        throw Error("max_degree " + std::to_string(max_degree) + " does not fit in an index block");
    }
    return (kBlockSize - kIndexHeaderBytes) / record;
}

void write_vector_file(const std::filesystem::path& path, const VectorSet& vectors, const Adjacency* graph,
                       const WriteOptions& options) {
    if (options.elem_bits != 16 && options.elem_bits != 32) throw Error("element width must be 16 or 32 bits");
    const std::size_t dim = vectors.empty() ? options.dim : vectors.dim();
    if (dim == 0) throw Error("vector file needs a positive dimension");
    if (options.dim != 0 && options.dim != dim) throw DimensionMismatch(options.dim, dim);

    FileHeader h;
    h.dim = static_cast<std::uint32_t>(dim);
    h.elem_bits = options.elem_bits;
    h.role = options.role;
    h.n_vectors = vectors.size();
    h.slots_per_data_block = static_cast<std::uint32_t>(slots_per_data_block(dim, options.elem_bits));

    std::vector<DirectoryEntry> entries{{0, BlockType::Header, 0}};
    std::vector<std::uint32_t> used;
    auto data = encode_data_blocks(vectors, h, 0, used);
    for (std::size_t i = 0; i < data.size(); ++i) entries.push_back({entries.size() * kBlockSize, BlockType::Data, used[i]});

    std::vector<Block> index;
    if (graph) {
        const std::size_t n = graph->degrees.size();
        if (n > vectors.size()) throw Error("index references more nodes than stored vectors");
        if (graph->slots.size() != n * graph->max_degree) throw Error("adjacency slot array has the wrong size");
        for (std::size_t i = 0; i < n; ++i) {
            if (graph->degrees[i] > graph->max_degree) throw Error("node degree exceeds max_degree");
            for (std::size_t j = 0; j < graph->degrees[i]; ++j) {
                if (graph->slots[i * graph->max_degree + j] >= vectors.size()) {
                    throw Error("index references a vector id with no data slot");
                }
            }
        }
        h.n_index_nodes = n;
        h.max_degree = graph->max_degree;
        h.entry_point = graph->entry_point;
        if (n > 0) {
            std::vector<std::uint32_t> counts;
            h.first_index_block = entries.size();
            index = encode_index_blocks(*graph, h.first_index_block, counts);
            for (std::uint32_t c : counts) entries.push_back({entries.size() * kBlockSize, BlockType::Index, c});
        }
    }

    h.directory_block = entries.size();
    auto dir = encode_directory(entries, h.directory_block);
    h.n_blocks = entries.size();

    std::vector<Block> blocks;
    blocks.reserve(h.n_blocks);
    blocks.push_back(encode_header(h));
    for (auto& b : data) blocks.push_back(std::move(b));
    for (auto& b : index) blocks.push_back(std::move(b));
    for (auto& b : dir) blocks.push_back(std::move(b));

    std::filesystem::remove(path);
    Fd fd(path, O_WRONLY | O_CREAT | O_TRUNC);
    fd.write_at(0, concat(blocks));
    fd.sync();
}

void append_vectors(const std::filesystem::path& path, const VectorSet& vectors) {
    if (vectors.empty()) return;
    Fd fd(path, O_RDWR);
    Block hb(kBlockSize);
    fd.read_at(0, hb);
    FileHeader h = decode_header(hb, path);
    if (vectors.dim() != h.dim) throw DimensionMismatch(h.dim, vectors.dim());

    VectorFile current(path);
    std::vector<DirectoryEntry> entries = current.directory();
    for (auto& e : entries) {
        if (e.type == BlockType::Directory) e.type = BlockType::Free;
    }

    const std::uint64_t first_new = entries.size();
    std::vector<std::uint32_t> used;
    auto data = encode_data_blocks(vectors, h, h.n_vectors, used);
    for (std::size_t i = 0; i < data.size(); ++i) entries.push_back({entries.size() * kBlockSize, BlockType::Data, used[i]});
    h.directory_block = entries.size();
    auto dir = encode_directory(entries, h.directory_block);
    h.n_blocks = entries.size();
    h.n_vectors += vectors.size();

    std::vector<Block> tail;
    for (auto& b : data) tail.push_back(std::move(b));
    for (auto& b : dir) tail.push_back(std::move(b));
    fd.write_at(first_new * kBlockSize, concat(tail));
    fd.sync();
    fd.write_at(0, encode_header(h));
    fd.sync();
}

void mark_deleted(const std::filesystem::path& path, TokenId id) {
    std::uint64_t block_id = 0;
    std::size_t slot = 0;
    {
        VectorFile file(path);
        std::tie(block_id, slot) = file.locate(id);
    }
    Fd fd(path, O_RDWR);
    Block b(kBlockSize);
    fd.read_at(block_id * kBlockSize, b);
    std::uint8_t& byte = b[24 + slot / 8];
    const std::uint8_t bit = static_cast<std::uint8_t>(1u << (slot % 8));
    if (byte & bit) return;
    byte |= bit;
    fd.write_at(block_id * kBlockSize, b);

    Block hb(kBlockSize);
    fd.read_at(0, hb);
    FileHeader h = decode_header(hb, path);
    ++h.n_tombstones;
    fd.write_at(0, encode_header(h));
    fd.sync();
}

// ---------------------------------------------------------------------------

namespace {
std::atomic<std::uint64_t> next_file_id{1};
}

VectorFile::VectorFile(const std::filesystem::path& path) : path_(path), id_(next_file_id++) {
    fd_ = ::open(path.c_str(), O_RDONLY);
    if (fd_ < 0) throw Error(path.string() + ": open failed: " + std::strerror(errno));
    try {
        Block hb(kBlockSize);
        Fd::read_fully(fd_, path_, 0, hb);
        ++io_reads_;
        header_ = decode_header(hb, path_);
        directory_ = read_directory(fd_, path_, header_, &io_reads_);
        std::uint64_t next_id = 0;
        for (std::size_t i = 0; i < directory_.size(); ++i) {
            if (directory_[i].type != BlockType::Data) continue;
            data_first_ids_.emplace_back(next_id, i);
            next_id += directory_[i].aux;
        }
        if (next_id != header_.n_vectors) throw Error(path_.string() + ": data blocks do not hold n_vectors slots");
    } catch (...) {
        ::close(fd_);
        throw;
    }
}

VectorFile::~VectorFile() {
    if (fd_ >= 0) ::close(fd_);
}

BlockType VectorFile::block_type(std::uint64_t block_id) const {
    if (block_id >= directory_.size()) {
        throw Error(path_.string() + ": unknown block " + std::to_string(block_id));
    }
    return directory_[block_id].type;
}

std::vector<std::uint8_t> VectorFile::read_block_direct(std::uint64_t block_id) const {
    if (block_id >= directory_.size()) {
        throw Error(path_.string() + ": unknown block " + std::to_string(block_id));
    }
    Block b(kBlockSize);
    Fd::read_fully(fd_, path_, directory_[block_id].offset, b);
    ++io_reads_;
    return b;
}

std::pair<std::uint64_t, std::size_t> VectorFile::locate(TokenId id) const {
    if (id >= header_.n_vectors) throw Error(path_.string() + ": vector id " + std::to_string(id) + " out of range");
    auto it = std::upper_bound(data_first_ids_.begin(), data_first_ids_.end(), std::uint64_t(id),
                               [](std::uint64_t v, const auto& e) { return v < e.first; });
    --it;
    return {it->second, std::size_t(id - it->first)};
}

std::vector<std::uint64_t> VectorFile::data_blocks() const {
    std::vector<std::uint64_t> out;
    for (const auto& e : data_first_ids_) out.push_back(e.second);
    return out;
}

std::vector<std::uint64_t> VectorFile::index_blocks() const {
    std::vector<std::uint64_t> out;
    for (std::uint64_t b = header_.first_index_block; b != 0;) {
        if (block_type(b) != BlockType::Index) throw Error(path_.string() + ": broken index chain");
        out.push_back(b);
        const auto bytes = read_block_direct(b);
        b = get_u64(&bytes[16]);
    }
    return out;
}

std::vector<float> decode_slot(std::span<const std::uint8_t> block, const FileHeader& h, std::size_t slot) {
    const std::size_t vec_bytes = std::size_t(h.dim) * h.elem_bits / 8;
    const std::uint8_t* p = block.data() + kDataHeaderBytes + slot * vec_bytes;
    std::vector<float> out(h.dim);
    for (std::size_t t = 0; t < h.dim; ++t) {
        out[t] = h.elem_bits == 32 ? std::bit_cast<float>(get_u32(p + 4 * t)) : half_to_float(get_u16(p + 2 * t));
    }
    return out;
}

VectorSet VectorFile::read_vectors() const {
    VectorSet out(header_.dim);
    out.reserve(header_.n_vectors);
    for (const auto& [first, block] : data_first_ids_) {
        const auto bytes = read_block_direct(block);
        const std::uint32_t count = get_u32(&bytes[4]);
        for (std::uint32_t s = 0; s < count; ++s) out.push_back(decode_slot(bytes, header_, s));
    }
    return out;
}

std::vector<bool> VectorFile::read_tombstones() const {
    std::vector<bool> out;
    out.reserve(header_.n_vectors);
    for (const auto& [first, block] : data_first_ids_) {
        const auto bytes = read_block_direct(block);
        const std::uint32_t count = get_u32(&bytes[4]);
        for (std::uint32_t s = 0; s < count; ++s) out.push_back((bytes[24 + s / 8] >> (s % 8)) & 1u);
    }
    return out;
}

std::optional<Adjacency> VectorFile::read_adjacency() const {
    if (header_.first_index_block == 0) return std::nullopt;
    Adjacency g;
    g.max_degree = header_.max_degree;
    g.entry_point = header_.entry_point;
    g.degrees.reserve(header_.n_index_nodes);
    g.slots.reserve(header_.n_index_nodes * g.max_degree);
    const std::size_t record = 4 * (1 + std::size_t(g.max_degree));
    for (std::uint64_t b : index_blocks()) {
        const auto bytes = read_block_direct(b);
        const std::uint32_t count = get_u32(&bytes[4]);
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::uint8_t* p = &bytes[kIndexHeaderBytes + i * record];
            g.degrees.push_back(get_u32(p));
            for (std::size_t j = 0; j < g.max_degree; ++j) g.slots.push_back(get_u32(p + 4 * (1 + j)));
        }
    }
    if (g.degrees.size() != header_.n_index_nodes) throw Error(path_.string() + ": index node count mismatch");
    return g;
}

}  // namespace ctxdb::vfs
