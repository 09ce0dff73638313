#include "ctxdb/vfs.hpp"

namespace ctxdb::vfs {

BufferPool::Handle::Handle(Handle&& other) noexcept : pool_(other.pool_), frame_(other.frame_) {
    other.pool_ = nullptr;
    other.frame_ = nullptr;
}

BufferPool::Handle& BufferPool::Handle::operator=(Handle&& other) noexcept {
    if (this != &other) {
        release();
        pool_ = other.pool_;
        frame_ = other.frame_;
        other.pool_ = nullptr;
        other.frame_ = nullptr;
    }
    return *this;
}

BufferPool::Handle::~Handle() { release(); }

void BufferPool::Handle::release() {
    if (pool_ && frame_) pool_->unpin(frame_);
    pool_ = nullptr;
    frame_ = nullptr;
}

std::span<const std::uint8_t> BufferPool::Handle::bytes() const {
    if (!frame_) throw Error("empty buffer handle");
    return frame_->bytes;
}

BlockKey BufferPool::Handle::key() const {
    if (!frame_) throw Error("empty buffer handle");
    return frame_->key;
}

BufferPool::BufferPool(std::size_t capacity_blocks) : capacity_(capacity_blocks) {
    if (capacity_ == 0) throw Error("buffer pool capacity must be positive");
}

BufferPool::~BufferPool() = default;

void BufferPool::touch(Frame* frame) {
    auto& lru = frame->data_class ? data_lru_ : index_lru_;
    lru.splice(lru.end(), lru, frame->lru_pos);
}

BufferPool::Frame* BufferPool::choose_victim() {
    for (auto* lru : {&data_lru_, &index_lru_}) {
        for (Frame* f : *lru) {
            if (f->pins == 0 && !f->loading) return f;
        }
    }
    return nullptr;
}

BufferPool::Handle BufferPool::read_block(const VectorFile& file, std::uint64_t block_id) {
    const BlockType type = file.block_type(block_id);  // throws on unknown blocks
    const BlockKey key{file.id(), block_id};

    std::unique_lock lock(mu_);
    while (true) {
        auto it = frames_.find(key);
        if (it == frames_.end()) break;
        std::shared_ptr<Frame> f = it->second;
        if (f->loading) {
            loaded_.wait(lock, [&] { return !f->loading; });
            if (f->failed) continue;  // the loader dropped the frame; retry
        }
        ++f->pins;
        ++stats_.hits;
        touch(f.get());
        return Handle(this, f.get());
    }

    ++stats_.misses;
    if (frames_.size() >= capacity_) {
        Frame* victim = choose_victim();
        if (!victim) throw Error("buffer pool exhausted: every resident block is pinned");
        (victim->data_class ? data_lru_ : index_lru_).erase(victim->lru_pos);
        last_victim_ = victim->key;
        ++stats_.evictions;
        frames_.erase(victim->key);
    }
    auto owned = std::make_shared<Frame>();
    Frame* f = owned.get();
    f->key = key;
    f->data_class = type == BlockType::Data;
    f->pins = 1;
    auto& lru = f->data_class ? data_lru_ : index_lru_;
    f->lru_pos = lru.insert(lru.end(), f);
    frames_.emplace(key, std::move(owned));
    lock.unlock();

    std::vector<std::uint8_t> bytes;
    try {
        bytes = file.read_block_direct(block_id);
    } catch (...) {
        lock.lock();
        f->loading = false;
        f->failed = true;
        lru.erase(f->lru_pos);
        frames_.erase(key);
        loaded_.notify_all();
        throw;
    }

    lock.lock();
    f->bytes = std::move(bytes);
    f->loading = false;
    loaded_.notify_all();
    return Handle(this, f);
}

void BufferPool::unpin(Frame* frame) {
    std::lock_guard lock(mu_);
    --frame->pins;
}

std::size_t BufferPool::resident_count() const {
    std::lock_guard lock(mu_);
    return frames_.size();
}

bool BufferPool::is_resident(const VectorFile& file, std::uint64_t block_id) const {
    std::lock_guard lock(mu_);
    return frames_.contains({file.id(), block_id});
}

std::vector<BlockKey> BufferPool::resident_blocks() const {
    std::lock_guard lock(mu_);
    std::vector<BlockKey> out;
    for (const auto& [key, frame] : frames_) out.push_back(key);
    return out;
}

std::optional<BlockKey> BufferPool::last_victim() const {
    std::lock_guard lock(mu_);
    return last_victim_;
}

PoolStats BufferPool::stats() const {
    std::lock_guard lock(mu_);
    return stats_;
}

std::vector<std::uint8_t> read_block(BufferPool& pool, const VectorFile& file, std::uint64_t block_id) {
    const auto handle = pool.read_block(file, block_id);
    const auto bytes = handle.bytes();
    return {bytes.begin(), bytes.end()};
}

Vector read_vector(BufferPool& pool, const VectorFile& file, TokenId id) {
    const auto [block, slot] = file.locate(id);
    const auto handle = pool.read_block(file, block);
    return Vector(decode_slot(handle.bytes(), file.header(), slot));
}

}  // namespace ctxdb::vfs
