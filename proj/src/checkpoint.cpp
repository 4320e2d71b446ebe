// CFCKPT1 checkpoints: magic, config digest, config text, then named binary
// blocks for parameters, CBN running statistics, and Adam state. Round trips
// are bit-exact because payloads are raw little-endian scalars.
#include <cstring>
#include <fstream>
#include <map>

#include "cortifield/errors.hpp"
#include "cortifield/nn.hpp"

namespace cf {

namespace {

constexpr char kMagic[8] = {'C', 'F', 'C', 'K', 'P', 'T', '1', '\n'};

void write_u32(std::ofstream& f, uint32_t x) { f.write(reinterpret_cast<const char*>(&x), 4); }
void write_u64(std::ofstream& f, uint64_t x) { f.write(reinterpret_cast<const char*>(&x), 8); }

uint32_t read_u32(std::ifstream& f, const std::string& path) {
    uint32_t x = 0;
    f.read(reinterpret_cast<char*>(&x), 4);
    require(f.gcount() == 4, errc::corrupt_checkpoint, "truncated checkpoint: " + path);
    return x;
}

uint64_t read_u64(std::ifstream& f, const std::string& path) {
    uint64_t x = 0;
    f.read(reinterpret_cast<char*>(&x), 8);
    require(f.gcount() == 8, errc::corrupt_checkpoint, "truncated checkpoint: " + path);
    return x;
}

template <typename T>
void write_block(std::ofstream& f, const std::string& name, const std::vector<int64_t>& shape,
                 const std::vector<T>& data) {
    write_u32(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    const uint8_t ndim = static_cast<uint8_t>(shape.size());
    f.write(reinterpret_cast<const char*>(&ndim), 1);
    for (int64_t d : shape) write_u64(f, static_cast<uint64_t>(d));
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
}

template <typename T>
struct Block {
    std::vector<int64_t> shape;
    std::vector<T> data;
};

template <typename T>
std::map<std::string, Block<T>> read_blocks(std::ifstream& f, const std::string& path) {
    const uint32_t n = read_u32(f, path);
    require(n < 100000, errc::corrupt_checkpoint, "implausible block count: " + path);
    std::map<std::string, Block<T>> blocks;
    for (uint32_t b = 0; b < n; ++b) {
        const uint32_t name_len = read_u32(f, path);
        require(name_len < 4096, errc::corrupt_checkpoint, "implausible name length: " + path);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        require(f.gcount() == static_cast<std::streamsize>(name_len), errc::corrupt_checkpoint,
                "truncated checkpoint: " + path);
        uint8_t ndim = 0;
        f.read(reinterpret_cast<char*>(&ndim), 1);
        require(f.gcount() == 1 && ndim <= 8, errc::corrupt_checkpoint, "bad block rank: " + path);
        Block<T> blk;
        int64_t total = 1;
        for (int d = 0; d < ndim; ++d) {
            const int64_t e = static_cast<int64_t>(read_u64(f, path));
            require(e > 0 && e < (int64_t(1) << 40), errc::corrupt_checkpoint, "bad block extent: " + path);
            blk.shape.push_back(e);
            total *= e;
        }
        require(total < (int64_t(1) << 34), errc::corrupt_checkpoint, "implausible block size: " + path);
        blk.data.resize(static_cast<size_t>(total));
        f.read(reinterpret_cast<char*>(blk.data.data()),
               static_cast<std::streamsize>(blk.data.size() * sizeof(T)));
        require(f.gcount() == static_cast<std::streamsize>(blk.data.size() * sizeof(T)),
                errc::corrupt_checkpoint, "truncated checkpoint payload: " + path);
        blocks.emplace(std::move(name), std::move(blk));
    }
    return blocks;
}

std::string read_header(std::ifstream& f, const std::string& path, uint64_t* digest_out) {
    char magic[8];
    f.read(magic, 8);
    require(f.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0, errc::corrupt_checkpoint,
            "not a CFCKPT1 checkpoint: " + path);
    const uint64_t digest = read_u64(f, path);
    const uint32_t cfg_len = read_u32(f, path);
    require(cfg_len < 65536, errc::corrupt_checkpoint, "implausible config length: " + path);
    std::string cfg_text(cfg_len, '\0');
    f.read(cfg_text.data(), cfg_len);
    require(f.gcount() == static_cast<std::streamsize>(cfg_len), errc::corrupt_checkpoint,
            "truncated checkpoint: " + path);
    require(fnv1a64(cfg_text.data(), cfg_text.size()) == digest, errc::corrupt_checkpoint,
            "config digest mismatch (corrupted header): " + path);
    if (digest_out) *digest_out = digest;
    return cfg_text;
}

} // namespace

template <typename T>
void save_checkpoint(const std::string& path, FieldModel<T>& model, AdamOptimizer<T>* opt) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), errc::io_error, "cannot open for writing: " + path);
    f.write(kMagic, 8);
    const std::string cfg_text = model.config().canonical_text(static_cast<int>(sizeof(T)));
    write_u64(f, fnv1a64(cfg_text.data(), cfg_text.size()));
    write_u32(f, static_cast<uint32_t>(cfg_text.size()));
    f.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

    auto params = model.parameters();
    auto buffers = model.buffers();
    uint32_t n_blocks = static_cast<uint32_t>(params.size() + buffers.size());
    if (opt) n_blocks += static_cast<uint32_t>(2 * params.size() + 1);
    write_u32(f, n_blocks);
    for (Param<T>* p : params) write_block(f, p->name, p->shape, p->value);
    for (auto& [name, data] : buffers)
        write_block(f, name, {static_cast<int64_t>(data->size())}, *data);
    if (opt) {
        for (size_t i = 0; i < params.size(); ++i) {
            write_block(f, "adam.m." + params[i]->name,
                        {static_cast<int64_t>(opt->m[i].size())}, opt->m[i]);
            write_block(f, "adam.v." + params[i]->name,
                        {static_cast<int64_t>(opt->v[i].size())}, opt->v[i]);
        }
        write_block<T>(f, "adam.step", {1}, {static_cast<T>(opt->t)});
    }
    require(f.good(), errc::io_error, "write failed: " + path);
}

template <typename T>
void load_checkpoint_into(const std::string& path, FieldModel<T>& model, AdamOptimizer<T>* opt) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), errc::io_error, "cannot open: " + path);
    uint64_t digest = 0;
    read_header(f, path, &digest);
    const std::string own = model.config().canonical_text(static_cast<int>(sizeof(T)));
    require(fnv1a64(own.data(), own.size()) == digest, errc::version_mismatch,
            "checkpoint was written for a different model configuration: " + path);
    auto blocks = read_blocks<T>(f, path);

    auto take = [&](const std::string& name, size_t expect) -> std::vector<T> {
        auto it = blocks.find(name);
        require(it != blocks.end(), errc::corrupt_checkpoint, "missing block '" + name + "': " + path);
        require(it->second.data.size() == expect, errc::corrupt_checkpoint,
                "block '" + name + "' has wrong size: " + path);
        return std::move(it->second.data);
    };
    for (Param<T>* p : model.parameters()) p->value = take(p->name, p->value.size());
    for (auto& [name, data] : model.buffers()) *data = take(name, data->size());
    if (opt) {
        auto params = model.parameters();
        if (blocks.count("adam.step")) {
            for (size_t i = 0; i < params.size(); ++i) {
                opt->m[i] = take("adam.m." + params[i]->name, params[i]->value.size());
                opt->v[i] = take("adam.v." + params[i]->name, params[i]->value.size());
            }
            opt->t = static_cast<int64_t>(take("adam.step", 1)[0]);
        }
    }
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    std::string cfg_text;
    {
        std::ifstream f(path, std::ios::binary);
        require(f.good(), errc::io_error, "cannot open: " + path);
        cfg_text = read_header(f, path, nullptr);
    }
    LoadedCheckpoint<T> out;
    out.model = std::make_unique<FieldModel<T>>(parse_model_config_text(cfg_text, static_cast<int>(sizeof(T))));
    out.optimizer = std::make_unique<AdamOptimizer<T>>(out.model->parameters());
    load_checkpoint_into(path, *out.model, out.optimizer.get());
    return out;
}

std::string checkpoint_config_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), errc::io_error, "cannot open: " + path);
    return read_header(f, path, nullptr);
}

template void save_checkpoint<float>(const std::string&, FieldModel<float>&, AdamOptimizer<float>*);
template void save_checkpoint<double>(const std::string&, FieldModel<double>&, AdamOptimizer<double>*);
template void load_checkpoint_into<float>(const std::string&, FieldModel<float>&, AdamOptimizer<float>*);
template void load_checkpoint_into<double>(const std::string&, FieldModel<double>&, AdamOptimizer<double>*);
template LoadedCheckpoint<float> load_checkpoint<float>(const std::string&);
template LoadedCheckpoint<double> load_checkpoint<double>(const std::string&);

} // namespace cf
