#include "wmx2/serialize.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

namespace wmx2 {

namespace {

constexpr char kMagic[4] = {'W', 'M', 'X', '2'};
constexpr uint32_t kVersion = 1;

// Little-endian scalar I/O. The engine targets little-endian hosts; the
// byte-wise writes make the file layout explicit either way.
template <typename U>
void write_le(std::ostream& out, U value) {
    unsigned char bytes[sizeof(U)];
    std::memcpy(bytes, &value, sizeof(U));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U read_le(std::istream& in, long long& offset, const char* what) {
    unsigned char bytes[sizeof(U)];
    in.read(reinterpret_cast<char*>(bytes), sizeof(U));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(U))) {
        throw FormatError(std::string("weight file truncated while reading ") + what, offset);
    }
    U value;
    std::memcpy(&value, bytes, sizeof(U));
    offset += static_cast<long long>(sizeof(U));
    return value;
}

}  // namespace

void save_weights(const Model& model, std::ostream& out) {
    validate_config(model.config);
    out.write(kMagic, 4);
    write_le<uint32_t>(out, kVersion);
    write_le<uint32_t>(out, static_cast<uint32_t>(model.config.stages));
    write_le<uint32_t>(out, static_cast<uint32_t>(model.config.sr2x.depth));
    write_le<uint32_t>(out, static_cast<uint32_t>(model.config.sr2x.block.embed_dim));
    write_le<float>(out, model.config.sr2x.block.mlp_mult);
    write_le<float>(out, model.config.sr2x.block.dropout_rate);
    write_le<uint8_t>(out, static_cast<uint8_t>(model.config.sr2x.upsample_mode));

    uint32_t count = 0;
    for_each_tensor(model, [&](const std::string&, const Tensor&, bool, int) { ++count; });
    write_le<uint32_t>(out, count);

    for_each_tensor(model, [&](const std::string& name, const Tensor& t, bool, int rank) {
        if (name.size() > std::numeric_limits<uint16_t>::max()) {
            throw FormatError("tensor name too long: " + name);
        }
        write_le<uint16_t>(out, static_cast<uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_le<uint8_t>(out, static_cast<uint8_t>(rank));
        if (rank == 1) {
            write_le<uint32_t>(out, static_cast<uint32_t>(t.size()));
        } else {
            write_le<uint32_t>(out, static_cast<uint32_t>(t.n()));
            write_le<uint32_t>(out, static_cast<uint32_t>(t.c()));
            write_le<uint32_t>(out, static_cast<uint32_t>(t.h()));
            write_le<uint32_t>(out, static_cast<uint32_t>(t.w()));
        }
        for (int64_t i = 0; i < t.size(); ++i) write_le<float>(out, t[i]);
    });
    if (!out) throw IoError("failed to write weight stream");
}

void save_weights(const Model& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    save_weights(model, f);
    f.flush();
    if (!f) throw IoError("failed to write weights to " + path);
}

Model load_weights(std::istream& in) {
    long long offset = 0;
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("bad magic (expected WMX2)", 0);
    }
    offset = 4;
    const uint32_t version = read_le<uint32_t>(in, offset, "version");
    if (version != kVersion) {
        throw FormatError("unsupported weight format version " + std::to_string(version), offset - 4);
    }
    ModelConfig cfg;
    cfg.stages = static_cast<int>(read_le<uint32_t>(in, offset, "stage count"));
    cfg.sr2x.depth = static_cast<int>(read_le<uint32_t>(in, offset, "depth"));
    cfg.sr2x.block.embed_dim = static_cast<int>(read_le<uint32_t>(in, offset, "embed dim"));
    cfg.sr2x.block.mlp_mult = read_le<float>(in, offset, "mlp multiplier");
    cfg.sr2x.block.dropout_rate = read_le<float>(in, offset, "dropout rate");
    const uint8_t mode = read_le<uint8_t>(in, offset, "upsample mode");
    if (mode > 1) throw FormatError("invalid upsample mode " + std::to_string(mode), offset - 1);
    cfg.sr2x.upsample_mode = static_cast<ResizeMode>(mode);
    try {
        validate_config(cfg);
    } catch (const ParamError& e) {
        throw FormatError(std::string("invalid config block: ") + e.what(), 9);
    }

    // Build the skeleton (values overwritten below), then fill tensors in
    // canonical order, checking names and shapes against the config.
    Model model = init_model<float>(cfg, 0);
    const uint32_t count = read_le<uint32_t>(in, offset, "tensor count");
    uint32_t expected = 0;
    for_each_tensor(model, [&](const std::string&, const Tensor&, bool, int) { ++expected; });
    if (count != expected) {
        throw FormatError("tensor count " + std::to_string(count) + " does not match config (expected " +
                          std::to_string(expected) + ")", offset - 4);
    }

    for_each_tensor(model, [&](const std::string& name, Tensor& t, bool, int rank) {
        const long long entry_offset = offset;
        const uint16_t name_len = read_le<uint16_t>(in, offset, "tensor name length");
        std::string file_name(name_len, '\0');
        in.read(file_name.data(), name_len);
        if (in.gcount() != name_len) {
            throw FormatError("weight file truncated while reading tensor name", offset);
        }
        offset += name_len;
        if (file_name != name) {
            throw FormatError("unexpected tensor '" + file_name + "' (expected '" + name + "')",
                              entry_offset);
        }
        const uint8_t file_rank = read_le<uint8_t>(in, offset, "tensor rank");
        if (static_cast<int>(file_rank) != rank) {
            throw FormatError("tensor '" + name + "' has rank " + std::to_string(file_rank) +
                              ", expected " + std::to_string(rank), offset - 1);
        }
        int64_t elems = 1;
        Shape s{1, 1, 1, 1};
        if (rank == 1) {
            s.c = static_cast<int>(read_le<uint32_t>(in, offset, "tensor dim"));
            elems = s.c;
        } else {
            s.n = static_cast<int>(read_le<uint32_t>(in, offset, "tensor dim"));
            s.c = static_cast<int>(read_le<uint32_t>(in, offset, "tensor dim"));
            s.h = static_cast<int>(read_le<uint32_t>(in, offset, "tensor dim"));
            s.w = static_cast<int>(read_le<uint32_t>(in, offset, "tensor dim"));
            elems = s.count();
        }
        if (!(s == t.shape()) || elems != t.size()) {
            throw FormatError("tensor '" + name + "' has shape " + s.str() + ", expected " +
                              t.shape().str(), entry_offset);
        }
        std::vector<float> payload(static_cast<size_t>(elems));
        in.read(reinterpret_cast<char*>(payload.data()),
                static_cast<std::streamsize>(elems * sizeof(float)));
        if (in.gcount() != static_cast<std::streamsize>(elems * sizeof(float))) {
            throw FormatError("weight file truncated in payload of '" + name + "'", offset);
        }
        offset += elems * static_cast<long long>(sizeof(float));
        std::copy(payload.begin(), payload.end(), t.data());
    });
    // Trailing garbage would mean the writer and reader disagree.
    char extra;
    if (in.read(&extra, 1)) {
        throw FormatError("unexpected trailing data", offset);
    }
    return model;
}

Model load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open weight file: " + path);
    return load_weights(f);
}

}  // namespace wmx2
