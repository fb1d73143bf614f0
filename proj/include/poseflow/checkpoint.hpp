#pragma once

// Weight checkpoint: magic "SCPD", little-endian u32 version, u32 tensor
// count, then per tensor a u32 name length, the name bytes, and the tensor in
// the TNSR dump format. Order follows the parameter registry, so files are
// byte-reproducible for a fixed model and seed.

#include <cstring>
#include <fstream>
#include <string>

#include "poseflow/errors.hpp"
#include "poseflow/layers.hpp"
#include "poseflow/tensor_io.hpp"

namespace poseflow {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::string& path, const ParamList<T>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot open " + path + " for writing");
    os.write("SCPD", 4);
    detail::write_u32(os, kCheckpointVersion);
    detail::write_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        detail::write_u32(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        dump_tensor(os, *p.tensor);
    }
}

// Loads by name into existing parameters; every stored tensor must match an
// entry of `params` in name and shape, and vice versa.
template <typename T>
void load_checkpoint(const std::string& path, ParamList<T>& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "SCPD", 4) != 0)
        throw ParseError("checkpoint: bad magic, expected SCPD");
    const std::uint32_t version = detail::read_u32(is, "version");
    if (version != kCheckpointVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t count = detail::read_u32(is, "count");
    if (count != params.size())
        throw DataError("checkpoint: holds " + std::to_string(count) + " tensors, model expects " +
                        std::to_string(params.size()));
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = detail::read_u32(is, "name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw ParseError("checkpoint: truncated name");
        Tensor<T> t = load_tensor<T>(is);
        ParamRef<T>* slot = nullptr;
        for (auto& p : params)
            if (p.name == name) {
                slot = &p;
                break;
            }
        if (!slot) throw DataError("checkpoint: unknown tensor '" + name + "'");
        if (t.shape() != slot->tensor->shape())
            throw DataError("checkpoint: shape mismatch for '" + name + "': file " + shape_str(t.shape()) +
                            " vs model " + shape_str(slot->tensor->shape()));
        *slot->tensor = Tensor<T>(t.shape(), t.values(), slot->tensor->requires_grad());
    }
}

}  // namespace poseflow
